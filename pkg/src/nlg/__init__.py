"""Certify local randomness in nonlocal games from explicit quantum strategies."""

from .errors import InputError, NLGError, NumericalError, StageError
from .games import Correlation, Game, builtin_game, classical_value, rate_curve, score
from .strategies import Strategy, builtin_strategy, chsh_optimal, magic_square_optimal, strategy_score

__all__ = [
    "Correlation", "Game", "InputError", "NLGError", "NumericalError", "StageError", "Strategy",
    "builtin_game", "builtin_strategy", "chsh_optimal", "classical_value", "magic_square_optimal",
    "rate_curve", "score", "strategy_score",
]
