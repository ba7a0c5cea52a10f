"""JSON file formats for games, strategies and correlations, plus report serialization.

Complex matrices are lists of rows whose entries are ``[re, im]`` pairs.
Paths of the form ``builtin:<name>`` resolve to the built-in fixtures.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InputError
from .games import Correlation, Game, builtin_game
from .strategies import Strategy, builtin_strategy

GAME_FIELDS = ("A", "B", "X", "Y", "q", "H")
STRATEGY_FIELDS = ("dimD", "dimE", "gamma", "R", "S")
CORRELATION_FIELDS = ("A", "B", "X", "Y", "p")

BUILTIN_PREFIX = "builtin:"


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc


def _fields(obj, required, where: str) -> None:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected a JSON object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise InputError(f"{where}: missing field(s) {', '.join(missing)}")
    unknown = sorted(set(obj) - set(required))
    if unknown:
        raise InputError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _real_array(obj, where: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: expected a rectangular array of numbers") from exc
    if arr.dtype == object:
        raise InputError(f"{where}: ragged array")
    return arr


def matrix_from_json(obj, where: str = "matrix") -> np.ndarray:
    arr = _real_array(obj, where)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise InputError(f"{where}: expected a list of rows of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


# --- games ---------------------------------------------------------------


def game_from_dict(obj, where: str = "game") -> Game:
    _fields(obj, GAME_FIELDS, where)
    for key in "ABXY":
        if not isinstance(obj[key], list) or not obj[key]:
            raise InputError(f"{where}.{key}: expected a non-empty list of labels")
    return Game(obj["A"], obj["B"], obj["X"], obj["Y"], _real_array(obj["q"], f"{where}.q"),
                _real_array(obj["H"], f"{where}.H"), name=where)


def game_to_dict(game: Game) -> dict:
    return {
        "A": list(game.A), "B": list(game.B), "X": list(game.X), "Y": list(game.Y),
        "q": game.q.tolist(), "H": game.H.tolist(),
    }


def load_game(path) -> Game:
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        return builtin_game(path[len(BUILTIN_PREFIX):])
    return game_from_dict(read_json(path), where=path)


# --- strategies ------------------------------------------------------------


def _family(obj, where: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(f, list) and f for f in obj):
        raise InputError(f"{where}: expected a non-empty list of non-empty lists of matrices")
    sizes = {len(f) for f in obj}
    if len(sizes) != 1:
        raise InputError(f"{where}: every input must have the same number of outcomes")
    return np.array([[matrix_from_json(m, f"{where}[{i}][{j}]") for j, m in enumerate(f)] for i, f in enumerate(obj)])


def strategy_from_dict(obj, where: str = "strategy") -> Strategy:
    _fields(obj, STRATEGY_FIELDS, where)
    d, e = obj["dimD"], obj["dimE"]
    if not (isinstance(d, int) and isinstance(e, int) and d > 0 and e > 0):
        raise InputError(f"{where}: dimD and dimE must be positive integers")
    R = _family(obj["R"], f"{where}.R")
    S = _family(obj["S"], f"{where}.S")
    gamma = matrix_from_json(obj["gamma"], f"{where}.gamma")
    if R.shape[2:] != (d, d):
        raise InputError(f"{where}.R: operators are {R.shape[2:]} but dimD = {d}")
    if S.shape[2:] != (e, e):
        raise InputError(f"{where}.S: operators are {S.shape[2:]} but dimE = {e}")
    return Strategy(R, S, gamma)


def strategy_to_dict(s: Strategy) -> dict:
    return {
        "dimD": s.dimD, "dimE": s.dimE,
        "gamma": matrix_to_json(s.gamma),
        "R": [[matrix_to_json(m) for m in fam] for fam in s.R],
        "S": [[matrix_to_json(m) for m in fam] for fam in s.S],
    }


def load_strategy(path) -> Strategy:
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        return builtin_strategy(path[len(BUILTIN_PREFIX):])
    return strategy_from_dict(read_json(path), where=path)


# --- correlations ------------------------------------------------------------


def correlation_from_dict(obj, where: str = "correlation") -> Correlation:
    _fields(obj, CORRELATION_FIELDS, where)
    return Correlation(obj["A"], obj["B"], obj["X"], obj["Y"], _real_array(obj["p"], f"{where}.p"))


def correlation_to_dict(c: Correlation) -> dict:
    return {"A": list(c.A), "B": list(c.B), "X": list(c.X), "Y": list(c.Y), "p": c.p.tolist()}


def load_any(path):
    """Parse and validate a game, strategy or correlation file, whichever it is."""
    obj = read_json(path)
    if isinstance(obj, dict) and "gamma" in obj:
        return strategy_from_dict(obj, str(path))
    if isinstance(obj, dict) and "H" in obj:
        return game_from_dict(obj, str(path))
    if isinstance(obj, dict) and "p" in obj:
        return correlation_from_dict(obj, str(path))
    raise InputError(f"{path}: not a game, strategy or correlation file")


# --- reports -------------------------------------------------------------------


def to_jsonable(obj):
    """Plain JSON data from dataclasses, numpy values and containers.

    Complex arrays become ``[re, im]`` pairs; non-finite floats become ``null``.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(np.stack([obj.real, obj.imag], axis=-1))
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")
