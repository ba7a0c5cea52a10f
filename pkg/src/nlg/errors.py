"""Exception hierarchy. The CLI maps these onto exit codes."""


class NLGError(Exception):
    """Base class for every error raised by this package."""


class InputError(NLGError, ValueError):
    """An input violates a documented precondition or invariant."""


class NumericalError(NLGError, RuntimeError):
    """A numerical procedure failed to reach a trustworthy answer."""


class StageError(NumericalError):
    """A multi-stage pipeline stopped at a named stage."""

    def __init__(self, stage: str, message: str, residual: float | None = None):
        self.stage = stage
        self.residual = residual
        text = f"[{stage}] {message}"
        if residual is not None:
            text += f" (residual {residual:.3e})"
        super().__init__(text)
