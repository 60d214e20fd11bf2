from typing import Any, Optional


class NetworkError(Exception):
    pass


class SingularMatrixError(NetworkError):
    def __init__(self, offset_hz: float, condition: float) -> None:
        self.offset_hz = offset_hz
        self.condition = condition
        super().__init__(
            f"Mode-coupling matrix is numerically singular at probe offset {offset_hz:.6g} Hz "
            f"(condition number {condition:.3e})"
        )


class DesignDomainError(NetworkError, ValueError):
    pass


class OptimizerConvergenceError(NetworkError):
    def __init__(self, message: str, best: Any = None) -> None:
        self.best = best
        super().__init__(message)


class PivotError(NetworkError):
    def __init__(self, mode_index: int, pivot: complex) -> None:
        self.mode_index = mode_index
        self.pivot = pivot
        super().__init__(
            f"Pivot too small (|M_kk| = {abs(pivot):.3e}); mode {mode_index} cannot be eliminated at this frequency"
        )


class IntegrationError(NetworkError):
    def __init__(self, message: str, partial: Optional[float] = None) -> None:
        self.partial = partial
        super().__init__(message)


class FitError(NetworkError):
    pass


class FitConvergenceError(FitError):
    def __init__(self, message: str, best: Optional[dict[str, float]] = None) -> None:
        self.best = best or {}
        super().__init__(message)


class RankDeficientError(FitError):
    def __init__(self, message: str, indistinguishable: Optional[list[str]] = None) -> None:
        self.indistinguishable = indistinguishable or []
        super().__init__(message)


class ConfigError(ValueError):
    pass
