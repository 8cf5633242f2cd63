from __future__ import annotations

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class CertError(Exception):
    """Base error carrying the CLI exit code and a machine-readable code."""

    exit_code = EXIT_CONFIG
    error_code = "cert_error"

    def __init__(self, message: str, error_code: Optional[str] = None, exit_code: Optional[int] = None):
        self.message = message
        if error_code is not None:
            self.error_code = error_code
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(message)

    def to_payload(self) -> Dict[str, Any]:
        return {"ok": False, "error_code": self.error_code, "message": self.message}


class ConfigError(CertError):
    exit_code = EXIT_CONFIG
    error_code = "config_error"


class ParameterError(ConfigError, ValueError):
    error_code = "invalid_parameter"


class AdmissibilityError(ConfigError):
    """Raised when the exponential weight is below the threshold of a bound."""

    error_code = "inadmissible_weight"

    def __init__(self, message: str, threshold: float):
        self.threshold = threshold
        super().__init__(message)


class CatalogError(ConfigError, KeyError):
    error_code = "unknown_benchmark"

    def __str__(self) -> str:
        return self.message


class SolverError(CertError):
    exit_code = EXIT_SOLVER
    error_code = "solver_error"


class PicardDivergenceError(SolverError):
    error_code = "picard_divergence"

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message)


class RankDeficiencyError(SolverError):
    error_code = "rank_deficient"

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(message)


class CapacityError(SolverError):
    error_code = "capacity_exceeded"


class NonFiniteDriverError(CertError):
    """A driver produced NaN or inf at a sampled point."""

    exit_code = EXIT_SOLVER
    error_code = "non_finite_driver"

    def __init__(self, message: str, sample: Dict[str, Any]):
        self.sample = sample
        super().__init__(message)
