from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from .core_model import StoppingTimeSpec

Verdict = Literal["holds", "holds (marginal)", "violated", "ratio-reported"]
Mode = Literal["absolute", "ratio-only"]

ABSOLUTE_IDS = frozenset({"prop33_D1", "prop33_Sq", "prop33_driver_l1", "dq"})
VIOLATION_SIGMAS = 3.0
GRID_NOTE = (
    "sup over grid times is a lower bound of the stopping-time supremum; "
    "stderr taken at the maximising time"
)


def safe_ratio(numerator: float, denominator: float) -> float:
    if denominator > 0:
        return numerator / denominator
    return math.inf if numerator > 0 else 0.0


class NormEstimate(BaseModel):
    value: float = Field(ge=0)
    stderr: float = Field(ge=0)
    kind: str
    n_paths: int = Field(ge=0)
    weight_a: float = 0.0


class RegressionConfig(BaseModel):
    degree: int = Field(default=3, ge=0)
    picard_iters: int = Field(default=12, ge=1)
    picard_tol: float = Field(default=1e-6, gt=0)
    implicitness: Literal["explicit", "implicit"] = "implicit"
    inner_iters: int = Field(default=50, ge=1)
    inner_tol: float = Field(default=1e-10, gt=0)
    damping: float = Field(default=0.5, gt=0, le=1)


class ConfigEcho(BaseModel):
    benchmark: str
    a: float
    q: Optional[float] = None
    p: Optional[float] = None
    kappa: float
    seed: int
    n_paths: int
    n_steps: int


class CertificateReport(BaseModel):
    report_type: Literal["certificate"] = "certificate"
    inequality_id: str
    lhs: NormEstimate
    rhs: float = Field(ge=0)
    ratio: float
    mode: Mode
    verdict: Verdict
    config: ConfigEcho
    note: Optional[str] = None

    @model_validator(mode="after")
    def _mode_matches_id(self) -> "CertificateReport":
        expected = "absolute" if self.inequality_id in ABSOLUTE_IDS else "ratio-only"
        if self.mode != expected:
            raise ValueError(f"{self.inequality_id} must be reported in {expected} mode")
        if self.verdict == "violated" and self.mode != "absolute":
            raise ValueError("only absolute-mode certificates can be violated")
        return self

    @classmethod
    def evaluate(
        cls,
        inequality_id: str,
        lhs: NormEstimate,
        rhs: float,
        config: ConfigEcho,
        note: Optional[str] = None,
    ) -> "CertificateReport":
        mode: Mode = "absolute" if inequality_id in ABSOLUTE_IDS else "ratio-only"
        if mode == "ratio-only":
            verdict: Verdict = "ratio-reported"
        elif lhs.value - VIOLATION_SIGMAS * lhs.stderr > rhs:
            verdict = "violated"
        elif lhs.value > rhs:
            verdict = "holds (marginal)"
        else:
            verdict = "holds"
        return cls(
            inequality_id=inequality_id,
            lhs=lhs,
            rhs=rhs,
            ratio=safe_ratio(lhs.value, rhs),
            mode=mode,
            verdict=verdict,
            config=config,
            note=note,
        )


class StabilityCell(BaseModel):
    epsilon: float = Field(gt=0)
    delta_xi: float = Field(ge=0)
    delta_f: float = Field(ge=0)
    delta_sum: float = Field(ge=0)
    measured: NormEstimate
    hat_g_l1: float = Field(ge=0)
    rhs_thm35: float = Field(ge=0)
    rhs_cor1: float = Field(ge=0)
    ratio_thm35: float
    ratio_cor1: float
    psi3: float = Field(ge=0)


class StabilityReport(BaseModel):
    report_type: Literal["stability"] = "stability"
    epsilons: List[float]
    cells: List[StabilityCell]
    fitted_constant: float
    dispersion: float
    linear_dispersion: float
    hat_g_majorant: Optional[float] = None
    config: ConfigEcho

    @field_validator("epsilons")
    def epsilons_decreasing(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("epsilons must not be empty")
        if any(eps <= 0 for eps in value):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        return value


class NLEReport(BaseModel):
    report_type: Literal["nle"] = "nle"
    alpha: str
    beta: str
    eta_bar_l1: float = Field(ge=0)
    delta_eta: float = Field(ge=0)
    f_zero_l1: float = Field(ge=0)
    g_l1: float = Field(ge=0)
    measured: NormEstimate
    rhs_cor2: float = Field(ge=0)
    ratio: float
    q_used: float
    config: ConfigEcho


Report = Union[CertificateReport, StabilityReport, NLEReport]


class BoundSettings(BaseModel):
    c_kq: float = Field(default=1.0, gt=0)
    c_p: float = Field(default=1.0, gt=0)
    big_C_cor2: float = Field(default=1.0, gt=0)


class SweepSettings(BaseModel):
    xi_shift: Optional[str] = "constant"
    driver_shift: Optional[str] = None
    epsilons: List[float] = Field(default_factory=lambda: [2.0 ** -i for i in range(7)])

    @model_validator(mode="after")
    def _needs_a_shift(self) -> "SweepSettings":
        if self.xi_shift is None and self.driver_shift is None:
            raise ValueError("a sweep needs xi_shift, driver_shift or both")
        return self


class NLESettings(BaseModel):
    alpha: StoppingTimeSpec = Field(default_factory=lambda: StoppingTimeSpec.deterministic(0.0))
    beta: Optional[StoppingTimeSpec] = None
    epsilon: float = Field(default=0.1, ge=0)
    eta_shift: str = "constant"


class ExperimentConfig(BaseModel):
    id: str
    command: Literal["certify", "sweep", "nle"] = "certify"
    benchmark: str
    seed: int = Field(default=7, ge=0)
    paths: int = Field(default=10_000, ge=2)
    steps: int = Field(default=50, ge=1)
    horizon_T: Optional[float] = Field(default=None, gt=0)
    q: float = Field(default=0.75, gt=0, lt=1)
    sq_exponents: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    a: Union[float, Literal["auto"]] = "auto"
    p: Optional[float] = Field(default=None, gt=1)
    workers: int = Field(default=1, ge=1)
    scan_a: bool = False
    scan_a_offsets: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    regression: RegressionConfig = Field(default_factory=RegressionConfig)
    bounds: BoundSettings = Field(default_factory=BoundSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    nle: NLESettings = Field(default_factory=NLESettings)
    problems: Dict[str, Dict[str, Any]] = Field(default_factory=dict)

    @field_validator("id", "benchmark")
    def not_empty(cls, value: str) -> str:
        if not value:
            raise ValueError("must not be empty")
        return value

    @field_validator("sq_exponents")
    def exponents_in_unit_interval(cls, value: List[float]) -> List[float]:
        if any(not 0 < q < 1 for q in value):
            raise ValueError("sq_exponents must lie in (0, 1)")
        return value
