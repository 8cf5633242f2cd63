"""Closed-form right-hand sides, thresholds and auxiliary functions of the a priori estimates.

Everything here is plain arithmetic on magnitudes estimated elsewhere; no simulation.
"""
from __future__ import annotations

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

from .core_model import DriverSpec
from .errors import AdmissibilityError, ParameterError

PsiKind = Literal["1", "2", "3", "4", "cor2"]
Which = Literal["estimate", "driver_l1"]


class BoundConfig(BaseModel):
    q: float = Field(gt=0, lt=1)
    a: float = 0.0
    c_kq: float = Field(default=1.0, gt=0)
    c_p: float = Field(default=1.0, gt=0)
    big_C_cor2: float = Field(default=1.0, gt=0)

    @property
    def a_plus(self) -> float:
        return max(self.a, 0.0)

    @property
    def a_minus(self) -> float:
        return max(-self.a, 0.0)


class DataMagnitudes(BaseModel):
    e_xi: float = Field(ge=0)
    f_zero_l1: float = Field(ge=0)
    g_l1: float = Field(default=0.0, ge=0)
    hat_g_l1: Optional[float] = Field(default=None, ge=0)
    delta_xi: Optional[float] = Field(default=None, ge=0)
    delta_f: Optional[float] = Field(default=None, ge=0)
    xi_p_moment: Optional[float] = Field(default=None, ge=0)
    f_zero_p_moment: Optional[float] = Field(default=None, ge=0)

    @property
    def data_sum(self) -> float:
        return self.e_xi + self.f_zero_l1

    @property
    def delta_sum(self) -> float:
        if self.delta_xi is None or self.delta_f is None:
            raise ParameterError("delta_xi and delta_f are required for stability bounds.")
        return self.delta_xi + self.delta_f


def curly_C(x: float, y: float, z: float, lam: float, T: float) -> float:
    """2(1 + y) x max(z + lambda, 1) max(1, T)^3."""
    if x < 0 or y < 0 or z < 0:
        raise ParameterError("curly_C arguments must be non-negative.")
    return 2.0 * (1.0 + y) * x * max(z + lam, 1.0) * max(1.0, T) ** 3


def kappa_hat(kappa: float, q: float) -> float:
    return math.sqrt(kappa * q)


def _check_kappa_q(kappa: float, q: float) -> None:
    if not 0 <= kappa < 1:
        raise ParameterError(f"kappa must lie in [0, 1), got {kappa}.")
    if not kappa < q < 1:
        raise ParameterError(f"q must lie in (kappa, 1) = ({kappa}, 1), got {q}.")


def psi_exponent(kind: PsiKind, kappa: float, q: float) -> float:
    kind = str(kind)
    if kind == "cor2":
        return 0.25 * kappa * (1.0 - kappa * kappa)
    _check_kappa_q(kappa, q)
    if kind == "1":
        return kappa ** 2 * (1.0 - q)
    if kind == "2":
        return kappa ** 3 * (1.0 - q) ** 2
    khat = kappa_hat(kappa, q)
    if kind == "3":
        return khat ** 2 * (1.0 - q)
    if kind == "4":
        return khat ** 3 * (1.0 - q) ** 2
    raise ParameterError(f"Unknown psi kind '{kind}'.")


def psi(kind: Union[PsiKind, int], x: float, kappa: float, q: float) -> float:
    """x + x^e with the kind-specific exponent e; psi(0) = 0."""
    if x < 0:
        raise ParameterError(f"psi is defined for x >= 0, got {x}.")
    exponent = psi_exponent(str(kind), kappa, q)  # type: ignore[arg-type]
    if x == 0:
        return 0.0
    return x + x ** exponent


def elementary_bound(x: float, a: float, b: float) -> float:
    """Majorant x + x^a of x^b for 0 <= a <= b <= 1."""
    if not 0 <= a <= b <= 1:
        raise ParameterError("elementary_bound needs 0 <= a <= b <= 1.")
    return x + x ** a


def admissible_a(
    context: Literal["prop24", "thm34", "thm35"],
    mu: float,
    lam: float,
    *,
    p: Optional[float] = None,
    q: Optional[float] = None,
    kappa: Optional[float] = None,
) -> float:
    """Smallest exponential weight a for which the named estimate applies."""
    if context == "prop24":
        if p is None or not p > 1:
            raise ParameterError("prop24 threshold needs p > 1.")
        denom = min(1.0, p - 1.0)
    elif context in ("thm34", "thm35"):
        if q is None or kappa is None:
            raise ParameterError(f"{context} threshold needs q and kappa.")
        if lam == 0:
            return mu
        if kappa == 0:
            raise ParameterError(
                f"{context} threshold degenerates for kappa = 0 with lambda > 0; use the z-independent bounds."
            )
        _check_kappa_q(kappa, q)
        ratio = q / kappa if context == "thm34" else math.sqrt(q / kappa)
        denom = min(1.0, ratio - 1.0)
    else:
        raise ParameterError(f"Unknown admissibility context '{context}'.")
    return mu + lam * lam / denom


def require_admissible(a: float, threshold: float, context: str) -> None:
    if a < threshold:
        raise AdmissibilityError(
            f"Weight a={a:g} is below the {context} admissibility threshold {threshold:.6g}.",
            threshold=threshold,
        )


def rhs_prop33(
    which: Literal["D1", "Sq", "driver_l1"],
    mags: DataMagnitudes,
    *,
    q: Optional[float] = None,
    a: Optional[float] = None,
    mu: Optional[float] = None,
) -> float:
    """Bounds for z-independent drivers; ``mags`` carries the weighted moments for ``which``."""
    if a is not None and mu is not None:
        require_admissible(a, mu, "prop33")
    if which == "D1":
        return mags.data_sum
    if which == "Sq":
        if q is None or not 0 < q < 1:
            raise ParameterError(f"Sq bound needs q in (0, 1), got {q}.")
        return mags.data_sum ** q / (1.0 - q)
    if which == "driver_l1":
        return 2.0 * mags.data_sum
    raise ParameterError(f"Unknown prop33 bound '{which}'.")


def rhs_dq(d1_norm: float, q: float) -> float:
    if not 0 < q < 1:
        raise ParameterError(f"dq bound needs q in (0, 1), got {q}.")
    return d1_norm ** q / (1.0 - q)


def rhs_prop24(mags: DataMagnitudes, cfg: BoundConfig, p: float, mu: float, lam: float) -> float:
    require_admissible(cfg.a, admissible_a("prop24", mu, lam, p=p), "prop24")
    if mags.xi_p_moment is None or mags.f_zero_p_moment is None:
        raise ParameterError("prop24 bound needs xi_p_moment and f_zero_p_moment.")
    return cfg.c_p * (mags.xi_p_moment + mags.f_zero_p_moment)


def _require_scalar(which: Which, k_dim: int) -> None:
    if which == "driver_l1" and k_dim != 1:
        raise ParameterError("driver_l1 bounds hold for k = 1 only.")


def rhs_thm34(
    which: Which,
    mags: DataMagnitudes,
    cfg: BoundConfig,
    driver: DriverSpec,
    T: float,
    k_dim: int = 1,
) -> float:
    _require_scalar(which, k_dim)
    _check_kappa_q(driver.kappa, cfg.q)
    threshold = admissible_a("thm34", driver.mu, driver.lam, q=cfg.q, kappa=driver.kappa)
    require_admissible(cfg.a, threshold, "thm34")
    big_c = curly_C(cfg.c_kq, mags.g_l1, math.exp(cfg.a_plus * T) * driver.gamma, driver.lam, T)
    if which == "estimate":
        return big_c * psi("1", mags.data_sum, driver.kappa, cfg.q)
    return big_c ** 2 * psi("2", mags.data_sum, driver.kappa, cfg.q)


def rhs_thm35(
    which: Which,
    mags: DataMagnitudes,
    cfg: BoundConfig,
    driver: DriverSpec,
    T: float,
    k_dim: int = 1,
) -> float:
    _require_scalar(which, k_dim)
    _check_kappa_q(driver.kappa, cfg.q)
    threshold = admissible_a("thm35", driver.mu, driver.lam, q=cfg.q, kappa=driver.kappa)
    require_admissible(cfg.a, threshold, "thm35")
    if mags.hat_g_l1 is None:
        raise ParameterError("thm35 bound needs hat_g_l1.")
    delta = mags.delta_sum
    big_c = curly_C(cfg.c_kq, mags.hat_g_l1, 2.0 * math.exp(cfg.a_plus * T) * driver.gamma, driver.lam, T)
    if which == "estimate":
        return big_c * psi("3", delta, driver.kappa, cfg.q)
    return big_c ** 2 * psi("4", delta, driver.kappa, cfg.q)


def big_l_a(x: float, mags: DataMagnitudes, cfg: BoundConfig, driver: DriverSpec, T: float) -> float:
    """C(x, g norm, e^{a+T} gamma) psi_1(K_a) with K_a taken from the reference data."""
    big_c = curly_C(x, mags.g_l1, math.exp(cfg.a_plus * T) * driver.gamma, driver.lam, T)
    return big_c * psi("1", mags.data_sum, driver.kappa, cfg.q)


def rhs_cor1(
    which: Which,
    mags: DataMagnitudes,
    cfg: BoundConfig,
    driver: DriverSpec,
    T: float,
    k_dim: int = 1,
) -> float:
    _require_scalar(which, k_dim)
    _check_kappa_q(driver.kappa, cfg.q)
    threshold = admissible_a("thm35", driver.mu, driver.lam, q=cfg.q, kappa=driver.kappa)
    require_admissible(cfg.a, threshold, "cor1")
    delta = mags.delta_sum
    l_a = big_l_a(cfg.c_kq, mags, cfg, driver, T)
    t1 = max(1.0, T)
    if which == "estimate":
        return t1 * l_a ** 2 * psi("3", delta, driver.kappa, cfg.q)
    return t1 * l_a ** 3 * psi("4", delta, driver.kappa, cfg.q)


def hat_g_majorant(mags: DataMagnitudes, cfg: BoundConfig, driver: DriverSpec, T: float) -> float:
    """Data-only majorant of the weighted hat-g norm: 5 T_1 L_a(c_kq)."""
    return 5.0 * max(1.0, T) * big_l_a(cfg.c_kq, mags, cfg, driver, T)


def rhs_cor2(
    eta_bar_l1: float,
    f_zero_l1: float,
    g_l1: float,
    delta_eta: float,
    kappa: float,
    cfg: BoundConfig,
) -> float:
    if min(eta_bar_l1, f_zero_l1, g_l1, delta_eta) < 0:
        raise ParameterError("rhs_cor2 inputs must be non-negative.")
    if not 0 < kappa < 1:
        raise ParameterError(f"rhs_cor2 needs kappa in (0, 1), got {kappa}.")
    data = (1.0 + g_l1) ** 2 * (1.0 + eta_bar_l1 + f_zero_l1) ** 2
    return cfg.big_C_cor2 * data * psi("cor2", delta_eta, kappa, 0.5 * (1.0 + kappa))
