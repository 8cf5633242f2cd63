"""Monte Carlo estimators of the solution norms and data magnitudes, each with a standard error.

Time integrals are left-endpoint Riemann sums over the solution grid; Z is
piecewise constant on [t_i, t_{i+1}).
"""
from __future__ import annotations

import logging
import math
from typing import Literal, Optional

import numpy as np

from .bounds import DataMagnitudes, kappa_hat
from .core_model import BSDEProblem, GProcess, mat_norm, vec_norm
from .ensemble import BrownianEnsemble, DiscreteSolution, MarkovState
from .errors import ParameterError
from .models import NormEstimate

logger = logging.getLogger(__name__)


def standard_error(samples: np.ndarray) -> float:
    n = samples.shape[0]
    if n < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / math.sqrt(n))


def mc_estimate(samples: np.ndarray, kind: str, a: float = 0.0) -> NormEstimate:
    samples = np.asarray(samples, dtype=float)
    return NormEstimate(
        value=max(float(np.mean(samples)), 0.0),
        stderr=standard_error(samples),
        kind=kind,
        n_paths=int(samples.shape[0]),
        weight_a=a,
    )


def combine(*estimates: NormEstimate, kind: Optional[str] = None) -> NormEstimate:
    """Sum of estimates; stderrs add in quadrature."""
    if not estimates:
        raise ParameterError("combine needs at least one estimate.")
    return NormEstimate(
        value=sum(e.value for e in estimates),
        stderr=math.sqrt(sum(e.stderr ** 2 for e in estimates)),
        kind=kind or "+".join(e.kind for e in estimates),
        n_paths=min(e.n_paths for e in estimates),
        weight_a=estimates[0].weight_a,
    )


def _check_q(q: float) -> None:
    if not 0 < q < 1:
        raise ParameterError(f"q must lie in (0, 1), got {q}.")


def _weighted_y(sol: DiscreteSolution, a: float) -> np.ndarray:
    return vec_norm(sol.y_grid) * np.exp(a * sol.times)[None, :]


def _quadratic(sol: DiscreteSolution, a: float) -> np.ndarray:
    weights = np.exp(2.0 * a * sol.times[:-1]) * sol.dt
    return np.square(mat_norm(sol.z_grid)) @ weights


def est_D1(sol: DiscreteSolution, a: float = 0.0) -> NormEstimate:
    """max_i E[e^{a t_i}|Y_{t_i}|]; stderr at the maximising time."""
    mags = _weighted_y(sol, a)
    best = int(np.argmax(mags.mean(axis=0)))
    return mc_estimate(mags[:, best], "D1", a)


def est_Sq(sol: DiscreteSolution, q: float, a: float = 0.0) -> NormEstimate:
    _check_q(q)
    running_max = _weighted_y(sol, a).max(axis=1)
    return mc_estimate(running_max ** q, f"S^{q:g}", a)


def est_Hq(sol: DiscreteSolution, q: float, a: float = 0.0) -> NormEstimate:
    _check_q(q)
    return mc_estimate(_quadratic(sol, a) ** (0.5 * q), f"H^{q:g}", a)


def est_prop24_lhs(sol: DiscreteSolution, p: float, a: float) -> NormEstimate:
    """E sup (e^{at}|Y|)^p + E(int e^{2ar}|Z|^2 dr)^{p/2}."""
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}.")
    sup_part = _weighted_y(sol, a).max(axis=1) ** p
    z_part = _quadratic(sol, a) ** (0.5 * p)
    return mc_estimate(sup_part + z_part, f"prop24_lhs(p={p:g})", a)


def est_driver_l1(sol: DiscreteSolution, problem: BSDEProblem, a: float = 0.0) -> NormEstimate:
    totals = np.zeros(sol.n_paths)
    for i, dt in enumerate(sol.dt):
        t = float(sol.times[i])
        f = problem.driver(t, sol.y_grid[:, i, :], sol.z_grid[:, i], sol.state(i))
        totals += math.exp(a * t) * vec_norm(f) * dt
    return mc_estimate(totals, "driver_l1", a)


def _g_weight(a: float, kappa: float, t: np.ndarray) -> np.ndarray:
    a_minus = max(-a, 0.0)
    if a_minus == 0:
        return np.ones_like(t)
    if kappa <= 0:
        raise ParameterError("A negative weight needs kappa > 0 to rescale g.")
    return np.exp(-a_minus * t / kappa)


def est_g_l1(sol: DiscreteSolution, g: GProcess, kappa: float, a: float = 0.0) -> NormEstimate:
    """||e_{-a^-/kappa} g||_{L^1} over [0, beta] (dead paths contribute nothing)."""
    weights = _g_weight(a, kappa, sol.times[:-1]) * sol.dt
    totals = np.zeros(sol.n_paths)
    for i, w in enumerate(weights):
        state = sol.state(i)
        totals += w * np.asarray(g(float(sol.times[i]), state), dtype=float) * state.alive
    return mc_estimate(totals, "g_l1", a)


def est_hat_g(sol_bar: DiscreteSolution, g: GProcess, kappa: float, q: float, a: float = 0.0) -> NormEstimate:
    """Weighted L^1 norm of g + 3 + |Y|^{kappa/khat} + |Z|^{kappa/khat} along the reference solution, up to beta."""
    _check_q(q)
    if not 0 <= kappa < q:
        raise ParameterError(f"est_hat_g needs 0 <= kappa < q, got kappa={kappa}, q={q}.")
    khat = kappa_hat(kappa, q)
    exponent = kappa / khat if khat > 0 else 0.0
    weights = _g_weight(a, khat, sol_bar.times[:-1]) * sol_bar.dt
    totals = np.zeros(sol_bar.n_paths)
    for i, w in enumerate(weights):
        state = sol_bar.state(i)
        g_t = np.asarray(g(float(sol_bar.times[i]), state), dtype=float)
        y_part = np.power(vec_norm(sol_bar.y_grid[:, i, :]), exponent)
        z_part = np.power(mat_norm(sol_bar.z_grid[:, i]), exponent)
        totals += w * (g_t + 3.0 + y_part + z_part) * state.alive
    return mc_estimate(totals, "hat_g_l1", a)


def est_Lrq(
    sol: DiscreteSolution, r: float, q: float, component: Literal["y", "z"] = "y"
) -> NormEstimate:
    """(E(int |X|^r dr)^{q/r})^{1/r}; stderr by the delta method."""
    if not r > 0 or not q > 0:
        raise ParameterError("est_Lrq needs r > 0 and q > 0.")
    if component == "y":
        mags = vec_norm(sol.y_grid[:, :-1, :])
    else:
        mags = mat_norm(sol.z_grid)
    integrals = np.power(mags, r) @ sol.dt
    inner = mc_estimate(integrals ** (q / r), "Lrq-inner")
    value = inner.value ** (1.0 / r)
    stderr = inner.stderr * value / (r * inner.value) if inner.value > 0 else 0.0
    return NormEstimate(value=value, stderr=stderr, kind=f"L^{r:g},{q:g}({component})", n_paths=inner.n_paths)


def est_distance(sol: DiscreteSolution, sol_bar: DiscreteSolution, q: float, a: float = 0.0) -> NormEstimate:
    """||e_a(Y - Ybar)||_{D1} + |e_a(Z - Zbar)|_{H^q}."""
    diff = sol.minus(sol_bar)
    return combine(est_D1(diff, a), est_Hq(diff, q, a), kind="distance")


def _grid_states(problem: BSDEProblem, ens: BrownianEnsemble) -> np.ndarray:
    spec = problem.cutoff
    if spec is None:
        return np.ones((ens.n_paths, ens.n_steps + 1), dtype=bool)
    return spec.alive_mask(ens.paths, ens.times)


def est_data_magnitudes(
    problem: BSDEProblem,
    ens: BrownianEnsemble,
    a: float = 0.0,
    *,
    perturbed: Optional[BSDEProblem] = None,
    sol_bar: Optional[DiscreteSolution] = None,
    q: Optional[float] = None,
    p: Optional[float] = None,
) -> DataMagnitudes:
    """Data magnitudes of ``problem``; with ``perturbed`` also the deltas along ``sol_bar``."""
    if problem.stopping_time is not None:
        raise ParameterError("est_data_magnitudes needs a deterministic-horizon problem.")
    if perturbed is not None and sol_bar is None:
        raise ParameterError("A reference solution is required to estimate delta_f.")
    paths, times = ens.paths, ens.times
    k, d = problem.k_dim, problem.d_dim
    driver = problem.driver
    alive = _grid_states(problem, ens)
    xi = problem.terminal.evaluate(paths, times)
    T = problem.horizon_T
    e_xi = math.exp(a * T) * float(np.mean(vec_norm(xi)))

    f_zero = np.zeros(ens.n_paths)
    g_total = 0.0
    g_weights = _g_weight(a, driver.kappa, times[:-1])
    for i in range(ens.n_steps):
        t = float(times[i])
        dt = float(times[i + 1] - times[i])
        state = MarkovState(b=paths[:, i, :], alive=alive[:, i])
        f_zero += math.exp(a * t) * vec_norm(driver.at_origin(t, state, k, d)) * dt
        g_t = np.asarray(driver.g_process(t, state), dtype=float) * alive[:, i]
        g_total += g_weights[i] * float(np.mean(g_t)) * dt

    fields = dict(e_xi=e_xi, f_zero_l1=float(np.mean(f_zero)), g_l1=g_total)
    if p is not None:
        fields["xi_p_moment"] = math.exp(a * p * T) * float(np.mean(vec_norm(xi) ** p))
        fields["f_zero_p_moment"] = float(np.mean(f_zero ** p))
    if perturbed is not None:
        xi_pert = perturbed.terminal.evaluate(paths, times)
        fields["delta_xi"] = float(np.mean(vec_norm(xi_pert - xi)))
        delta_f = np.zeros(ens.n_paths)
        for i, dt in enumerate(sol_bar.dt):
            t = float(sol_bar.times[i])
            y, z, state = sol_bar.y_grid[:, i, :], sol_bar.z_grid[:, i], sol_bar.state(i)
            delta_f += vec_norm(perturbed.driver(t, y, z, state) - driver(t, y, z, state)) * dt
        fields["delta_f"] = float(np.mean(delta_f))
    if sol_bar is not None and q is not None:
        source = (perturbed or problem).driver
        fields["hat_g_l1"] = est_hat_g(sol_bar, source.g_process, source.kappa, q, a).value
    mags = DataMagnitudes(**fields)
    logger.debug("Data magnitudes for %s at a=%g: %s", problem.name, a, mags)
    return mags
