from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from .bounds import (
    BoundConfig,
    admissible_a,
    hat_g_majorant,
    psi,
    require_admissible,
    rhs_cor1,
    rhs_cor2,
    rhs_dq,
    rhs_prop24,
    rhs_prop33,
    rhs_thm34,
    rhs_thm35,
)
from .catalog import perturb_problem, resolve_problem
from .config import Settings, get_settings
from .core_model import BSDEProblem, StoppingTimeSpec, UniformSampler, check_assumptions, reduce_stopping_time
from .engine import solve_bsde
from .ensemble import BrownianEnsemble, DiscreteSolution, gen_brownian
from .errors import ConfigError
from .models import (
    GRID_NOTE,
    CertificateReport,
    ConfigEcho,
    ExperimentConfig,
    NLEReport,
    StabilityCell,
    StabilityReport,
    safe_ratio,
)
from .norms import (
    combine,
    est_D1,
    est_data_magnitudes,
    est_distance,
    est_driver_l1,
    est_Hq,
    est_prop24_lhs,
    est_Sq,
    mc_estimate,
)

logger = logging.getLogger(__name__)

AUTO_MARGIN = 1e-6
ASSUMPTION_SAMPLES = 2_000

T = TypeVar("T")
R = TypeVar("R")


def _map_ordered(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Evaluate cells concurrently; results keep the input order."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _flatten(groups: Iterable[List[T]]) -> List[T]:
    return [item for group in groups for item in group]


class ExperimentService:
    """Resolves, solves and certifies the problem named by one experiment config."""

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings or get_settings()
        self.problem = resolve_problem(config.benchmark, config.problems, config.horizon_T)
        self.working = reduce_stopping_time(self.problem) if self.problem.stopping_time else self.problem
        self.workers = max(config.workers, 1)

    def ensemble(self) -> BrownianEnsemble:
        cfg = self.config
        return gen_brownian(
            cfg.seed, cfg.paths, cfg.steps, self.problem.horizon_T, self.problem.d_dim, max_cells=self.settings.max_cells
        )

    def solve(self, problem: BSDEProblem, ens: BrownianEnsemble) -> DiscreteSolution:
        return solve_bsde(problem, ens, self.config.regression)

    def echo(self, a: float, *, q: Optional[float] = None, p: Optional[float] = None) -> ConfigEcho:
        cfg = self.config
        return ConfigEcho(
            benchmark=cfg.benchmark,
            a=a,
            q=q,
            p=p,
            kappa=self.problem.driver.kappa,
            seed=cfg.seed,
            n_paths=cfg.paths,
            n_steps=cfg.steps,
        )

    def bound_config(self, a: float, q: float) -> BoundConfig:
        b = self.config.bounds
        return BoundConfig(q=q, a=a, c_kq=b.c_kq, c_p=b.c_p, big_C_cor2=b.big_C_cor2)

    def resolve_weight(self, context: str, *, q: Optional[float] = None, p: Optional[float] = None) -> float:
        """Configured weight, or the admissibility threshold plus a small margin for "auto"."""
        driver = self.working.driver
        if context == "prop33":
            threshold = driver.mu
        else:
            threshold = admissible_a(context, driver.mu, driver.lam, p=p, q=q, kappa=driver.kappa)  # type: ignore[arg-type]
        if self.config.a == "auto":
            return threshold + AUTO_MARGIN
        a = float(self.config.a)
        require_admissible(a, threshold, context)
        return a

    def weights(self, base: float) -> List[float]:
        if not self.config.scan_a:
            return [base]
        return [base + offset for offset in self.config.scan_a_offsets]

    # certificates

    def certify(self) -> List[CertificateReport]:
        cfg = self.config
        ens = self.ensemble()
        sol = self.solve(self.working, ens)
        z_dependent = self.working.driver.z_dependent
        if z_dependent:
            base = self.resolve_weight("thm34", q=cfg.q)
            suite = self._thm34_suite
        else:
            base = self.resolve_weight("prop33")
            suite = self._prop33_suite
        reports = _flatten(_map_ordered(lambda a: suite(ens, sol, a), self.weights(base), self.workers))
        if cfg.p is not None:
            reports.append(self._prop24(ens, sol, cfg.p))
        for report in reports:
            log = logger.warning if report.verdict in ("violated", "holds (marginal)") else logger.info
            log(
                "%s a=%g: lhs=%.6g rhs=%.6g ratio=%.4g -> %s",
                report.inequality_id,
                report.config.a,
                report.lhs.value,
                report.rhs,
                report.ratio,
                report.verdict,
            )
        return reports

    def _prop33_suite(self, ens: BrownianEnsemble, sol: DiscreteSolution, a: float) -> List[CertificateReport]:
        problem = self.working
        mu = problem.driver.mu
        mags = est_data_magnitudes(problem, ens, a)
        d1 = est_D1(sol, a)
        reports = [
            CertificateReport.evaluate(
                "prop33_D1", d1, rhs_prop33("D1", mags, a=a, mu=mu), self.echo(a), note=GRID_NOTE
            )
        ]
        for q in self.config.sq_exponents:
            sq = est_Sq(sol, q, a)
            mags_q = est_data_magnitudes(problem, ens, a * q)
            reports.append(
                CertificateReport.evaluate("prop33_Sq", sq, rhs_prop33("Sq", mags_q, q=q), self.echo(a, q=q))
            )
            reports.append(
                CertificateReport.evaluate("dq", sq, rhs_dq(d1.value, q), self.echo(a, q=q), note=GRID_NOTE)
            )
        if problem.k_dim == 1:
            reports.append(
                CertificateReport.evaluate(
                    "prop33_driver_l1", est_driver_l1(sol, problem, a), rhs_prop33("driver_l1", mags), self.echo(a)
                )
            )
        return reports

    def _thm34_suite(self, ens: BrownianEnsemble, sol: DiscreteSolution, a: float) -> List[CertificateReport]:
        problem = self.working
        q = self.config.q
        bounds = self.bound_config(a, q)
        mags = est_data_magnitudes(problem, ens, a)
        lhs = combine(est_D1(sol, a), est_Hq(sol, q, a), kind="D1+Hq")
        T = problem.horizon_T
        reports = [
            CertificateReport.evaluate(
                "thm34_estimate",
                lhs,
                rhs_thm34("estimate", mags, bounds, problem.driver, T, problem.k_dim),
                self.echo(a, q=q),
                note=GRID_NOTE,
            )
        ]
        if problem.k_dim == 1:
            reports.append(
                CertificateReport.evaluate(
                    "thm34_driver_l1",
                    est_driver_l1(sol, problem, a),
                    rhs_thm34("driver_l1", mags, bounds, problem.driver, T, problem.k_dim),
                    self.echo(a, q=q),
                )
            )
        return reports

    def _prop24(self, ens: BrownianEnsemble, sol: DiscreteSolution, p: float) -> CertificateReport:
        problem = self.working
        a = self.resolve_weight("prop24", p=p)
        mags = est_data_magnitudes(problem, ens, a, p=p)
        bounds = self.bound_config(a, self.config.q)
        rhs = rhs_prop24(mags, bounds, p, problem.driver.mu, problem.driver.lam)
        return CertificateReport.evaluate("prop24", est_prop24_lhs(sol, p, a), rhs, self.echo(a, p=p))

    # stability

    def stability_sweep(self) -> StabilityReport:
        cfg = self.config
        sweep = cfg.sweep
        base = self.working
        q = cfg.q
        if sweep.driver_shift is not None:
            self._check_perturbed_driver(perturb_problem(base, max(sweep.epsilons), driver_shift=sweep.driver_shift))
        a = self.resolve_weight("thm35", q=q)
        bounds = self.bound_config(a, q)
        ens = self.ensemble()
        sol_bar = self.solve(base, ens)
        driver = base.driver
        T = base.horizon_T

        def cell(eps: float) -> StabilityCell:
            perturbed = perturb_problem(base, eps, sweep.xi_shift, sweep.driver_shift)
            sol = self.solve(perturbed, ens)
            mags = est_data_magnitudes(base, ens, a, perturbed=perturbed, sol_bar=sol_bar, q=q)
            measured = est_distance(sol, sol_bar, q, a)
            delta = mags.delta_sum
            rhs35 = rhs_thm35("estimate", mags, bounds, driver, T, base.k_dim)
            rhs_c1 = rhs_cor1("estimate", mags, bounds, driver, T, base.k_dim)
            return StabilityCell(
                epsilon=eps,
                delta_xi=mags.delta_xi,
                delta_f=mags.delta_f,
                delta_sum=delta,
                measured=measured,
                hat_g_l1=mags.hat_g_l1,
                rhs_thm35=rhs35,
                rhs_cor1=rhs_c1,
                ratio_thm35=safe_ratio(measured.value, rhs35),
                ratio_cor1=safe_ratio(measured.value, rhs_c1),
                psi3=psi("3", delta, driver.kappa, q),
            )

        cells = _map_ordered(cell, list(sweep.epsilons), self.workers)
        measured = np.array([c.measured.value for c in cells])
        shapes = np.array([c.psi3 for c in cells])
        deltas = np.array([c.delta_sum for c in cells])
        fitted = float(measured @ shapes / (shapes @ shapes)) if shapes @ shapes > 0 else 0.0
        reference = est_data_magnitudes(base, ens, a)
        report = StabilityReport(
            epsilons=list(sweep.epsilons),
            cells=cells,
            fitted_constant=fitted,
            dispersion=_dispersion(measured, shapes),
            linear_dispersion=_dispersion(measured, deltas),
            hat_g_majorant=hat_g_majorant(reference, bounds, driver, T),
            config=self.echo(a, q=q),
        )
        logger.info(
            "Stability sweep %s: fitted constant %.4g, dispersion %.3g (linear %.3g)",
            cfg.benchmark,
            report.fitted_constant,
            report.dispersion,
            report.linear_dispersion,
        )
        return report

    def _check_perturbed_driver(self, perturbed: BSDEProblem) -> None:
        sampler = UniformSampler(perturbed.k_dim, perturbed.d_dim, perturbed.horizon_T, seed=self.config.seed)
        report = check_assumptions(perturbed.driver, sampler, ASSUMPTION_SAMPLES)
        if report.z_violation > 0:
            raise ConfigError(
                f"Perturbed driver '{perturbed.driver.name}' violates its (Z) growth bound "
                f"(largest residual {report.z_violation:.3g})."
            )

    # nonlinear expectation

    def nle_stability(self) -> NLEReport:
        cfg = self.config
        problem = self.problem
        if problem.k_dim != 1:
            raise ConfigError("Nonlinear-expectation stability is defined for k = 1 only.")
        kappa = problem.driver.kappa
        if not 0 < kappa < 1:
            raise ConfigError(f"Nonlinear-expectation bound needs kappa in (0, 1), got {kappa}.")
        alpha = cfg.nle.alpha
        beta = cfg.nle.beta or problem.stopping_time or StoppingTimeSpec.deterministic(problem.horizon_T)
        ens = self.ensemble()
        alpha_idx = alpha.indices(ens.paths, ens.times)
        beta_idx = beta.indices(ens.paths, ens.times)
        if np.any(alpha_idx > beta_idx):
            raise ConfigError(f"alpha={alpha.label()} exceeds beta={beta.label()} on some paths.")
        staged = replace(problem, stopping_time=beta)
        first = reduce_stopping_time(staged)
        second = reduce_stopping_time(perturb_problem(staged, cfg.nle.epsilon, xi_shift=cfg.nle.eta_shift))
        sol_first = self.solve(first, ens)
        sol_second = self.solve(second, ens)
        rows = np.arange(ens.n_paths)
        y_first = sol_first.y_grid[rows, alpha_idx, 0]
        y_second = sol_second.y_grid[rows, alpha_idx, 0]
        measured = mc_estimate(np.abs(y_first - y_second), "nle_L1")
        mags = est_data_magnitudes(second, ens, 0.0)
        eta = first.terminal.evaluate(ens.paths, ens.times)
        eta_bar = second.terminal.evaluate(ens.paths, ens.times)
        delta_eta = float(np.mean(np.abs(eta - eta_bar)))
        rhs = rhs_cor2(mags.e_xi, mags.f_zero_l1, mags.g_l1, delta_eta, kappa, self.bound_config(0.0, 0.5 * (1 + kappa)))
        report = NLEReport(
            alpha=alpha.label(),
            beta=beta.label(),
            eta_bar_l1=mags.e_xi,
            delta_eta=delta_eta,
            f_zero_l1=mags.f_zero_l1,
            g_l1=mags.g_l1,
            measured=measured,
            rhs_cor2=rhs,
            ratio=safe_ratio(measured.value, rhs),
            q_used=0.5 * (1 + kappa),
            config=self.echo(0.0, q=0.5 * (1 + kappa)),
        )
        logger.info(
            "NLE stability %s on [%s, %s]: measured %.6g, rhs %.6g",
            cfg.benchmark,
            report.alpha,
            report.beta,
            measured.value,
            rhs,
        )
        return report


def _dispersion(measured: np.ndarray, shapes: np.ndarray) -> float:
    ratios = np.array([safe_ratio(m, s) for m, s in zip(measured, shapes)])
    finite = ratios[np.isfinite(ratios)]
    if finite.size == 0 or finite.min() <= 0:
        return float("inf")
    return float(finite.max() / finite.min())


def run_certify(config: ExperimentConfig, settings: Optional[Settings] = None) -> List[CertificateReport]:
    return ExperimentService(config, settings).certify()


def run_stability_sweep(config: ExperimentConfig, settings: Optional[Settings] = None) -> StabilityReport:
    return ExperimentService(config, settings).stability_sweep()


def run_nle_stability(config: ExperimentConfig, settings: Optional[Settings] = None) -> NLEReport:
    return ExperimentService(config, settings).nle_stability()
