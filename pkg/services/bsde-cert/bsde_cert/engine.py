from __future__ import annotations

import itertools
import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import hermite_e

from .core_model import BSDEProblem, reduce_stopping_time
from .ensemble import BrownianEnsemble, DiscreteSolution, MarkovState, SolverMeta, gen_brownian
from .errors import ParameterError, PicardDivergenceError, RankDeficiencyError
from .models import RegressionConfig

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-10


@lru_cache(maxsize=None)
def _multi_indices(degree: int, dims: int) -> Tuple[Tuple[int, ...], ...]:
    return tuple(alpha for alpha in itertools.product(range(degree + 1), repeat=dims) if sum(alpha) <= degree)


def hermite_basis(x: np.ndarray, degree: int) -> np.ndarray:
    """Tensor He_k basis of total degree <= degree in the standardised state x (n, m)."""
    n, dims = x.shape
    vander = [hermite_e.hermevander(x[:, j], degree) for j in range(dims)]
    columns = []
    for alpha in _multi_indices(degree, dims):
        col = np.ones(n)
        for j, power in enumerate(alpha):
            if power:
                col = col * vander[j][:, power]
        columns.append(col)
    return np.column_stack(columns)


class _Projector:
    """Least-squares projection onto the span of one step's basis."""

    def __init__(self, basis: np.ndarray, step: int):
        q, r = scipy.linalg.qr(basis, mode="economic")
        diag = np.abs(np.diag(r))
        if diag.size and diag.min() <= RANK_RTOL * diag.max():
            raise RankDeficiencyError(
                f"Regression basis at time step {step} is rank deficient "
                f"({basis.shape[0]} samples, {basis.shape[1]} functions).",
                step=step,
            )
        self._q = q

    def project(self, target: np.ndarray) -> np.ndarray:
        return self._q @ (self._q.T @ target)


class BackwardEngine:
    """Backward Euler regression solver, implicit in y, with Picard sweeps in z.

    Sweep 0 evaluates the driver at z = 0; every later sweep feeds the previous
    sweep's Z into the driver. z-independent drivers converge after one sweep.
    """

    def __init__(
        self,
        problem: BSDEProblem,
        ens: BrownianEnsemble,
        cfg: Optional[RegressionConfig] = None,
        native_stopping: bool = False,
    ):
        if ens.d_dim != problem.d_dim:
            raise ParameterError(f"Ensemble has d={ens.d_dim} but problem '{problem.name}' needs d={problem.d_dim}.")
        if not math.isclose(ens.horizon_T, problem.horizon_T):
            raise ParameterError(
                f"Ensemble horizon {ens.horizon_T:g} differs from problem horizon {problem.horizon_T:g}."
            )
        if native_stopping and problem.stopping_time is None:
            raise ParameterError("Native stopping-horizon solve needs a stopping time.")
        if not native_stopping and problem.stopping_time is not None:
            raise ParameterError(
                f"Problem '{problem.name}' has a stopping time; apply reduce_stopping_time before solving."
            )
        self.problem = problem
        self.ens = ens
        self.cfg = cfg or RegressionConfig()
        self.native_stopping = native_stopping
        self._times = ens.times
        self._paths = ens.paths
        self._state_paths = ens.paths
        spec = problem.stopping_time if native_stopping else problem.cutoff
        grid = np.arange(ens.n_steps + 1)
        if spec is None:
            self._alive = np.ones((ens.n_paths, ens.n_steps + 1), dtype=bool)
            self._stop_idx = None
        else:
            self._stop_idx = spec.indices(self._paths, self._times)
            self._alive = grid[None, :] < self._stop_idx[:, None]
            if not native_stopping:
                # reduced problems regress every path on the stopped state B_{t ^ beta}
                frozen = np.minimum(grid[None, :], self._stop_idx[:, None])
                self._state_paths = self._paths[np.arange(ens.n_paths)[:, None], frozen, :]
        self._alive.setflags(write=False)

    def solve(self) -> DiscreteSolution:
        problem, cfg = self.problem, self.cfg
        n, steps, k, d = self.ens.n_paths, self.ens.n_steps, problem.k_dim, problem.d_dim
        xi = problem.terminal.evaluate(self._paths, self._times, at=self._stop_idx if self.native_stopping else None)
        if xi.shape != (n, k):
            raise ParameterError(f"Terminal payoff has shape {xi.shape}, expected {(n, k)}.")
        sweeps = cfg.picard_iters if problem.driver.z_dependent else 1
        z_prev = np.zeros((n, steps, d, k))
        y_prev: Optional[np.ndarray] = None
        residual = math.inf
        for sweep in range(sweeps):
            y, z, implicit_residual = self._sweep(xi, z_prev)
            if y_prev is not None:
                residual = float(np.max(np.abs(y - y_prev)))
                logger.debug("Picard sweep %d for %s: residual %.3e", sweep, problem.name, residual)
                if residual <= cfg.picard_tol:
                    break
            elif not problem.driver.z_dependent:
                residual = 0.0
            y_prev, z_prev = y, z
        else:
            if problem.driver.z_dependent:
                raise PicardDivergenceError(
                    f"Picard loop for '{problem.name}' did not reach tolerance {cfg.picard_tol:g} "
                    f"after {sweeps} sweeps (last residual {residual:.3e}).",
                    residual=residual,
                )
        meta = SolverMeta(
            scheme=f"lsmc-{cfg.implicitness}-y",
            iterations=sweep + 1,
            terminal_residual=residual,
            implicit_residual=implicit_residual,
            degree=cfg.degree,
            problem=problem.name,
        )
        logger.info(
            "Solved %s: Y0=%s after %d sweep(s), residual %.3e",
            problem.name,
            np.array2string(y[:, 0, :].mean(axis=0), precision=6),
            meta.iterations,
            residual,
        )
        for arr in (y, z):
            arr.setflags(write=False)
        return DiscreteSolution(
            times=self._times,
            y_grid=y,
            z_grid=z,
            brownian=self._paths,
            alive=self._alive,
            solver_meta=meta,
        )

    def _basis(self, rows: np.ndarray, i: int) -> np.ndarray:
        t = float(self._times[i])
        m = rows.shape[0]
        if t == 0.0 or m <= len(_multi_indices(self.cfg.degree, self.problem.d_dim)):
            return np.ones((m, 1))
        x = self._state_paths[rows, i, :] / math.sqrt(t)
        return hermite_basis(x, self.cfg.degree)

    def _sweep(self, xi: np.ndarray, z_prev: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        problem = self.problem
        n, steps, k, d = self.ens.n_paths, self.ens.n_steps, problem.k_dim, problem.d_dim
        dB = self.ens.increments
        y = np.empty((n, steps + 1, k))
        z = np.zeros((n, steps, d, k))
        y[:, steps, :] = xi
        worst = 0.0
        for i in range(steps - 1, -1, -1):
            dt = float(self._times[i + 1] - self._times[i])
            y_next = y[:, i + 1, :]
            live = self._alive[:, i]
            rows = np.flatnonzero(live) if self.native_stopping else np.arange(n)
            cond = y_next.copy()
            if rows.size:
                projector = _Projector(self._basis(rows, i), i)
                cond_live = projector.project(y_next[rows])
                spread = y_next[rows] - cond_live
                target = (dB[rows, i, :, None] * spread[:, None, :]).reshape(rows.size, d * k) / dt
                z[rows, i] = projector.project(target).reshape(rows.size, d, k)
                cond[rows] = cond_live
            z_arg = z_prev[:, i] if problem.driver.z_dependent else z[:, i]
            t = float(self._times[i])
            if self.native_stopping:
                # Y stays at the stopped payoff once beta has passed
                y_i = cond.copy()
                if rows.size:
                    state = MarkovState.unstopped(self._paths[rows, i, :])
                    y_i[rows] = self._implicit(t, dt, cond[rows], z_arg[rows], state, i)
                    drift = problem.driver(t, y_i[rows], z[rows, i], state)
            else:
                state = MarkovState(b=self._paths[:, i, :], alive=live)
                y_i = self._implicit(t, dt, cond, z_arg, state, i)
                drift = problem.driver(t, y_i, z[:, i], state)[rows]
            y[:, i, :] = y_i
            if rows.size:
                worst = max(worst, float(np.max(np.abs(y_i[rows] - cond[rows] - drift * dt))))
        return y, z, worst

    def _implicit(
        self, t: float, dt: float, cond: np.ndarray, z_arg: np.ndarray, state: MarkovState, step: int
    ) -> np.ndarray:
        driver, cfg = self.problem.driver, self.cfg
        if cfg.implicitness == "explicit":
            return cond + dt * driver(t, cond, z_arg, state)
        lipschitz = driver.y_lipschitz
        weight = 1.0 if lipschitz is not None and lipschitz * dt < 0.5 else cfg.damping
        y = cond.copy()
        change = math.inf
        for _ in range(cfg.inner_iters):
            update = cond + dt * driver(t, y, z_arg, state)
            new = (1.0 - weight) * y + weight * update
            if not np.all(np.isfinite(new)):
                break
            change = float(np.max(np.abs(new - y))) if new.size else 0.0
            y = new
            if change <= cfg.inner_tol * max(1.0, float(np.max(np.abs(y))) if y.size else 1.0):
                return y
        raise PicardDivergenceError(
            f"Implicit step {step} (t={t:g}) of '{self.problem.name}' did not converge "
            f"within {cfg.inner_iters} iterations (last change {change:.3e}).",
            residual=change,
        )


def solve_bsde(
    problem: BSDEProblem, ens: BrownianEnsemble, cfg: Optional[RegressionConfig] = None
) -> DiscreteSolution:
    return BackwardEngine(problem, ens, cfg).solve()


def solve_on_stopping_horizon(
    problem: BSDEProblem, ens: BrownianEnsemble, cfg: Optional[RegressionConfig] = None
) -> DiscreteSolution:
    """Solve on [0, beta] directly, holding Y at the stopped payoff after beta."""
    return BackwardEngine(problem, ens, cfg, native_stopping=True).solve()


def reference_oracle(
    problem: BSDEProblem,
    seed: int,
    refinement: int,
    *,
    base_paths: int = 2_000,
    base_steps: int = 10,
    cfg: Optional[RegressionConfig] = None,
    max_cells: Optional[int] = None,
) -> Tuple[np.ndarray, float]:
    """Y0 at 2r-fold refinement with the error estimate |Y0(2r) - Y0(r)|."""
    if refinement < 1:
        raise ParameterError("refinement must be at least 1.")
    if problem.stopping_time is not None:
        problem = reduce_stopping_time(problem)
    values: List[np.ndarray] = []
    for level in (refinement, 2 * refinement):
        ens = gen_brownian(
            seed, base_paths * level, base_steps * level, problem.horizon_T, problem.d_dim, max_cells=max_cells
        )
        values.append(solve_bsde(problem, ens, cfg).y0())
    error = float(np.linalg.norm(values[1] - values[0]))
    logger.info("Reference oracle for %s at r=%d: Y0=%s, error %.3e", problem.name, refinement, values[1], error)
    return values[1], error
