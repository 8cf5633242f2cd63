from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .config import get_settings
from .errors import CapacityError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MarkovState:
    """Brownian state handed to drivers and g-processes at one grid time.

    ``alive`` is False on paths whose stopping time has already passed.
    """

    b: np.ndarray
    alive: np.ndarray

    @classmethod
    def unstopped(cls, b: np.ndarray) -> "MarkovState":
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return cls(b=b, alive=np.ones(b.shape[0], dtype=bool))

    @property
    def n(self) -> int:
        return int(self.b.shape[0])

    def subset(self, rows: np.ndarray) -> "MarkovState":
        return MarkovState(b=self.b[rows], alive=self.alive[rows])


@dataclass(frozen=True, eq=False)
class BrownianEnsemble:
    seed: int
    n_paths: int
    n_steps: int
    horizon_T: float
    d_dim: int
    increments: np.ndarray

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        times = np.linspace(0.0, self.horizon_T, self.n_steps + 1)
        times.setflags(write=False)
        return times

    @cached_property
    def paths(self) -> np.ndarray:
        paths = np.zeros((self.n_paths, self.n_steps + 1, self.d_dim))
        np.cumsum(self.increments, axis=1, out=paths[:, 1:, :])
        paths.setflags(write=False)
        return paths

    def state(self, i: int, alive: Optional[np.ndarray] = None) -> MarkovState:
        b = self.paths[:, i, :]
        if alive is None:
            return MarkovState.unstopped(b)
        return MarkovState(b=b, alive=alive)


def gen_brownian(
    seed: int,
    n_paths: int,
    n_steps: int,
    T: float,
    d: int,
    max_cells: Optional[int] = None,
) -> BrownianEnsemble:
    """Draw a seeded bundle of d-dimensional Brownian increments on a uniform grid."""
    if n_paths < 1 or n_steps < 1 or d < 1:
        raise ParameterError("n_paths, n_steps and d must all be at least 1.")
    if not T > 0:
        raise ParameterError(f"Horizon T must be positive, got {T}.")
    cap = max_cells if max_cells is not None else get_settings().max_cells
    cells = n_paths * n_steps * d
    if cells > cap:
        raise CapacityError(
            f"Ensemble of {n_paths} paths x {n_steps} steps x {d} dims needs {cells} cells; cap is {cap}."
        )
    rng = np.random.default_rng(seed)
    increments = rng.standard_normal((n_paths, n_steps, d)) * math.sqrt(T / n_steps)
    increments.setflags(write=False)
    logger.info(
        "Generated Brownian ensemble seed=%s paths=%d steps=%d T=%g d=%d", seed, n_paths, n_steps, T, d
    )
    return BrownianEnsemble(
        seed=seed,
        n_paths=n_paths,
        n_steps=n_steps,
        horizon_T=float(T),
        d_dim=d,
        increments=increments,
    )


@dataclass(frozen=True)
class SolverMeta:
    scheme: str
    iterations: int
    terminal_residual: float
    implicit_residual: float = 0.0
    degree: int = 0
    problem: str = ""


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """(Y, Z) grids produced by a backward solver on one ensemble.

    ``y_grid`` is (paths, steps + 1, k), ``z_grid`` is (paths, steps, d, k) and
    is piecewise constant on [t_i, t_{i+1}).
    """

    times: np.ndarray
    y_grid: np.ndarray
    z_grid: np.ndarray
    brownian: np.ndarray
    alive: np.ndarray
    solver_meta: SolverMeta = field(default_factory=lambda: SolverMeta("none", 0, 0.0))

    @property
    def n_paths(self) -> int:
        return int(self.y_grid.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.times.shape[0] - 1)

    @property
    def k_dim(self) -> int:
        return int(self.y_grid.shape[2])

    @property
    def d_dim(self) -> int:
        return int(self.z_grid.shape[2])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.brownian, axis=1)

    def y0(self) -> np.ndarray:
        return self.y_grid[:, 0, :].mean(axis=0)

    def state(self, i: int) -> MarkovState:
        return MarkovState(b=self.brownian[:, i, :], alive=self.alive[:, i])

    def with_grids(self, y_grid: np.ndarray, z_grid: np.ndarray, scheme: Optional[str] = None) -> "DiscreteSolution":
        meta = self.solver_meta if scheme is None else replace(self.solver_meta, scheme=scheme)
        return replace(self, y_grid=y_grid, z_grid=z_grid, solver_meta=meta)

    def minus(self, other: "DiscreteSolution") -> "DiscreteSolution":
        if self.y_grid.shape != other.y_grid.shape or self.z_grid.shape != other.z_grid.shape:
            raise ParameterError("Solutions live on different grids and cannot be compared.")
        return self.with_grids(self.y_grid - other.y_grid, self.z_grid - other.z_grid, scheme="difference")

    def martingale_residual(self, driver: Callable) -> np.ndarray:
        """|Y_i - Y_{i+1} - f(t_i, Y_i, Z_i)dt + Z_i dB_i| per path and step."""
        dB = self.increments
        out = np.empty((self.n_paths, self.n_steps))
        for i, dt in enumerate(self.dt):
            t = float(self.times[i])
            y, z = self.y_grid[:, i, :], self.z_grid[:, i, :, :]
            drift = np.asarray(driver(t, y, z, self.state(i)), dtype=float)
            noise = np.einsum("ndk,nd->nk", z, dB[:, i, :])
            residual = y - self.y_grid[:, i + 1, :] - drift * dt + noise
            out[:, i] = np.linalg.norm(residual, axis=1)
        return out
