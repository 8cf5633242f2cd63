from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .ensemble import DiscreteSolution, MarkovState
from .errors import NonFiniteDriverError, ParameterError

logger = logging.getLogger(__name__)

DriverFn = Callable[[float, np.ndarray, np.ndarray, MarkovState], np.ndarray]
GProcess = Callable[[float, MarkovState], np.ndarray]
Payoff = Callable[[np.ndarray], np.ndarray]


def zero_g(t: float, state: MarkovState) -> np.ndarray:
    return np.zeros(state.n)


def vec_norm(y: np.ndarray) -> np.ndarray:
    return np.linalg.norm(y, axis=-1)


def mat_norm(z: np.ndarray) -> np.ndarray:
    """Frobenius norm of each d x k matrix in a (n, d, k) stack."""
    return np.sqrt(np.sum(np.square(z), axis=(-2, -1)))


def sgn(x: np.ndarray) -> np.ndarray:
    """x/|x| along the last axis, with sgn(0) = 0."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    out = np.zeros_like(x)
    np.divide(x, norm, out=out, where=norm > 0)
    return out


class StoppingTimeSpec(BaseModel):
    """Bounded stopping time: a fixed time or the first exit of |B| from a ball, capped at T."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["deterministic", "first_exit"]
    t0: Optional[float] = Field(default=None, ge=0)
    radius: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "StoppingTimeSpec":
        if self.kind == "deterministic" and self.t0 is None:
            raise ValueError("deterministic stopping time needs t0")
        if self.kind == "first_exit" and self.radius is None:
            raise ValueError("first_exit stopping time needs radius")
        return self

    @classmethod
    def deterministic(cls, t0: float) -> "StoppingTimeSpec":
        return cls(kind="deterministic", t0=t0)

    @classmethod
    def first_exit(cls, radius: float) -> "StoppingTimeSpec":
        return cls(kind="first_exit", radius=radius)

    def label(self) -> str:
        if self.kind == "deterministic":
            return f"deterministic({self.t0:g})"
        return f"first_exit(R={self.radius:g})"

    def indices(self, paths: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Grid index of the stopping time on every path."""
        n_paths = paths.shape[0]
        n_steps = times.shape[0] - 1
        horizon = float(times[-1])
        if self.kind == "deterministic":
            if self.t0 > horizon * (1 + 1e-12):
                raise ParameterError(f"Stopping time {self.label()} exceeds the horizon T={horizon:g}.")
            idx = int(round(self.t0 / horizon * n_steps))
            return np.full(n_paths, min(max(idx, 0), n_steps), dtype=int)
        hit = np.linalg.norm(paths, axis=2) >= self.radius
        return np.where(hit.any(axis=1), hit.argmax(axis=1), n_steps).astype(int)

    def evaluate(self, paths: np.ndarray, times: np.ndarray) -> np.ndarray:
        return times[self.indices(paths, times)]

    def alive_mask(self, paths: np.ndarray, times: np.ndarray) -> np.ndarray:
        """(paths, steps + 1) mask of grid times strictly before the stopping time."""
        idx = self.indices(paths, times)
        return np.arange(times.shape[0])[None, :] < idx[:, None]


@dataclass(frozen=True)
class DriverSpec:
    """Generator f with the structural constants of (H1), (H2) and (Z)."""

    evaluate: DriverFn
    lam: float = 0.0
    mu: float = 0.0
    gamma: float = 0.0
    kappa: float = 0.0
    g_process: GProcess = zero_g
    z_dependent: bool = True
    y_lipschitz: Optional[float] = None
    name: str = "driver"

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ParameterError(f"Driver '{self.name}': lambda must be non-negative, got {self.lam}.")
        if not self.gamma >= 0:
            raise ParameterError(f"Driver '{self.name}': gamma must be non-negative, got {self.gamma}.")
        if not 0 <= self.kappa < 1:
            raise ParameterError(f"Driver '{self.name}': kappa must lie in [0, 1), got {self.kappa}.")

    def __call__(self, t: float, y: np.ndarray, z: np.ndarray, state: MarkovState) -> np.ndarray:
        return np.asarray(self.evaluate(t, y, z, state), dtype=float)

    def at_origin(self, t: float, state: MarkovState, k_dim: int, d_dim: int) -> np.ndarray:
        n = state.n
        return self(t, np.zeros((n, k_dim)), np.zeros((n, d_dim, k_dim)), state)


@dataclass(frozen=True)
class TerminalCondition:
    payoff: Payoff
    description: str = "xi"
    read_at: Optional[StoppingTimeSpec] = None

    def evaluate(self, paths: np.ndarray, times: np.ndarray, at: Optional[np.ndarray] = None) -> np.ndarray:
        """Payoff per path, read at ``at`` indices, at ``read_at`` or at T."""
        if at is None and self.read_at is not None:
            at = self.read_at.indices(paths, times)
        if at is None:
            state = paths[:, -1, :]
        else:
            state = paths[np.arange(paths.shape[0]), at, :]
        out = np.asarray(self.payoff(state), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        return out


@dataclass(frozen=True)
class BSDEProblem:
    horizon_T: float
    k_dim: int
    d_dim: int
    driver: DriverSpec
    terminal: TerminalCondition
    stopping_time: Optional[StoppingTimeSpec] = None
    cutoff: Optional[StoppingTimeSpec] = None
    name: str = "problem"

    def __post_init__(self) -> None:
        if not self.horizon_T > 0:
            raise ParameterError(f"Problem '{self.name}': horizon_T must be positive.")
        if self.k_dim < 1 or self.d_dim < 1:
            raise ParameterError(f"Problem '{self.name}': k_dim and d_dim must be at least 1.")
        spec = self.stopping_time
        if spec is not None and spec.kind == "deterministic" and spec.t0 > self.horizon_T * (1 + 1e-12):
            raise ParameterError(f"Problem '{self.name}': {spec.label()} lies beyond T={self.horizon_T:g}.")

    @property
    def has_deterministic_horizon(self) -> bool:
        return self.stopping_time is None


class AssumptionReport(BaseModel):
    h1_violation: float = Field(ge=0)
    h2_violation: float = Field(ge=0)
    z_violation: float = Field(ge=0)
    samples_checked: int = Field(ge=0)


@dataclass(frozen=True, eq=False)
class AssumptionSample:
    t: np.ndarray
    y: np.ndarray
    y_prime: np.ndarray
    z: np.ndarray
    z_prime: np.ndarray
    b: np.ndarray


class PointSampler(Protocol):
    def draw(self, n: int) -> AssumptionSample:
        ...


class UniformSampler:
    """Seeded box sampler; times come from a small grid so drivers see scalar t."""

    def __init__(
        self,
        k_dim: int,
        d_dim: int,
        horizon_T: float = 1.0,
        y_range: float = 3.0,
        z_range: float = 3.0,
        b_range: float = 3.0,
        n_times: int = 16,
        seed: int = 0,
    ):
        self.k_dim = k_dim
        self.d_dim = d_dim
        self.horizon_T = horizon_T
        self.y_range = y_range
        self.z_range = z_range
        self.b_range = b_range
        self.n_times = n_times
        self.seed = seed

    def draw(self, n: int) -> AssumptionSample:
        rng = np.random.default_rng(self.seed)
        k, d = self.k_dim, self.d_dim
        grid = np.linspace(0.0, self.horizon_T, self.n_times)
        return AssumptionSample(
            t=rng.choice(grid, size=n),
            y=rng.uniform(-self.y_range, self.y_range, (n, k)),
            y_prime=rng.uniform(-self.y_range, self.y_range, (n, k)),
            z=rng.uniform(-self.z_range, self.z_range, (n, d, k)),
            z_prime=rng.uniform(-self.z_range, self.z_range, (n, d, k)),
            b=rng.uniform(-self.b_range, self.b_range, (n, d)),
        )


class FixedSampler:
    """Cycles through explicit (t, y, y', z, z') tuples."""

    def __init__(self, points: Sequence[Tuple[Any, ...]], k_dim: int = 1, d_dim: int = 1):
        if not points:
            raise ParameterError("FixedSampler needs at least one point.")
        self.points = list(points)
        self.k_dim = k_dim
        self.d_dim = d_dim

    def draw(self, n: int) -> AssumptionSample:
        k, d = self.k_dim, self.d_dim
        rows = [self.points[i % len(self.points)] for i in range(n)]
        return AssumptionSample(
            t=np.array([float(r[0]) for r in rows]),
            y=np.array([np.reshape(r[1], k) for r in rows], dtype=float),
            y_prime=np.array([np.reshape(r[2], k) for r in rows], dtype=float),
            z=np.array([np.reshape(r[3], (d, k)) for r in rows], dtype=float),
            z_prime=np.array([np.reshape(r[4], (d, k)) for r in rows], dtype=float),
            b=np.zeros((n, d)),
        )


def _first_bad(values: Sequence[np.ndarray]) -> Optional[int]:
    bad = np.zeros(values[0].shape[0], dtype=bool)
    for value in values:
        bad |= ~np.isfinite(value).reshape(value.shape[0], -1).all(axis=1)
    if bad.any():
        return int(np.argmax(bad))
    return None


def check_assumptions(driver: DriverSpec, sampler: PointSampler, n: int) -> AssumptionReport:
    """Largest sampled residuals of (H1), (H2) and (Z) for the declared constants."""
    if n < 1:
        raise ParameterError("check_assumptions needs n >= 1.")
    sample = sampler.draw(n)
    h1 = np.zeros(n)
    h2 = np.zeros(n)
    zr = np.zeros(n)
    for t in np.unique(sample.t):
        rows = np.flatnonzero(sample.t == t)
        state = MarkovState.unstopped(sample.b[rows])
        y, y_p = sample.y[rows], sample.y_prime[rows]
        z, z_p = sample.z[rows], sample.z_prime[rows]
        f_yz = driver(float(t), y, z, state)
        f_yzp = driver(float(t), y, z_p, state)
        f_ypz = driver(float(t), y_p, z, state)
        f_y0 = driver(float(t), y, np.zeros_like(z), state)
        g = np.asarray(driver.g_process(float(t), state), dtype=float)
        bad = _first_bad([f_yz, f_yzp, f_ypz, f_y0, g])
        if bad is not None:
            row = int(rows[bad])
            sample_info: Dict[str, Any] = {
                "index": row,
                "t": float(t),
                "y": sample.y[row].tolist(),
                "y_prime": sample.y_prime[row].tolist(),
                "z": sample.z[row].tolist(),
                "z_prime": sample.z_prime[row].tolist(),
            }
            raise NonFiniteDriverError(
                f"Driver '{driver.name}' returned a non-finite value at sample {row} (t={float(t):g}).",
                sample=sample_info,
            )
        dz = mat_norm(z - z_p)
        lip = np.where(dz > 0, driver.lam * dz, 0.0)
        h1[rows] = vec_norm(f_yz - f_yzp) - lip
        dy = y - y_p
        h2[rows] = np.einsum("nk,nk->n", dy, f_yz - f_ypz) - driver.mu * np.sum(dy * dy, axis=1)
        growth = driver.gamma * np.power(g + vec_norm(y) + mat_norm(z), driver.kappa)
        zr[rows] = vec_norm(f_yz - f_y0) - growth
    # round-off slack
    tol = 1e-12
    report = AssumptionReport(
        h1_violation=float(max(0.0, h1.max() - tol)),
        h2_violation=float(max(0.0, h2.max() - tol)),
        z_violation=float(max(0.0, zr.max() - tol)),
        samples_checked=n,
    )
    logger.debug("Assumption check for %s: %s", driver.name, report)
    return report


def transform_problem(problem: BSDEProblem, a: float) -> BSDEProblem:
    """Exponential change of variables (e^{at}Y, e^{at}Z) with the matching constants."""
    if problem.stopping_time is not None:
        raise ParameterError("transform_problem needs a deterministic horizon; reduce the stopping time first.")
    if a == 0:
        return problem
    driver = problem.driver
    a_plus, a_minus = max(a, 0.0), max(-a, 0.0)
    if a_minus > 0 and driver.kappa == 0:
        raise ParameterError("kappa = 0 with a negative weight leaves the g-rescaling exponent undefined.")
    T = problem.horizon_T
    f = driver.evaluate

    def evaluate(t: float, y: np.ndarray, z: np.ndarray, state: MarkovState) -> np.ndarray:
        scale = math.exp(a * t)
        return scale * np.asarray(f(t, y / scale, z / scale, state), dtype=float) - a * y

    g = driver.g_process
    if a_minus > 0:
        rate = a_minus / driver.kappa

        def g_bar(t: float, state: MarkovState) -> np.ndarray:
            return np.asarray(g(t, state), dtype=float) * math.exp(-rate * t)

    else:
        g_bar = g

    y_lipschitz = None if driver.y_lipschitz is None else driver.y_lipschitz + abs(a)
    new_driver = replace(
        driver,
        evaluate=evaluate,
        mu=driver.mu - a,
        gamma=driver.gamma * math.exp(a_plus * T),
        g_process=g_bar,
        y_lipschitz=y_lipschitz,
        name=f"{driver.name}|e^{a:g}t",
    )
    payoff = problem.terminal.payoff
    factor = math.exp(a * T)
    terminal = replace(
        problem.terminal,
        payoff=lambda b: factor * np.asarray(payoff(b), dtype=float),
        description=f"e^{a * T:g}*{problem.terminal.description}",
    )
    return replace(problem, driver=new_driver, terminal=terminal, name=f"{problem.name}|a={a:g}")


def transform_solution(solution: DiscreteSolution, a: float) -> DiscreteSolution:
    weights = np.exp(a * solution.times)
    y = solution.y_grid * weights[None, :, None]
    z = solution.z_grid * weights[None, :-1, None, None]
    return solution.with_grids(y, z)


def inverse_transform_solution(solution: DiscreteSolution, a: float) -> DiscreteSolution:
    return transform_solution(solution, -a)


def reduce_stopping_time(problem: BSDEProblem) -> BSDEProblem:
    """Deterministic-horizon problem with driver 1_{[0,beta]} f and payoff read at beta."""
    spec = problem.stopping_time
    if spec is None:
        raise ParameterError(f"Problem '{problem.name}' has no stopping time to reduce.")
    if spec.kind == "deterministic" and math.isclose(spec.t0, problem.horizon_T):
        return replace(problem, stopping_time=None)
    f = problem.driver.evaluate

    def evaluate(t: float, y: np.ndarray, z: np.ndarray, state: MarkovState) -> np.ndarray:
        out = np.asarray(f(t, y, z, state), dtype=float)
        return np.where(state.alive[:, None], out, 0.0)

    driver = replace(problem.driver, evaluate=evaluate, name=f"1[0,{spec.label()}]*{problem.driver.name}")
    terminal = replace(problem.terminal, read_at=spec)
    return replace(problem, driver=driver, terminal=terminal, stopping_time=None, cutoff=spec)


def constants_of(driver: DriverSpec) -> Dict[str, Any]:
    return {
        "lambda": driver.lam,
        "mu": driver.mu,
        "gamma": driver.gamma,
        "kappa": driver.kappa,
        "z_dependent": driver.z_dependent,
    }
