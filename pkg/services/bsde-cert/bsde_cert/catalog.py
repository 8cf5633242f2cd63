"""Benchmark problems and the kinds that config sections can reference."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from .core_model import (
    BSDEProblem,
    DriverSpec,
    StoppingTimeSpec,
    TerminalCondition,
    mat_norm,
)
from .ensemble import MarkovState
from .errors import CatalogError, ConfigError

logger = logging.getLogger(__name__)

# Drivers without a z-part still declare kappa so that weighted transforms stay defined.
DEFAULT_KAPPA = 0.5


def _zero(t, y, z, state):
    return np.zeros_like(y)


def _linear(t, y, z, state):
    return -y


def _cubic(t, y, z, state):
    return -(y ** 3)


def _sublinear_z(t, y, z, state):
    return -(y ** 3) + 0.5 * (np.sqrt(1.0 + mat_norm(z)) - 1.0)[:, None]


def _shift_g(t: float, state: MarkovState) -> np.ndarray:
    return np.full(state.n, 1.0 + t)


def _shifted_g(t, y, z, state):
    return -y + 0.5 * np.sqrt(1.0 + t + mat_norm(z))[:, None]


def _multi_d(t, y, z, state):
    out = -y.copy()
    out[:, 0] = -(y[:, 0] ** 3)
    return out


def make_driver(kind: str, k_dim: int = 1, value: float = 0.0) -> DriverSpec:
    if kind == "zero":
        return DriverSpec(_zero, kappa=DEFAULT_KAPPA, z_dependent=False, y_lipschitz=0.0, name="zero")
    if kind == "linear":
        return DriverSpec(_linear, mu=-1.0, kappa=DEFAULT_KAPPA, z_dependent=False, y_lipschitz=1.0, name="-y")
    if kind == "cubic":
        return DriverSpec(_cubic, kappa=DEFAULT_KAPPA, z_dependent=False, name="-y^3")
    if kind == "sublinear_z":
        # sqrt(1+s) - 1 <= sqrt(s) keeps (Z); its slope is at most 1/2
        return DriverSpec(_sublinear_z, lam=0.25, gamma=0.5, kappa=0.5, name="-y^3+((1+|z|)^0.5-1)/2")
    if kind == "shifted_g":
        return DriverSpec(
            _shifted_g,
            lam=0.25,
            mu=-1.0,
            gamma=0.5,
            kappa=0.5,
            g_process=_shift_g,
            y_lipschitz=1.0,
            name="-y+(g+|z|)^0.5/2",
        )
    if kind == "multi_d":
        if k_dim < 2:
            raise ConfigError("multi_d driver needs k_dim >= 2.")
        return DriverSpec(_multi_d, kappa=DEFAULT_KAPPA, z_dependent=False, name="(-y1^3,-y2)")
    if kind == "constant":

        def _constant(t, y, z, state):
            return np.full_like(y, value)

        return DriverSpec(
            _constant, kappa=DEFAULT_KAPPA, z_dependent=False, y_lipschitz=0.0, name=f"const({value:g})"
        )
    raise CatalogError(f"Unknown driver kind '{kind}'.")


def _pad(b: np.ndarray, k_dim: int) -> np.ndarray:
    """First k coordinates of the state, zero-padded when k > d."""
    n, d = b.shape
    if d >= k_dim:
        return b[:, :k_dim].copy()
    out = np.zeros((n, k_dim))
    out[:, :d] = b
    return out


def make_terminal(kind: str, k_dim: int = 1, value: float = 0.0) -> TerminalCondition:
    if kind == "brownian":
        return TerminalCondition(lambda b: _pad(b, k_dim), "B_T")
    if kind == "sin":
        return TerminalCondition(lambda b: np.sin(_pad(b, k_dim)), "sin(B_T)")
    if kind == "abs":
        return TerminalCondition(lambda b: np.abs(_pad(b, k_dim)), "|B_T|")
    if kind == "constant":
        return TerminalCondition(lambda b: np.full((b.shape[0], k_dim), value), f"{value:g}")
    if kind == "zero":
        return TerminalCondition(lambda b: np.zeros((b.shape[0], k_dim)), "0")
    raise CatalogError(f"Unknown terminal kind '{kind}'.")


DriverShift = Callable[[float, MarkovState, int], np.ndarray]

DRIVER_SHIFTS: Dict[str, DriverShift] = {
    "constant": lambda t, state, k: np.ones((state.n, k)),
    "cos_t": lambda t, state, k: np.full((state.n, k), np.cos(t)),
    "sin_b": lambda t, state, k: np.repeat(np.sin(state.b[:, :1]), k, axis=1),
}


def perturb_problem(
    problem: BSDEProblem,
    epsilon: float,
    xi_shift: Optional[str] = None,
    driver_shift: Optional[str] = None,
) -> BSDEProblem:
    """xi + eps*eta and/or f + eps*h with bounded h; structural constants are unchanged."""
    out = problem
    k = problem.k_dim
    if xi_shift is not None:
        eta = make_terminal(xi_shift, k, value=1.0).payoff
        payoff = problem.terminal.payoff
        terminal = replace(
            problem.terminal,
            payoff=lambda b: np.asarray(payoff(b), dtype=float) + epsilon * np.asarray(eta(b), dtype=float),
            description=f"{problem.terminal.description}+{epsilon:g}*{xi_shift}",
        )
        out = replace(out, terminal=terminal)
    if driver_shift is not None:
        if driver_shift not in DRIVER_SHIFTS:
            raise CatalogError(f"Unknown driver shift '{driver_shift}'.")
        h = DRIVER_SHIFTS[driver_shift]
        f = problem.driver.evaluate
        cutoff = problem.cutoff

        def evaluate(t, y, z, state):
            shift = epsilon * h(t, state, k)
            if cutoff is not None:
                shift = np.where(state.alive[:, None], shift, 0.0)
            return np.asarray(f(t, y, z, state), dtype=float) + shift

        driver = replace(
            problem.driver, evaluate=evaluate, name=f"{problem.driver.name}+{epsilon:g}*{driver_shift}"
        )
        out = replace(out, driver=driver)
    return replace(out, name=f"{problem.name}[eps={epsilon:g}]")


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    problem: BSDEProblem
    note: str = ""


def _build(name: str, driver: str, terminal: str, k: int = 1, d: int = 1, **extra: Any) -> BSDEProblem:
    return BSDEProblem(
        horizon_T=1.0,
        k_dim=k,
        d_dim=d,
        driver=make_driver(driver, k),
        terminal=make_terminal(terminal, k),
        name=name,
        **extra,
    )


def benchmark_catalog() -> List[BenchmarkEntry]:
    return [
        BenchmarkEntry("ZERO", _build("ZERO", "zero", "brownian"), "Y_t = B_t, Z = 1"),
        BenchmarkEntry("LINEAR_Y", _build("LINEAR_Y", "linear", "brownian"), "Y_t = e^{-(T-t)} B_t"),
        BenchmarkEntry("CUBIC", _build("CUBIC", "cubic", "brownian"), "monotone, unbounded growth in y"),
        BenchmarkEntry("SUBLINEAR_Z", _build("SUBLINEAR_Z", "sublinear_z", "sin"), "(Z) with g = 0"),
        BenchmarkEntry("SHIFTED_G", _build("SHIFTED_G", "shifted_g", "brownian"), "(Z) with g_t = 1 + t"),
        BenchmarkEntry("MULTI_D", _build("MULTI_D", "multi_d", "brownian", k=2, d=2), "k = d = 2"),
        BenchmarkEntry(
            "HITTING",
            _build("HITTING", "cubic", "brownian", stopping_time=StoppingTimeSpec.first_exit(1.0)),
            "cubic driver stopped at first exit from the unit ball",
        ),
    ]


def get_benchmark(name: str) -> BSDEProblem:
    for entry in benchmark_catalog():
        if entry.name == name:
            return entry.problem
    known = ", ".join(entry.name for entry in benchmark_catalog())
    raise CatalogError(f"Unknown benchmark '{name}'. Known benchmarks: {known}.")


SECTION_KEYS = {
    "horizon_T",
    "k_dim",
    "d_dim",
    "driver.kind",
    "driver.lambda",
    "driver.mu",
    "driver.gamma",
    "driver.kappa",
    "driver.value",
    "terminal.kind",
    "terminal.value",
    "stopping.kind",
    "stopping.radius",
    "stopping.t0",
}


def _flatten(section: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in section.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def problem_from_section(name: str, section: Mapping[str, Any]) -> BSDEProblem:
    """Build a problem from a flat key-value section (nested mappings are flattened)."""
    flat = _flatten(section)
    unknown = sorted(set(flat) - SECTION_KEYS)
    if unknown:
        raise ConfigError(f"Problem section '{name}' has unknown keys: {', '.join(unknown)}.")
    for required in ("driver.kind", "terminal.kind"):
        if required not in flat:
            raise ConfigError(f"Problem section '{name}' is missing '{required}'.")
    try:
        k = int(flat.get("k_dim", 1))
        d = int(flat.get("d_dim", 1))
        horizon = float(flat.get("horizon_T", 1.0))
        driver = make_driver(str(flat["driver.kind"]), k, float(flat.get("driver.value", 0.0)))
        overrides = {
            field: float(flat[key])
            for key, field in (
                ("driver.lambda", "lam"),
                ("driver.mu", "mu"),
                ("driver.gamma", "gamma"),
                ("driver.kappa", "kappa"),
            )
            if key in flat
        }
        if overrides:
            driver = replace(driver, **overrides)
        terminal = make_terminal(str(flat["terminal.kind"]), k, float(flat.get("terminal.value", 0.0)))
        stopping = None
        kind = str(flat.get("stopping.kind", "none"))
        if kind == "deterministic":
            stopping = StoppingTimeSpec.deterministic(float(flat["stopping.t0"]))
        elif kind == "first_exit":
            stopping = StoppingTimeSpec.first_exit(float(flat["stopping.radius"]))
        elif kind != "none":
            raise ConfigError(f"Problem section '{name}': unknown stopping kind '{kind}'.")
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"Problem section '{name}' is missing '{exc.args[0]}'.") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Problem section '{name}' is invalid: {exc}") from exc
    return BSDEProblem(
        horizon_T=horizon,
        k_dim=k,
        d_dim=d,
        driver=driver,
        terminal=terminal,
        stopping_time=stopping,
        name=name,
    )


def resolve_problem(
    name: str,
    sections: Optional[Mapping[str, Mapping[str, Any]]] = None,
    horizon_T: Optional[float] = None,
) -> BSDEProblem:
    if sections and name in sections:
        problem = problem_from_section(name, sections[name])
    else:
        problem = get_benchmark(name)
    if horizon_T is not None and horizon_T != problem.horizon_T:
        problem = replace(problem, horizon_T=float(horizon_T))
    logger.debug("Resolved problem %s (k=%d, d=%d)", problem.name, problem.k_dim, problem.d_dim)
    return problem
