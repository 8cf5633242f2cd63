"""A priori estimate certificates for multidimensional BSDEs with integrable data."""

__version__ = "0.3.0"

from .core_model import (  # noqa: E402
    BSDEProblem,
    DriverSpec,
    StoppingTimeSpec,
    TerminalCondition,
    check_assumptions,
    reduce_stopping_time,
    transform_problem,
    transform_solution,
)
from .engine import reference_oracle, solve_bsde, solve_on_stopping_horizon  # noqa: E402
from .ensemble import BrownianEnsemble, DiscreteSolution, gen_brownian  # noqa: E402

__all__ = [
    "BSDEProblem",
    "BrownianEnsemble",
    "DiscreteSolution",
    "DriverSpec",
    "StoppingTimeSpec",
    "TerminalCondition",
    "__version__",
    "check_assumptions",
    "gen_brownian",
    "reduce_stopping_time",
    "reference_oracle",
    "solve_bsde",
    "solve_on_stopping_horizon",
    "transform_problem",
    "transform_solution",
]
