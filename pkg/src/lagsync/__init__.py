"""Fixed-time leader tracking for networks of uncertain Euler-Lagrange arms."""
from .errors import (
    AssumptionViolated, BoundViolated, DimensionMismatch, Divergence, GainConditionViolated,
    InvalidExponents, IsolatedAgent, LagsyncError, NoCandidateFound, NonFiniteState,
    NonPositiveExponent, NotRootReachable, ParseError, SingularInertia, UncertifiedGains,
    ValidationError,
)
from .numerics import OddRational, as_odd_rational, norms, sigpow
from .network import Digraph, chain_with_shortcut, compute_scaling_D, laplacian, laplacian_bundle
from .agents import LeaderExosystem, ManipulatorParams, TwoLinkArm, certify_bounds, tight_bounds
from .observer import ObserverGains, observer_constants
from .controller import ControllerConfig, RobustConfig, build_ledger, check_gains, ledger_for
from .scenario import (
    ControllerSettings, InitialConditions, PlantBounds, Scenario, published_scenario,
)
from .simulation import (
    ClosedLoop, SettlingReport, Trajectory, detect_settling, monte_carlo, rk4_step,
    run_closed_loop, settling_report, simulate,
)

__version__ = "0.1.0"
