"""Scenario description: graph, leader, arms, gains, integrator settings."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agents import (
    GRAVITY, PUBLISHED_BOUNDS, PUBLISHED_THETA, PUBLISHED_THETA_RANGES, LeaderExosystem, ManipulatorParams,
)
from .controller import ControllerConfig, RobustConfig, ledger_for
from .errors import ValidationError
from .network import Digraph, chain_with_shortcut
from .numerics import OddRational, as_odd_rational
from .observer import ObserverGains


@dataclass(frozen=True)
class ControllerSettings:
    alpha: OddRational = OddRational(7, 9)
    beta: OddRational = OddRational(9, 7)
    gamma1: float = 10.0
    gamma2: float = 10.0
    k1: float = 20.0
    k2: float = 15.0
    kappa: float = 3.0
    mode: str = "fixed"
    allow_uncertified: bool = False
    u1_smooth_radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_odd_rational(self.alpha))
        object.__setattr__(self, "beta", as_odd_rational(self.beta))
        if self.mode not in ("fixed", "finite"):
            raise ValidationError("must be 'fixed' or 'finite'", key="controller.mode")
        for key in ("gamma1", "gamma2", "k1", "k2"):
            if getattr(self, key) < 0:
                raise ValidationError("must be non-negative", key=f"controller.{key}")


@dataclass(frozen=True)
class PlantBounds:
    km_inv: float = PUBLISHED_BOUNDS["km_inv"]
    kM_inv: float = PUBLISHED_BOUNDS["kM_inv"]
    kc: float = PUBLISHED_BOUNDS["kc"]
    kg: float = PUBLISHED_BOUNDS["kg"]

    def __post_init__(self):
        if not self.km_inv > self.kM_inv > 0:
            raise ValidationError("need km_inv > kM_inv > 0", key="bounds")
        if self.kc < 0 or self.kg < 0:
            raise ValidationError("kc and kg must be non-negative", key="bounds")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class InitialConditions:
    """Explicit initial states, or ``None`` to draw them uniformly in ``[-scale, scale]``."""

    eta: Optional[tuple] = None
    q: Optional[tuple] = None
    v: Optional[tuple] = None
    scale: float = 1.0


def _arr_eq(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


@dataclass(frozen=True, eq=False)
class Scenario:
    graph: Digraph
    leader: LeaderExosystem
    agents: tuple[ManipulatorParams, ...]
    observer: ObserverGains
    controller: ControllerSettings = field(default_factory=ControllerSettings)
    bounds: PlantBounds = field(default_factory=PlantBounds)
    theta_ranges: tuple = PUBLISHED_THETA_RANGES
    D_diag: Optional[tuple] = None
    step: float = 1e-4
    horizon: float = 20.0
    tolerance: float = 1e-3
    seed: int = 0
    initial: InitialConditions = field(default_factory=InitialConditions)

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError("must be positive", key="integrator.step")
        if not self.horizon > self.step:
            raise ValidationError("must exceed the step", key="integrator.horizon")
        if not self.tolerance > 0:
            raise ValidationError("must be positive", key="tolerance")
        if len(self.agents) != self.graph.n_followers:
            raise ValidationError(
                f"{len(self.agents)} agents for {self.graph.n_followers} followers", key="agents"
            )
        if self.leader.m != 2:
            raise ValidationError("the two-link arms need a 2-row E", key="leader.E")
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "theta_ranges", tuple(tuple(map(float, r)) for r in self.theta_ranges))
        if self.D_diag is not None:
            object.__setattr__(self, "D_diag", tuple(float(d) for d in self.D_diag))

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.graph == other.graph
            and all(_arr_eq(getattr(self.leader, k), getattr(other.leader, k)) for k in ("S", "E", "eta0"))
            and self.agents == other.agents
            and self.observer == other.observer
            and self.controller == other.controller
            and self.bounds == other.bounds
            and self.theta_ranges == other.theta_ranges
            and self.D_diag == other.D_diag
            and (self.step, self.horizon, self.tolerance, self.seed)
            == (other.step, other.horizon, other.tolerance, other.seed)
            and all(_arr_eq(getattr(self.initial, k), getattr(other.initial, k)) for k in ("eta", "q", "v"))
            and self.initial.scale == other.initial.scale
        )

    @property
    def N(self) -> int:
        return self.graph.n_followers

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def finite_variant(self) -> "Scenario":
        """Same scenario with ``c3 = gamma2 = k2 = 0``."""
        return self.replace(
            observer=self.observer.finite_variant(),
            controller=dataclasses.replace(self.controller, mode="finite", gamma2=0.0, k2=0.0),
        )

    def controller_config(self) -> ControllerConfig:
        c = self.controller
        led = ledger_for(c.alpha, c.beta, c.gamma1, c.gamma2, c.k1, c.k2)
        rc = RobustConfig(c.kappa, self.bounds.km_inv, self.bounds.kM_inv, self.bounds.kc,
                          self.bounds.kg, c.u1_smooth_radius)
        return ControllerConfig(led, rc, c.mode, c.allow_uncertified)

    def initial_state(self) -> np.ndarray:
        """Flat state ``[eta0, eta_1..N, q_1..N, v_1..N]`` at ``t = 0``."""
        N, n = self.N, self.leader.n
        rng = np.random.default_rng(self.seed)
        init = self.initial
        # Draw all three blocks unconditionally so explicit overrides do not shift the stream.
        draws = {
            "eta": rng.uniform(-1.0, 1.0, (N, n)) * init.scale,
            "q": rng.uniform(-1.0, 1.0, (N, 2)) * init.scale,
            "v": rng.uniform(-1.0, 1.0, (N, 2)) * init.scale,
        }
        blocks = []
        for key, shape in (("eta", (N, n)), ("q", (N, 2)), ("v", (N, 2))):
            val = getattr(init, key)
            if val is None:
                blocks.append(draws[key])
            else:
                arr = np.asarray(val, dtype=float)
                if arr.shape != shape:
                    raise ValidationError(f"expected shape {shape}, got {arr.shape}", key=f"initial.{key}")
                blocks.append(arr)
        return np.concatenate([self.leader.eta0] + [b.ravel() for b in blocks])


def published_scenario(**overrides) -> Scenario:
    """The six-arm example with the published parameters.

    The communication graph is the chain ``0->1->...->6`` plus ``0->4``
    (a stand-in; the published figure is not machine readable), and
    ``D = 8 I``.
    """
    base = dict(
        graph=chain_with_shortcut(6, 4),
        leader=LeaderExosystem(S=[[0.0, 1.0], [-1.0, 0.0]], E=np.eye(2), eta0=[0.0, 1.0]),
        agents=tuple(ManipulatorParams(PUBLISHED_THETA, GRAVITY) for _ in range(6)),
        observer=ObserverGains(8.4, 1.0, 1.0, OddRational(3, 5), OddRational(3, 1)),
        controller=ControllerSettings(allow_uncertified=True),
        bounds=PlantBounds(),
        theta_ranges=PUBLISHED_THETA_RANGES,
        D_diag=(8.0,) * 6,
        step=1e-4,
        horizon=20.0,
        tolerance=1e-3,
        seed=2024,
        initial=InitialConditions(scale=1.0),
    )
    base.update(overrides)
    return Scenario(**base)
