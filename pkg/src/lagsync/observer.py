"""Distributed fixed-time leader observer and its settling-time constants.

Each follower integrates

    eta_i' = S eta_i - c1 y_i - c2 sig^a(y_i) - c3 sig^b(y_i),
    y_i    = sum_j a_ij (eta_i - eta_j),

using only its in-neighbours' estimates. ``c3 = 0`` gives the finite-time
variant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GainConditionViolated, IsolatedAgent, ValidationError
from .network import Digraph
from .numerics import OddRational, as_odd_rational, sigpow


@dataclass(frozen=True)
class ObserverGains:
    c1: float
    c2: float
    c3: float
    a: OddRational
    b: Optional[OddRational] = None

    def __post_init__(self):
        object.__setattr__(self, "a", as_odd_rational(self.a))
        if self.b is not None:
            object.__setattr__(self, "b", as_odd_rational(self.b))
        if not 0 < float(self.a) < 1:
            raise ValidationError("must lie in (0, 1)", key="observer.a")
        if self.c2 <= 0:
            raise ValidationError("must be positive", key="observer.c2")
        if self.c3 < 0:
            raise ValidationError("must be non-negative", key="observer.c3")
        if self.c3 > 0:
            if self.b is None:
                raise ValidationError("required when c3 > 0", key="observer.b")
            if not float(self.b) > 1.0 / float(self.a):
                raise ValidationError(f"need b > 1/a = {1 / float(self.a):.6g}", key="observer.b")

    @property
    def finite_time(self) -> bool:
        return self.c3 == 0

    def finite_variant(self) -> "ObserverGains":
        return ObserverGains(self.c1, self.c2, 0.0, self.a, self.b)


PUBLISHED_OBSERVER = ObserverGains(8.4, 1.0, 1.0, OddRational(3, 5), OddRational(3, 1))


def coupling_norm(D, S) -> float:
    """Spectral norm of ``D (x) S`` for diagonal ``D``: ``max d_i * ||S||_2``."""
    return float(np.max(np.abs(np.diag(D))) * np.linalg.norm(np.asarray(S, dtype=float), 2))


def innovation(i: int, eta_all, g: Digraph) -> np.ndarray:
    """``y_i`` from agent ``i``'s own estimate and those of its in-neighbours.

    ``eta_all[0]`` is the leader state, ``eta_all[k]`` follower ``k``'s estimate.
    """
    nbrs = g.in_neighbors(i)
    if not nbrs:
        raise IsolatedAgent(f"agent {i} has no in-neighbour")
    eta_all = np.asarray(eta_all, dtype=float)
    y = np.zeros_like(eta_all[i])
    for j, w in nbrs:
        y += w * (eta_all[i] - eta_all[j])
    return y


def stacked_innovation(eta_all, A) -> np.ndarray:
    """All ``y_i`` at once from the in-neighbour weight matrix ``A`` (row ``i`` = receiver)."""
    eta_all = np.asarray(eta_all, dtype=float)
    W = A[1:, :]
    return W.sum(axis=1)[:, None] * eta_all[1:] - W @ eta_all


def observer_rhs(eta_i, y_i, gains: ObserverGains, S) -> np.ndarray:
    eta_i = np.asarray(eta_i, dtype=float)
    y_i = np.asarray(y_i, dtype=float)
    out = eta_i @ np.asarray(S, dtype=float).T - gains.c1 * y_i - gains.c2 * sigpow(y_i, gains.a)
    if gains.c3 > 0:
        out = out - gains.c3 * sigpow(y_i, gains.b)
    return out


@dataclass(frozen=True)
class ObserverConstants:
    c_hat1: float
    c_hat2: float
    c_hat3: float
    T1_star: float
    d_max: float
    coupling: float
    finite_time: bool = False


def _check_gain_conditions(gains: ObserverGains, coupling: float) -> None:
    if not gains.c1 > coupling:
        raise GainConditionViolated(
            f"c1 = {gains.c1} must exceed ||D (x) S|| = {coupling:.6g}", "c1 > ||D (x) S||"
        )
    if not gains.c2 > 0:
        raise GainConditionViolated("c2 must be positive", "c2 > 0")


def observer_constants(gains: ObserverGains, D, S, n: int, N: int) -> ObserverConstants:
    """Lyapunov-derived constants and the settling bound of the observer.

    For ``c3 > 0`` the returned ``T1_star`` is the initial-condition-free
    bound. For ``c3 = 0`` it is ``nan`` and :func:`finite_time_bound` gives
    the state-dependent bound instead.
    """
    coupling = coupling_norm(D, S)
    _check_gain_conditions(gains, coupling)
    a, c1, c2, c3 = float(gains.a), gains.c1, gains.c2, gains.c3
    nN = n * N
    d_max = float(np.max(np.diag(D)))
    r_a = 2 * a / (1 + a)
    terms1 = [0.5 * (c1**2 - coupling**2), 0.5 * c2**2]
    terms2 = [
        (c1 * d_max / 2) ** r_a * nN ** (1 - r_a),
        (c2 * d_max / (1 + a)) ** r_a * nN ** (1 - a),
    ]
    if gains.finite_time:
        c_hat1 = min(terms1)
        c_hat2 = max(terms2)
        return ObserverConstants(c_hat1, c_hat2, float("nan"), float("nan"), d_max, coupling, True)
    b = float(gains.b)
    if not (c3 > 0 and b > 1 / a):
        raise GainConditionViolated("need c3 > 0 and b > 1/a", "b > 1/a")
    terms1.append(c3**2 / (2 * nN ** (b - 1)))
    terms2.append((c3 * d_max / (1 + b)) ** r_a)
    r_b = 2 * b / (1 + b)
    c_hat1 = min(terms1)
    c_hat2 = max(terms2)
    c_hat3 = max(
        (c1 * d_max / 2) ** r_b, (c2 * d_max / (1 + a)) ** r_b, (c3 * d_max / (1 + b)) ** r_b
    ) * (3 * nN) ** ((b - 1) / (b + 1))
    T1 = fixed_time_bound(c_hat1, c_hat2, c_hat3, a, b)
    return ObserverConstants(c_hat1, c_hat2, c_hat3, T1, d_max, coupling, False)


def fixed_time_bound(c_hat1: float, c_hat2: float, c_hat3: float, a: float, b: float) -> float:
    a, b = float(a), float(b)
    return 4 * c_hat2 * (a + 1) / (c_hat1 * (1 - a)) + 4 * c_hat3 * (b + 1) / (c_hat1 * (b - 1))


def lyapunov_V(y, gains: ObserverGains, D) -> float:
    """Observer Lyapunov function of the stacked innovation ``y`` (shape ``(N, n)``)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = np.diag(D)
    a = float(gains.a)
    ay = np.abs(y)
    per_agent = gains.c2 / (1 + a) * np.sum(ay ** (1 + a), axis=1)
    if gains.c3 > 0:
        b = float(gains.b)
        per_agent = per_agent + gains.c3 / (1 + b) * np.sum(ay ** (1 + b), axis=1)
    quad = 0.5 * gains.c1 * np.sum(d * np.sum(y * y, axis=1))
    return float(np.sum(d * per_agent) + quad)


def finite_time_bound(consts: ObserverConstants, gains: ObserverGains, V0: float) -> float:
    """Settling bound of the finite-time observer from ``V(y(0))``."""
    a = float(gains.a)
    return 3 * consts.c_hat2 * (a + 1) * V0 ** (1 - 2 * a / (1 + a)) / (consts.c_hat1 * (1 - a))
