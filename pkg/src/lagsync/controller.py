"""Robust fixed-time tracking controller for uncertain Euler-Lagrange agents.

The torque is ``tau = Mhat (u1 + u2)`` where ``u2`` is a backstepping law on
the auxiliary error ``eps`` and ``u1`` is a discontinuous domination term
sized from the plant bounds. Gains come from a parameter pipeline that
depends only on the exponents ``alpha`` and ``beta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .agents import GRAVITY, TwoLinkArm
from .errors import InvalidExponents, UncertifiedGains, ValidationError
from .numerics import OddRational, as_odd_rational, sigpow


def _exponents(alpha, beta) -> tuple[OddRational, OddRational]:
    alpha, beta = as_odd_rational(alpha), as_odd_rational(beta)
    if not Fraction(1, 2) < alpha.fraction < 1:
        raise InvalidExponents(f"alpha = {alpha} must lie in (1/2, 1)", key="controller.alpha")
    if not beta.fraction > 1:
        raise InvalidExponents(f"beta = {beta} must exceed 1", key="controller.beta")
    return alpha, beta


@dataclass(frozen=True)
class ControlExponents:
    """Exact exponents used by the control law, derived from ``alpha`` and ``beta``."""

    alpha: OddRational
    beta: OddRational

    @property
    def inv_alpha(self) -> OddRational:
        return OddRational.from_fraction(1 / self.alpha.fraction)

    @property
    def zeta(self) -> OddRational:
        return OddRational.from_fraction(2 - self.alpha.fraction)

    @property
    def k1_power(self) -> OddRational:
        return OddRational.from_fraction(2 * self.alpha.fraction - 1)

    @property
    def k2_power(self) -> OddRational:
        a, b = self.alpha.fraction, self.beta.fraction
        return OddRational.from_fraction(b / a + b + a - 2)


def p_constants(alpha, beta) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    a, b = (as_odd_rational(x).fraction for x in (alpha, beta))
    return Fraction(0), b - a, b / a - b + a - 1, b / a - 1


class _Pipeline:
    """The l/ell functions of the gain-selection procedure for fixed exponents."""

    def __init__(self, alpha: float, beta: float, gamma1: float = 0.0, gamma2: float = 0.0):
        self.a, self.b = alpha, beta
        self.g1, self.g2 = gamma1, gamma2
        self.c = 2.0 ** (1 - alpha)
        self.scale = (2 - alpha) * self.c

    def l1(self, p):
        a = self.a
        return self.c * p / (p + 1 + a) + (p + a) / (p + a + 1)

    def l2(self, p):
        return (p + self.b) / (p + self.b + 1)

    def l3(self, p, lam):
        a = self.a
        return (self.c * (1 + a) / (p + 1 + a) * lam ** ((p + a + 1) / (1 + a))
                + (lam * self.g1) ** (p + a + 1) / (p + a + 1))

    def l4(self, p, lam):
        b = self.b
        return (lam * self.g2) ** (p + b + 1) / (p + b + 1)

    def ell1(self, p):
        return self.scale * self.l1(p)

    def ell2(self, p):
        return self.scale * self.l2(p)

    def ell3(self, p, lam):
        return self.scale * self.l3(p, lam)

    def ell4(self, p, lam):
        return self.scale * self.l4(p, lam)


def gamma_lower_bounds(alpha, beta) -> dict:
    """``L1`` and the strict lower bounds on ``gamma1`` and ``gamma2``."""
    alpha, beta = _exponents(alpha, beta)
    a, b = float(alpha), float(beta)
    p = [float(x) for x in p_constants(alpha, beta)]
    f = _Pipeline(a, b)
    L1 = max(f.ell2(p[1]), f.ell1(p[2]))
    r = b / a
    g1 = max(f.c / (1 + a) + f.ell1(p[0]) + 2 * L1, f.c * r / (r + a) + f.ell2(p[2]) + f.ell1(p[3]))
    g2 = max(f.ell2(p[3]) + 2 * L1, f.ell2(p[0]) + f.ell1(p[1]))
    return {"L1": L1, "gamma1": g1, "gamma2": g2}


def lambdas(alpha: float, beta: float, gamma1: float, gamma2: float) -> list[float]:
    a, b = alpha, beta
    return [
        gamma1 ** (1 / a),
        gamma1 ** (1 / a - 1) * gamma2 * b / a,
        gamma1 * gamma2 ** (1 / a - 1),
        gamma2 ** (1 / a) * b / a,
    ]


def k_lower_bounds(alpha, beta, gamma1: float, gamma2: float) -> dict:
    """``lambda_j``, ``L2`` and the strict lower bounds on ``k1`` and ``k2``."""
    alpha, beta = _exponents(alpha, beta)
    a, b = float(alpha), float(beta)
    p = [float(x) for x in p_constants(alpha, beta)]
    f = _Pipeline(a, b, gamma1, gamma2)
    lam = lambdas(a, b, gamma1, gamma2)
    r = b / a
    L2 = max(
        f.c * a / (r + a) + f.ell4(p[2], lam[2]) + f.ell3(p[3], lam[3]),
        f.ell4(p[0], lam[0]) + f.ell3(p[1], lam[1]),
        f.ell4(p[1], lam[1]),
        f.ell3(p[2], lam[2]),
    )
    k1 = f.c * a / (a + 1) + f.ell3(p[0], lam[0]) + 4 * L2
    k2 = f.ell4(p[3], lam[3]) + 4 * L2
    return {"lambda": lam, "L2": L2, "k1": k1, "k2": k2}


def check_gains(alpha, beta, gamma1: float, gamma2: float, k1: float, k2: float) -> dict:
    """Slack of every strict gain inequality (positive means satisfied)."""
    g = gamma_lower_bounds(alpha, beta)
    k = k_lower_bounds(alpha, beta, gamma1, gamma2)
    slacks = {
        "gamma1": gamma1 - g["gamma1"],
        "gamma2": gamma2 - g["gamma2"],
        "k1": k1 - k["k1"],
        "k2": k2 - k["k2"],
    }
    return {
        "slacks": slacks,
        "lower_bounds": {"gamma1": g["gamma1"], "gamma2": g["gamma2"], "k1": k["k1"], "k2": k["k2"]},
        "certified": all(s > 0 for s in slacks.values()),
    }


def finite_time_gain_bounds(alpha, gamma1: float) -> dict:
    """Lower bounds on ``gamma1`` and ``k1`` for the finite-time reduction (``gamma2 = k2 = 0``)."""
    a = float(as_odd_rational(alpha))
    c = 2.0 ** (1 - a)
    g1 = c / (1 + a) + a * (2 - a) * c / (1 + a)
    k1 = gamma1 ** (1 + 1 / a) * (c * a / (1 + a) + (2 - a) * c / gamma1 * (c + gamma1 / (1 + a)))
    return {"gamma1": g1, "k1": k1}


def check_finite_gains(alpha, gamma1: float, k1: float) -> dict:
    lb = finite_time_gain_bounds(alpha, gamma1)
    slacks = {"gamma1": gamma1 - lb["gamma1"], "k1": k1 - lb["k1"]}
    return {"slacks": slacks, "lower_bounds": lb, "certified": all(s > 0 for s in slacks.values())}


@dataclass(frozen=True)
class GainLedger:
    alpha: OddRational
    beta: OddRational
    p: tuple[Fraction, Fraction, Fraction, Fraction]
    L1: float
    gamma1: float
    gamma2: float
    lam: tuple[float, float, float, float]
    L2: float
    k1: float
    k2: float
    margins: dict = field(default_factory=dict)
    certified: bool = False

    def as_dict(self) -> dict:
        return {
            "alpha": str(self.alpha),
            "beta": str(self.beta),
            "p": [str(x) for x in self.p],
            "L1": self.L1,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "lambda": list(self.lam),
            "L2": self.L2,
            "k1": self.k1,
            "k2": self.k2,
            "margins": self.margins,
            "certified": self.certified,
        }


def ledger_for(alpha, beta, gamma1: float, gamma2: float, k1: float, k2: float) -> GainLedger:
    """Ledger for user-chosen gains; ``certified`` reflects the strict inequalities."""
    alpha, beta = _exponents(alpha, beta)
    g = gamma_lower_bounds(alpha, beta)
    k = k_lower_bounds(alpha, beta, gamma1, gamma2)
    chk = check_gains(alpha, beta, gamma1, gamma2, k1, k2)
    return GainLedger(
        alpha=alpha, beta=beta, p=p_constants(alpha, beta), L1=g["L1"],
        gamma1=gamma1, gamma2=gamma2, lam=tuple(k["lambda"]), L2=k["L2"], k1=k1, k2=k2,
        margins=chk["slacks"], certified=chk["certified"],
    )


def build_ledger(alpha, beta, margin: float = 0.05) -> GainLedger:
    """Run the full gain pipeline, placing each gain ``margin`` above its bound."""
    if not margin > 0:
        raise ValidationError("margin must be positive", key="margin")
    alpha, beta = _exponents(alpha, beta)
    g = gamma_lower_bounds(alpha, beta)
    gamma1, gamma2 = (1 + margin) * g["gamma1"], (1 + margin) * g["gamma2"]
    k = k_lower_bounds(alpha, beta, gamma1, gamma2)
    return ledger_for(alpha, beta, gamma1, gamma2, (1 + margin) * k["k1"], (1 + margin) * k["k2"])


@dataclass(frozen=True)
class RobustConfig:
    kappa: float
    k_m_inv: float
    k_M_inv: float
    k_c: float
    k_g: float
    smooth_radius: float = 0.0

    def __post_init__(self):
        if self.kappa < 1:
            raise ValidationError("must be >= 1", key="controller.kappa")
        if not self.k_m_inv > self.k_M_inv > 0:
            raise ValidationError("need km_inv > kM_inv > 0", key="bounds")
        if self.smooth_radius < 0:
            raise ValidationError("must be >= 0", key="controller.u1_smooth_radius")

    @classmethod
    def from_bounds(cls, bounds: dict, kappa: float, smooth_radius: float = 0.0) -> "RobustConfig":
        return cls(kappa, float(bounds["km_inv"]), float(bounds["kM_inv"]),
                   float(bounds["kc"]), float(bounds["kg"]), smooth_radius)

    @property
    def epsilon(self) -> float:
        return (self.k_m_inv - self.k_M_inv) / (self.k_m_inv + self.k_M_inv)

    @property
    def M_hat_scalar(self) -> float:
        return 2.0 / (self.k_m_inv + self.k_M_inv)

    def f(self, v) -> np.ndarray:
        """Bound on the unknown drift for velocity ``v`` (last axis = joints)."""
        v = np.asarray(v, dtype=float)
        return self.k_m_inv * (self.k_c * np.sum(v * v, axis=-1) + self.k_g)


def epsilon_var(q_bar, v_bar, gamma1: float, gamma2: float, alpha, beta) -> np.ndarray:
    ex = ControlExponents(*_exponents(alpha, beta))
    inner = gamma1 * sigpow(q_bar, ex.alpha)
    if gamma2 != 0:
        inner = inner + gamma2 * sigpow(q_bar, ex.beta)
    return sigpow(v_bar, ex.inv_alpha) + sigpow(inner, ex.inv_alpha)


def u2(eps, eta_i, ledger: GainLedger, E, S, allow_uncertified: bool = False) -> np.ndarray:
    if not ledger.certified and not allow_uncertified:
        raise UncertifiedGains(f"gains violate their lower bounds: {ledger.margins}")
    ex = ControlExponents(ledger.alpha, ledger.beta)
    E, S = np.asarray(E, dtype=float), np.asarray(S, dtype=float)
    out = -ledger.k1 * sigpow(eps, ex.k1_power) + np.asarray(eta_i, dtype=float) @ (E @ S @ S).T
    if ledger.k2 != 0:
        out = out - ledger.k2 * sigpow(eps, ex.k2_power)
    return out


def u1(zeta, u2_val, v_i, rc: RobustConfig) -> np.ndarray:
    """Domination term; rows of the inputs are independent agents.

    With ``rc.smooth_radius > 0`` the unit vector ``zeta / ||zeta||`` is
    replaced by ``zeta / max(||zeta||, radius)``; this is a boundary layer and
    no longer the exact switching law.
    """
    zeta = np.asarray(zeta, dtype=float)
    nz = np.linalg.norm(zeta, axis=-1, keepdims=True)
    gain = rc.kappa / (1 - rc.epsilon) * (
        rc.epsilon * np.linalg.norm(u2_val, axis=-1, keepdims=True) + rc.f(v_i)[..., None]
    )
    denom = np.maximum(nz, rc.smooth_radius) if rc.smooth_radius > 0 else nz
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(nz > 0, -gain * zeta / safe, 0.0)


def torque(u1_val, u2_val, rc: RobustConfig) -> np.ndarray:
    return rc.M_hat_scalar * (np.asarray(u1_val) + np.asarray(u2_val))


def domination_residual(q, v, u1_val, u2_val, arm: TwoLinkArm, rc: RobustConfig) -> np.ndarray:
    """``Z = u1 + (M^-1 Mhat - I)(u1 + u2) + F`` with the true plant matrices."""
    u1_val = np.asarray(u1_val, dtype=float)
    u = u1_val + np.asarray(u2_val, dtype=float)
    Minv = np.linalg.inv(arm.inertia(q))
    F = -np.einsum("...ij,...j->...i", Minv, arm.coriolis_times_velocity(q, v) + arm.gravity_torque(q))
    return u1_val + rc.M_hat_scalar * np.einsum("...ij,...j->...i", Minv, u) - u + F


def domination_slack(zeta, q, v, u2_val, arm: TwoLinkArm, rc: RobustConfig) -> np.ndarray:
    """``zeta^T Z`` with ``u1`` computed from ``zeta``; non-positive for a valid design."""
    u1_val = u1(zeta, u2_val, v, rc)
    Z = domination_residual(q, v, u1_val, u2_val, arm, rc)
    return np.sum(np.asarray(zeta) * Z, axis=-1)


def sample_domination_slack(ranges, rc: RobustConfig, draws: int = 10_000, seed: int = 0,
                            v_max: float = 10.0, alpha=OddRational(7, 9),
                            gravity: float = GRAVITY) -> dict:
    """Randomized check of ``zeta^T Z <= 0`` over a (theta, q, qdot, eps, u2) envelope.

    theta is uniform in ``ranges``, ``q`` in ``[-pi, pi]^2``, ``qdot`` in the
    ball of radius ``v_max``; ``eps`` and ``u2`` have log-uniform magnitudes
    over ``[1e-3, 1e3]`` and uniform directions.
    """
    rng = np.random.default_rng(seed)
    r = np.asarray(ranges, dtype=float)
    theta = r[:, 0] + (r[:, 1] - r[:, 0]) * rng.random((draws, 6))
    q = rng.uniform(-np.pi, np.pi, (draws, 2))

    def ball(radius_lo, radius_hi, log=True):
        d = rng.standard_normal((draws, 2))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        if log:
            mag = 10 ** rng.uniform(np.log10(radius_lo), np.log10(radius_hi), (draws, 1))
        else:
            mag = radius_hi * np.sqrt(rng.random((draws, 1)))
        return d * mag

    v = ball(0.0, v_max, log=False)
    eps = ball(1e-3, 1e3)
    u2_val = ball(1e-3, 1e3)
    zeta = sigpow(eps, Fraction(2) - as_odd_rational(alpha).fraction)
    arm = TwoLinkArm(theta, gravity)
    slack = domination_slack(zeta, q, v, u2_val, arm, rc)
    k = int(np.argmax(slack))
    return {
        "draws": draws,
        "max_slack": float(slack[k]),
        "witness": {"theta": theta[k].tolist(), "q": q[k].tolist(), "qdot": v[k].tolist(),
                    "eps": eps[k].tolist(), "u2": u2_val[k].tolist()},
        "slacks": slack,
    }


def tracking_time_bound(alpha, beta, rho1: float, rho2: float) -> float:
    """Tracking settling bound from user-supplied decay constants ``rho1, rho2``."""
    a, b = float(as_odd_rational(alpha)), float(as_odd_rational(beta))
    return 2 / (rho1 * (1 - a)) + (b + a) / (rho2 * a * (b - 1))


def decay_constants(gamma_hat: float, k_hat: float, nu1: float, nu2: float) -> tuple[float, float]:
    rho1 = min(gamma_hat / (2 * nu1), k_hat / nu1) / 2
    rho2 = min(gamma_hat / (2 * nu2), k_hat / nu2) / 2
    return rho1, rho2


@dataclass(frozen=True)
class ControllerConfig:
    """Everything the closed loop needs to evaluate the control law."""

    ledger: GainLedger
    robust: RobustConfig
    mode: str = "fixed"
    allow_uncertified: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "finite"):
            raise ValidationError("must be 'fixed' or 'finite'", key="controller.mode")
        if self.mode == "finite" and (self.ledger.k2 != 0 or self.ledger.gamma2 != 0):
            raise ValidationError("finite mode requires gamma2 = k2 = 0", key="controller.mode")
        if not self.certified and not self.allow_uncertified:
            raise UncertifiedGains(
                f"controller gains are not certified (slacks {self.slacks}); "
                "pass allow_uncertified to simulate anyway"
            )

    @property
    def slacks(self) -> dict:
        if self.mode == "finite":
            return check_finite_gains(self.ledger.alpha, self.ledger.gamma1, self.ledger.k1)["slacks"]
        return self.ledger.margins

    @property
    def certified(self) -> bool:
        return all(s > 0 for s in self.slacks.values())


def control_law(q, v, eta, eta_dot, cfg: ControllerConfig, E, S) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Torque for every agent from local data only.

    Rows of ``q, v, eta, eta_dot`` are agents. Returns ``(tau, u1, u2)``.
    """
    led = cfg.ledger
    E = np.asarray(E, dtype=float)
    q_bar = q - eta @ E.T
    v_bar = v - eta_dot @ E.T
    eps = epsilon_var(q_bar, v_bar, led.gamma1, led.gamma2, led.alpha, led.beta)
    u2_val = u2(eps, eta, led, E, S, allow_uncertified=True)
    zeta = sigpow(eps, ControlExponents(led.alpha, led.beta).zeta)
    u1_val = u1(zeta, u2_val, v, cfg.robust)
    return torque(u1_val, u2_val, cfg.robust), u1_val, u2_val
