"""Leader exosystem, two-link manipulator plants and plant-bound certification."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BoundViolated, DimensionMismatch, SingularInertia, ValidationError

GRAVITY = 9.8

# Published point values and uncertainty ranges for the six-arm example.
# theta_4 has no published range; [5.5, 6.5] brackets its point value 5.96.
PUBLISHED_THETA = (7.0, 0.96, 1.2, 5.96, 2.0, 1.2)
PUBLISHED_THETA_RANGES = ((6.0, 8.0), (0.8, 1.0), (1.0, 1.4), (5.5, 6.5), (1.5, 2.0), (1.0, 1.3))
PUBLISHED_BOUNDS = {"km_inv": 0.3, "kM_inv": 0.08, "kc": 3.0, "kg": 50.0}


@dataclass(frozen=True)
class LeaderExosystem:
    S: np.ndarray
    E: np.ndarray
    eta0: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        eta0 = np.asarray(self.eta0, dtype=float).ravel()
        n = S.shape[0]
        if S.shape != (n, n) or E.shape[1] != n or eta0.shape != (n,):
            raise DimensionMismatch(
                f"S {S.shape}, E {E.shape} and eta0 {eta0.shape} are inconsistent"
            )
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "eta0", eta0)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.E.shape[0]

    def reference(self, eta0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Desired position, velocity and acceleration for leader state ``eta0``."""
        eta0 = np.asarray(eta0, dtype=float)
        return self.E @ eta0, self.E @ self.S @ eta0, self.E @ self.S @ self.S @ eta0


def leader_flow(eta0, S) -> np.ndarray:
    eta0 = np.asarray(eta0, dtype=float)
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] != eta0.shape[-1]:
        raise DimensionMismatch(f"S {S.shape} cannot act on state of shape {eta0.shape}")
    return eta0 @ S.T


@dataclass(frozen=True)
class ManipulatorParams:
    theta: tuple[float, ...]
    gravity: float = GRAVITY

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        if len(theta) != 6 or any(not t > 0 for t in theta):
            raise ValidationError("needs six positive entries", key="theta")
        object.__setattr__(self, "theta", theta)

    def check_ranges(self, ranges: Sequence[Sequence[float]]) -> None:
        for k, (t, (lo, hi)) in enumerate(zip(self.theta, ranges)):
            if not lo <= t <= hi:
                raise ValidationError(f"theta_{k + 1} = {t} outside [{lo}, {hi}]", key="theta")


class TwoLinkArm:
    """Two-link arm dynamics ``M(q) qdd + C(q, qd) qd + G(q) = tau``.

    ``theta`` may be a single parameter 6-vector or an ``(N, 6)`` array for a
    batch of heterogeneous arms; all state arguments then carry a matching
    leading axis.
    """

    def __init__(self, theta, gravity: float = GRAVITY):
        self.theta = np.asarray(theta, dtype=float)
        self.gravity = float(gravity)

    def _th(self):
        return tuple(self.theta[..., k] for k in range(6))

    def inertia(self, q) -> np.ndarray:
        t1, t2, t3, t4, _, _ = self._th()
        c2 = np.cos(q[..., 1])
        m11 = t1 + t2 + 2.0 * t3 * c2
        m12 = t2 + t3 * c2
        m22 = np.broadcast_to(t4, m11.shape)
        return np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)

    def coriolis(self, q, qd) -> np.ndarray:
        # Factorization of C(q, qd) qd with the smallest induced 2-norm among
        # the simple candidates; only C qd enters the dynamics.
        t3 = self.theta[..., 2]
        s = t3 * np.sin(q[..., 1])
        a, b = qd[..., 0], qd[..., 1]
        zero = np.zeros_like(a * s)
        return np.stack(
            [np.stack([-s * (a + b), -s * a], -1), np.stack([zero, s * b], -1)], -2
        )

    def coriolis_times_velocity(self, q, qd) -> np.ndarray:
        t3 = self.theta[..., 2]
        s = t3 * np.sin(q[..., 1])
        a, b = qd[..., 0], qd[..., 1]
        return np.stack([-s * a * a - 2.0 * s * a * b, s * b * b], -1)

    def gravity_torque(self, q) -> np.ndarray:
        _, _, _, _, t5, t6 = self._th()
        g = self.gravity
        c12 = np.cos(q[..., 0] + q[..., 1])
        return np.stack([t5 * g * np.cos(q[..., 0]) + t6 * g * c12, t6 * g * c12], -1)

    def accel(self, q, qd, tau) -> np.ndarray:
        """Closed-form 2x2 solve of ``M qdd = tau - C qd - G``."""
        t1, t2, t3, t4, t5, t6 = self._th()
        c2 = np.cos(q[..., 1])
        m11 = t1 + t2 + 2.0 * t3 * c2
        m12 = t2 + t3 * c2
        rhs = tau - self.coriolis_times_velocity(q, qd) - self.gravity_torque(q)
        det = m11 * t4 - m12 * m12
        return np.stack(
            [(t4 * rhs[..., 0] - m12 * rhs[..., 1]) / det,
             (m11 * rhs[..., 1] - m12 * rhs[..., 0]) / det],
            -1,
        )


def manipulator_accel(p: ManipulatorParams, q, qdot, tau) -> np.ndarray:
    arm = TwoLinkArm(p.theta, p.gravity)
    q, qdot, tau = (np.asarray(v, dtype=float) for v in (q, qdot, tau))
    M = arm.inertia(q)
    if np.linalg.cond(M) > 1e12:
        raise SingularInertia(f"inertia matrix is singular at q = {q}")
    rhs = tau - arm.coriolis_times_velocity(q, qdot) - arm.gravity_torque(q)
    return np.linalg.solve(M, rhs)


@dataclass(frozen=True)
class BoundsCertificate:
    k_m_inv: float
    k_M_inv: float
    k_c: float
    k_g: float
    samples_checked: int = 0
    max_violation: float = 0.0
    witness: Optional[dict] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_violation <= 0.0

    @property
    def k_m(self) -> float:
        return 1.0 / self.k_m_inv

    @property
    def k_M(self) -> float:
        return 1.0 / self.k_M_inv


def _grid(n_q: int, n_dir: int):
    q_axis = np.linspace(-np.pi, np.pi, n_q)
    phi = np.linspace(0.0, np.pi, n_dir, endpoint=False)
    dirs = np.stack([np.cos(phi), np.sin(phi)], -1)
    return q_axis, dirs


def _norm2_2x2(A) -> np.ndarray:
    fro2 = np.sum(A * A, axis=(-2, -1))
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return np.sqrt(0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))))


def envelope_extremes(
    ranges=PUBLISHED_THETA_RANGES, n_q: int = 361, n_dir: int = 180, gravity: float = GRAVITY
) -> dict:
    """Grid extremes of the four bounded quantities, with their arg-max samples.

    M and G are affine in theta and C is linear in theta_3, so the extreme
    eigenvalues and norms over the theta box are attained at box corners;
    only corners are sampled. C is homogeneous in qdot, so unit directions
    suffice for ``||C(q, qd)|| / ||qd||``.
    """
    ranges = np.asarray(ranges, dtype=float)
    if ranges.shape != (6, 2) or np.any(ranges[:, 0] > ranges[:, 1]):
        raise ValidationError("need six [lo, hi] intervals", key="theta_ranges")
    mid = ranges.mean(axis=1)
    q_axis, dirs = _grid(n_q, n_dir)
    Q1, Q2 = np.meshgrid(q_axis, q_axis, indexing="ij")
    q_plane = np.stack([Q1.ravel(), Q2.ravel()], -1)
    q2_line = np.stack([np.zeros_like(q_axis), q_axis], -1)
    qq = np.repeat(q2_line, len(dirs), axis=0)
    dd = np.tile(dirs, (len(q2_line), 1))

    def corners(idx):
        for combo in itertools.product(*(ranges[k] for k in idx)):
            th = mid.copy()
            th[list(idx)] = combo
            yield th

    out = {"eig_min": (np.inf, None), "eig_max": (-np.inf, None),
           "c_ratio": (-np.inf, None), "g_norm": (-np.inf, None)}
    samples = 0

    def keep(key, values, pts, th, better, extra=None):
        ext = np.min(values) if better == "min" else np.max(values)
        # Among (near-)ties prefer the sample closest to q = 0: the simplest witness.
        ties = np.nonzero(np.abs(values - ext) <= 1e-12 * max(1.0, abs(ext)))[0]
        k = int(ties[np.argmin(np.linalg.norm(pts[ties], axis=-1))])
        cur = out[key][0]
        if (values[k] < cur) if better == "min" else (values[k] > cur):
            sample = {"theta": th.tolist(), "q": pts[k].tolist()}
            if extra is not None:
                sample["qdot"] = extra[k].tolist()
            out[key] = (float(values[k]), sample)

    for th in corners((0, 1, 2, 3)):
        eig = np.linalg.eigvalsh(TwoLinkArm(th, gravity).inertia(q2_line))
        keep("eig_min", eig[:, 0], q2_line, th, "min")
        keep("eig_max", eig[:, 1], q2_line, th, "max")
        samples += len(q2_line)
    for th in corners((2,)):
        cn = _norm2_2x2(TwoLinkArm(th, gravity).coriolis(qq, dd))
        keep("c_ratio", cn, qq, th, "max", extra=dd)
        samples += len(qq)
    for th in corners((4, 5)):
        gn = np.linalg.norm(TwoLinkArm(th, gravity).gravity_torque(q_plane), axis=-1)
        keep("g_norm", gn, q_plane, th, "max")
        samples += len(q_plane)
    out["samples"] = samples
    return out


def certify_bounds(
    ranges=PUBLISHED_THETA_RANGES,
    bounds: Optional[dict] = None,
    n_q: int = 361,
    n_dir: int = 180,
    v_max: float = 10.0,
    gravity: float = GRAVITY,
    raise_on_violation: bool = True,
) -> BoundsCertificate:
    """Check ``k_m I <= M <= k_M I``, ``||C|| <= k_c ||qd||``, ``||G|| <= k_g`` on a grid.

    ``bounds`` holds ``km_inv``, ``kM_inv``, ``kc`` and ``kg`` (defaults to
    the published constants). Violations are measured in the units of the
    bounded quantity; the worst one is reported with its sample.
    """
    b = dict(PUBLISHED_BOUNDS if bounds is None else bounds)
    km_inv, kM_inv, kc, kg = (float(b[k]) for k in ("km_inv", "kM_inv", "kc", "kg"))
    if not km_inv > kM_inv > 0:
        raise ValidationError("need km_inv > kM_inv > 0", key="bounds")
    ext = envelope_extremes(ranges, n_q, n_dir, gravity)
    checks = {
        "inertia_lower": (1.0 / km_inv - ext["eig_min"][0], ext["eig_min"][1]),
        "inertia_upper": (ext["eig_max"][0] - 1.0 / kM_inv, ext["eig_max"][1]),
        "coriolis": (ext["c_ratio"][0] - kc, ext["c_ratio"][1]),
        "gravity": (ext["g_norm"][0] - kg, ext["g_norm"][1]),
    }
    worst = max(checks, key=lambda k: checks[k][0])
    violation, sample = checks[worst]
    witness = dict(sample, check=worst, excess=violation) if violation > 0 else None
    cert = BoundsCertificate(
        k_m_inv=km_inv, k_M_inv=kM_inv, k_c=kc, k_g=kg,
        samples_checked=ext["samples"], max_violation=float(violation), witness=witness,
        details={
            "excess": {k: float(v[0]) for k, v in checks.items()},
            "extremes": {k: ext[k][0] for k in ("eig_min", "eig_max", "c_ratio", "g_norm")},
            "velocity_ball": v_max,
            "theta_ranges": [list(map(float, r)) for r in ranges],
        },
    )
    if violation > 0 and raise_on_violation:
        raise BoundViolated(
            f"{worst} bound exceeded by {violation:.4g} at {sample}", witness=witness,
            certificate=cert,
        )
    return cert


def tight_bounds(
    ranges=PUBLISHED_THETA_RANGES, margin: float = 0.01, n_q: int = 361, n_dir: int = 180,
    gravity: float = GRAVITY,
) -> dict:
    """Constants that the grid certifies for ``ranges``, loosened by ``margin``."""
    ext = envelope_extremes(ranges, n_q, n_dir, gravity)
    return {
        "km_inv": (1.0 + margin) / ext["eig_min"][0],
        "kM_inv": 1.0 / ((1.0 + margin) * ext["eig_max"][0]),
        "kc": (1.0 + margin) * ext["c_ratio"][0],
        "kg": (1.0 + margin) * ext["g_norm"][0],
    }
