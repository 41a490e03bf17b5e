"""Fixed-step closed-loop simulation, settling detection and Monte-Carlo sweeps."""
from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import _kernel
from .agents import TwoLinkArm
from .controller import ControlExponents, control_law
from .errors import AssumptionViolated, Divergence, LagsyncError, NonFiniteState
from .network import laplacian_bundle
from .observer import (
    finite_time_bound, lyapunov_V, observer_constants, observer_rhs, stacked_innovation,
)
from .scenario import InitialConditions, Scenario

log = logging.getLogger(__name__)

BLOWUP = 1e12


def rk4_step(f: Callable, state, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.asarray(state, dtype=float)
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after step at t = {t}")
    return out


class ClosedLoop:
    """Everything derived from a :class:`Scenario` that the integrator needs."""

    def __init__(self, s: Scenario, observer_only: bool = False):
        self.scenario = s
        self.observer_only = observer_only
        g = s.graph
        self.bundle = laplacian_bundle(g, s.D_diag)
        if not self.bundle.root_reachable:
            raise AssumptionViolated("graph has no spanning tree rooted at the leader")
        if not self.bundle.D_ok:
            log.warning("D fails H^T D + D H >= 2I (min eigenvalue %.6g)", self.bundle.min_eig)
        self.A = g.adjacency()
        self.n, self.N = s.leader.n, s.N
        S, E = s.leader.S, s.leader.E
        self.S, self.E = S, E
        self.ES = E @ S
        self.ESS = E @ S @ S
        gains = s.observer
        self.gains = gains
        self.consts = observer_constants(gains, self.bundle.D, S, self.n, self.N)
        self.obs = np.array([gains.c1, gains.c2, gains.c3, float(gains.a),
                             float(gains.b) if gains.b is not None else 0.0])
        self.theta = np.array([p.theta for p in s.agents])
        gravs = {p.gravity for p in s.agents}
        if len(gravs) != 1:
            raise AssumptionViolated("all arms must share one gravity constant")
        self.grav = gravs.pop()
        self.arm = TwoLinkArm(self.theta, self.grav)
        if observer_only:
            self.cfg = None
            self.ctl = np.zeros(17)
        else:
            self.cfg = s.controller_config()
            led, rc = self.cfg.ledger, self.cfg.robust
            ex = ControlExponents(led.alpha, led.beta)
            self.ctl = np.array([
                led.gamma1, led.gamma2, led.k1, led.k2, float(ex.inv_alpha), float(led.alpha),
                float(led.beta), float(ex.k1_power), float(ex.k2_power), float(ex.zeta),
                rc.kappa, rc.epsilon, rc.M_hat_scalar, rc.k_m_inv, rc.k_c, rc.k_g, rc.smooth_radius,
            ])

    def split(self, x):
        n, N = self.n, self.N
        x = np.asarray(x)
        eta0 = x[..., :n]
        eta = x[..., n:n + N * n].reshape(x.shape[:-1] + (N, n))
        q = x[..., n + N * n:n + N * n + 2 * N].reshape(x.shape[:-1] + (N, 2))
        v = x[..., n + N * n + 2 * N:].reshape(x.shape[:-1] + (N, 2))
        return eta0, eta, q, v

    def rhs(self, x) -> np.ndarray:
        """Compiled vector field at state ``x``."""
        return _kernel.rhs_once(np.ascontiguousarray(x, dtype=float), self.n, self.N, self.A,
                                self.S, self.E, self.ESS, self.obs, self.ctl, self.theta,
                                self.grav, not self.observer_only)

    def reference_rhs(self, x) -> np.ndarray:
        """Same vector field assembled from the public numpy building blocks."""
        eta0, eta, q, v = self.split(x)
        eta_all = np.vstack([eta0[None, :], eta])
        y = stacked_innovation(eta_all, self.A)
        deta = observer_rhs(eta, y, self.gains, self.S)
        if self.observer_only:
            dq = np.zeros_like(q)
            dv = np.zeros_like(v)
        else:
            tau, _, _ = control_law(q, v, eta, deta, self.cfg, self.E, self.S)
            dq = v
            dv = self.arm.accel(q, v, tau)
        return np.concatenate([eta0 @ self.S.T, deta.ravel(), dq.ravel(), dv.ravel()])

    def innovation(self, x) -> np.ndarray:
        eta0, eta, _, _ = self.split(x)
        return stacked_innovation(np.vstack([eta0[None, :], eta]), self.A)

    def lyapunov(self, x) -> float:
        return lyapunov_V(self.innovation(x), self.gains, self.bundle.D)

    def settling_bound(self, x0) -> float:
        """Fixed-time bound, or the finite-time bound evaluated at ``x0``."""
        if self.gains.finite_time:
            return finite_time_bound(self.consts, self.gains, self.lyapunov(x0))
        return self.consts.T1_star


@dataclass
class Trajectory:
    times: np.ndarray
    leader: np.ndarray          # (T, n)
    eta: np.ndarray             # (T, N, n)
    q: np.ndarray               # (T, N, 2)
    v: np.ndarray               # (T, N, 2)
    V: np.ndarray               # (T,)
    E: np.ndarray
    S: np.ndarray
    step: float
    record_every: int = 1
    # Last step index (full resolution) with error >= tolerance; -1 if never.
    last_exceed: Optional[np.ndarray] = None
    tolerance: float = 1e-3
    n_steps: int = 0

    @property
    def eta_err(self) -> np.ndarray:
        return self.eta - self.leader[:, None, :]

    @property
    def q_err(self) -> np.ndarray:
        return self.q - (self.leader @ self.E.T)[:, None, :]

    @property
    def v_err(self) -> np.ndarray:
        return self.v - (self.leader @ (self.E @ self.S).T)[:, None, :]

    def error_series(self, which: str) -> np.ndarray:
        """Per-agent infinity-norm error, shape ``(T, N)``."""
        if which == "observer":
            return np.max(np.abs(self.eta_err), axis=-1)
        if which == "position":
            return np.max(np.abs(self.q_err), axis=-1)
        if which == "velocity":
            return np.max(np.abs(self.v_err), axis=-1)
        if which == "tracking":
            return np.maximum(self.error_series("position"), self.error_series("velocity"))
        raise ValueError(f"unknown error series {which!r}")


def _status_error(status: int, t: float):
    if status == _kernel.NONFINITE:
        raise NonFiniteState(f"non-finite state at t = {t:.6g}")
    if status == _kernel.DIVERGED:
        raise Divergence(f"state norm exceeded {BLOWUP:g} at t = {t:.6g}")


def run_closed_loop(s: Scenario, record_every: int = 1, observer_only: bool = False,
                    loop: Optional[ClosedLoop] = None) -> Trajectory:
    """Integrate leader, observers and (unless ``observer_only``) arms over the horizon."""
    loop = loop or ClosedLoop(s, observer_only=observer_only)
    n_steps = int(round(s.horizon / s.step))
    x0 = s.initial_state()
    states, V, last, status, done = _kernel.integrate(
        x0, s.step, n_steps, int(record_every), s.tolerance, loop.n, loop.N, loop.A, loop.S,
        loop.E, loop.ES, loop.ESS, loop.obs, loop.ctl, loop.theta, loop.grav,
        not observer_only, np.diag(loop.bundle.D).copy(), BLOWUP,
    )
    if status != _kernel.OK:
        _status_error(status, done * s.step)
    eta0, eta, q, v = loop.split(states)
    times = np.arange(states.shape[0]) * record_every * s.step
    return Trajectory(
        times=times, leader=eta0, eta=eta, q=q, v=v, V=V, E=loop.E, S=loop.S, step=s.step,
        record_every=record_every, last_exceed=last, tolerance=s.tolerance, n_steps=n_steps,
    )


def detect_settling(traj: Trajectory, tol: float, which: str = "observer") -> list[Optional[float]]:
    """Per agent, the first sample time after which the error stays below ``tol``."""
    err = traj.error_series(which)
    out = []
    for i in range(err.shape[1]):
        above = np.nonzero(err[:, i] >= tol)[0]
        if above.size == 0:
            out.append(0.0)
        elif above[-1] == err.shape[0] - 1:
            out.append(None)
        else:
            out.append(float(traj.times[above[-1] + 1]))
    return out


def _settle_from_index(last: np.ndarray, n_steps: int, h: float) -> list[Optional[float]]:
    out = []
    for k in last:
        if k < 0:
            out.append(0.0)
        elif k >= n_steps:
            out.append(None)
        else:
            out.append(float((k + 1) * h))
    return out


def _latest(times) -> Optional[float]:
    return None if any(t is None for t in times) else max(times)


@dataclass
class SettlingReport:
    t_obs: list
    t_trk: list
    T1_star: float
    bound_respected: bool
    max_post_settling_error: float
    t_pos: list = field(default_factory=list)
    t_vel: list = field(default_factory=list)
    finite_time: bool = False
    lyapunov_monotone: bool = True
    lyapunov_worst_increase: float = 0.0
    velocity_chatter: float = 0.0
    D_min_eig: float = float("nan")
    D_ok: bool = True
    gain_slacks: dict = field(default_factory=dict)
    gains_certified: bool = False

    def as_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def lyapunov_check(traj: Trajectory, until: Optional[float], rel_slack: float = 1e-9) -> tuple[bool, float]:
    """Whether ``V`` is non-increasing on samples up to time ``until``."""
    V = traj.V
    stop = len(V) if until is None else int(np.searchsorted(traj.times, until, side="right"))
    seg = V[:max(stop, 1)]
    if seg.size < 2:
        return True, 0.0
    inc = np.diff(seg)
    worst = float(inc.max())
    return bool(worst <= rel_slack * float(seg.max())), worst


def settling_report(s: Scenario, traj: Trajectory, loop: Optional[ClosedLoop] = None) -> SettlingReport:
    loop = loop or ClosedLoop(s, observer_only=True)
    h = s.step
    t_obs = _settle_from_index(traj.last_exceed[0], traj.n_steps, h)
    t_pos = _settle_from_index(traj.last_exceed[1], traj.n_steps, h)
    t_vel = _settle_from_index(traj.last_exceed[2], traj.n_steps, h)
    t_trk = [None if a is None or b is None else max(a, b) for a, b in zip(t_pos, t_vel)]
    T1 = loop.settling_bound(s.initial_state())
    bound_ok = all(t is not None and t <= T1 for t in t_obs)
    post = 0.0
    for series, times in (("observer", t_obs), ("position", t_pos), ("velocity", t_vel)):
        err = traj.error_series(series)
        for i, t in enumerate(times):
            if t is not None:
                mask = traj.times >= t
                if mask.any():
                    post = max(post, float(err[mask, i].max()))
    mono, worst = lyapunov_check(traj, _latest(t_obs))
    tail = traj.times >= traj.times[-1] - 1.0
    chatter = float(traj.error_series("velocity")[tail].max())
    if loop.cfg is not None:
        slacks, certified = loop.cfg.slacks, loop.cfg.certified
    else:
        cfg = s.controller_config() if s.controller.allow_uncertified else None
        slacks, certified = (cfg.slacks, cfg.certified) if cfg else ({}, False)
    return SettlingReport(
        t_obs=t_obs, t_trk=t_trk, T1_star=float(T1), bound_respected=bound_ok,
        max_post_settling_error=post, t_pos=t_pos, t_vel=t_vel,
        finite_time=s.observer.finite_time, lyapunov_monotone=mono,
        lyapunov_worst_increase=worst, velocity_chatter=chatter,
        D_min_eig=loop.bundle.min_eig, D_ok=loop.bundle.D_ok,
        gain_slacks=dict(slacks), gains_certified=bool(certified),
    )


def simulate(s: Scenario, record_every: int = 1, observer_only: bool = False) -> tuple[Trajectory, SettlingReport]:
    loop = ClosedLoop(s, observer_only=observer_only)
    traj = run_closed_loop(s, record_every=record_every, observer_only=observer_only, loop=loop)
    return traj, settling_report(s, traj, loop)


def draw_initial_errors(s: Scenario, runs: int, scale_range, seed: Optional[int] = None):
    """Log-uniform error magnitudes and the matching initial estimates per run."""
    lo, hi = scale_range
    if not 0 < lo <= hi:
        raise ValueError("scale range must satisfy 0 < lo <= hi")
    rng = np.random.default_rng(s.seed if seed is None else seed)
    N, n = s.N, s.leader.n
    draws = []
    for _ in range(runs):
        scale = float(10 ** rng.uniform(np.log10(lo), np.log10(hi)))
        direction = rng.standard_normal(N * n)
        err = scale * direction / np.linalg.norm(direction)
        draws.append((scale, s.leader.eta0[None, :] + err.reshape(N, n)))
    return draws


def monte_carlo(s: Scenario, runs: int, scale_range=(1e-2, 1e2), observer_only: bool = True,
                seed: Optional[int] = None, record_every: int = 100) -> dict:
    """Settling statistics over initial estimation errors of log-uniform size.

    With ``observer_only`` the arms are frozen and only the observer network
    is integrated (its error dynamics do not depend on the arms).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    draws = draw_initial_errors(s, runs, scale_range, seed)
    loop = ClosedLoop(s, observer_only=observer_only)

    def one(k):
        scale, eta = draws[k]
        init = InitialConditions(eta=tuple(map(tuple, eta)), q=s.initial.q, v=s.initial.v,
                                 scale=s.initial.scale)
        sk = s.replace(initial=init)
        try:
            traj = run_closed_loop(sk, record_every=record_every, observer_only=observer_only, loop=loop)
        except LagsyncError as exc:
            raise type(exc)(f"run {k}: {exc}") from exc
        rep = settling_report(sk, traj, loop)
        return {
            "run": k,
            "scale": scale,
            "t_obs": _latest(rep.t_obs),
            "t_trk": None if observer_only else _latest(rep.t_trk),
            "T1_bound": rep.T1_star,
            "bound_respected": rep.bound_respected,
        }

    # Runs are independent; the kernel releases the GIL, and map keeps run order.
    workers = min(threads_cap(), runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(runs)))
    else:
        rows = [one(k) for k in range(runs)]
    t = np.array([np.inf if r["t_obs"] is None else r["t_obs"] for r in rows])
    scales = np.array([r["scale"] for r in rows])
    finite = np.isfinite(t)
    rho = float(stats.spearmanr(scales, t).statistic) if runs > 2 and np.ptp(t[finite]) > 0 else float("nan")
    out = {
        "mode": "finite" if s.observer.finite_time else "fixed",
        "runs": rows,
        "violations": int(sum(not r["bound_respected"] for r in rows)),
        "settling_max": float(t.max()),
        "settling_min": float(t.min()),
        "settling_median": float(np.median(t)),
        "settling_ratio": float(t.max() / t.min()) if t.min() > 0 else float("inf"),
        "spearman_scale_settling": rho,
    }
    if s.observer.finite_time:
        order = np.argsort(scales)
        out["settling_vs_scale"] = [[float(scales[i]), float(t[i])] for i in order]
    return out


CSV_HEADER_FIXED = ["t", "agent", "q1_err", "q2_err", "v1_err", "v2_err"]


def trajectory_csv(traj: Trajectory, every: int = 1) -> str:
    """Error series as CSV text, one row per (sample, agent)."""
    n = traj.leader.shape[1]
    header = CSV_HEADER_FIXED + [f"eta{k + 1}_err" for k in range(n)] + ["V"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    qe, ve, ee = traj.q_err, traj.v_err, traj.eta_err
    for k in range(0, len(traj.times), every):
        t = repr(float(traj.times[k]))
        V = repr(float(traj.V[k]))
        for i in range(qe.shape[1]):
            w.writerow([t, i + 1] + [repr(float(x)) for x in qe[k, i]] + [repr(float(x)) for x in ve[k, i]]
                       + [repr(float(x)) for x in ee[k, i]] + [V])
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path, every: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trajectory_csv(traj, every))


def gnuplot_script(csv_name: str, report: SettlingReport, n_agents: int, horizon: float) -> str:
    """Gnuplot script drawing estimate, position and velocity errors with settling markers."""
    lines = [
        "set datafile separator ','",
        "set key off",
        "set xlabel 't [s]'",
        f"set xrange [0:{horizon}]",
        "set multiplot layout 3,1",
    ]
    marks = [t for t in report.t_obs if t is not None]
    if report.T1_star <= horizon:
        marks.append(report.T1_star)
    for t in sorted(set(marks)):
        lines.append(f"set arrow from {t}, graph 0 to {t}, graph 1 nohead dt 2")
    panels = (("estimation error", 7, 8), ("position error", 3, 4), ("velocity error", 5, 6))
    for title, c1, c2 in panels:
        lines.append(f"set title '{title}'")
        plots = []
        for i in range(1, n_agents + 1):
            for col in (c1, c2):
                plots.append(f"'{csv_name}' using 1:($2=={i} ? ${col} : 1/0) with lines")
        lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def threads_cap() -> int:
    raw = os.environ.get("LAGSYNC_THREADS")
    try:
        return max(1, int(raw)) if raw else (os.cpu_count() or 1)
    except ValueError:
        return 1
