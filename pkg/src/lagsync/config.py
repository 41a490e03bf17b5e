"""TOML scenario files: parsing with key-level validation, and emission.

Layout (all sections optional except ``graph``, ``leader``, ``agents`` and
``observer``)::

    seed = 2024
    tolerance = 1e-3

    [integrator]
    step = 1e-4
    horizon = 20.0

    [graph]
    n_followers = 6
    edges = [[0, 1, 1.0], [1, 2, 1.0]]   # [from, to, weight]
    D_diag = [8.0, 8.0]                  # optional, verified not trusted

    [leader]
    S = [[0.0, 1.0], [-1.0, 0.0]]
    E = [[1.0, 0.0], [0.0, 1.0]]
    eta0 = [0.0, 1.0]

    [agents]
    gravity = 9.8
    theta = [7.0, 0.96, 1.2, 5.96, 2.0, 1.2]   # one row shared, or one row per agent
    theta_ranges = [[6, 8], ...]

    [bounds]
    km_inv = 0.3
    kM_inv = 0.08
    kc = 3.0
    kg = 50.0

    [observer]
    c1 = 8.4
    c2 = 1.0
    c3 = 1.0
    a = "3/5"
    b = "3"

    [controller]
    alpha = "7/9"
    beta = "9/7"
    gamma1 = 10.0
    ...

Exponents are ``"num/den"`` strings so that odd ratios survive exactly.
"""
from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import GRAVITY, LeaderExosystem, ManipulatorParams
from .controller import _exponents
from .errors import InvalidExponents, LagsyncError, ParseError, ValidationError
from .network import Digraph
from .numerics import OddRational
from .observer import ObserverGains
from .scenario import ControllerSettings, InitialConditions, PlantBounds, Scenario

BUNDLED = ("paper_example",)

_KNOWN = {
    "": {"seed", "tolerance", "integrator", "graph", "leader", "agents", "bounds",
         "observer", "controller", "initial"},
    "integrator": {"step", "horizon"},
    "graph": {"n_followers", "edges", "D_diag"},
    "leader": {"S", "E", "eta0"},
    "agents": {"gravity", "theta", "theta_ranges"},
    "bounds": {"km_inv", "kM_inv", "kc", "kg"},
    "observer": {"c1", "c2", "c3", "a", "b"},
    "controller": {"alpha", "beta", "gamma1", "gamma2", "k1", "k2", "kappa", "mode",
                   "allow_uncertified", "u1_smooth_radius"},
    "initial": {"scale", "eta", "q", "v"},
}
_REQUIRED = ("graph", "leader", "agents", "observer")


def resolve_scenario_path(name_or_path) -> Path:
    """Map a bundled scenario name to its file; other inputs are treated as paths."""
    if str(name_or_path) in BUNDLED:
        return Path(str(resources.files("lagsync") / "scenarios" / f"{name_or_path}.toml"))
    p = Path(name_or_path)
    if not p.is_file():
        raise ValidationError(f"no such scenario file: {p}", key="scenario")
    return p


def _need(tbl: dict, section: str, key: str):
    if key not in tbl:
        raise ValidationError("required key is missing", key=f"{section}.{key}")
    return tbl[key]


def _num(value, key: str, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"expected a number, got {value!r}", key=key)
    v = float(value)
    if not np.isfinite(v):
        raise ValidationError("must be finite", key=key)
    if positive and not v > 0:
        raise ValidationError("must be positive", key=key)
    if nonneg and v < 0:
        raise ValidationError("must be non-negative", key=key)
    return v


def _exp(value, key: str) -> OddRational:
    if not isinstance(value, str):
        raise ValidationError(f"exponent must be a 'num/den' string, got {value!r}", key=key)
    try:
        return OddRational.parse(value)
    except InvalidExponents as exc:
        raise ValidationError(f"odd-ratio exponent required ({exc})", key=key) from None


def _matrix(value, key: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("expected a numeric array", key=key) from None
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}", key=key)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("entries must be finite", key=key)
    return arr


def _check_unknown(doc: dict) -> None:
    for k in doc:
        if k not in _KNOWN[""]:
            raise ValidationError("unknown key", key=k)
    for sec, keys in _KNOWN.items():
        if sec and sec in doc:
            if not isinstance(doc[sec], dict):
                raise ValidationError("expected a table", key=sec)
            for k in doc[sec]:
                if k not in keys:
                    raise ValidationError("unknown key", key=f"{sec}.{k}")


def _wrap(key: str, fn, *args, **kwargs):
    """Re-raise constructor errors under a config key."""
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        if exc.key and "." in exc.key:
            raise
        raise ValidationError(exc.message, key=key) from None
    except LagsyncError as exc:
        raise ValidationError(str(exc), key=key) from None


def scenario_from_dict(doc: dict) -> Scenario:
    _check_unknown(doc)
    for sec in _REQUIRED:
        if sec not in doc:
            raise ValidationError("required section is missing", key=sec)

    g = doc["graph"]
    n_f = _need(g, "graph", "n_followers")
    if isinstance(n_f, bool) or not isinstance(n_f, int):
        raise ValidationError("must be an integer", key="graph.n_followers")
    edges = _need(g, "graph", "edges")
    if not isinstance(edges, list):
        raise ValidationError("expected a list of [from, to, weight]", key="graph.edges")
    for e in edges:
        if not isinstance(e, list) or len(e) != 3:
            raise ValidationError(f"edge {e!r} must be [from, to, weight]", key="graph.edges")
        if any(isinstance(x, bool) or not isinstance(x, int) for x in e[:2]):
            raise ValidationError(f"edge {e!r} endpoints must be integers", key="graph.edges")
        _num(e[2], "graph.edges", positive=True)
    graph = _wrap("graph.edges", Digraph, n_f, tuple(tuple(e) for e in edges))
    D_diag = None
    if "D_diag" in g:
        D = _matrix(g["D_diag"], "graph.D_diag", 1)
        if D.size != n_f:
            raise ValidationError(f"expected {n_f} entries", key="graph.D_diag")
        if np.any(D <= 0):
            raise ValidationError("entries must be positive", key="graph.D_diag")
        D_diag = tuple(D)

    ld = doc["leader"]
    S = _matrix(_need(ld, "leader", "S"), "leader.S", 2)
    E = _matrix(_need(ld, "leader", "E"), "leader.E", 2)
    eta0 = _matrix(_need(ld, "leader", "eta0"), "leader.eta0", 1)
    leader = _wrap("leader", LeaderExosystem, S=S, E=E, eta0=eta0)

    ag = doc["agents"]
    gravity = _num(ag.get("gravity", GRAVITY), "agents.gravity")
    theta = _matrix(_need(ag, "agents", "theta"), "agents.theta", np.ndim(ag["theta"]))
    if theta.ndim == 1:
        theta = np.tile(theta, (n_f, 1))
    if theta.ndim != 2 or theta.shape != (n_f, 6):
        raise ValidationError(f"expected 6 values or {n_f} rows of 6", key="agents.theta")
    agents = tuple(_wrap("agents.theta", ManipulatorParams, tuple(row), gravity) for row in theta)
    ranges = None
    if "theta_ranges" in ag:
        r = _matrix(ag["theta_ranges"], "agents.theta_ranges", 2)
        if r.shape != (6, 2) or np.any(r[:, 0] > r[:, 1]) or np.any(r <= 0):
            raise ValidationError("expected six positive [lo, hi] pairs", key="agents.theta_ranges")
        ranges = tuple(map(tuple, r))

    bounds = PlantBounds()
    if "bounds" in doc:
        b = doc["bounds"]
        vals = {k: _num(b[k], f"bounds.{k}", nonneg=True) for k in ("km_inv", "kM_inv", "kc", "kg") if k in b}
        bounds = _wrap("bounds", PlantBounds, **{**bounds.as_dict(), **vals})

    ob = doc["observer"]
    c1 = _num(_need(ob, "observer", "c1"), "observer.c1", positive=True)
    c2 = _num(_need(ob, "observer", "c2"), "observer.c2", positive=True)
    c3 = _num(ob.get("c3", 0.0), "observer.c3", nonneg=True)
    a = _exp(_need(ob, "observer", "a"), "observer.a")
    bexp = _exp(ob["b"], "observer.b") if "b" in ob else None
    observer = _wrap("observer", ObserverGains, c1, c2, c3, a, bexp)

    ct = doc.get("controller", {})
    ckw: dict[str, Any] = {}
    for k in ("alpha", "beta"):
        if k in ct:
            ckw[k] = _exp(ct[k], f"controller.{k}")
    for k in ("gamma1", "gamma2", "k1", "k2", "u1_smooth_radius"):
        if k in ct:
            ckw[k] = _num(ct[k], f"controller.{k}", nonneg=True)
    if "kappa" in ct:
        ckw["kappa"] = _num(ct["kappa"], "controller.kappa")
        if ckw["kappa"] < 1:
            raise ValidationError("must be >= 1", key="controller.kappa")
    if "mode" in ct:
        ckw["mode"] = ct["mode"]
    if "allow_uncertified" in ct:
        if not isinstance(ct["allow_uncertified"], bool):
            raise ValidationError("must be true or false", key="controller.allow_uncertified")
        ckw["allow_uncertified"] = ct["allow_uncertified"]
    controller = _wrap("controller", ControllerSettings, **ckw)
    if controller.mode == "finite" and (controller.gamma2 != 0 or controller.k2 != 0):
        raise ValidationError("finite mode requires gamma2 = k2 = 0", key="controller.mode")
    _exponents(controller.alpha, controller.beta)

    it = doc.get("integrator", {})
    kw: dict[str, Any] = {}
    if "step" in it:
        kw["step"] = _num(it["step"], "integrator.step", positive=True)
    if "horizon" in it:
        kw["horizon"] = _num(it["horizon"], "integrator.horizon", positive=True)
    if "tolerance" in doc:
        kw["tolerance"] = _num(doc["tolerance"], "tolerance", positive=True)
    if "seed" in doc:
        if isinstance(doc["seed"], bool) or not isinstance(doc["seed"], int) or doc["seed"] < 0:
            raise ValidationError("must be a non-negative integer", key="seed")
        kw["seed"] = doc["seed"]

    init = doc.get("initial", {})
    ikw: dict[str, Any] = {}
    if "scale" in init:
        ikw["scale"] = _num(init["scale"], "initial.scale", nonneg=True)
    for k in ("eta", "q", "v"):
        if k in init:
            arr = _matrix(init[k], f"initial.{k}", 2)
            ikw[k] = tuple(map(tuple, arr))
    initial = InitialConditions(**ikw)
    if ranges is not None:
        kw["theta_ranges"] = ranges

    s = _wrap("integrator", Scenario, graph=graph, leader=leader, agents=agents, observer=observer,
              controller=controller, bounds=bounds, D_diag=D_diag, initial=initial, **kw)
    s.initial_state()
    return s


def parse_config(path) -> Scenario:
    """Read a TOML scenario (or a bundled name such as ``"paper_example"``)."""
    p = resolve_scenario_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {p}: {exc}", key="scenario") from None
    return parse_config_text(text)


def parse_config_text(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            import re
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ParseError(str(exc).split(" (at line")[0], line, col) from None
    return scenario_from_dict(doc)


def scenario_to_dict(s: Scenario) -> dict:
    theta = np.array([a.theta for a in s.agents])
    same = np.all(theta == theta[0])
    doc: dict[str, Any] = {
        "seed": s.seed,
        "tolerance": s.tolerance,
        "integrator": {"step": s.step, "horizon": s.horizon},
        "graph": {"n_followers": s.N, "edges": [[j, i, w] for j, i, w in s.graph.edges]},
        "leader": {"S": s.leader.S.tolist(), "E": s.leader.E.tolist(), "eta0": s.leader.eta0.tolist()},
        "agents": {
            "gravity": s.agents[0].gravity,
            "theta": theta[0].tolist() if same else theta.tolist(),
            "theta_ranges": [list(r) for r in s.theta_ranges],
        },
        "bounds": s.bounds.as_dict(),
        "observer": {"c1": s.observer.c1, "c2": s.observer.c2, "c3": s.observer.c3, "a": str(s.observer.a)},
        "controller": {
            "alpha": str(s.controller.alpha), "beta": str(s.controller.beta),
            "gamma1": s.controller.gamma1, "gamma2": s.controller.gamma2,
            "k1": s.controller.k1, "k2": s.controller.k2, "kappa": s.controller.kappa,
            "mode": s.controller.mode, "allow_uncertified": s.controller.allow_uncertified,
            "u1_smooth_radius": s.controller.u1_smooth_radius,
        },
        "initial": {"scale": s.initial.scale},
    }
    if s.observer.b is not None:
        doc["observer"]["b"] = str(s.observer.b)
    if s.D_diag is not None:
        doc["graph"]["D_diag"] = list(s.D_diag)
    for k in ("eta", "q", "v"):
        val = getattr(s.initial, k)
        if val is not None:
            doc["initial"][k] = np.asarray(val, dtype=float).tolist()
    return doc


def emit_config(s: Scenario) -> str:
    """TOML text that :func:`parse_config_text` maps back to an equal scenario."""
    return tomli_w.dumps(scenario_to_dict(s))
