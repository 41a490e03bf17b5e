"""Directed communication graphs, follower Laplacians and diagonal scaling.

Node 0 is the leader; nodes 1..N are followers. An edge ``(j, i, w)``
means agent ``i`` receives agent ``j``'s state with weight ``a_ij = w``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NoCandidateFound, NotRootReachable, ValidationError

SCALING_TOL = 1e-9


@dataclass(frozen=True)
class Digraph:
    n_followers: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        n = self.n_followers
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValidationError("must be a positive integer", key="n_followers")
        seen = set()
        clean = []
        for e in self.edges:
            if len(e) != 3:
                raise ValidationError(f"edge {e!r} must be [from, to, weight]", key="edges")
            j, i, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= j <= n) or not (1 <= i <= n):
                raise ValidationError(
                    f"edge {e!r}: 'from' must be in 0..{n} and 'to' in 1..{n}", key="edges"
                )
            if i == j:
                raise ValidationError(f"self-loop on node {i}", key="edges")
            if not w > 0 or not np.isfinite(w):
                raise ValidationError(f"edge {e!r} has non-positive weight", key="edges")
            if (j, i) in seen:
                raise ValidationError(f"duplicate edge {j}->{i}", key="edges")
            seen.add((j, i))
            clean.append((j, i, w))
        object.__setattr__(self, "n_followers", int(n))
        object.__setattr__(self, "edges", tuple(clean))

    def adjacency(self) -> np.ndarray:
        """(N+1)x(N+1) matrix with ``A[i, j] = a_ij`` (edge j -> i)."""
        A = np.zeros((self.n_followers + 1, self.n_followers + 1))
        for j, i, w in self.edges:
            A[i, j] = w
        return A

    def in_neighbors(self, i: int) -> list[tuple[int, float]]:
        return [(j, w) for j, to, w in self.edges if to == i]


def chain_with_shortcut(n_followers: int = 6, shortcut_to: Optional[int] = 4) -> Digraph:
    """Chain 0->1->...->N with unit weights plus an extra leader edge 0->shortcut_to."""
    edges = [(k - 1, k, 1.0) for k in range(1, n_followers + 1)]
    if shortcut_to is not None and shortcut_to != 1:
        edges.append((0, shortcut_to, 1.0))
    return Digraph(n_followers, tuple(edges))


def laplacian(g: Digraph) -> np.ndarray:
    A = g.adjacency()
    H = -A[1:, 1:].copy()
    H[np.diag_indices_from(H)] = A[1:, :].sum(axis=1)
    return H


def has_root_spanning_tree(g: Digraph) -> bool:
    children = {k: [] for k in range(g.n_followers + 1)}
    for j, i, _ in g.edges:
        children[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for child in children[node]:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return len(seen) == g.n_followers + 1


def scaling_min_eig(H: np.ndarray, D: np.ndarray) -> float:
    """Smallest eigenvalue of ``H^T D + D H``."""
    B = H.T @ D + D @ H
    return float(np.linalg.eigvalsh(0.5 * (B + B.T))[0])


def _ascent_candidate(H: np.ndarray, iters: int = 2000) -> np.ndarray:
    # Projected ascent on lambda_min(H^T D + D H) over diagonal D with sum(d) = N.
    N = H.shape[0]
    d = np.ones(N)
    floor = 1e-8
    step = 0.5
    best = scaling_min_eig(H, np.diag(d))
    for _ in range(iters):
        if best > 0:
            break
        B = H.T * d + (d[:, None] * H)
        vals, vecs = np.linalg.eigh(0.5 * (B + B.T))
        v = vecs[:, 0]
        grad = 2.0 * v * (H @ v)
        improved = False
        while step > 1e-12:
            trial = np.maximum(d + step * grad, floor)
            trial *= N / trial.sum()
            val = scaling_min_eig(H, np.diag(trial))
            if val > best:
                d, best, improved = trial, val, True
                step *= 1.5
                break
            step *= 0.5
        if not improved:
            break
    if best <= 0:
        raise NoCandidateFound(f"ascent stalled with min eigenvalue {best:.3e}")
    return d


def compute_scaling_D(H: np.ndarray, tol: float = SCALING_TOL, method: str = "auto") -> np.ndarray:
    """Positive diagonal ``D`` with ``H^T D + D H >= 2 I``.

    The candidate ``Dbar`` is ``diag(w)`` with ``H^T w = 1`` when that ``w``
    is positive, otherwise the result of an eigenvalue ascent; it is then
    rescaled by ``2 / lambda_min(H^T Dbar + Dbar H)``.

    ``method`` may force ``"solve"`` or ``"ascent"``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError("H must be square", key="H")
    eig = np.linalg.eigvals(H)
    if np.min(eig.real) <= tol:
        raise NotRootReachable(
            f"H has an eigenvalue with real part {np.min(eig.real):.3e}; "
            "leader does not reach every follower"
        )
    d = None
    if method in ("auto", "solve"):
        w = np.linalg.solve(H.T, np.ones(H.shape[0]))
        if np.all(w > 0):
            d = w
        elif method == "solve":
            raise NoCandidateFound("H^T w = 1 has a non-positive solution")
    if d is None:
        d = _ascent_candidate(H)
    lam = scaling_min_eig(H, np.diag(d))
    if lam <= 0:
        raise NoCandidateFound(f"candidate has min eigenvalue {lam:.3e}")
    D = np.diag(2.0 * d / lam)
    final = scaling_min_eig(H, D)
    if final < 2.0 - tol:
        raise NoCandidateFound(f"rescaled D gives min eigenvalue {final!r}")
    return D


@dataclass(frozen=True)
class LaplacianBundle:
    H: np.ndarray
    D: np.ndarray
    min_eig: float
    root_reachable: bool
    D_source: str = "computed"
    tol: float = SCALING_TOL

    @property
    def D_ok(self) -> bool:
        """Whether ``H^T D + D H >= 2 I`` holds (to ``tol``)."""
        return self.min_eig >= 2.0 - self.tol

    @property
    def d(self) -> np.ndarray:
        return np.diag(self.D).copy()


def laplacian_bundle(
    g: Digraph, D_diag: Optional[Sequence[float]] = None, tol: float = SCALING_TOL
) -> LaplacianBundle:
    """Laplacian plus scaling matrix; a user ``D_diag`` is checked, never adjusted."""
    H = laplacian(g)
    reachable = has_root_spanning_tree(g)
    if D_diag is not None:
        d = np.asarray(D_diag, dtype=float)
        if d.shape != (g.n_followers,) or np.any(d <= 0):
            raise ValidationError(
                f"must hold {g.n_followers} positive entries", key="D_diag"
            )
        D = np.diag(d)
        source = "override"
    else:
        if not reachable:
            raise NotRootReachable("graph has no spanning tree rooted at node 0")
        D = compute_scaling_D(H, tol)
        source = "computed"
    return LaplacianBundle(
        H=H, D=D, min_eig=scaling_min_eig(H, D), root_reachable=reachable,
        D_source=source, tol=tol,
    )
