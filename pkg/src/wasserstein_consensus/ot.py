"""
Exact discrete optimal transport for the squared Euclidean cost.

Uniform measures with the same atom count are matched by a linear
assignment solver; everything else goes through the transportation
simplex in :mod:`._simplex`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import _simplex
from .measures import AtomicMeasure, format_float, merge_atoms

__all__ = [
    "Coupling",
    "TransportResult",
    "cost_matrix",
    "solve_ot",
    "optimal_assignment",
    "displacement_interpolation",
    "w2",
]

MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse transport plan: mass[k] moves from source rows[k] to target cols[k]."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    source_n: int
    target_n: int

    def __post_init__(self):
        for name in ("rows", "cols", "mass"):
            getattr(self, name).setflags(write=False)
        if not (self.rows.shape == self.cols.shape == self.mass.shape):
            raise ValueError("rows, cols and mass must have equal length")
        if np.any(self.mass <= 0):
            raise ValueError("coupling masses must be positive")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.source_n
                               or self.cols.min() < 0 or self.cols.max() >= self.target_n):
            raise ValueError("coupling index out of range")

    def __len__(self) -> int:
        return self.mass.shape[0]

    def source_marginal(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=self.source_n)

    def target_marginal(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=self.target_n)

    def is_feasible(self, mu: AtomicMeasure, nu: AtomicMeasure, tol: float = MARGINAL_TOL) -> bool:
        if self.source_n != mu.n or self.target_n != nu.n:
            return False
        return bool(np.all(np.abs(self.source_marginal() - mu.weights) <= tol)
                    and np.all(np.abs(self.target_marginal() - nu.weights) <= tol))

    def to_dense(self) -> np.ndarray:
        plan = np.zeros((self.source_n, self.target_n))
        np.add.at(plan, (self.rows, self.cols), self.mass)
        return plan

    def as_permutation(self) -> np.ndarray | None:
        """Target index per source atom if the plan is a bijection, else None."""
        if self.source_n != self.target_n or len(self) != self.source_n:
            return None
        perm = np.full(self.source_n, -1, dtype=np.int64)
        perm[self.rows] = self.cols
        if np.any(perm < 0) or np.unique(perm).size != perm.size:
            return None
        return perm

    def to_text(self) -> str:
        """Debug dump, one ``i j mass`` triple per line."""
        return "".join(f"{i} {j} {format_float(w)}\n"
                       for i, j, w in zip(self.rows, self.cols, self.mass))


@dataclass(frozen=True, eq=False)
class TransportResult:
    coupling: Coupling
    cost: float
    w2: float


def _check_dims(mu: AtomicMeasure, nu: AtomicMeasure) -> None:
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: R^{mu.dim} vs R^{nu.dim}")


def cost_matrix(mu: AtomicMeasure, nu: AtomicMeasure) -> np.ndarray:
    """Squared Euclidean distances between the atoms of mu (rows) and nu (columns)."""
    _check_dims(mu, nu)
    return cdist(mu.points, nu.points, "sqeuclidean")


def _principal_axis(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = np.vstack([x, y])
    z = z - z.mean(axis=0)
    if not np.any(z):
        return np.eye(x.shape[1])[0]
    _, _, vt = np.linalg.svd(z, full_matrices=False)
    return vt[0]


def _simplex_plan(mu: AtomicMeasure, nu: AtomicMeasure, C: np.ndarray):
    # seed with the monotone plan along the principal axis of both clouds;
    # it is optimal in 1-D and close to optimal for elongated clouds
    axis = _principal_axis(mu.points, nu.points)
    row_order = np.argsort(mu.points @ axis, kind="stable")
    col_order = np.argsort(nu.points @ axis, kind="stable")
    a = np.ascontiguousarray(mu.weights)
    b = np.ascontiguousarray(nu.weights)
    bi, bj, x = _simplex.northwest_corner(a, b, row_order, col_order)
    max_pivots = max(10_000, 50 * C.shape[0] * C.shape[1])
    status, _ = _simplex.transport_simplex(np.ascontiguousarray(C), bi, bj, x, max_pivots)
    if status != _simplex.OPTIMAL:
        raise RuntimeError(f"transportation simplex failed (status {status})")
    # flows below this are roundoff left on degenerate arcs
    floor = 1e-12 * min(a.min(), b.min())
    keep = x > floor
    order = np.lexsort((bj[keep], bi[keep]))
    return bi[keep][order], bj[keep][order], x[keep][order]


def solve_ot(mu: AtomicMeasure, nu: AtomicMeasure) -> TransportResult:
    """Optimal coupling and squared-distance cost between two atomic measures."""
    C = cost_matrix(mu, nu)
    m, n = C.shape
    if m == 1 or n == 1:
        # only the product coupling is feasible
        if m == 1:
            rows = np.zeros(n, dtype=np.int64)
            cols = np.arange(n, dtype=np.int64)
            mass = nu.weights.copy()
        else:
            rows = np.arange(m, dtype=np.int64)
            cols = np.zeros(m, dtype=np.int64)
            mass = mu.weights.copy()
    elif m == n and mu.is_uniform() and nu.is_uniform():
        rows, cols = linear_sum_assignment(C)
        rows = rows.astype(np.int64)
        cols = cols.astype(np.int64)
        mass = mu.weights[rows].copy()
    else:
        rows, cols, mass = _simplex_plan(mu, nu, C)
    cost = max(float(np.dot(mass, C[rows, cols])), 0.0)
    coupling = Coupling(rows, cols, mass, m, n)
    return TransportResult(coupling, cost, math.sqrt(cost))


def w2(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    return solve_ot(mu, nu).w2


def optimal_assignment(mu: AtomicMeasure, nu: AtomicMeasure) -> np.ndarray:
    """Permutation G minimizing sum_l |x_l - y_G(l)|^2 for uniform measures of equal size."""
    _check_dims(mu, nu)
    if mu.n != nu.n:
        raise ValueError(f"assignment needs equal atom counts, got {mu.n} and {nu.n}")
    if not (mu.is_uniform() and nu.is_uniform()):
        raise ValueError("assignment needs uniform weights")
    if mu.n == 1:
        return np.zeros(1, dtype=np.int64)
    _, cols = linear_sum_assignment(cost_matrix(mu, nu))
    return cols.astype(np.int64)


def displacement_interpolation(coupling: Coupling, mu: AtomicMeasure, nu: AtomicMeasure,
                               t: float, merge_tol: float = 0.0) -> AtomicMeasure:
    """Push-forward of the coupling under (x, y) -> (1 - t) x + t y.

    One atom per coupling entry, in entry order; atoms closer than
    ``merge_tol`` are merged (exact duplicates by default).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t!r}")
    _check_dims(mu, nu)
    if not coupling.is_feasible(mu, nu):
        raise ValueError("coupling does not have mu and nu as marginals")
    x = mu.points[coupling.rows]
    y = nu.points[coupling.cols]
    pts = (1.0 - t) * x + t * y
    return merge_atoms(AtomicMeasure(pts, coupling.mass), merge_tol)
