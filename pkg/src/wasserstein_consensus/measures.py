"""
Atomic probability measures on R^d.

An agent is a finite weighted point cloud. Measures and ensembles are
immutable: their arrays are read-only after construction.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

__all__ = [
    "AtomicMeasure",
    "Ensemble",
    "uniform_measure",
    "second_moment",
    "convex_hull_contains",
    "support_diameter",
    "merge_atoms",
    "read_measure",
    "write_measure",
    "format_float",
]

WEIGHT_SUM_TOL = 1e-12
HULL_TOL = 1e-9
UNIFORM_RTOL = 1e-12


def format_float(value: float) -> str:
    """Round-trip safe text form of a double."""
    return "%.17g" % value


def _as_points(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64)
    if arr.ndim == 1:
        # a bare list of scalars is a cloud on the real line
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("points must be a sequence of coordinate vectors")
    if arr.shape[0] == 0:
        raise ValueError("a measure needs at least one atom")
    if arr.shape[1] == 0:
        raise ValueError("points must have dimension d >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Probability measure sum_l w_l delta_{x_l}.

    Parameters
    ----------
    points : array-like, shape (n, d)
        Atom locations. A 1-D sequence is read as n points on the line.
    weights : array-like, shape (n,)
        Nonnegative masses summing to one. Zero-mass atoms are dropped.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights):
        pts = _as_points(points)
        w = np.array(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError(
                f"got {pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        keep = w > 0
        if not np.all(keep):
            pts, w = pts[keep], w[keep]
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights * self.n - 1.0) <= UNIFORM_RTOL))

    def translate(self, shift) -> "AtomicMeasure":
        return AtomicMeasure(self.points + np.asarray(shift, dtype=float), self.weights)

    def allclose(self, other: "AtomicMeasure", atol: float = 1e-12) -> bool:
        """Equality as measures, ignoring atom order."""
        if self.dim != other.dim or self.n != other.n:
            return False
        a = np.lexsort(self.points.T[::-1])
        b = np.lexsort(other.points.T[::-1])
        return bool(
            np.allclose(self.points[a], other.points[b], rtol=0, atol=atol)
            and np.allclose(self.weights[a], other.weights[b], rtol=0, atol=atol))

    def __repr__(self) -> str:
        return f"AtomicMeasure(n={self.n}, dim={self.dim})"


def uniform_measure(points) -> AtomicMeasure:
    """Measure putting mass 1/n on each of the given points."""
    pts = _as_points(points)
    n = pts.shape[0]
    return AtomicMeasure(pts, np.full(n, 1.0 / n))


def second_moment(mu: AtomicMeasure) -> float:
    return float(np.dot(mu.weights, np.einsum("ij,ij->i", mu.points, mu.points)))


@dataclass(frozen=True)
class Ensemble:
    """Ordered collection of agents living in the same R^d."""

    agents: tuple[AtomicMeasure, ...] = field()

    def __init__(self, agents: Iterable[AtomicMeasure]):
        agents = tuple(agents)
        if not agents:
            raise ValueError("an ensemble needs at least one agent")
        dims = {a.dim for a in agents}
        if len(dims) != 1:
            raise ValueError(f"agents live in different dimensions: {sorted(dims)}")
        object.__setattr__(self, "agents", agents)

    @property
    def dim(self) -> int:
        return self.agents[0].dim

    def __len__(self) -> int:
        return len(self.agents)

    def __iter__(self) -> Iterator[AtomicMeasure]:
        return iter(self.agents)

    def __getitem__(self, i: int) -> AtomicMeasure:
        return self.agents[i]

    def support_points(self) -> np.ndarray:
        """All atoms of all agents stacked into one (K, d) array."""
        return np.vstack([a.points for a in self.agents])

    def common_size(self) -> int | None:
        """Shared atom count when every agent is uniform with the same n."""
        n = self.agents[0].n
        if all(a.n == n and a.is_uniform() for a in self.agents):
            return n
        return None


def support_diameter(ensemble: Ensemble) -> float:
    pts = ensemble.support_points()
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > 64 and pts.shape[1] >= 2:
        # the diameter is attained at hull vertices
        try:
            pts = pts[ConvexHull(pts).vertices]
        except (QhullError, ValueError):
            pass
    return float(pdist(pts).max())


def _hull_lp_residual(hull: np.ndarray, q: np.ndarray) -> float:
    """Chebyshev distance from q to conv(hull), via an LP.

    Variables are the convex coefficients and one slack t:
    minimize t s.t. |hull^T a - q|_inf <= t, a >= 0, sum(a) = 1.
    The residual is recomputed from the returned coefficients so solver
    feasibility tolerances cannot hide a small violation.
    """
    centred = hull - q
    k, d = centred.shape
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.block([
        [centred.T, -np.ones((d, 1))],
        [-centred.T, -np.ones((d, 1))],
    ])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * d), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"hull membership LP failed: {res.message}")
    a = np.maximum(res.x[:k], 0.0)
    a /= a.sum()
    return float(np.abs(centred.T @ a).max())


def convex_hull_contains(hull_points, query, tol: float = HULL_TOL) -> bool:
    """True iff every query point lies within ``tol`` of conv(hull_points).

    Distance is measured in the max-norm. Points that a Qhull facet test
    places strictly inside are accepted without solving the LP.
    """
    hull = _as_points(hull_points)
    q = _as_points(query)
    if hull.shape[1] != q.shape[1]:
        raise ValueError(
            f"dimension mismatch: hull in R^{hull.shape[1]}, query in R^{q.shape[1]}")
    d = hull.shape[1]

    pending = np.arange(q.shape[0])
    if hull.shape[0] > d + 1 and d >= 2:
        try:
            ch = ConvexHull(hull)
        except (QhullError, ValueError):
            ch = None
        if ch is not None:
            hull = hull[ch.vertices]
            signed = q @ ch.equations[:, :-1].T + ch.equations[:, -1]
            worst = signed.max(axis=1)
            # a positive facet offset lower-bounds the distance to the hull
            if np.any(worst > tol * math.sqrt(d)):
                return False
            pending = np.flatnonzero(worst > 0)
    elif d == 1:
        lo, hi = hull.min(), hull.max()
        return bool(np.all((q[:, 0] >= lo - tol) & (q[:, 0] <= hi + tol)))

    for idx in pending:
        if _hull_lp_residual(hull, q[idx]) > tol:
            return False
    return True


def merge_atoms(mu: AtomicMeasure, tol: float = 0.0) -> AtomicMeasure:
    """Merge atoms closer than ``tol`` (exact duplicates when tol is 0).

    Merged atoms sit at the mass-weighted mean of their group; groups keep
    the order of their first member.
    """
    pts, w = mu.points, mu.weights
    n = pts.shape[0]
    if n < 2:
        return mu
    if tol <= 0:
        uniq, labels = np.unique(pts, axis=0, return_inverse=True)
        labels = labels.reshape(-1)
        if uniq.shape[0] == n:
            return mu
    else:
        from scipy.sparse.csgraph import connected_components
        from scipy.spatial import cKDTree
        from scipy.sparse import coo_matrix

        pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
        if pairs.shape[0] == 0:
            return mu
        graph = coo_matrix((np.ones(pairs.shape[0]), (pairs[:, 0], pairs[:, 1])),
                           shape=(n, n))
        _, labels = connected_components(graph, directed=False)
    # relabel groups by first appearance so output order is stable
    _, first_of_label = np.unique(labels, return_index=True)
    rank = np.empty(first_of_label.shape[0], dtype=np.int64)
    rank[np.argsort(first_of_label, kind="stable")] = np.arange(first_of_label.shape[0])
    group = rank[labels]
    g = first_of_label.shape[0]
    first_member = np.empty(g, dtype=np.int64)
    first_member[rank] = first_of_label
    mass = np.bincount(group, weights=w, minlength=g)
    if tol <= 0:
        loc = pts[first_member]
    else:
        loc = np.empty((g, pts.shape[1]))
        for c in range(pts.shape[1]):
            loc[:, c] = np.bincount(group, weights=w * pts[:, c], minlength=g) / mass
        singles = np.bincount(group, minlength=g) == 1
        loc[singles] = pts[first_member[singles]]
    return AtomicMeasure(loc, mass)


# -- point-cloud text format ------------------------------------------------
#
# One atom per line: "x_1 ... x_d w". Lines starting with '#' are comments.
# A "# dim=D" comment fixes the dimension; with it, a line of D columns is
# read as a uniform atom and D + 1 columns carry a weight. Without it every
# column is a coordinate and the measure is uniform.

def write_measure(path, mu: AtomicMeasure) -> None:
    lines = [f"# dim={mu.dim}", "# columns: x_1 ... x_d weight"]
    for x, w in zip(mu.points, mu.weights):
        lines.append(" ".join(format_float(v) for v in x) + " " + format_float(w))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measure(path: str | os.PathLike, dim: int | None = None) -> AtomicMeasure:
    """Parse a point-cloud file; see the module notes for the layout."""
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("dim="):
                    declared = int(body[4:])
                    if dim is not None and declared != dim:
                        raise ValueError(f"{path}: file declares dim={declared}, expected {dim}")
                    dim = declared
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: could not parse {line!r}") from None
    if not rows:
        raise ValueError(f"{path}: no atoms found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: rows have differing column counts {sorted(widths)}")
    width = widths.pop()
    data = np.array(rows, dtype=np.float64)
    if dim is None or width == dim:
        return uniform_measure(data)
    if width == dim + 1:
        w = data[:, -1]
        total = math.fsum(w)
        if abs(total - 1.0) < 1e-9:
            # absorb rounding in hand-written files
            w = w / total
        return AtomicMeasure(data[:, :-1], w)
    raise ValueError(f"{path}: {width} columns do not match dim={dim}")
