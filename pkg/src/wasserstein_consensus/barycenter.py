"""
Weighted 2-Wasserstein barycenters of atomic measures.

The free-support solver alternates exact OT solves from the candidate to
every agent with a move of each candidate atom to the weighted mean of
its barycentric projections. Candidate weights stay uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .measures import AtomicMeasure, Ensemble, support_diameter, uniform_measure
from .ot import displacement_interpolation, solve_ot

__all__ = [
    "BarycenterProblem",
    "BarycenterResult",
    "normalize_weights",
    "barycenter_functional",
    "default_init",
    "free_support_barycenter",
    "mccann_pair_barycenter",
]


def normalize_weights(weights: Sequence[float]) -> np.ndarray:
    """Rescale positive weights to sum to one.

    The ratios are formed in exact rational arithmetic and rounded once,
    so weight vectors that differ by an exactly representable factor
    normalize to the same bits.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError("need at least one weight")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    exact = [Fraction(float(v)) for v in w]
    total = sum(exact)
    return np.array([float(v / total) for v in exact])


def _as_ensemble(agents) -> Ensemble:
    return agents if isinstance(agents, Ensemble) else Ensemble(agents)


def barycenter_functional(candidate: AtomicMeasure, agents, weights) -> float:
    """sum_i weights[i] * W2(agent_i, candidate)^2 for normalized weights."""
    agents = _as_ensemble(agents)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(agents),):
        raise ValueError(f"expected {len(agents)} weights, got {weights.shape}")
    if candidate.dim != agents.dim:
        raise ValueError(f"dimension mismatch: R^{candidate.dim} vs R^{agents.dim}")
    costs = [solve_ot(candidate, a).cost for a in agents]
    return float(max(math.fsum(w * c for w, c in zip(weights, costs)), 0.0))


@dataclass(frozen=True)
class BarycenterProblem:
    """Agents, their raw positive weights and solver controls."""

    agents: Ensemble
    weights: tuple[float, ...]
    n_support: int
    tol: float = 1e-9
    max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "agents", _as_ensemble(self.agents))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(self.agents):
            raise ValueError(
                f"{len(self.agents)} agents but {len(self.weights)} weights")
        if any(not (w > 0 and math.isfinite(w)) for w in self.weights):
            raise ValueError("barycenter weights must be positive and finite")
        if self.n_support < 1:
            raise ValueError("n_support must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    measure: AtomicMeasure
    functional: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def default_init(agents: Ensemble, weights, n_support: int) -> AtomicMeasure:
    """Copy of the heaviest agent (lowest index on ties) with n_support uniform atoms.

    Heavier atoms are kept first when the agent has too many atoms; atoms
    are repeated cyclically when it has too few.
    """
    k = int(np.argmax(np.asarray(weights)))
    src = agents[k]
    if src.n == n_support:
        return uniform_measure(src.points)
    order = np.argsort(-src.weights, kind="stable")
    idx = order[np.arange(n_support) % src.n]
    return uniform_measure(src.points[idx])


def _separate_duplicates(points: np.ndarray, scale: float) -> np.ndarray:
    """Nudge exactly coincident atoms apart by a deterministic 1e-12 * scale offset."""
    _, first = np.unique(points, axis=0, return_index=True)
    if first.shape[0] == points.shape[0]:
        return points
    out = points.copy()
    dup = np.ones(points.shape[0], dtype=bool)
    dup[first] = False
    rng = np.random.default_rng(0)
    for idx in np.flatnonzero(dup):
        direction = rng.standard_normal(points.shape[1])
        out[idx] += 1e-12 * scale * direction / np.linalg.norm(direction)
    return out


def _sweep(points: np.ndarray, agents: Ensemble, lam: np.ndarray):
    """Solve OT from the candidate to every agent.

    Returns the functional at ``points`` and the fixed-point image of the
    candidate atoms.
    """
    cand = uniform_measure(points)
    n = cand.n
    shift = np.zeros_like(points)
    weight_seen = np.zeros(n)
    costs = []
    for a, w in zip(agents, lam):
        res = solve_ot(cand, a)
        costs.append(res.cost)
        c = res.coupling
        row_mass = np.bincount(c.rows, weights=c.mass, minlength=n)
        target_sum = np.zeros_like(points)
        np.add.at(target_sum, c.rows, c.mass[:, None] * a.points[c.cols])
        has_mass = row_mass > 0
        proj = points.copy()
        proj[has_mass] = target_sum[has_mass] / row_mass[has_mass, None]
        shift += w * (proj - points)
        weight_seen += np.where(has_mass, w, 0.0)
    functional = max(math.fsum(w * c for w, c in zip(lam, costs)), 0.0)
    new_points = points + shift
    # rows some agent left empty average over the agents that reached them
    partial = (weight_seen > 0) & (weight_seen < 1.0 - 1e-12)
    if np.any(partial):
        new_points[partial] = points[partial] + shift[partial] / weight_seen[partial, None]
    return functional, new_points


def free_support_barycenter(problem: BarycenterProblem,
                            init: AtomicMeasure | None = None) -> BarycenterResult:
    """Fixed-point iteration for a weighted free-support barycenter.

    Parameters
    ----------
    problem : BarycenterProblem
        Agents, raw weights and stopping controls.
    init : AtomicMeasure, optional
        Starting candidate with ``problem.n_support`` atoms; its weights
        are replaced by uniform ones. Defaults to :func:`default_init`.

    Returns
    -------
    BarycenterResult
        The best candidate seen. ``iterations`` counts atom updates;
        ``converged`` is True when the functional dropped by less than
        ``tol`` before ``max_iter`` updates were spent.
    """
    agents = problem.agents
    lam = normalize_weights(problem.weights)
    if init is None:
        init = default_init(agents, lam, problem.n_support)
    if init.n != problem.n_support:
        raise ValueError(f"init has {init.n} atoms, expected {problem.n_support}")
    if init.dim != agents.dim:
        raise ValueError(f"dimension mismatch: R^{init.dim} vs R^{agents.dim}")

    points = np.array(init.points)
    if points.shape[0] > 1:
        points = _separate_duplicates(points, support_diameter(agents) or 1.0)
    functional, proposal = _sweep(points, agents, lam)
    history = [functional]
    converged = False
    iterations = 0
    for iterations in range(1, problem.max_iter + 1):
        new_functional, new_proposal = _sweep(proposal, agents, lam)
        history.append(new_functional)
        if new_functional > functional:
            # roundoff-level ascent: keep the better iterate and stop
            converged = True
            break
        decrease = functional - new_functional
        points, functional, proposal = proposal, new_functional, new_proposal
        if decrease < problem.tol:
            converged = True
            break
    return BarycenterResult(uniform_measure(points), functional, iterations,
                            converged, tuple(history))


def mccann_pair_barycenter(mu: AtomicMeasure, nu: AtomicMeasure, t: float) -> AtomicMeasure:
    """Barycenter of mu and nu with weights (1 - t, t): the geodesic point at t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t!r}")
    return displacement_interpolation(solve_ot(mu, nu).coupling, mu, nu, t)
