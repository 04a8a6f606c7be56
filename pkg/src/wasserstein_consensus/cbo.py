"""
Consensus-based optimization over atomic probability measures.

Agents are uniform n-particle clouds. Every iteration forms a Gibbs-weighted
barycenter, matches each agent to it by an optimal assignment, steps the
particles a fraction tau toward their matched barycenter atoms and adds a
random translation whose size grows with the agent's distance to the
barycenter.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import parallel_map
from .barycenter import (BarycenterProblem, BarycenterResult, default_init,
                         free_support_barycenter, normalize_weights)
from .measures import AtomicMeasure, Ensemble, format_float, uniform_measure, write_measure
from .ot import cost_matrix, optimal_assignment, solve_ot

__all__ = [
    "CboConfig",
    "IterationDiagnostics",
    "RunRecord",
    "W2ToTarget",
    "GibbsWeights",
    "gibbs_weights",
    "w2_to_target",
    "initial_ensemble",
    "cbo_step",
    "run_cbo",
    "make_target",
    "TARGET_SHAPES",
    "write_run_csvs",
    "ITERATION_HEADER",
    "BEST_HEADER",
]

Objective = Callable[[AtomicMeasure], float]

ITERATION_HEADER = ["iter", "agent", "objective", "w2_to_barycenter", "sigma"]
BEST_HEADER = ["iter", "best_agent", "best_objective", "barycenter_objective"]

# substream tags for SeedSequence spawn keys
_NOISE_STREAM = 0
_INIT_STREAM = 1


def gibbs_weights(objectives, alpha: float) -> np.ndarray:
    """Normalized weights proportional to exp(-alpha * E_i).

    The minimum objective is subtracted before exponentiating. Weights that
    underflow are floored at the smallest normal double so every agent
    keeps a strictly positive weight.
    """
    E = np.asarray(objectives, dtype=np.float64).reshape(-1)
    if E.size == 0:
        raise ValueError("need at least one objective value")
    if not np.all(np.isfinite(E)):
        raise ValueError("objective values must be finite")
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be finite and >= 0, got {alpha!r}")
    if alpha == 0:
        return np.full(E.size, 1.0 / E.size)
    w = np.exp(-alpha * (E - E.min()))
    return normalize_weights(np.maximum(w, np.finfo(np.float64).tiny))


def w2_to_target(mu: AtomicMeasure, target: AtomicMeasure) -> float:
    return solve_ot(mu, target).w2


@dataclass(frozen=True, eq=False)
class W2ToTarget:
    """Objective E(mu) = W2(mu, target)."""

    target: AtomicMeasure

    def __call__(self, mu: AtomicMeasure) -> float:
        return w2_to_target(mu, self.target)


class GibbsWeights:
    """Weight rule exp(-alpha * objective(agent)) for the consensus scheme."""

    def __init__(self, objective: Objective, alpha: float):
        self.objective = objective
        self.alpha = alpha

    def __call__(self, ensemble: Ensemble) -> np.ndarray:
        return gibbs_weights([self.objective(a) for a in ensemble], self.alpha)


@dataclass(frozen=True)
class CboConfig:
    """Parameters of the measure-valued CBO iteration.

    ``per_particle_noise`` draws an independent normal vector for every
    particle instead of one rigid translation per agent.
    """

    N: int
    n: int
    d: int
    tau: float = 0.1
    sigma1: float = 0.3
    sigma2: float = 0.1
    alpha: float = 1e6
    k_max: int = 100
    seed: int = 0
    snapshot_every: int = 0
    per_particle_noise: bool = False
    bary_tol: float = 1e-9
    bary_max_iter: int = 100
    threads: int = 1

    def __post_init__(self):
        if min(self.N, self.n, self.d, self.k_max) < 1:
            raise ValueError("N, n, d and k_max must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1 and sigma2 must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def initial_ensemble(config: CboConfig) -> Ensemble:
    """N agents of n i.i.d. standard normal particles in R^d."""
    return Ensemble(
        uniform_measure(_stream(config.seed, _INIT_STREAM, i).standard_normal((config.n, config.d)))
        for i in range(config.N))


@dataclass(frozen=True, eq=False)
class IterationDiagnostics:
    """State of one iteration, recorded before the noise is applied."""

    iteration: int
    objectives: np.ndarray
    weights: np.ndarray
    barycenter: BarycenterResult
    barycenter_objective: float
    assignments: tuple[np.ndarray, ...]
    w2_to_barycenter: np.ndarray
    sigma: np.ndarray

    @property
    def best_agent(self) -> int:
        return int(np.argmin(self.objectives))

    @property
    def best_objective(self) -> float:
        return float(self.objectives.min())


def _evaluate(objective: Objective, value: AtomicMeasure) -> float:
    try:
        out = float(objective(value))
    except Exception as exc:
        raise RuntimeError(f"objective evaluation failed: {exc}") from exc
    if not math.isfinite(out):
        raise RuntimeError(f"objective returned a non-finite value {out!r}")
    return out


def _diagnose(ensemble: Ensemble, objective: Objective, config: CboConfig, k: int,
              bary_init: AtomicMeasure | None) -> IterationDiagnostics:
    n = ensemble.common_size()
    if n is None:
        raise ValueError("CBO needs uniform agents with a common particle count")
    E = np.array(parallel_map(lambda a: _evaluate(objective, a), ensemble.agents,
                              config.threads))
    lam = gibbs_weights(E, config.alpha)
    problem = BarycenterProblem(ensemble, tuple(lam), n, tol=config.bary_tol,
                                max_iter=config.bary_max_iter)
    if bary_init is None or bary_init.n != n:
        bary_init = default_init(ensemble, lam, n)
    bary = free_support_barycenter(problem, bary_init)
    target = bary.measure

    def match(agent: AtomicMeasure):
        perm = optimal_assignment(agent, target)
        C = cost_matrix(agent, target)
        cost = float(np.dot(agent.weights, C[np.arange(agent.n), perm]))
        return perm, math.sqrt(max(cost, 0.0))

    matched = parallel_map(match, ensemble.agents, config.threads)
    dist = np.array([w for _, w in matched])
    return IterationDiagnostics(
        iteration=k,
        objectives=E,
        weights=lam,
        barycenter=bary,
        barycenter_objective=_evaluate(objective, target),
        assignments=tuple(p for p, _ in matched),
        w2_to_barycenter=dist,
        sigma=config.sigma1 * (dist + config.sigma2),
    )


def _move(ensemble: Ensemble, diag: IterationDiagnostics, config: CboConfig) -> Ensemble:
    bary_pts = diag.barycenter.measure.points
    agents = []
    for i, agent in enumerate(ensemble):
        x = agent.points
        rng = _stream(config.seed, _NOISE_STREAM, diag.iteration, i)
        shape = x.shape if config.per_particle_noise else (1, x.shape[1])
        xi = rng.standard_normal(shape)
        new = x + config.tau * (bary_pts[diag.assignments[i]] - x)
        if diag.sigma[i] != 0.0:
            new = new + diag.sigma[i] * xi
        agents.append(uniform_measure(new))
    return Ensemble(agents)


def cbo_step(ensemble: Ensemble, objective: Objective, config: CboConfig, k: int = 0,
             bary_init: AtomicMeasure | None = None) -> tuple[Ensemble, IterationDiagnostics]:
    """One CBO iteration.

    Parameters
    ----------
    ensemble : Ensemble
        Uniform agents sharing the particle count n.
    objective : callable
        Maps an AtomicMeasure to a finite real.
    config : CboConfig
    k : int
        Iteration index; with ``config.seed`` it selects the noise substreams.
    bary_init : AtomicMeasure, optional
        Warm start for the barycenter solve.

    Returns
    -------
    (Ensemble, IterationDiagnostics)
        Updated agents and the pre-noise diagnostics of iteration k.
    """
    diag = _diagnose(ensemble, objective, config, k, bary_init)
    return _move(ensemble, diag, config), diag


@dataclass(eq=False)
class RunRecord:
    """Diagnostics of iterations 0 .. k_max; the last entry is evaluated but not moved."""

    iterations: list[IterationDiagnostics] = field(default_factory=list)
    final_ensemble: Ensemble | None = None
    snapshots: dict[int, Ensemble] = field(default_factory=dict)

    @property
    def final(self) -> IterationDiagnostics:
        return self.iterations[-1]

    @property
    def barycenter(self) -> AtomicMeasure:
        return self.final.barycenter.measure

    @property
    def best_objectives(self) -> np.ndarray:
        return np.array([it.best_objective for it in self.iterations])

    @property
    def best_measure(self) -> AtomicMeasure:
        return self.final_ensemble[self.final.best_agent]


def run_cbo(ensemble: Ensemble, objective: Objective, config: CboConfig,
            progress: Callable[[IterationDiagnostics], None] | None = None) -> RunRecord:
    """Run ``config.k_max`` CBO iterations from ``ensemble``.

    The barycenter of each iteration warm-starts the next one. A closing
    evaluation of the final ensemble is appended to the record so that
    ``record.iterations[k]`` describes the agents after k updates.
    """
    record = RunRecord()
    current = ensemble
    bary = None
    for k in range(config.k_max + 1):
        if config.snapshot_every and k % config.snapshot_every == 0:
            record.snapshots[k] = current
        diag = _diagnose(current, objective, config, k, bary)
        record.iterations.append(diag)
        if progress is not None:
            progress(diag)
        bary = diag.barycenter.measure
        if k < config.k_max:
            current = _move(current, diag, config)
    record.final_ensemble = current
    return record


def write_run_csvs(record: RunRecord, out_dir) -> tuple[str, str]:
    """Write ``iterations.csv`` and ``best.csv``; returns their paths."""
    it_path = os.path.join(out_dir, "iterations.csv")
    best_path = os.path.join(out_dir, "best.csv")
    with open(it_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ITERATION_HEADER)
        for it in record.iterations:
            for i in range(it.objectives.size):
                writer.writerow([it.iteration, i, format_float(it.objectives[i]),
                                 format_float(it.w2_to_barycenter[i]),
                                 format_float(it.sigma[i])])
    with open(best_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BEST_HEADER)
        for it in record.iterations:
            writer.writerow([it.iteration, it.best_agent, format_float(it.best_objective),
                             format_float(it.barycenter_objective)])
    return it_path, best_path


def write_run_snapshots(record: RunRecord, out_dir) -> list[str]:
    written = []
    for k, ens in sorted(record.snapshots.items()):
        for i, agent in enumerate(ens):
            path = os.path.join(out_dir, f"snap_{k}_{i}.txt")
            write_measure(path, agent)
            written.append(path)
        path = os.path.join(out_dir, f"bary_{k}.txt")
        write_measure(path, record.iterations[k].barycenter.measure)
        written.append(path)
    return written


# -- target shapes ----------------------------------------------------------

TARGET_SHAPES = ("gaussians4", "moons", "circles", "ring")


def _circle(count: int, radius: float) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


def _radial_noise(pts: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    if std == 0:
        return pts
    r = np.linalg.norm(pts, axis=1, keepdims=True)
    return pts * (1.0 + rng.normal(0.0, std, size=r.shape) / r)


def make_target(shape: str, M: int, seed: int = 0, noise: float | None = None) -> AtomicMeasure:
    """Uniform M-point measure tracing one of the planar test shapes.

    ``noise`` overrides the default spread: component std 0.3 for
    ``gaussians4``, 0.02 for the curve-based shapes.
    """
    if shape not in TARGET_SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {', '.join(TARGET_SHAPES)}")
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    if shape == "gaussians4":
        std = 0.3 if noise is None else noise
        centers = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])
        pts = centers[np.arange(M) % 4] + rng.normal(0.0, 1.0, size=(M, 2)) * std
    else:
        std = 0.02 if noise is None else noise
        if shape == "ring":
            pts = _radial_noise(_circle(M, 1.0), std, rng)
        elif shape == "circles":
            outer = M - M // 2
            pts = np.vstack([_radial_noise(_circle(outer, 1.0), std, rng),
                             _radial_noise(_circle(M // 2, 0.5), std, rng)])
        else:
            outer = M - M // 2
            t_out = np.linspace(0.0, np.pi, outer)
            t_in = np.linspace(0.0, np.pi, M // 2)
            upper = np.column_stack([np.cos(t_out), np.sin(t_out)])
            # lower moon: the upper one reflected and shifted to interleave
            lower = np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)])
            pts = np.vstack([upper, lower])
            if std:
                pts = pts + rng.normal(0.0, std, size=pts.shape)
    return uniform_measure(pts)
