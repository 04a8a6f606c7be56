"""
Time-discrete consensus dynamics in the 2-Wasserstein space.

Each step computes one weighted barycenter of the current agents and moves
every agent a fraction ``tau`` of the way along a geodesic toward it.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from ._parallel import parallel_map
from .barycenter import (BarycenterProblem, BarycenterResult, free_support_barycenter,
                         normalize_weights)
from .measures import AtomicMeasure, Ensemble, format_float, write_measure
from .ot import displacement_interpolation, solve_ot

__all__ = [
    "ConsensusConfig",
    "StepDiagnostics",
    "StepRecord",
    "TrajectoryRecord",
    "constant_weights",
    "consensus_step",
    "run_consensus",
    "ensemble_diameter",
    "write_trajectory_csv",
    "write_snapshots",
    "TRAJECTORY_HEADER",
]

TRAJECTORY_HEADER = ["step", "agent", "w2_to_barycenter", "diameter", "weight"]
CONSENSUS_DIAMETER = 1e-12

WeightRule = Callable[[Ensemble], Sequence[float]]


def constant_weights(ensemble: Ensemble) -> np.ndarray:
    return np.ones(len(ensemble))


@dataclass(frozen=True)
class ConsensusConfig:
    """Controls for the explicit-Euler consensus scheme.

    ``weight_fn`` maps the current ensemble to positive raw weights.
    ``seed`` is carried for provenance only; the scheme is deterministic.
    """

    tau: float
    steps: int = 1
    weight_fn: WeightRule = constant_weights
    n_support: int | None = None
    bary_tol: float = 1e-9
    bary_max_iter: int = 100
    merge_tol: float = 1e-12
    seed: int = 0
    snapshot_every: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.n_support is not None and self.n_support < 1:
            raise ValueError("n_support must be >= 1")
        if self.merge_tol < 0:
            raise ValueError("merge_tol must be >= 0")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    weights: np.ndarray
    barycenter: BarycenterResult
    w2_to_barycenter: np.ndarray


@dataclass(frozen=True, eq=False)
class StepRecord:
    step: int
    diameter: float
    diagnostics: StepDiagnostics
    snapshot: Ensemble | None = None


@dataclass(eq=False)
class TrajectoryRecord:
    records: list[StepRecord] = field(default_factory=list)
    final: Ensemble | None = None
    final_diameter: float = 0.0

    @property
    def steps_taken(self) -> int:
        return len(self.records)


def ensemble_diameter(ensemble: Ensemble) -> float:
    """Largest pairwise W2 distance between agents (0 for a single agent)."""
    best = 0.0
    for a, b in combinations(ensemble.agents, 2):
        best = max(best, solve_ot(a, b).w2)
    return best


def _support_size(ensemble: Ensemble, n_support: int | None) -> int:
    if n_support is not None:
        return n_support
    common = ensemble.common_size()
    return common if common is not None else max(a.n for a in ensemble)


def consensus_step(ensemble: Ensemble, config: ConsensusConfig,
                   init: AtomicMeasure | None = None) -> tuple[Ensemble, StepDiagnostics]:
    """One step: barycenter of the weighted agents, then a tau-step along each geodesic."""
    raw = np.asarray(config.weight_fn(ensemble), dtype=np.float64)
    problem = BarycenterProblem(ensemble, tuple(raw), _support_size(ensemble, config.n_support),
                                tol=config.bary_tol, max_iter=config.bary_max_iter)
    bary = free_support_barycenter(problem, init)
    target = bary.measure

    def move(agent: AtomicMeasure):
        res = solve_ot(agent, target)
        return (displacement_interpolation(res.coupling, agent, target, config.tau,
                                           merge_tol=config.merge_tol), res.w2)

    moved = parallel_map(move, ensemble.agents, config.threads)
    diag = StepDiagnostics(weights=normalize_weights(raw), barycenter=bary,
                           w2_to_barycenter=np.array([w for _, w in moved]))
    return Ensemble(a for a, _ in moved), diag


def run_consensus(ensemble: Ensemble, config: ConsensusConfig) -> TrajectoryRecord:
    """Iterate :func:`consensus_step` ``config.steps`` times.

    Stops early once the ensemble diameter falls below 1e-12. Snapshots of
    the agents are kept every ``snapshot_every`` steps (never when 0).
    """
    record = TrajectoryRecord()
    current = ensemble
    diameter = ensemble_diameter(current)
    for k in range(config.steps):
        keep = config.snapshot_every > 0 and k % config.snapshot_every == 0
        new, diag = consensus_step(current, config)
        record.records.append(StepRecord(k, diameter, diag, current if keep else None))
        current = new
        diameter = ensemble_diameter(current)
        if diameter < CONSENSUS_DIAMETER:
            break
    record.final = current
    record.final_diameter = diameter
    return record


def write_trajectory_csv(record: TrajectoryRecord, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for rec in record.records:
            diag = rec.diagnostics
            for i, (w2, lam) in enumerate(zip(diag.w2_to_barycenter, diag.weights)):
                writer.writerow([rec.step, i, format_float(w2), format_float(rec.diameter),
                                 format_float(lam)])


def write_snapshots(record: TrajectoryRecord, out_dir) -> list[str]:
    """Write ``snap_{step}_{agent}.txt`` for every kept snapshot and the final state."""
    written = []
    frames = [(rec.step, rec.snapshot) for rec in record.records if rec.snapshot is not None]
    if frames and record.final is not None:
        frames.append((record.steps_taken, record.final))
    for step, ens in frames:
        for i, agent in enumerate(ens):
            path = os.path.join(out_dir, f"snap_{step}_{i}.txt")
            write_measure(path, agent)
            written.append(path)
    return written
