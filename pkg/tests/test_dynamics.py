import numpy as np
import pytest

from wasserstein_consensus.cbo import GibbsWeights, W2ToTarget
from wasserstein_consensus.dynamics import (TRAJECTORY_HEADER, ConsensusConfig, consensus_step,
                                            ensemble_diameter, run_consensus,
                                            write_snapshots, write_trajectory_csv)
from wasserstein_consensus.measures import AtomicMeasure, Ensemble, convex_hull_contains, uniform_measure
from wasserstein_consensus.ot import displacement_interpolation, solve_ot, w2


def diracs(*xs):
    return Ensemble(uniform_measure([np.atleast_1d(x)]) for x in xs)


def test_config_validation():
    for bad in (dict(tau=0.0), dict(tau=1.0), dict(tau=0.5, steps=0), dict(tau=0.5, merge_tol=-1)):
        with pytest.raises(ValueError):
            ConsensusConfig(**bad)


def test_diameter_examples():
    assert ensemble_diameter(diracs(0.0)) == 0.0
    assert ensemble_diameter(Ensemble([uniform_measure([(0, 0)]), uniform_measure([(3, 4)])])) == 5.0
    assert ensemble_diameter(diracs(0.0, 1.0, 3.0)) == 3.0


def test_single_agent_is_fixed():
    mu = uniform_measure([(0, 0), (1, 2), (3, 1)])
    new, diag = consensus_step(Ensemble([mu]), ConsensusConfig(tau=0.3))
    assert new[0].allclose(mu, atol=1e-12)
    assert diag.w2_to_barycenter[0] < 1e-12


def test_two_diracs_step():
    new, diag = consensus_step(diracs(0.0, 2.0), ConsensusConfig(tau=0.1))
    assert diag.barycenter.measure.points.tolist() == [[1.0]]
    assert new[0].points[0, 0] == pytest.approx(0.1, abs=1e-15)
    assert new[1].points[0, 0] == pytest.approx(1.9, abs=1e-15)


def test_identical_agents_unchanged(rng):
    mu = uniform_measure(rng.standard_normal((6, 2)))
    new, _ = consensus_step(Ensemble([mu] * 4), ConsensusConfig(tau=0.4))
    for a in new:
        assert a.allclose(mu, atol=1e-12)


def test_dirac_reduction_euler(rng):
    x = rng.standard_normal((10, 2))
    new, _ = consensus_step(Ensemble(uniform_measure([p]) for p in x), ConsensusConfig(tau=0.1))
    expected = x + 0.1 * (x.mean(axis=0) - x)
    got = np.array([a.points[0] for a in new])
    assert np.abs(got - expected).max() <= 1e-12


def test_two_diracs_closed_form_contraction():
    rec = run_consensus(diracs(0.0, 2.0), ConsensusConfig(tau=0.1, steps=50))
    assert rec.final_diameter == pytest.approx(2 * 0.9 ** 50, rel=1e-12)
    assert [r.step for r in rec.records] == list(range(50))
    for r in rec.records:
        assert r.diameter == pytest.approx(2 * 0.9 ** r.step, rel=1e-12)


def test_run_one_step_equals_step(rng):
    ens = Ensemble(uniform_measure(rng.standard_normal((5, 2))) for _ in range(3))
    cfg = ConsensusConfig(tau=0.2, steps=1)
    rec = run_consensus(ens, cfg)
    new, _ = consensus_step(ens, cfg)
    for a, b in zip(rec.final, new):
        np.testing.assert_array_equal(a.points, b.points)


def test_identical_agents_stop_early(rng):
    mu = uniform_measure(rng.standard_normal((4, 2)))
    rec = run_consensus(Ensemble([mu, mu]), ConsensusConfig(tau=0.5, steps=20))
    assert rec.steps_taken == 1
    assert rec.final_diameter == 0.0


def test_fixed_target_contraction(rng):
    mu = uniform_measure(rng.standard_normal((12, 2)))
    nu = uniform_measure(rng.standard_normal((12, 2)) + 2.0)
    d0 = w2(mu, nu)
    cur = mu
    for k in range(1, 31):
        cur = displacement_interpolation(solve_ot(cur, nu).coupling, cur, nu, 0.1)
        assert w2(cur, nu) == pytest.approx(0.9 ** k * d0, rel=1e-6)


def test_invariants_with_gibbs_weights(rng):
    ens = Ensemble(uniform_measure(rng.standard_normal((8, 2))) for _ in range(4))
    hull = ens.support_points()
    target = uniform_measure(rng.standard_normal((8, 2)))
    cfg = ConsensusConfig(tau=0.25, weight_fn=GibbsWeights(W2ToTarget(target), 2.0))
    cur = ens
    for _ in range(10):
        new, diag = consensus_step(cur, cfg)
        bary = diag.barycenter.measure
        for i in range(len(cur)):
            assert convex_hull_contains(hull, new[i].points, 1e-9)
            step = w2(cur[i], new[i])
            assert step <= 0.25 * diag.w2_to_barycenter[i] + 1e-9
            assert w2(new[i], bary) == pytest.approx(0.75 * diag.w2_to_barycenter[i], rel=1e-9, abs=1e-12)
        cur = new


def test_non_permutation_couplings_grow_and_merge():
    a = AtomicMeasure([[0.0], [1.0]], [0.3, 0.7])
    b = uniform_measure([[5.0], [6.0], [7.0]])
    new, _ = consensus_step(Ensemble([a, b]), ConsensusConfig(tau=0.5, n_support=3))
    assert all(abs(m.weights.sum() - 1) < 1e-12 for m in new)


def test_trajectory_csv_and_snapshots(tmp_path):
    rec = run_consensus(diracs(0.0, 2.0), ConsensusConfig(tau=0.1, steps=4, snapshot_every=2))
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(rec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_HEADER)
    assert len(lines) == 1 + 4 * 2
    written = write_snapshots(rec, tmp_path)
    names = sorted(p.split("/")[-1] for p in written)
    assert names == ["snap_0_0.txt", "snap_0_1.txt", "snap_2_0.txt", "snap_2_1.txt",
                     "snap_4_0.txt", "snap_4_1.txt"]
