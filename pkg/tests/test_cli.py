import json
import subprocess
import sys

import numpy as np
import pytest

from wasserstein_consensus.cbo import CboConfig, W2ToTarget, cbo_step, initial_ensemble, make_target
from wasserstein_consensus.cli import main
from wasserstein_consensus.measures import read_measure, uniform_measure, write_measure


def cloud(path, pts, weights=None):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    with open(path, "w") as fh:
        if weights is not None:
            fh.write(f"# dim={pts.shape[1]}\n")
        for i, p in enumerate(pts):
            row = list(p) + ([weights[i]] if weights is not None else [])
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return str(path)


def ini(path, text):
    path.write_text(text)
    return str(path)


def test_w2_identical(tmp_path, capsys):
    a = cloud(tmp_path / "a.txt", [(0, 0), (1, 2)])
    assert main(["w2", a, a]) == 0
    assert float(capsys.readouterr().out) == 0.0


def test_w2_diracs(tmp_path, capsys):
    a = cloud(tmp_path / "a.txt", [(0, 0)])
    b = cloud(tmp_path / "b.txt", [(3, 4)])
    assert main(["w2", a, b]) == 0
    assert capsys.readouterr().out.strip() == "5"


def test_w2_one_dimensional(tmp_path, capsys):
    a = cloud(tmp_path / "a.txt", [0.0, 1.0])
    b = cloud(tmp_path / "b.txt", [2.0, 3.0])
    assert main(["w2", a, b]) == 0
    assert capsys.readouterr().out.strip() == "2"


def test_w2_twelve_digits(tmp_path, capsys):
    a = cloud(tmp_path / "a.txt", [(0, 0)])
    b = cloud(tmp_path / "b.txt", [(1, 1)])
    main(["w2", a, b])
    assert capsys.readouterr().out.strip() == "1.41421356237"


def test_w2_errors(tmp_path, capsys):
    a = cloud(tmp_path / "a.txt", [(0, 0)])
    b = cloud(tmp_path / "b.txt", [0.0])
    assert main(["w2", a, b]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0 zero\n")
    assert main(["w2", a, str(bad)]) == 2
    assert main(["w2", a, str(tmp_path / "missing.txt")]) == 2
    assert "error" in capsys.readouterr().err


def test_barycenter_single_input(tmp_path, capsys):
    cloud(tmp_path / "a.txt", [(0, 0), (1, 3), (2, 1)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt\nweights = 1\n")
    assert main(["barycenter", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["functional"] == 0.0 and summary["converged"]
    out = read_measure(tmp_path / "o" / "barycenter.txt")
    assert out.allclose(read_measure(tmp_path / "a.txt"))


def test_barycenter_two_diracs(tmp_path):
    cloud(tmp_path / "a.txt", [(0, 0)])
    cloud(tmp_path / "b.txt", [(2, 0)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt b.txt\nweights = 0.5 0.5\n")
    assert main(["barycenter", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert read_measure(tmp_path / "o" / "barycenter.txt").points.tolist() == [[1.0, 0.0]]


def test_barycenter_cross_instance(tmp_path):
    cloud(tmp_path / "a.txt", [(0, 0), (1, 1)])
    cloud(tmp_path / "b.txt", [(0, 1), (1, 0)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt, b.txt\n")
    assert main(["barycenter", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["functional"] <= 0.25 + 1e-6


def test_barycenter_weight_count_mismatch(tmp_path):
    cloud(tmp_path / "a.txt", [(0, 0)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt\nweights = 1 2\n")
    assert main(["barycenter", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_consensus_two_diracs(tmp_path, capsys):
    cloud(tmp_path / "a.txt", [0.0])
    cloud(tmp_path / "b.txt", [2.0])
    cfg = ini(tmp_path / "r.ini",
              "[problem]\ninputs = a.txt b.txt\n[dynamics]\ntau = 0.1\nsteps = 50\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2 * 0.9 ** 50, rel=1e-11)
    lines = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "step,agent,w2_to_barycenter,diameter,weight"


def test_consensus_identical_and_single(tmp_path, capsys):
    cloud(tmp_path / "a.txt", [(0, 0), (1, 1)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt a.txt\n[dynamics]\nsteps = 5\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert float(capsys.readouterr().out) == 0.0
    cfg = ini(tmp_path / "s.ini", "[problem]\ninputs = a.txt\n[dynamics]\nsteps = 3\n"
              "snapshot_every = 1\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    assert read_measure(tmp_path / "p" / "final_0.txt").allclose(read_measure(tmp_path / "a.txt"))


def test_consensus_gibbs_needs_target(tmp_path):
    cloud(tmp_path / "a.txt", [(0, 0)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt\n[dynamics]\nweight_fn = gibbs\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt a.txt\ntarget_shape = ring\n"
              "target_M = 8\n[dynamics]\nweight_fn = gibbs\nalpha = 3\nsteps = 2\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("text", [
    "[problem]\ninputs = a.txt\nwieghts = 1\n",
    "[problem]\ninputs = a.txt\n[dynamic]\ntau = 0.1\n",
    "[problem]\ninputs = a.txt\n[dynamics]\nTau = 0.1\n",
    "[problem]\ninputs = a.txt\n[dynamics]\ntau = fast\n",
    "not an ini file\n",
])
def test_config_rejection_before_computation(tmp_path, text):
    cloud(tmp_path / "a.txt", [(0, 0)])
    cfg = ini(tmp_path / "r.ini", text)
    out = tmp_path / "o"
    assert main(["consensus", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_invalid_parameter_is_input_error(tmp_path):
    cloud(tmp_path / "a.txt", [(0, 0)])
    cfg = ini(tmp_path / "r.ini", "[problem]\ninputs = a.txt\n[dynamics]\ntau = 1.5\n")
    assert main(["consensus", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_and_bad_flags(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["consensus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_cbo_end_to_end_and_reproducible(tmp_path, capsys):
    cfg = ini(tmp_path / "r.ini", "[problem]\ntarget_shape = ring\ntarget_M = 30\nseed = 4\n"
              "[cbo]\nN = 3\nn = 6\nk_max = 4\nsnapshot_every = 2\n[output]\nout_dir = run\n")
    assert main(["cbo", "--config", cfg]) == 0
    assert main(["cbo", "--config", cfg, "--out", str(tmp_path / "again")]) == 0
    first, second = tmp_path / "run", tmp_path / "again"
    for name in ("iterations.csv", "best.csv", "best_agent.txt", "barycenter.txt", "snap_2_1.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / "iterations.csv").read_text().splitlines()[0] == \
        "iter,agent,objective,w2_to_barycenter,sigma"
    assert (first / "best.csv").read_text().splitlines()[0] == \
        "iter,best_agent,best_objective,barycenter_objective"
    assert main(["--seed", "5", "cbo", "--config", cfg, "--out", str(tmp_path / "s5")]) == 0
    assert (tmp_path / "s5" / "best.csv").read_bytes() != (first / "best.csv").read_bytes()


def test_cbo_single_noise_free_step_matches_library(tmp_path):
    cfg = ini(tmp_path / "r.ini", "[problem]\ntarget_shape = moons\ntarget_M = 20\nseed = 2\n"
              "[cbo]\nN = 3\nn = 5\nk_max = 1\nsigma1 = 0\n")
    assert main(["cbo", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    conf = CboConfig(N=3, n=5, d=2, k_max=1, sigma1=0.0, seed=2)
    target = make_target("moons", 20, seed=2)
    new, diag = cbo_step(initial_ensemble(conf), W2ToTarget(target), conf)
    rows = (tmp_path / "o" / "iterations.csv").read_text().splitlines()[1:4]
    assert [float(r.split(",")[2]) for r in rows] == diag.objectives.tolist()
    best = read_measure(tmp_path / "o" / "best_agent.txt")
    objs = [W2ToTarget(target)(a) for a in new]
    np.testing.assert_array_equal(best.points, new[int(np.argmin(objs))].points)


def test_cbo_target_file_and_dimension_check(tmp_path):
    write_measure(tmp_path / "t.txt", uniform_measure(np.zeros((4, 3))))
    cfg = ini(tmp_path / "r.ini", "[problem]\ntarget_file = t.txt\n[cbo]\nN = 2\nn = 2\nk_max = 1\n")
    assert main(["cbo", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = ini(tmp_path / "r.ini", "[problem]\ntarget_file = t.txt\n[cbo]\nN = 2\nn = 2\nd = 3\n"
              "k_max = 1\n")
    assert main(["cbo", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_cbo_objective_failure_exit_3(tmp_path, monkeypatch):
    import wasserstein_consensus.cli as cli
    monkeypatch.setattr(cli, "W2ToTarget", lambda t: (lambda mu: float("inf")))
    cfg = ini(tmp_path / "r.ini", "[problem]\ntarget_shape = ring\ntarget_M = 5\n"
              "[cbo]\nN = 2\nn = 2\nk_max = 1\n")
    assert main(["cbo", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_make_target(tmp_path):
    assert main(["make-target", "ring", "12", "ring.txt", "--out", str(tmp_path), "--seed", "3"]) == 0
    mu = read_measure(tmp_path / "ring.txt")
    assert mu.n == 12 and mu.dim == 2
    assert main(["make-target", "gaussians4", "0", str(tmp_path / "x.txt")]) == 2


def test_console_script_runs(tmp_path):
    a = cloud(tmp_path / "a.txt", [(0, 0)])
    b = cloud(tmp_path / "b.txt", [(3, 4)])
    proc = subprocess.run([sys.executable, "-m", "wasserstein_consensus.cli", "w2", a, b],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip() == "5"
