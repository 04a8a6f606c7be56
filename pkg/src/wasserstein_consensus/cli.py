"""Command-line front end: ``wcons {w2,barycenter,consensus,cbo,make-target}``."""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass


from .barycenter import BarycenterProblem, free_support_barycenter, normalize_weights
from .cbo import (CboConfig, GibbsWeights, TARGET_SHAPES, W2ToTarget, initial_ensemble,
                  make_target, run_cbo, write_run_csvs, write_run_snapshots)
from .dynamics import (ConsensusConfig, constant_weights, run_consensus, write_snapshots,
                       write_trajectory_csv)
from .measures import Ensemble, read_measure, write_measure
from .ot import solve_ot

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


class InputError(Exception):
    """Bad command line, config file or input data."""


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> list[float]:
    return [float(tok) for tok in v.replace(",", " ").split()]


def _paths(v: str) -> list[str]:
    return v.replace(",", " ").split()


# section -> key -> (parser, default); None marks "no default"
SCHEMA = {
    "problem": {
        "inputs": (_paths, None),
        "weights": (_floats, None),
        "target_shape": (str, None),
        "target_file": (str, None),
        "target_M": (_int, 2000),
        "target_noise": (float, None),
        "seed": (_int, 0),
    },
    "dynamics": {
        "tau": (float, 0.1),
        "steps": (_int, 100),
        "weight_fn": (str, "constant"),
        "alpha": (float, 1.0),
        "n_support": (_int, None),
        "bary_tol": (float, 1e-9),
        "bary_max_iter": (_int, 100),
        "merge_tol": (float, 1e-12),
        "snapshot_every": (_int, 0),
    },
    "cbo": {
        "N": (_int, 30),
        "n": (_int, 32),
        "d": (_int, 2),
        "tau": (float, 0.1),
        "sigma1": (float, 0.3),
        "sigma2": (float, 0.1),
        "alpha": (float, 1e6),
        "k_max": (_int, 3000),
        "snapshot_every": (_int, 0),
        "per_particle_noise": (_bool, False),
        "bary_tol": (float, 1e-9),
        "bary_max_iter": (_int, 100),
    },
    "output": {
        "out_dir": (str, "out"),
    },
}


@dataclass
class RunConfig:
    values: dict
    base_dir: str

    def get(self, section: str, key: str):
        return self.values[section][key]

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)


def load_config(path: str | None) -> RunConfig:
    """Parse a run configuration; unknown sections or keys raise InputError."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str  # N and n are different keys
    base = os.getcwd()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))
    values = {sec: {k: default for k, (_, default) in keys.items()}
              for sec, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise InputError(f"unknown config section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise InputError(f"unknown key {key!r} in section [{sec}]")
            conv = SCHEMA[sec][key][0]
            try:
                values[sec][key] = conv(raw)
            except ValueError as exc:
                raise InputError(f"[{sec}] {key}: {exc}") from exc
    return RunConfig(values, base)


def _read(path: str):
    try:
        return read_measure(path)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _input_ensemble(cfg: RunConfig) -> Ensemble:
    inputs = cfg.get("problem", "inputs")
    if not inputs:
        raise InputError("[problem] inputs must list at least one point-cloud file")
    try:
        return Ensemble(_read(cfg.path(p)) for p in inputs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _target(cfg: RunConfig, seed: int):
    shape = cfg.get("problem", "target_shape")
    file = cfg.get("problem", "target_file")
    if (shape is None) == (file is None):
        raise InputError("set exactly one of [problem] target_shape and target_file")
    if file is not None:
        return _read(cfg.path(file))
    if shape not in TARGET_SHAPES:
        raise InputError(f"unknown target_shape {shape!r}")
    return make_target(shape, cfg.get("problem", "target_M"), seed=seed,
                       noise=cfg.get("problem", "target_noise"))


def _out_dir(args, cfg: RunConfig) -> str:
    out = args.out if getattr(args, "out", None) else cfg.path(cfg.get("output", "out_dir"))
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg: RunConfig) -> int:
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.get("problem", "seed")
    if not 0 <= seed < 2**64:
        raise InputError("seed must be an unsigned 64-bit integer")
    return seed


# -- subcommands --------------------------------------------------------------

def cmd_w2(args) -> int:
    a, b = _read(args.file_a), _read(args.file_b)
    if a.dim != b.dim:
        raise InputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    print("%.12g" % solve_ot(a, b).w2)
    return EXIT_OK


def cmd_barycenter(args) -> int:
    cfg = load_config(args.config)
    agents = _input_ensemble(cfg)
    weights = cfg.get("problem", "weights") or [1.0] * len(agents)
    if len(weights) != len(agents):
        raise InputError(f"{len(agents)} inputs but {len(weights)} weights")
    n_support = cfg.get("dynamics", "n_support")
    if n_support is None:
        n_support = agents.common_size() or max(a.n for a in agents)
    try:
        problem = BarycenterProblem(agents, tuple(weights), n_support,
                                    tol=cfg.get("dynamics", "bary_tol"),
                                    max_iter=cfg.get("dynamics", "bary_max_iter"))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args, cfg)
    res = free_support_barycenter(problem)
    write_measure(os.path.join(out, "barycenter.txt"), res.measure)
    summary = {"functional": res.functional, "iterations": res.iterations,
               "converged": res.converged,
               "weights": [float(w) for w in normalize_weights(weights)]}
    with open(os.path.join(out, "summary.json"), "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print("%.12g" % res.functional)
    return EXIT_OK


def cmd_consensus(args) -> int:
    cfg = load_config(args.config)
    agents = _input_ensemble(cfg)
    seed = _seed(args, cfg)
    dyn = cfg.values["dynamics"]
    if dyn["weight_fn"] == "constant":
        weight_fn = constant_weights
    elif dyn["weight_fn"] == "gibbs":
        weight_fn = GibbsWeights(W2ToTarget(_target(cfg, seed)), dyn["alpha"])
    else:
        raise InputError(f"weight_fn must be 'constant' or 'gibbs', got {dyn['weight_fn']!r}")
    try:
        config = ConsensusConfig(tau=dyn["tau"], steps=dyn["steps"], weight_fn=weight_fn,
                                 n_support=dyn["n_support"], bary_tol=dyn["bary_tol"],
                                 bary_max_iter=dyn["bary_max_iter"], merge_tol=dyn["merge_tol"],
                                 seed=seed, snapshot_every=dyn["snapshot_every"],
                                 threads=args.threads)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args, cfg)
    record = run_consensus(agents, config)
    write_trajectory_csv(record, os.path.join(out, "trajectory.csv"))
    write_snapshots(record, out)
    for i, agent in enumerate(record.final):
        write_measure(os.path.join(out, f"final_{i}.txt"), agent)
    print("%.12g" % record.final_diameter)
    return EXIT_OK


def cmd_cbo(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    c = cfg.values["cbo"]
    try:
        config = CboConfig(N=c["N"], n=c["n"], d=c["d"], tau=c["tau"], sigma1=c["sigma1"],
                           sigma2=c["sigma2"], alpha=c["alpha"], k_max=c["k_max"], seed=seed,
                           snapshot_every=c["snapshot_every"],
                           per_particle_noise=c["per_particle_noise"], bary_tol=c["bary_tol"],
                           bary_max_iter=c["bary_max_iter"], threads=args.threads)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    target = _target(cfg, seed)
    if target.dim != config.d:
        raise InputError(f"target lives in R^{target.dim} but d = {config.d}")
    out = _out_dir(args, cfg)
    record = run_cbo(initial_ensemble(config), W2ToTarget(target), config)
    write_run_csvs(record, out)
    write_run_snapshots(record, out)
    write_measure(os.path.join(out, "best_agent.txt"), record.best_measure)
    write_measure(os.path.join(out, "barycenter.txt"), record.barycenter)
    write_measure(os.path.join(out, "target.txt"), target)
    best = record.best_objectives
    print("best objective: initial %.12g, final %.12g" % (best[0], best[-1]))
    return EXIT_OK


def cmd_make_target(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.M < 1:
        raise InputError("M must be >= 1")
    mu = make_target(args.shape, args.M, seed=seed, noise=args.noise)
    path = args.path
    if args.out and not os.path.isabs(path):
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, path)
    write_measure(path, mu)
    return EXIT_OK


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="run configuration file")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for per-agent work")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wcons", description="Wasserstein consensus dynamics and measure-valued CBO")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("w2", help="2-Wasserstein distance between two point clouds")
    p.add_argument("file_a")
    p.add_argument("file_b")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_w2)

    for name, func, doc in [
        ("barycenter", cmd_barycenter, "weighted free-support barycenter of the inputs"),
        ("consensus", cmd_consensus, "run the consensus scheme on the inputs"),
        ("cbo", cmd_cbo, "run measure-valued consensus-based optimization"),
    ]:
        p = sub.add_parser(name, help=doc)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)

    p = sub.add_parser("make-target", help="write a planar target shape as a point cloud")
    p.add_argument("shape", choices=TARGET_SHAPES)
    p.add_argument("M", type=int)
    p.add_argument("path")
    p.add_argument("--noise", type=float, default=None)
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_make_target)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("barycenter", "consensus", "cbo") and args.config is None:
        parser.error(f"{args.command} needs --config")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"wcons: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"wcons: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
