"""Command-line entry point: ``parampriv <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from pathlib import Path

import numpy as np

from .adversary import OccupancyEstimatorConfig
from .harness import (ExperimentConfig, baseline_noise, estimate_distortion, filter_stream,
                      occupancy_config, occupancy_descriptor, run_sweep, write_csv,
                      write_sweep)
from .infotheory import bits_to_nats, privacy_report
from .model_core import ConfigurationError, build_model
from .randomizer import DistortionMatrix, RandomizerPolicy, solve_randomizer

log = logging.getLogger("parampriv")

# Illustrative defaults for the noise-addition baseline: a slowly decaying
# integrator whose window statistic settles near the occupancy level.
BASELINE_DEFAULTS = {"thetas": [1.0, 2.0], "a": 0.999, "b": 1.0, "q_w": 0.1, "q_v": 0.1,
                     "m0": 0.0, "q0": 0.1, "horizon": 60, "window": 10, "n_runs": 1}


def _load(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig.from_dict(occupancy_config())
    return ExperimentConfig.load(args.config)


def _budget(x: float, bits: bool) -> float:
    return bits_to_nats(x) if bits else x


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sweep(args):
    cfg = _load(args)
    grid = args.I0 if args.I0 else cfg.I0_grid
    grid = [_budget(x, args.bits) for x in grid]
    rows, details = run_sweep(cfg, grid, seed=args.seed, n_trials=args.trials,
                              n_jobs=args.jobs)
    path = write_sweep(rows, details, _out_dir(args))
    print(path)


def cmd_estimate_distortion(args):
    cfg = _load(args)
    D = estimate_distortion(cfg, args.seed)
    path = _out_dir(args) / "distortion.json"
    path.write_text(D.dumps(), encoding="utf-8")
    print(path)


def cmd_solve(args):
    cfg = _load(args)
    if args.distortion:
        D = DistortionMatrix.from_json(json.loads(Path(args.distortion).read_text("utf-8")))
    else:
        D = estimate_distortion(cfg, args.seed)
    I0 = _budget(args.I0, args.bits)
    res = solve_randomizer(D, cfg.prior, I0, pseudo_labels=cfg.pseudo_labels)
    doc = res.policy.to_json()
    doc.update({"I0": I0, "achieved_MI": res.mutual_information,
                "distortion": res.distortion})
    path = _out_dir(args) / "policy.json"
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(path)


def cmd_report(args):
    cfg = _load(args)
    policy = RandomizerPolicy.from_json(json.loads(Path(args.policy).read_text("utf-8")))
    budget = None if args.budget is None else _budget(args.budget, args.bits)
    report = privacy_report(cfg.prior, policy, budget)
    json.dump(report.to_json(), sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_baseline_noise(args):
    params = dict(BASELINE_DEFAULTS)
    if args.config is not None:
        params.update(json.loads(Path(args.config).read_text("utf-8")).get("baseline", {}))
    seed = 0 if args.seed is None else args.seed
    est = OccupancyEstimatorConfig(window=int(params["window"]), decay=float(params["a"]),
                                   candidates=tuple(params["thetas"]))
    rows = []
    for t in params["thetas"]:
        desc = occupancy_descriptor(t, a=params["a"], b=params["b"], q_w=params["q_w"],
                                    q_v=params["q_v"], m0=params["m0"], q0=params["q0"])
        ks, clean, noisy = baseline_noise(build_model(desc), est, int(params["horizon"]),
                                          args.noise_variance, int(params["n_runs"]), seed)
        for run in range(clean.shape[0]):
            for idx, k in enumerate(ks):
                rows.append({"theta": t, "run": run, "k": int(k),
                             "clean": clean[run, idx], "noisy": noisy[run, idx]})
    path = _out_dir(args) / "baseline_noise.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_csv(rows, ["theta", "run", "k", "clean", "noisy"], fh)
    print(path)


def _model_arg(cfg, label, path):
    if path:
        return build_model(json.loads(Path(path).read_text("utf-8")))
    return cfg.model(label)


def cmd_filter_stream(args):
    cfg = None
    if not (args.true_model and args.pseudo_model):
        cfg = _load(args)
    true_model = _model_arg(cfg, args.true, args.true_model)
    pseudo_model = _model_arg(cfg, args.pseudo, args.pseudo_model)
    try:
        filter_stream(true_model, pseudo_model, sys.stdin, sys.stdout, emit_u=args.emit_u)
    except ValueError as exc:
        print(f"filter-stream: {exc}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parampriv",
                                     description="Model-randomization privacy filter")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="experiment JSON (default: occupancy experiment)")
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
        if out:
            p.add_argument("--out", help="output directory")
        return p

    p = common(sub.add_parser("sweep", help="solve and score over a leakage grid"))
    p.add_argument("--I0", type=float, nargs="+", help="leakage budgets (override config)")
    p.add_argument("--bits", action="store_true", help="budgets are in bits")
    p.add_argument("--trials", type=int, default=None, help="adversary trials per budget")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("estimate-distortion", help="Monte Carlo distortion matrix"))
    p.set_defaults(func=cmd_estimate_distortion)

    p = common(sub.add_parser("solve", help="optimal randomizer for one budget"))
    p.add_argument("--I0", type=float, required=True)
    p.add_argument("--bits", action="store_true")
    p.add_argument("--distortion", help="precomputed distortion.json")
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("report", help="privacy report for a policy"), out=False)
    p.add_argument("--policy", required=True)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--bits", action="store_true")
    p.set_defaults(func=cmd_report)

    p = common(sub.add_parser("baseline-noise", help="estimator traces under additive noise"))
    p.add_argument("--noise-variance", type=float, default=1.0)
    p.set_defaults(func=cmd_baseline_noise)

    p = common(sub.add_parser("filter-stream", help="disguise CSV vectors from stdin"),
               out=False)
    p.add_argument("--true", help="label of the true model in the config")
    p.add_argument("--pseudo", help="label of the pseudo model in the config")
    p.add_argument("--true-model", help="descriptor JSON for the true model")
    p.add_argument("--pseudo-model", help="descriptor JSON for the pseudo model")
    p.add_argument("--emit-u", action="store_true", help="append the CDF values")
    p.set_defaults(func=cmd_filter_stream)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "filter-stream" and hasattr(signal, "SIGPIPE"):
        signal.signal(signal.SIGPIPE, signal.SIG_DFL)
    try:
        with np.errstate(over="ignore"):
            return args.func(args) or 0
    except (ConfigurationError, OSError, ValueError, KeyError) as exc:
        print(f"parampriv {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
