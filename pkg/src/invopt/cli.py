"""Command-line interface: ``invopt gen|train|eval|bench``.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (ExperimentConfig, generate, run_experiment, samd_race,
                    write_trajectories, response_metrics, train_method)
from .core import load_dataset, save_dataset
from .errors import (ConfigError, InconsistentDataError,
                     InfeasibleProblemError, InvOptError, NoInteriorError,
                     SolverError, UnboundedProblemError)

_SOLVER_FAILURES = (SolverError, InfeasibleProblemError,
                    UnboundedProblemError, InconsistentDataError,
                    NoInteriorError)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _experiment_config(args):
    payload = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        payload["seeds"] = [args.seed]
    if args.method:
        payload["methods"] = args.method
    if args.out:
        payload["out"] = args.out
    payload.setdefault("experiment", "consistent")
    for key in ("seeds", "train_sizes", "methods"):
        if key in payload:
            payload[key] = tuple(payload[key])
    try:
        return ExperimentConfig(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc


def cmd_gen(args):
    cfg = _experiment_config(args)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        train, test, theta_true = generate(cfg, seed)
        save_dataset(train, out / f"train_seed{seed}.jsonl")
        save_dataset(test, out / f"test_seed{seed}.jsonl")
        with open(out / f"theta_true_seed{seed}.json", "w") as fh:
            json.dump({"theta": theta_true.tolist()}, fh)
    print(f"wrote {2 * len(cfg.seeds)} datasets to {out}")
    return 0


def cmd_train(args):
    trainer = _load_json(args.config) if args.config else {}
    ds = load_dataset(args.data, seed=args.seed or 0)
    method = args.method[0] if args.method else None
    if method is None:
        loss = trainer.get("loss", "asl")
        if ds[0].oracle.kind == "mixed-integer":
            method = "asl_mi_lp_yz" if trainer.get("penalize_y") \
                else "asl_mi_lp_z"
        elif loss == "suboptimality":
            method = "sl_facets"
        else:
            method = "asl_enumerated"
    cfg = ExperimentConfig(
        experiment="mixed_integer" if ds[0].oracle.kind == "mixed-integer"
        else "consistent",
        N=len(ds), train_sizes=(len(ds),),
        kappa=float(trainer.get("kappa", 0.001)),
        methods=(method,), seeds=(args.seed or 0,))
    theta = train_method(method, ds, cfg, seed=args.seed or 0)
    payload = {"method": method, "theta": theta.tolist()}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh)
    else:
        json.dump(payload, sys.stdout)
        print()
    return 0


def cmd_eval(args):
    ds = load_dataset(args.data)
    with open(args.theta) as fh:
        theta = np.asarray(json.load(fh)["theta"], dtype=np.float64)
    theta_true = None
    if args.theta_true:
        with open(args.theta_true) as fh:
            theta_true = np.asarray(json.load(fh)["theta"],
                                    dtype=np.float64)
    ref = theta_true if theta_true is not None else theta
    resp_err, gap = response_metrics(theta, ds, ref)
    record = {"response_error": resp_err}
    if theta_true is not None:
        record["cost_gap"] = gap
        a = theta / max(np.linalg.norm(theta), 1e-12)
        b = theta_true / max(np.linalg.norm(theta_true), 1e-12)
        record["theta_error"] = float(np.linalg.norm(a - b))
    if args.format == "json":
        text = json.dumps(record)
    else:
        keys = list(record)
        text = ",".join(keys) + "\n" + ",".join(repr(record[k])
                                                for k in keys)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_bench(args):
    cfg = _experiment_config(args)
    rows = run_experiment(cfg)
    if cfg.experiment == "samd_bench":
        points = []
        for seed in cfg.seeds:
            points.extend(samd_race(cfg, seed))
        if cfg.out:
            write_trajectories(points, cfg.out)
    if not cfg.out:
        for r in rows:
            print(f"{r.method},{r.seed},{r.train_size},{r.theta_error!r},"
                  f"{r.response_error!r},{r.cost_gap!r}")
    else:
        print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="invopt",
        description="learn expert cost vectors by inverse optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--method", action="append",
                        help="method name (repeatable)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("gen", parents=[common],
                       help="generate seeded datasets as JSON Lines")
    p.set_defaults(fn=cmd_gen)
    p = sub.add_parser("train", parents=[common],
                       help="fit a cost vector to a dataset")
    p.add_argument("--data", required=True, help="JSONL dataset")
    p.set_defaults(fn=cmd_train)
    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a cost vector on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--theta", required=True, help="JSON file with 'theta'")
    p.add_argument("--theta-true", help="JSON file with the true vector")
    p.set_defaults(fn=cmd_eval)
    p = sub.add_parser("bench", parents=[common],
                       help="run a seeded experiment grid")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_FAILURES as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except InvOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
