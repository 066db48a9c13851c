"""Command-line front-end.

Subcommands: run, compare, reproduce, export-grid, inspect-checkpoint.
Exit codes: 0 success, 1 validation error, 2 divergence in at least one
run, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness, network, problems
from .harness import ConfigError, ExperimentConfig
from .network import CheckpointError
from .problems import ProblemError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip() != ""]


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = json.loads(value)
    return out


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = _parse_seeds(args.seeds)
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.out is not None:
        overrides["out_dir"] = args.out
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = json.loads(value)
    return cfg.with_overrides(**overrides) if overrides else cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.regime is not None:
        cfg = cfg.with_overrides(regime=args.regime)
    results = harness.run_experiment(cfg)
    for r in results:
        print(f"seed {r.seed}: train {r.final_train_loss:.3e} "
              f"test {r.final_test_mse:.3e} -> {r.run_dir}"
              + (" DIVERGED" if r.diverged else ""))
    return EXIT_DIVERGENCE if any(r.diverged for r in results) else EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _load_config(args)
    regimes = [r.strip() for r in args.regimes.split(",")]
    report = harness.compare(cfg, regimes)
    print(harness.format_comparison(report), end="")
    diverged = any(run["diverged"]
                   for row in report["regimes"].values()
                   for run in row["per_seed"])
    return EXIT_DIVERGENCE if diverged else EXIT_OK


def _cmd_reproduce(args) -> int:
    seeds = _parse_seeds(args.seeds) if args.seeds else None
    report = harness.reproduce(args.table, desk=args.desk, seeds=seeds,
                               out_dir=args.out or "runs")
    print(harness.format_reproduction(report), end="")
    return EXIT_DIVERGENCE if any(r["diverged"] for r in report["rows"]) \
        else EXIT_OK


def _cmd_export_grid(args) -> int:
    params = _parse_params(args.param)
    if "x_range" in params:
        params["x_range"] = tuple(params["x_range"])
    problem = problems.by_name(args.problem, **params)
    net = network.read_checkpoint(args.checkpoint, expect_d=problem.d)
    harness.export_error_grid(net, problem, path=args.out,
                              n1=args.n1, n2=args.n2,
                              fixed_t=args.fixed_t,
                              fixed_coords=args.fixed_coords)
    print(f"wrote {args.n1 * args.n2} grid rows to {args.out}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    net = network.read_checkpoint(args.checkpoint)
    flat = net.flat_params()
    info = {
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "init_seed": net.init_seed,
        "spatial_dimension": net.d,
        "param_count": net.param_count,
        "param_l2": float(np.linalg.norm(flat)),
        "param_min": float(flat.min()),
        "param_max": float(flat.max()),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="piat",
        description="Train physics-informed networks on PDE benchmarks, "
                    "with adversarial-training and smoothing regimes.",
    )
    p.add_argument("-v", "--verbose", action="store_true",
                   help="log per-run progress")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train the configured runs")
    run.add_argument("-c", "--config", required=True,
                     help="experiment config (JSON)")
    run.add_argument("--seeds", help="comma-separated seed list override")
    run.add_argument("--epochs", type=int, help="epoch count override")
    run.add_argument("--out", help="output directory override")
    run.add_argument("--regime", help="training regime override")
    run.add_argument("--set", action="append", metavar="KEY=JSON",
                     help="override any config or training field")
    run.set_defaults(fn=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare regimes on one setup")
    cmp_.add_argument("-c", "--config", required=True)
    cmp_.add_argument("--regimes", required=True,
                      help="comma-separated regimes (at least two)")
    cmp_.add_argument("--seeds")
    cmp_.add_argument("--epochs", type=int)
    cmp_.add_argument("--out")
    cmp_.add_argument("--set", action="append", metavar="KEY=JSON")
    cmp_.set_defaults(fn=_cmd_compare)

    rep = sub.add_parser("reproduce",
                         help="rerun a published benchmark table")
    rep.add_argument("table", help=f"one of {harness.TABLE_IDS}")
    rep.add_argument("--desk", action="store_true",
                     help="desk-scale profile (halved epochs)")
    rep.add_argument("--seeds")
    rep.add_argument("--out")
    rep.set_defaults(fn=_cmd_reproduce)

    grid = sub.add_parser("export-grid",
                          help="pointwise error grid for a checkpoint")
    grid.add_argument("--checkpoint", required=True)
    grid.add_argument("--problem", required=True)
    grid.add_argument("--param", action="append", metavar="KEY=JSON",
                      help="problem parameter, e.g. --param nu=0.5")
    grid.add_argument("--out", required=True)
    grid.add_argument("--n1", type=int, default=100)
    grid.add_argument("--n2", type=int, default=100)
    grid.add_argument("--fixed-t", type=float, default=0.0,
                      help="time slice for grids over (x1, x2)")
    grid.add_argument("--fixed-coords", type=float, default=0.0,
                      help="value for non-plotted spatial coordinates")
    grid.set_defaults(fn=_cmd_export_grid)

    ins = sub.add_parser("inspect-checkpoint",
                         help="print checkpoint header and statistics")
    ins.add_argument("checkpoint")
    ins.set_defaults(fn=_cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except (ConfigError, ProblemError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
