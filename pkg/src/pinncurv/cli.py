"""Command line entry point: ``pinncurv {train,batch,grid,summarize,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import runner
from .errors import ConfigurationError
from .plots import emit_plots

def _experiment_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value experiment file")
    p.add_argument("--optimizer", choices=["GD", "ADAM", "LBFGS", "BBI", "gd", "adam", "lbfgs", "bbi"])
    p.add_argument("--lr", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--arch", help="S, L or dash-separated layer sizes such as 2-8-8-1")
    p.add_argument("--epochs", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--init-seed", type=int, help="init seed (base seed for batch/grid)")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--workers", type=int, default=1)


def _build_config(args) -> runner.ExperimentConfig:
    values = runner.parse_config_text(args.config.read_text()) if args.config else {}
    overrides = {
        "optimizer": args.optimizer, "lr": args.lr, "beta": args.beta, "arch": args.arch,
        "epochs": args.epochs, "data_seed": args.data_seed, "init_seed": args.init_seed,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = str(value)
    return runner.config_from_mapping(values)


def cmd_train(args):
    config = _build_config(args)
    record = runner.run_single(config)
    args.out.mkdir(parents=True, exist_ok=True)
    path = runner.write_run_csv(record, args.out / runner.run_filename(record))
    print(f"{path} status={record.status} final_mse={record.final_mse!r}")


def cmd_batch(args):
    config = _build_config(args)
    seeds = args.seeds if args.seeds is not None else 10
    records = runner.run_batch(config, seeds, workers=args.workers)
    runner.save_records(records, args.out)
    rows = runner.summarize(records)
    runner.write_summary_csv(rows, args.out / "summary.csv")
    for rec in records:
        print(f"init_seed={rec.init_seed} status={rec.status} final_mse={rec.final_mse!r}")


def cmd_grid(args):
    lrs = tuple(args.lrs) if args.lrs else runner.GridSearchSpec().lrs
    if args.lr is None:
        args.lr = lrs[0]  # placeholder; every candidate overrides it
    base = _build_config(args)
    spec = runner.GridSearchSpec(lrs, args.seeds if args.seeds is not None else 5,
                                 args.epochs if args.epochs is not None else 300)
    optimizers = [o.upper() for o in args.optimizers] if args.optimizers else [base.optimizer.kind]
    betas = args.betas or [base.beta]
    results = []
    for kind in optimizers:
        for beta in betas:
            cfg = replace(base, beta=beta, optimizer=replace(base.optimizer, kind=kind))
            res = runner.grid_search(spec, cfg, workers=args.workers)
            results.append(res)
            print(f"{kind} beta={beta:g} arch={cfg.arch}: best lr {res.best_lr}")
    args.out.mkdir(parents=True, exist_ok=True)
    runner.write_grid_csv(results, args.out / "grid.csv")


def cmd_summarize(args):
    records = runner.read_run_dir(args.runs)
    rows = runner.summarize(records)
    out = args.out or args.runs / "summary.csv"
    runner.write_summary_csv(rows, out)
    print(out)


def cmd_plot(args):
    records = runner.read_run_dir(args.runs)
    rows = runner.summarize(records)
    for path in emit_plots(rows, records, args.out):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinncurv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="one run")
    _experiment_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("batch", help="one config over several init seeds")
    _experiment_args(p)
    p.add_argument("--seeds", type=int, help="number of init seeds (default 10)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("grid", help="learning-rate search")
    _experiment_args(p)
    p.add_argument("--seeds", type=int, help="trials per learning rate (default 5)")
    p.add_argument("--lrs", type=float, nargs="+")
    p.add_argument("--optimizers", nargs="+")
    p.add_argument("--betas", type=float, nargs="+")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("summarize", help="summary CSV from a directory of run CSVs")
    p.add_argument("runs", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="SVG charts from a directory of run CSVs")
    p.add_argument("runs", type=Path)
    p.add_argument("--out", type=Path, default=Path("plots"))
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (ConfigurationError, OSError) as exc:
        print(f"pinncurv: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
