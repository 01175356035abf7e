"""Command-line entry point: ``optical-esn {generate,run,sweep,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from optical_esn.errors import OpticalESNError
from optical_esn.harness import ExperimentConfig, bench_throughput, load_config, run_experiment, run_size_sweep
from optical_esn.timeseries import generate_mackey_glass, write_series_csv


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML/JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--size", type=int, help="override reservoir size N")
    p.add_argument("--instances", type=int, help="parallel reservoir instances")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, size=args.size, instances=args.instances, output_dir=args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optical-esn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a Mackey-Glass series as CSV")
    _add_common(gen)
    gen.add_argument("--length", type=int, default=2501)

    run = sub.add_parser("run", help="run a single experiment")
    _add_common(run)

    sweep = sub.add_parser("sweep", help="sweep reservoir sizes over several seeds")
    _add_common(sweep)
    sweep.add_argument("--sizes", type=_int_list, default=[256, 1024, 4096])
    sweep.add_argument("--seeds-per-size", type=int, default=5)

    bench = sub.add_parser("bench", help="time reservoir iterations")
    _add_common(bench)
    bench.add_argument("--steps", type=int, default=1000)
    bench.add_argument("--sizes", type=_int_list, help="benchmark several sizes instead of --size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        out = Path(cfg.output_dir)
        if args.command == "generate":
            out.mkdir(parents=True, exist_ok=True)
            path = out / "mackey_glass.csv"
            write_series_csv(generate_mackey_glass(cfg.mg, args.length), path)
            print(path)
        elif args.command == "run":
            report = run_experiment(cfg)
            print(json.dumps(report.table_row()))
        elif args.command == "sweep":
            reports = run_size_sweep(cfg, args.sizes, args.seeds_per_size)
            for r in reports:
                print(json.dumps({"run_id": r.run_id, "status": r.status, **r.table_row()}))
            print(out / "sweep_aggregate.csv")
        elif args.command == "bench":
            sizes = args.sizes or [cfg.size]
            for n in sizes:
                rec = bench_throughput(cfg.with_overrides(size=n), args.steps)
                print(json.dumps({
                    "ESN size": rec.size * rec.n_instances,
                    "Init time": rec.init_time_s,
                    "Time per 1000 iter": rec.iter_time_s_per_1000,
                }))
    except OpticalESNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
