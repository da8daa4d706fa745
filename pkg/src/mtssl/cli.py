"""Command line entry point: ``mtssl <command> --config <file|preset> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import datasets, experiments, tiling
from .baselines import write_matrix_csv
from .config import ConfigError, load, preset_names

log = logging.getLogger("mtssl")


def _config(args):
    cfg = load(args.config)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    for flag, key in (("seed", "experiment.seed"), ("repeats", "experiment.repeats"),
                      ("out", "experiment.out"), ("jobs", "experiment.jobs"),
                      ("pretrain", "tiling.pretrain")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = str(val)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg.validate()


def cmd_gen(args):
    cfg = _config(args)
    seeds = cfg.repeat_seeds(0)
    samples = datasets.generate(cfg.dataset_spec(seeds["data"]))
    masked = experiments.label_heads(cfg, samples, seeds["labels"])
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    for head, s in masked.items():
        name = "dataset.csv" if head == "main" else f"dataset_{head}.csv"
        datasets.write_csv(out / name, s)
    experiments.write_manifest(out, cfg, "gen", {"size": len(samples), "heads": sorted(masked)})
    print(out)


def cmd_run(args):
    cfg = _config(args)
    res = experiments.run_online(cfg)
    out = experiments.write_online(res, cfg.experiment.out)
    for rep in res.summary()["repeats"]:
        for head, s in rep["heads"].items():
            print(f"repeat {rep['repeat']} {head}: ssl {s['ssl_stream_error']:.4f} "
                  f"logreg {s['logreg_stream_error']:.4f} post {s['post_transition_error']}")
    print(out)


def cmd_compare(args):
    cfg = _config(args)
    res = experiments.run_online_vs_offline(cfg)
    out = experiments.write_comparison(res, cfg.experiment.out)
    for row in res.table():
        print(f"step {row['step']:5d}  online {row['online_mean']:.4f}  offline {row['offline_mean']:.4f}")
    print(out)


def cmd_square(args):
    cfg = _config(args)
    res = experiments.run_square_imbalance(cfg)
    out = experiments.write_square(res, cfg.experiment.out)
    s = res.summary()
    print(f"median imbalance: network {s['network_median']:.3f} laplacian {s['laplacian_median']:.3f}")
    for row in s["histogram"]:
        print(f"[{row['bin_lo']:.1f}, {row['bin_hi']:.1f}) network {row['network']:3d} laplacian {row['laplacian']:3d}")
    print(out)


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values.strip():
            raise ConfigError(f"--param expects key=v1,v2,..., got {item!r}")
        grid[key.strip()] = [v.strip() for v in values.split(",") if v.strip()]
    return grid


def cmd_grid(args):
    cfg = _config(args)
    grid = _parse_grid(args.param)
    for key in grid:
        cfg.with_overrides({key: grid[key][0]})  # reject unknown keys before running
    res = experiments.grid_search(cfg, grid, args.metric)
    out = experiments.write_grid(res, cfg.experiment.out)
    print(f"best {dict(res.best)} score {res.best_score:.4f}")
    print(out)


def cmd_probe(args):
    snap = tiling.load_snapshot(args.snapshot)
    probes = np.loadtxt(args.probes, delimiter=",", ndmin=2) if args.probes else np.eye(snap.params.n)
    H = tiling.receptive_field_probe(snap.state, list(probes), snap.params)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out, H, prefix="h")
    print(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtssl", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help=f"config file or preset name ({', '.join(preset_names())})")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--repeats", type=int)
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--pretrain", type=int, metavar="N",
                        help="unsupervised tiling passes over the stream before the labeled run")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. --set tiling.m=60")

    sp = sub.add_parser("gen", help="write the masked dataset stream(s) to CSV")
    common(sp)
    sp.set_defaults(func=cmd_gen)
    sp = sub.add_parser("run", help="stream a dataset through the network and baselines")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("compare-offline", help="online network vs offline Laplacian SVM")
    common(sp)
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("square", help="prediction imbalance on the unit square")
    common(sp)
    sp.set_defaults(func=cmd_square)
    sp = sub.add_parser("grid", help="grid search over config keys")
    common(sp)
    sp.add_argument("--param", action="append", required=True, metavar="KEY=V1,V2")
    sp.add_argument("--metric", default="ssl_stream", choices=experiments.METRICS)
    sp.set_defaults(func=cmd_grid)
    sp = sub.add_parser("probe", help="receptive fields of a saved tiling snapshot")
    sp.add_argument("snapshot")
    sp.add_argument("--probes", help="CSV of probe inputs, one per row (default: unit vectors)")
    sp.add_argument("--output", default="probe.csv")
    sp.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
