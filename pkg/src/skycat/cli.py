"""Command-line entry point.

Subcommands::

    cluster     build a catalog and assignment file from observations
    synth       write a synthetic observation file with its ground truth
    crossmatch  distance histogram between two catalogs
    quality     mean member-to-center distance of a finished run
    invariance  compare catalogs built at two task resolutions

Exit codes: 0 success, 2 configuration error, 3 input error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as sio
from .config import STRATEGIES, EngineConfig, parse_config
from .errors import InputError, InvalidConfig, PlacementFailure, TaskFailed

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_IO = 0, 2, 3, 4


def _load_config(path, strategy=None, threads=None) -> EngineConfig:
    cfg = parse_config(Path(path).read_text(encoding="utf-8")) if path else EngineConfig()
    changes = {}
    if strategy:
        changes["strategy"] = strategy
    if threads is not None:
        changes["threads"] = threads
    return cfg.replace(**changes) if changes else cfg


def _cmd_cluster(args) -> int:
    from .pipeline import run_pipeline

    cfg = _load_config(args.config, args.strategy, args.threads)
    run_pipeline(
        cfg,
        args.input,
        args.catalog,
        args.assignments,
        workers=cfg.threads,
        seed=args.seed,
        report_path=args.report,
        measure_memory=args.measure_memory,
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .quality import generate_synthetic

    obs, truth = generate_synthetic(
        args.clusters,
        args.members,
        args.sigma,
        args.min_sep,
        (args.ra, args.dec),
        args.radius,
        args.seed,
    )
    sio.write_observations(obs, args.output)
    if args.truth:
        truth.write(args.truth)
    print(f"observations={len(obs)} clusters={truth.n_clusters}", file=sys.stderr)
    return EXIT_OK


def _cmd_crossmatch(args) -> int:
    from .quality import crossmatch

    a, b = sio.read_catalog(args.a), sio.read_catalog(args.b)
    hist = crossmatch(a, b, args.radius)
    if args.histogram:
        hist.write(args.histogram)
    else:
        sys.stdout.write(hist.to_csv())
    print(f"matched={hist.matched} unmatched={hist.unmatched} mode_bin={hist.mode_bin_start:.3f}", file=sys.stderr)
    return EXIT_OK


def _cmd_quality(args) -> int:
    from .quality import crossmatch, mean_member_distance

    obs = sio.read_observations(args.input)
    cat = sio.read_catalog(args.catalog)
    asg = sio.read_assignments(args.assignments)
    print(f"mean_member_distance_arcsec={mean_member_distance(cat, asg, obs):.6f}")
    if args.truth:
        hist = crossmatch(sio.read_catalog(args.truth), cat, args.radius)
        err = float(hist.distances.mean()) if hist.matched else float("nan")
        print(f"truth_matched={hist.matched} truth_unmatched={hist.unmatched} mean_center_error_arcsec={err:.6f}")
    return EXIT_OK


def _cmd_invariance(args) -> int:
    from .quality import partition_invariance_check

    cfg = _load_config(args.config, args.strategy)
    obs = sio.read_observations(args.input)
    rep = partition_invariance_check(obs, cfg, args.task_k_a, args.task_k_b, args.seed, cfg.threads)
    print(
        f"identical={rep.identical} clusters_a={rep.n_a} clusters_b={rep.n_b} "
        f"unmatched={rep.unmatched} max_displacement_arcsec={rep.max_displacement_arcsec:.6g}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skycat", description="Cluster sky observations into a source catalog.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="build catalog and assignments")
    c.add_argument("--config", help="INI configuration file")
    c.add_argument("--input", required=True)
    c.add_argument("--catalog", required=True)
    c.add_argument("--assignments", required=True)
    c.add_argument("--threads", type=int, help="worker count (overrides the config)")
    c.add_argument("--strategy", choices=STRATEGIES, help="overrides the config")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--report", help="write a JSON run summary here")
    c.add_argument("--measure-memory", action="store_true", help="trace peak allocation (slower)")
    c.set_defaults(func=_cmd_cluster)

    s = sub.add_parser("synth", help="generate synthetic observations")
    s.add_argument("--clusters", type=int, required=True)
    s.add_argument("--members", type=float, default=100.0, help="mean members per cluster")
    s.add_argument("--sigma", type=float, default=0.25, help="per-axis scatter, arcsec")
    s.add_argument("--min-sep", type=float, default=5.0, help="minimum center separation, arcsec")
    s.add_argument("--ra", type=float, default=180.0)
    s.add_argument("--dec", type=float, default=0.0)
    s.add_argument("--radius", type=float, default=1.0, help="region radius, degrees")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True)
    s.add_argument("--truth", help="write true centers here")
    s.set_defaults(func=_cmd_synth)

    x = sub.add_parser("crossmatch", help="nearest-neighbour distance histogram")
    x.add_argument("a")
    x.add_argument("b")
    x.add_argument("--radius", type=float, default=1.0, help="arcsec")
    x.add_argument("--histogram", help="CSV output (bin_start_arcsec,count); stdout if omitted")
    x.set_defaults(func=_cmd_crossmatch)

    q = sub.add_parser("quality", help="quality statistics of a finished run")
    q.add_argument("--input", required=True)
    q.add_argument("--catalog", required=True)
    q.add_argument("--assignments", required=True)
    q.add_argument("--truth", help="true centers, for center error")
    q.add_argument("--radius", type=float, default=1.0)
    q.set_defaults(func=_cmd_quality)

    i = sub.add_parser("invariance", help="compare two task resolutions")
    i.add_argument("--config")
    i.add_argument("--input", required=True)
    i.add_argument("--task-k-a", type=int, default=10)
    i.add_argument("--task-k-b", type=int, default=15)
    i.add_argument("--strategy", choices=STRATEGIES)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=_cmd_invariance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InvalidConfig, PlacementFailure) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TaskFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
