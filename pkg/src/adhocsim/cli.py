"""Command line: ``run``, ``sweep``, ``analytics`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
from pathlib import Path

from . import analytics
from .mobility import HighwayConfig
from .scenario import ConfigError, ScenarioConfig, parse_kv, run_scenario
from .sweep import (SweepSpec, check_dir_writable, check_writable, csv_text, run_sweep,
                    write_csv, write_plot_data, write_summary)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _csv_list(conv):
    def parse(text: str):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"malformed list {text!r}") from None
    return parse


def _scenario_args(p: argparse.ArgumentParser, lists: bool) -> None:
    conv = _csv_list if lists else (lambda c: c)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--protocol", type=conv(str))
    p.add_argument("--mac", type=conv(str))
    p.add_argument("--nodes", type=conv(int))
    p.add_argument("--speed", type=conv(float))
    p.add_argument("--seed", type=int)
    p.add_argument("--sim-time", type=float)
    p.add_argument("--flows", type=int)
    p.add_argument("--out", help="output file (stdout if omitted)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adhocsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and print its CSV row")
    _scenario_args(run, lists=False)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="extra config key (e.g. aodv.ttl_start=2)")

    sw = sub.add_parser("sweep", help="run a protocol x MAC x nodes x speed grid")
    _scenario_args(sw, lists=True)
    sw.add_argument("--reps", type=int, help="replications per cell")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--summary", help="per-cell mean/stderr CSV")
    sw.add_argument("--plot-dir", help="directory for per-metric, per-panel series")
    sw.add_argument("--full-scale", action="store_true",
                    help="use the config file's full_scale_sim_time")
    sw.add_argument("--quiet", action="store_true")

    an = sub.add_parser("analytics", help="closed-form connectivity and link-duration curves")
    an.add_argument("--range", type=float, default=250.0)
    an.add_argument("--out", help="directory for connectivity.csv and link_duration.csv")

    va = sub.add_parser("validate", help="fit highway segment occupancy to the Poisson model")
    va.add_argument("--lambda", dest="lam", type=float, default=0.1, help="arrivals per second per lane")
    va.add_argument("--speed", type=float, default=20.0)
    va.add_argument("--segment", type=float, default=400.0, help="segment length (m)")
    va.add_argument("--samples", type=int, default=25_000, help="observation times per lane")
    va.add_argument("--lanes-per-direction", type=int, default=2)
    va.add_argument("--seed", type=int, default=1)
    return ap


def _scenario_from_args(args) -> ScenarioConfig:
    mapping = {}
    if args.config:
        mapping.update(parse_kv(Path(args.config).read_text()))
    for attr, key in (("protocol", "protocol"), ("mac", "mac"), ("nodes", "nodes"),
                      ("speed", "speed"), ("seed", "seed"), ("sim_time", "sim_time"),
                      ("flows", "flows")):
        v = getattr(args, attr)
        if v is not None:
            mapping[key] = str(v)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected KEY=VALUE")
        mapping[key.strip()] = value.strip()
    return ScenarioConfig.from_mapping(mapping).validate()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _scenario_from_args(args)
    if args.out:
        check_writable(args.out)
    row = run_scenario(cfg)
    _emit(csv_text([row]), args.out)
    return EXIT_OK if row.status == "ok" else EXIT_FAIL


def cmd_sweep(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    spec = SweepSpec.from_text(text, full_scale=args.full_scale)
    changes = {}
    for attr, key in (("protocol", "protocols"), ("mac", "macs"), ("nodes", "nodes"),
                      ("speed", "speeds")):
        if getattr(args, attr):
            changes[key] = getattr(args, attr)
    if args.reps is not None:
        changes["replications"] = args.reps
    if args.seed is not None:
        changes["master_seed"] = args.seed
    base = spec.base
    if args.sim_time is not None:
        base = dataclasses.replace(base, sim_time=args.sim_time)
    if args.flows is not None:
        base = dataclasses.replace(base, flows=args.flows)
    spec = dataclasses.replace(spec, base=base, **changes)
    cells = spec.cells()   # validates every cell before anything runs
    for path in (args.out, args.summary):
        if path:
            check_writable(path)
    if args.plot_dir:
        check_dir_writable(args.plot_dir)

    done = [0]

    def progress(row):
        done[0] += 1
        if not args.quiet:
            print(f"[{done[0]}/{len(cells)}] {row.scenario_id} {row.status}", file=sys.stderr)

    rows, summary = run_sweep(spec, workers=args.workers, progress=progress)
    if args.out:
        write_csv(rows, args.out)
    else:
        sys.stdout.write(csv_text(rows))
    if args.summary:
        write_summary(summary, args.summary)
    if args.plot_dir:
        write_plot_data(rows, args.plot_dir)
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_FAIL


def _dict_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


def cmd_analytics(args) -> int:
    if args.range <= 0:
        raise ConfigError("range", "must be positive")
    densities = [k / 1000 for k in range(0, 41)]
    conn = analytics.connectivity_curve(densities, args.range)
    dur = analytics.duration_curve([2.0, 7.0, 15.0, 30.0], args.range)
    if args.out:
        check_dir_writable(args.out)
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "connectivity.csv").write_text(_dict_csv(conn))
        (d / "link_duration.csv").write_text(_dict_csv(dur))
    else:
        sys.stdout.write(_dict_csv(conn))
        sys.stdout.write("\n")
        sys.stdout.write(_dict_csv(dur))
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        hw = HighwayConfig(road_length=max(1000.0, 2 * args.segment), arrival_rate=args.lam,
                           speed=args.speed, lanes_per_direction=args.lanes_per_direction)
    except ValueError as exc:
        raise ConfigError("highway", str(exc)) from None
    if args.segment <= 0:
        raise ConfigError("segment", "must be positive")
    start = (hw.road_length - args.segment) / 2
    counts = analytics.sample_occupancy(hw, start, args.segment, args.samples, args.seed)
    phi = analytics.steady_state_phi(args.lam, args.speed, args.segment)
    rep = analytics.validate_occupancy(counts, phi)
    print(f"status      {rep.status}")
    print(f"samples     {rep.samples}")
    print(f"phi         {phi:.6g}")
    if rep.mean is not None:
        print(f"mean        {rep.mean:.6g}  (error {100 * rep.mean_error:.3f}%)")
        print(f"var/mean    {rep.dispersion:.6g}")
        if rep.chi2 is not None:
            print(f"chi2        {rep.chi2:.4g} on {rep.dof} dof (p = {rep.p_value:.4g})")
    return EXIT_FAIL if rep.status == analytics.FAIL else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "analytics": cmd_analytics,
            "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
