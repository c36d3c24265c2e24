"""Command-line front end: run, sweep, report, trace-metrics."""

import argparse
import os
import sys

from . import charts, metrics, sweep as sweep_mod
from .engine import us_to_str
from .scenario import (ParseError, ScenarioConfig, ValidationError, parse_config,
                       report_header, run_scenario)


def _parse_int_list(text):
    """Comma lists and a..b:step ranges (inclusive of b when aligned)."""
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ".." in chunk:
            lo, _, rest = chunk.partition("..")
            hi, _, step = rest.partition(":")
            step = int(step) if step else 1
            lo, hi = int(lo), int(hi)
            if step <= 0 or hi < lo:
                raise ValueError(f"bad range {chunk!r}")
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(chunk))
    if not out:
        raise ValueError(f"empty list {text!r}")
    return out


def _default_seed():
    env = os.environ.get("MANETSIM_SEED")
    return int(env) if env else None


def _print_metrics(report):
    pdf = "absent" if report.pdf is None else f"{report.pdf:.4f} %"
    delay = "absent" if report.avg_delay is None else f"{report.avg_delay * 1000:.4f} ms"
    nrl = "absent" if report.nrl is None else f"{report.nrl:.4f}"
    print(f"packet delivery fraction : {pdf}")
    print(f"average end-to-end delay : {delay}")
    print(f"normalized routing load  : {nrl}")
    print(f"throughput               : {report.throughput_kbps:.4f} kbit/s "
          f"({report.throughput_pps:.4f} pkt/s)")
    print(f"sent {report.sent}  received {report.received}  "
          f"routing_tx {report.routing_tx}  in_flight {report.in_flight}")


def cmd_run(args):
    if not os.path.exists(args.config):
        print(f"config not found: {args.config}", file=sys.stderr)
        return 2
    with open(args.config) as fh:
        text = fh.read()
    try:
        cfg = parse_config(text)
    except (ParseError, ValidationError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 1
    env_seed = _default_seed()
    if env_seed is not None and "seed" not in getattr(cfg, "explicit_keys", set()):
        cfg.seed = env_seed
    result = run_scenario(cfg, keep_trace=args.trace is not None)
    sys.stdout.write(report_header(cfg))
    _print_metrics(result.report)
    if args.trace is not None:
        if args.trace == "-":
            sys.stdout.write(result.trace_text)
        else:
            with open(args.trace, "w") as fh:
                fh.write(result.trace_text)
    if args.metrics is not None:
        with open(args.metrics, "w") as fh:
            fh.write(metrics.CSV_COLUMNS + "\n")
            fh.write(result.csv_row() + "\n")
    return 0


def cmd_sweep(args):
    base = ScenarioConfig()
    if args.config:
        if not os.path.exists(args.config):
            print(f"config not found: {args.config}", file=sys.stderr)
            return 2
        with open(args.config) as fh:
            try:
                base = parse_config(fh.read())
            except (ParseError, ValidationError) as exc:
                print(f"bad config: {exc}", file=sys.stderr)
                return 1
    env_seed = _default_seed()
    if env_seed is not None and "seed" not in getattr(base, "explicit_keys", set()):
        base.seed = env_seed
    try:
        spec = sweep_mod.SweepSpec(
            protocols=tuple(p.strip().lower() for p in args.protocols.split(",") if p.strip()),
            node_counts=tuple(_parse_int_list(args.nodes)),
            connection_counts=tuple(_parse_int_list(args.connections)),
            seeds=args.seeds,
            base=base,
        )
        if not spec.protocols:
            raise ValueError("no protocols")
    except ValueError as exc:
        print(f"bad sweep spec: {exc}", file=sys.stderr)
        return 1

    total = (len(spec.protocols) * len(spec.node_counts)
             * len(spec.connection_counts) * spec.seeds)
    def progress(i, n, key, error):
        status = "FAIL" if error else "ok"
        print(f"[{i}/{n}] {key[0]} nodes={key[1]} conns={key[2]} seed={key[3]} {status}",
              flush=True)

    outcome = sweep_mod.run_sweep(spec, progress=progress if args.verbose else None)
    sweep_mod.write_outputs(outcome, spec, args.out)
    print(f"{len(outcome.rows)}/{total} runs ok, outputs in {args.out}")
    if outcome.failures:
        for key, error in outcome.failures:
            print(f"failed: {key}: {error}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args):
    path = os.path.join(args.in_dir, "aggregate.csv")
    if not os.path.exists(path):
        print(f"no aggregate CSV at {path}", file=sys.stderr)
        return 3
    with open(path) as fh:
        try:
            rows = sweep_mod.parse_aggregate_csv(fh.read())
        except ValueError as exc:
            print(f"bad aggregate CSV: {exc}", file=sys.stderr)
            return 3
    if not rows:
        print("no aggregated rows", file=sys.stderr)
        return 3
    written = charts.render_report(rows, args.out, error_bars=not args.no_error_bars)
    for path in written:
        print(path)
    return 0


def cmd_trace_metrics(args):
    if args.trace == "-":
        lines = sys.stdin.read().splitlines()
    else:
        if not os.path.exists(args.trace):
            print(f"trace not found: {args.trace}", file=sys.stderr)
            return 2
        with open(args.trace) as fh:
            lines = fh.read().splitlines()
    try:
        report = metrics.recompute_from_trace(lines, args.packet_size, args.window,
                                              nrl_mode=args.nrl_mode)
    except metrics.TraceParseError as exc:
        print(f"malformed trace: {exc}", file=sys.stderr)
        return 4
    _print_metrics(report)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="manetsim",
        description="Deterministic MANET routing simulator (AODV, DSDV, DSR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", required=True, help="key=value scenario file")
    p_run.add_argument("--trace", help="trace output path, or - for stdout")
    p_run.add_argument("--metrics", help="one-row CSV output path")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the experimental grid")
    p_sweep.add_argument("--protocols", default="aodv,dsdv,dsr")
    p_sweep.add_argument("--nodes", default="25..200:25",
                         help="comma list or a..b:step range")
    p_sweep.add_argument("--connections", default="5,10")
    p_sweep.add_argument("--seeds", type=int, default=10)
    p_sweep.add_argument("--config", help="base scenario file")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_rep = sub.add_parser("report", help="render charts from a sweep directory")
    p_rep.add_argument("--in", dest="in_dir", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--no-error-bars", action="store_true")
    p_rep.set_defaults(fn=cmd_report)

    p_tm = sub.add_parser("trace-metrics", help="recompute metrics from a trace file")
    p_tm.add_argument("--trace", required=True, help="trace path, or - for stdin")
    p_tm.add_argument("--packet-size", type=int, default=512)
    p_tm.add_argument("--window", type=float, default=100.0,
                      help="throughput window in seconds (the run's sim_time)")
    p_tm.add_argument("--nrl-mode", choices=("perhop", "originated"), default="perhop")
    p_tm.set_defaults(fn=cmd_trace_metrics)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
