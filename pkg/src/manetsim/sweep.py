"""Sweep runner: the experimental grid, per-run CSV, seed-averaged aggregation."""

import dataclasses
import os
from dataclasses import dataclass, field

from . import metrics
from .scenario import ScenarioConfig, report_header, run_scenario

DEFAULT_NODE_COUNTS = (25, 50, 75, 100, 125, 150, 175, 200)
DEFAULT_CONNECTIONS = (5, 10)
DEFAULT_PROTOCOLS = ("aodv", "dsdv", "dsr")

AGGREGATE_COLUMNS = ["protocol", "nodes", "connections", "runs"]
for _m in metrics.AGGREGATE_METRICS:
    AGGREGATE_COLUMNS += [f"{_m}_mean", f"{_m}_std", f"{_m}_n"]


@dataclass
class SweepSpec:
    protocols: tuple = DEFAULT_PROTOCOLS
    node_counts: tuple = DEFAULT_NODE_COUNTS
    connection_counts: tuple = DEFAULT_CONNECTIONS
    seeds: int = 10
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def configs(self):
        """The cartesian grid, one config per run; seeds start at base.seed."""
        out = []
        for proto in self.protocols:
            for nodes in self.node_counts:
                for conns in self.connection_counts:
                    for k in range(self.seeds):
                        out.append(dataclasses.replace(
                            self.base, protocol=proto, nodes=nodes,
                            connections=conns, seed=self.base.seed + k))
        if not out:
            raise ValueError("empty sweep grid")
        return out


def _run_one(cfg):
    try:
        result = run_scenario(cfg)
        return (cfg.protocol, cfg.nodes, cfg.connections, cfg.seed), result.report, None
    except Exception as exc:  # a failed run is recorded, not fatal to the sweep
        return (cfg.protocol, cfg.nodes, cfg.connections, cfg.seed), None, repr(exc)


@dataclass
class SweepOutcome:
    rows: list  # (key, MetricsReport)
    failures: list  # (key, error string)
    aggregate_rows: list  # list of dicts keyed by AGGREGATE_COLUMNS


def run_sweep(spec, progress=None):
    """Execute the grid; failed runs are recorded and excluded from aggregates."""
    configs = spec.configs()
    rows = []
    failures = []
    for i, cfg in enumerate(configs):
        key, report, error = _run_one(cfg)
        if error is None:
            rows.append((key, report))
        else:
            failures.append((key, error))
        if progress is not None:
            progress(i + 1, len(configs), key, error)
    rows.sort(key=lambda item: item[0])
    failures.sort(key=lambda item: item[0])
    return SweepOutcome(rows, failures, aggregate_reports(rows))


def aggregate_reports(rows):
    """One seed-averaged row per (protocol, nodes, connections) cell."""
    cells = {}
    for (proto, nodes, conns, _seed), report in rows:
        cells.setdefault((proto, nodes, conns), []).append(report)
    out = []
    for key in sorted(cells):
        reports = cells[key]
        agg = metrics.aggregate(reports)
        row = {"protocol": key[0], "nodes": key[1], "connections": key[2],
               "runs": len(reports)}
        for name in metrics.AGGREGATE_METRICS:
            mean, std, n = agg[name]
            row[f"{name}_mean"] = mean
            row[f"{name}_std"] = std
            row[f"{name}_n"] = n
        out.append(row)
    return out


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def runs_csv(rows):
    lines = [metrics.CSV_COLUMNS]
    for (proto, nodes, conns, seed), report in rows:
        lines.append(",".join([proto, str(nodes), str(conns), str(seed)]
                              + report.csv_fields()))
    return "\n".join(lines) + "\n"


def aggregate_csv(agg_rows):
    lines = [",".join(AGGREGATE_COLUMNS)]
    for row in agg_rows:
        lines.append(",".join(_fmt(row[c]) for c in AGGREGATE_COLUMNS))
    return "\n".join(lines) + "\n"


def parse_aggregate_csv(text):
    """Read aggregate_csv output back into row dicts."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(AGGREGATE_COLUMNS):
        raise ValueError("not an aggregate CSV (header mismatch)")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        row = {}
        for col, part in zip(AGGREGATE_COLUMNS, parts):
            if col == "protocol":
                row[col] = part
            elif col in ("nodes", "connections", "runs") or col.endswith("_n"):
                row[col] = int(part)
            else:
                row[col] = float(part) if part else None
        rows.append(row)
    return rows


def write_outputs(outcome, spec, out_dir):
    """runs.csv, aggregate.csv, report_header.txt (and failures.csv when any)."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "runs.csv"), "w") as fh:
        fh.write(runs_csv(outcome.rows))
    with open(os.path.join(out_dir, "aggregate.csv"), "w") as fh:
        fh.write(aggregate_csv(outcome.aggregate_rows))
    with open(os.path.join(out_dir, "report_header.txt"), "w") as fh:
        fh.write(report_header(spec.base))
        fh.write(f"sweep_protocols = {','.join(spec.protocols)}\n")
        fh.write(f"sweep_nodes = {','.join(str(n) for n in spec.node_counts)}\n")
        fh.write(f"sweep_connections = {','.join(str(c) for c in spec.connection_counts)}\n")
        fh.write(f"sweep_seeds = {spec.seeds}\n")
    if outcome.failures:
        with open(os.path.join(out_dir, "failures.csv"), "w") as fh:
            fh.write("protocol,nodes,connections,seed,error\n")
            for (proto, nodes, conns, seed), error in outcome.failures:
                err = error.replace(",", ";")
                fh.write(f"{proto},{nodes},{conns},{seed},{err}\n")
