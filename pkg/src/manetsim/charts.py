"""Comparison charts and the qualitative summary table from an aggregate CSV."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

METRIC_LABELS = {
    "pdf": ("Packet delivery fraction (%)", "pdf"),
    "avg_delay": ("Average end-to-end delay (s)", "delay"),
    "nrl": ("Normalized routing load", "nrl"),
    "throughput_kbps": ("Throughput (kbit/s)", "throughput"),
}

SERIES_STYLE = {
    "aodv": dict(color="#1f77b4", marker="o"),
    "dsdv": dict(color="#d62728", marker="s"),
    "dsr": dict(color="#2ca02c", marker="^"),
}

# Byte-stable SVG output: fixed hash salt, no embedded creation date.
matplotlib.rcParams["svg.hashsalt"] = "manetsim"


def render_report(agg_rows, out_dir, error_bars=True):
    """Write one SVG per (metric, connections) pair plus summary.txt; returns paths."""
    if not agg_rows:
        raise ValueError("no aggregated rows")
    os.makedirs(out_dir, exist_ok=True)
    connection_values = sorted({row["connections"] for row in agg_rows})
    protocols = sorted({row["protocol"] for row in agg_rows})
    written = []
    for metric, (label, stem) in METRIC_LABELS.items():
        for conns in connection_values:
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            for proto in protocols:
                pts = sorted((row["nodes"], row.get(f"{metric}_mean"),
                              row.get(f"{metric}_std"))
                             for row in agg_rows
                             if row["protocol"] == proto and row["connections"] == conns)
                xs = [p[0] for p in pts if p[1] is not None]
                ys = [p[1] for p in pts if p[1] is not None]
                errs = [p[2] if p[2] is not None else 0.0
                        for p in pts if p[1] is not None]
                if not xs:
                    continue
                style = SERIES_STYLE.get(proto, dict(marker="x"))
                if error_bars:
                    ax.errorbar(xs, ys, yerr=errs, label=proto.upper(), capsize=3,
                                **style)
                else:
                    ax.plot(xs, ys, label=proto.upper(), **style)
            ax.set_xlabel("Number of nodes")
            ax.set_ylabel(label)
            ax.set_title(f"{label} vs. number of nodes ({conns} connections)")
            ax.grid(True, alpha=0.3)
            ax.legend()
            path = os.path.join(out_dir, f"{stem}_{conns}conn.svg")
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    summary = summary_table(agg_rows)
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write(summary)
    written.append(summary_path)
    return written


def _band_mean(agg_rows, proto, conns, metric, band):
    vals = [row[f"{metric}_mean"] for row in agg_rows
            if row["protocol"] == proto and row["connections"] == conns
            and row["nodes"] in band and row[f"{metric}_mean"] is not None]
    return sum(vals) / len(vals) if vals else None


def summary_table(agg_rows):
    """Qualitative comparison computed from the data: who wins where."""
    protocols = sorted({row["protocol"] for row in agg_rows})
    connection_values = sorted({row["connections"] for row in agg_rows})
    node_counts = sorted({row["nodes"] for row in agg_rows})
    half = len(node_counts) // 2 or 1
    low_band = set(node_counts[:half])
    high_band = set(node_counts[half:]) or low_band
    higher_better = {"pdf": True, "throughput_kbps": True,
                     "avg_delay": False, "nrl": False}

    lines = ["qualitative comparison (computed from aggregate means)", ""]
    for conns in connection_values:
        lines.append(f"-- {conns} connections --")
        header = f"{'metric':<18}{'band':<22}" + "".join(f"{p.upper():>12}" for p in protocols)
        lines.append(header)
        for metric in ("pdf", "avg_delay", "nrl", "throughput_kbps"):
            for band, band_name in ((low_band, f"nodes {min(low_band)}-{max(low_band)}"),
                                    (high_band, f"nodes {min(high_band)}-{max(high_band)}")):
                vals = {p: _band_mean(agg_rows, p, conns, metric, band)
                        for p in protocols}
                present = {p: v for p, v in vals.items() if v is not None}
                if not present:
                    continue
                best = (max if higher_better[metric] else min)(present, key=present.get)
                cells = ""
                for p in protocols:
                    v = vals[p]
                    mark = "*" if p == best else " "
                    cells += f"{v:>11.3f}{mark}" if v is not None else f"{'-':>12}"
                lines.append(f"{metric:<18}{band_name:<22}{cells}")
        lines.append("")
    lines.append("* best value in band (higher is better for pdf/throughput,")
    lines.append("  lower is better for delay/nrl)")
    return "\n".join(lines) + "\n"
