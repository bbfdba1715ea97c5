"""CSV, summary table and SVG chart emission for sweep results."""

import csv
import json
import math
import os

import numpy as np

from .sweep import BASELINE, PRECISIONS, SweepRow, aggregate

CSV_COLUMNS = (
    "schedule", "sparsity", "seed",
    "auc", "auc_q8", "auc_q16",
    "size", "size_q8", "size_q16",
    "t_us", "t_q8_us", "t_q16_us",
)
_FIELDS = {
    "auc": ("auc", "f32"), "auc_q8": ("auc", "q8"), "auc_q16": ("auc", "q16"),
    "size": ("size_bytes", "f32"), "size_q8": ("size_bytes", "q8"), "size_q16": ("size_bytes", "q16"),
    "t_us": ("infer_mean_us", "f32"), "t_q8_us": ("infer_mean_us", "q8"), "t_q16_us": ("infer_mean_us", "q16"),
}
PRECISION_LABELS = {"f32": "float32", "q8": "8-bit", "q16": "16-bit"}


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(round(value, 6)) if abs(value) < 1e6 else str(int(round(value)))
    return str(value)


def emit_report(rows, path):
    """Write one CSV line per row with the twelve result columns."""
    if not rows:
        raise ValueError("no rows to report")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            vals = [r.schedule, _fmt(r.sparsity), r.seed]
            for col in CSV_COLUMNS[3:]:
                attr, p = _FIELDS[col]
                vals.append(_fmt(getattr(r, attr).get(p)))
            w.writerow(vals)
    return path


def read_report(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = SweepRow(rec["schedule"], float(rec["sparsity"]), int(rec["seed"]))
            for col in CSV_COLUMNS[3:]:
                attr, p = _FIELDS[col]
                getattr(row, attr)[p] = float(rec[col]) if rec[col] != "" else math.nan
            rows.append(row)
    return rows


def write_rows_json(rows, path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in rows], fh, indent=1, allow_nan=True)


def read_rows_json(path):
    with open(path) as fh:
        return [SweepRow.from_dict(d) for d in json.load(fh)]


def emit_summary(rows, path, precisions=PRECISIONS):
    """Markdown table of ``mean ± std`` per (schedule, sparsity) cell."""
    agg = aggregate(rows, precisions)
    cols = [c for c in CSV_COLUMNS[3:] if _FIELDS[c][1] in precisions]
    lines = ["| schedule | sparsity (%) | runs | " + " | ".join(cols) + " |", "|" + "---|" * (3 + len(cols))]
    for e in agg:
        cells = []
        for c in cols:
            mean, std = e[c], e[c + "_std"]
            if c.startswith("auc"):
                cells.append(f"{mean:.3f} ± {std:.3f}")
            elif c.startswith("size"):
                cells.append(f"{mean / 1024:.1f} ± {std / 1024:.1f} KiB")
            else:
                cells.append(f"{mean:.1f} ± {std:.1f}")
        lines.append(f"| {e['schedule']} | {100 * e['sparsity']:g} | {e['runs']} | " + " | ".join(cells) + " |")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


CHARTS = (
    ("auc", "auc.svg", "test AUC", 1.0),
    ("size", "size.svg", "compressed size (KiB)", 1 / 1024),
    ("t_us", "time.svg", "single-sample latency (µs)", 1.0),
)


def _series_key(metric, p):
    if p == "f32":
        return metric
    return f"t_{p}_us" if metric == "t_us" else f"{metric}_{p}"


def emit_plots(rows, out_dir, precisions=None):
    """Three SVG line charts (AUC, size, latency against sparsity).

    Each chart has one panel per schedule and one series per precision with
    a shaded ±std band. Series carry an SVG id ``series-<schedule>-<precision>``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not rows:
        raise ValueError("no rows to plot")
    precisions = precisions or [p for p in PRECISIONS if any(p in r.auc for r in rows)]
    agg = aggregate(rows, precisions)
    schedules = sorted({e["schedule"] for e in agg if e["schedule"] != BASELINE})
    base = [e for e in agg if e["schedule"] == BASELINE]
    grid = sorted({e["sparsity"] for e in agg})
    pos = {s: i for i, s in enumerate(grid)}
    paths = []
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "edgepress", "font.size": 8}):
        for metric, fname, ylabel, factor in CHARTS:
            fig, axes = plt.subplots(1, max(1, len(schedules)), figsize=(5.5 * max(1, len(schedules)), 3.6),
                                     squeeze=False, sharey=True)
            for ax, schedule in zip(axes[0], schedules or [BASELINE]):
                cells = sorted(base + [e for e in agg if e["schedule"] == schedule], key=lambda e: e["sparsity"])
                x = np.array([pos[e["sparsity"]] for e in cells])
                for p in precisions:
                    key = _series_key(metric, p)
                    mean = np.array([e[key] for e in cells]) * factor
                    std = np.array([e[key + "_std"] for e in cells]) * factor
                    (line,) = ax.plot(x, mean, marker="o", markersize=3, label=PRECISION_LABELS[p])
                    line.set_gid(f"series-{schedule}-{p}")
                    band = ax.fill_between(x, mean - std, mean + std, alpha=0.2, color=line.get_color())
                    band.set_gid(f"band-{schedule}-{p}")
                ax.set_xticks(range(len(grid)))
                ax.set_xticklabels([f"{100 * s:g}" for s in grid], rotation=60)
                ax.set_xlabel("sparsity (%)")
                ax.set_title(f"{schedule} schedule")
                ax.grid(alpha=0.3)
                ax.legend()
            axes[0][0].set_ylabel(ylabel)
            fig.tight_layout()
            path = os.path.join(out_dir, fname)
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths


def emit_all(rows, out_dir, config=None):
    """results.csv, rows.json, summary.md, the three charts and the resolved config."""
    os.makedirs(out_dir, exist_ok=True)
    outputs = {
        "csv": emit_report(rows, os.path.join(out_dir, "results.csv")),
        "summary": emit_summary(rows, os.path.join(out_dir, "summary.md"),
                                config.precisions if config else PRECISIONS),
    }
    write_rows_json(rows, os.path.join(out_dir, "rows.json"))
    outputs["plots"] = emit_plots(rows, out_dir, list(config.precisions) if config else None)
    if config is not None:
        with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
            fh.write(config.to_json())
    errors = [r.to_dict() for r in rows if not r.ok]
    if errors:
        with open(os.path.join(out_dir, "errors.json"), "w") as fh:
            json.dump(errors, fh, indent=1)
    return outputs
