"""Report persistence: JSON reports, CSV series, gnuplot script emission.

File writes are atomic (write to a temp file in the target directory, then
rename). CSV numbers use repr-faithful formatting so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile

import numpy as np


def _fmt(v):
    return f"{float(v):.17g}"


def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj):
    """Recursively convert report payloads (numpy scalars and arrays,
    dataclasses, tuples) into plain JSON types."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: jsonable(v)
                for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def check_finite(obj, path="report"):
    """Reject NaN/inf anywhere in a report payload (None is allowed)."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value at {path}: {obj}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            check_finite(v, f"{path}[{i}]")


def write_report_json(path, report):
    payload = jsonable(report)
    check_finite(payload)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_grid_csv(path, solution):
    """Grid series of a junction (or single-edge) solution:
    columns edge_index, x, u."""
    lines = ["edge_index,x,u"]
    for i, g in enumerate(solution.per_edge):
        xs = g.edge.grid()
        for x, u in zip(xs, g.values):
            lines.append(f"{i},{_fmt(x)},{_fmt(u)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_sweep_csv(path, records):
    lines = ["epsilon,node_value,kirchhoff_sum"]
    for r in records:
        lines.append(f"{_fmt(r.epsilon)},{_fmt(r.node_value)},"
                     f"{_fmt(r.kirchhoff_sum)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_convergence_csv(path, rows):
    lines = ["h,error,observed_order"]
    for row in rows:
        order = "" if row.get("observed_order") is None \
            else _fmt(row["observed_order"])
        lines.append(f"{_fmt(row['h'])},{_fmt(row['error'])},{order}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_fatten_csv(path, records):
    lines = ["epsilon,h2,node_value,trace_error,reduced_residual_max,"
             "node_super_residual"]
    for r in records:
        lines.append(
            f"{_fmt(r.epsilon)},{_fmt(r.h2)},{_fmt(r.node_value)},"
            f"{_fmt(r.trace_error)},{_fmt(max(r.reduced_residuals))},"
            f"{_fmt(r.node_super_residual)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# plot scripts
# ---------------------------------------------------------------------------

_PLOT_KINDS = ("profiles", "sweep", "convergence")


def emit_plot_script(report, kind, out_dir):
    """Write a standalone gnuplot script referencing the CSVs named in the
    report; returns the script path. The script is emitted as text only."""
    csvs = report.get("csv_files", [])

    def need(suffix):
        for name in csvs:
            if name.endswith(suffix):
                return name
        raise ValueError(f"report has no {suffix} series for plot '{kind}'")

    if kind == "profiles":
        csv = need("grid.csv")
        k = report.get("k", 1)
        series = ", \\\n    ".join(
            f"'{csv}' every ::1 using ($1=={i} ? $2 : 1/0):3 with lines "
            f"title 'edge {i}'" for i in range(k))
        text = (
            "set datafile separator ','\n"
            "set xlabel 'x'\nset ylabel 'u'\n"
            "set title 'solution profiles'\n"
            f"plot {series}\n"
        )
    elif kind == "sweep":
        csv = need("sweep.csv")
        text = (
            "set datafile separator ','\n"
            "set logscale x\n"
            "set xlabel 'epsilon'\nset ylabel 'junction value'\n"
            "set title 'vanishing-diffusion sweep'\n"
            f"plot '{csv}' every ::1 using 1:2 with linespoints "
            "title 'u_eps(0)'\n"
        )
    elif kind == "convergence":
        csv = need("convergence.csv")
        fitted = report.get("fitted_order")
        title = "convergence" if fitted is None \
            else f"convergence (fitted order {fitted:.2f})"
        text = (
            "set datafile separator ','\n"
            "set logscale xy\n"
            "set xlabel 'h'\nset ylabel 'max error'\n"
            f"set title '{title}'\n"
            f"plot '{csv}' every ::1 using 1:2 with linespoints "
            "title 'error'\n"
        )
    else:
        raise ValueError(f"unknown plot kind '{kind}' "
                         f"(choose from {_PLOT_KINDS})")
    path = os.path.join(out_dir, f"plot_{kind}.gp")
    atomic_write_text(path, text)
    return path
