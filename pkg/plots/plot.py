#!/usr/bin/env python3
"""Render figures from the experiment runner's CSV outputs.

Usage: python plots/plot.py --spec <spec.json>

The spec names the input CSV(s), the figure kind, the output image path,
and axis options:

    {"kind": "threshold_heatmap", "csv": "threshold.csv",
     "out": "threshold.png", "title": "..."}

Kinds: threshold_heatmap, steps_vs_lambda, twowell_scaling, lle_traces,
observer_table.  Every scientific number is read from the CSV; this tool
computes nothing beyond medians and quantiles.  Inputs are never modified.

Exit codes: 0 on success (including empty-but-valid input, which produces
empty axes), 3 on a schema mismatch, naming the offending column.
"""

import argparse
import csv
import json
import math
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = "1"

REQUIRED_COLUMNS = {
    "threshold_heatmap": ["g", "lambda", "T", "steps"],
    "steps_vs_lambda": ["lambda", "steps", "T"],
    "twowell_scaling": ["T", "seed", "steps"],
    "lle_traces": ["T", "seed", "iteration", "lle"],
    "observer_table": ["flow", "mode", "lambda", "steps", "converged"],
}


class SchemaError(ValueError):
    pass


def load_rows(path, kind):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "schema_version" not in fields:
            raise SchemaError("schema_version")
        for col in REQUIRED_COLUMNS[kind]:
            if col not in fields:
                raise SchemaError(col)
        rows = list(reader)
    for row in rows:
        if row["schema_version"] != SUPPORTED_SCHEMA:
            raise SchemaError("schema_version")
    return rows


def _f(row, col):
    return float(row[col])


def plot_threshold_heatmap(rows, ax, spec):
    """Median steps on a log color scale over the (lambda, log T) plane."""
    if not rows:
        return
    cells = {}
    for row in rows:
        cells.setdefault((_f(row, "g"), _f(row, "T")), []).append(
            (_f(row, "lambda"), _f(row, "steps"))
        )
    gs = sorted({g for g, _ in cells})
    Ts = sorted({T for _, T in cells})
    med_steps = np.full((len(Ts), len(gs)), np.nan)
    med_lam = np.full(len(gs), np.nan)
    for j, g in enumerate(gs):
        lams = [lam for T in Ts for lam, _ in cells.get((g, T), [])]
        med_lam[j] = np.median(lams)
        for i, T in enumerate(Ts):
            vals = [s for _, s in cells.get((g, T), []) if s >= 0]
            if vals:
                med_steps[i, j] = np.median(vals)
    mesh = ax.pcolormesh(
        med_lam,
        np.log10(Ts),
        np.log10(np.maximum(med_steps, 1.0)),
        shading="nearest",
        cmap=spec.get("cmap", "RdYlBu_r"),
    )
    ax.figure.colorbar(mesh, ax=ax, label="log10 median steps")
    ax.axvline(0.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("largest Lyapunov exponent")
    ax.set_ylabel("log10 T")


def plot_steps_vs_lambda(rows, ax, spec):
    if not rows:
        return
    T_sel = spec.get("T")
    pts = [
        (_f(r, "lambda"), _f(r, "steps"))
        for r in rows
        if _f(r, "steps") >= 0 and (T_sel is None or _f(r, "T") == float(T_sel))
    ]
    if not pts:
        return
    lam, steps = zip(*pts)
    ax.scatter(lam, steps, s=14, alpha=0.7, edgecolor="none")
    ax.axvline(0.0, color="k", lw=0.8, ls="--")
    if spec.get("log_y", True):
        ax.set_yscale("log")
    ax.set_xlabel("largest Lyapunov exponent")
    ax.set_ylabel("steps to converge")


def plot_twowell_scaling(rows, ax, spec):
    if not rows:
        return
    by_T = {}
    for row in rows:
        if _f(row, "steps") >= 0:
            by_T.setdefault(_f(row, "T"), []).append(_f(row, "steps"))
    Ts = sorted(by_T)
    med = [np.median(by_T[T]) for T in Ts]
    lo = [min(by_T[T]) for T in Ts]
    hi = [max(by_T[T]) for T in Ts]
    ax.fill_between(Ts, lo, hi, alpha=0.25, label="min-max over seeds")
    ax.plot(Ts, med, marker="o", label="median steps")
    ax.set_xscale("log")
    ax.set_xlabel("sequence length T")
    ax.set_ylabel("steps to converge")
    ax.legend()


def plot_lle_traces(rows, ax, spec):
    if not rows:
        return
    series = {}
    for row in rows:
        key = (_f(row, "T"), _f(row, "seed"))
        series.setdefault(key, []).append((_f(row, "iteration"), _f(row, "lle")))
    for pts in series.values():
        pts.sort()
        its, lles = zip(*pts)
        ax.plot(its, lles, alpha=0.5, lw=1.0)
    ax.axhline(0.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("iteration")
    ax.set_ylabel("iterate LLE")


def plot_observer_table(rows, ax, spec):
    ax.axis("off")
    if not rows:
        return
    header = ["flow", "mode", "lambda", "steps", "converged"]
    body = [[r["flow"], r["mode"], f"{_f(r, 'lambda'):+.3f}", r["steps"],
             r["converged"]] for r in rows]
    table = ax.table(cellText=body, colLabels=header, loc="center")
    table.scale(1.0, 1.4)


KINDS = {
    "threshold_heatmap": plot_threshold_heatmap,
    "steps_vs_lambda": plot_steps_vs_lambda,
    "twowell_scaling": plot_twowell_scaling,
    "lle_traces": plot_lle_traces,
    "observer_table": plot_observer_table,
}


def render(spec: dict) -> str:
    kind = spec["kind"]
    if kind not in KINDS:
        raise SchemaError(f"unknown figure kind {kind!r}")
    rows = load_rows(spec["csv"], kind)
    fig, ax = plt.subplots(figsize=spec.get("figsize", (7, 4.5)))
    KINDS[kind](rows, ax, spec)
    if spec.get("title"):
        ax.set_title(spec["title"])
    out = spec["out"]
    fig.savefig(out, dpi=spec.get("dpi", 130), bbox_inches="tight")
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spec", required=True)
    args = parser.parse_args(argv)
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = json.load(fh)
        out = render(spec)
    except SchemaError as err:
        print(f"schema mismatch: column {err}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError, KeyError) as err:
        print(f"bad spec: {err}", file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
