#!/usr/bin/env python3
"""Summarize benchmark CSV produced by `obidos bench`.

Averages every metric over runs per (experiment, mode, param) and reports a
least-squares fit of each metric against the parameter per (experiment, mode).
Exits non-zero on a malformed file.
"""
import argparse
import csv
import statistics
import sys
from collections import defaultdict

HEADER = ["experiment", "mode", "param", "metadata_bytes", "blob_bytes",
          "requests", "elapsed_ms", "run"]
METRICS = ["metadata_bytes", "blob_bytes", "requests", "elapsed_ms"]


def load(paths):
    rows = []
    for path in paths:
        with (sys.stdin if path == "-" else open(path, newline="")) as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(HEADER):
                    raise ValueError(f"{path}:{lineno}: expected {len(HEADER)} fields")
                row = dict(zip(HEADER, rec))
                try:
                    row["param"] = float(row["param"])
                    row["run"] = int(row["run"])
                    for m in METRICS:
                        row[m] = float(row[m])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
                rows.append(row)
    return rows


def fit(xs, ys):
    """Slope, intercept and R^2; R^2 is 1.0 for a constant series."""
    if len(set(xs)) < 2:
        return None
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    total = sum((y - mean) ** 2 for y in ys)
    resid = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if total == 0 else 1.0 - resid / total
    return slope, intercept, r2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", nargs="+", help="bench CSV files ('-' for stdin)")
    ap.add_argument("--metric", choices=METRICS, default="metadata_bytes",
                    help="metric used for the per-mode fit")
    args = ap.parse_args()

    try:
        rows = load(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not rows:
        print("error: no data rows", file=sys.stderr)
        return 1

    groups = defaultdict(list)
    for r in rows:
        groups[(r["experiment"], r["mode"], r["param"])].append(r)

    print("experiment,mode,param,runs," + ",".join(f"mean_{m}" for m in METRICS))
    series = defaultdict(list)
    for (exp, mode, param), rs in sorted(groups.items()):
        means = {m: statistics.fmean(r[m] for r in rs) for m in METRICS}
        series[(exp, mode)].append((param, means[args.metric]))
        print(f"{exp},{mode},{param:g},{len(rs)}," +
              ",".join(f"{means[m]:.3f}" for m in METRICS))

    print()
    print(f"fit of {args.metric} against param")
    for (exp, mode), pts in sorted(series.items()):
        result = fit([p for p, _ in pts], [v for _, v in pts])
        if result is None:
            print(f"{exp},{mode}: single parameter, no fit")
            continue
        slope, intercept, r2 = result
        print(f"{exp},{mode}: slope={slope:.4f} intercept={intercept:.2f} r2={r2:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
