#!/usr/bin/env python3
"""Recompute study statistics from records.csv with scipy and compare to summary.json."""

import argparse
import csv
import hashlib
import json
import math
import sys

from scipy import stats


def load_records(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["delta"] = float(r["delta"])
        r["theta_hat"] = float(r["theta_hat"])
        r["fisher_info"] = float(r["fisher_info"])
        r["normalized_error"] = float(r["normalized_error"])
        r["blow_up"] = r["blow_up"] == "1"
    return rows


def close(a, b, tol):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dir")
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    summary = json.load(open(f"{args.dir}/summary.json"))
    meta = summary["metadata"]
    config = json.loads(meta["canonical_config"])
    theta = config["model"]["theta"]
    records = load_records(f"{args.dir}/records.csv")
    problems = []

    digest = hashlib.sha256(meta["canonical_config"].encode()).hexdigest()
    if digest != meta["config_hash"]:
        problems.append(f"config hash {meta['config_hash']} != recomputed {digest}")

    for d in summary["deltas"]:
        delta = d["delta"]
        ok = [r for r in records
              if r["delta"] == delta and not r["blow_up"] and math.isfinite(r["theta_hat"])]
        if len(ok) != d["replications"] - d["failures"]:
            problems.append(f"delta={delta}: success count mismatch")
        if not ok:
            continue
        rmse = math.sqrt(sum((r["theta_hat"] - theta) ** 2 for r in ok) / len(ok))
        if not close(rmse, d["rmse"], args.tol):
            problems.append(f"delta={delta}: rmse {d['rmse']} vs {rmse}")
        for level, cov in d["coverage"].items():
            q = stats.norm.ppf(0.5 + float(level) / 2)
            hits = sum(abs(r["theta_hat"] - theta) <= q / math.sqrt(r["fisher_info"]) for r in ok)
            if not close(hits / len(ok), cov, 1e-12):
                problems.append(f"delta={delta}: coverage[{level}] {cov} vs {hits / len(ok)}")
        if len(ok) >= 20:
            ks = stats.kstest([r["normalized_error"] for r in ok], "norm", method="asymp")
            if not close(ks.statistic, d["ks_statistic"], args.tol):
                problems.append(f"delta={delta}: KS statistic {d['ks_statistic']} vs {ks.statistic}")
            if not close(ks.pvalue, d["ks_p_value"], 1e-7):
                problems.append(f"delta={delta}: KS p-value {d['ks_p_value']} vs {ks.pvalue}")

    for p in problems:
        print("MISMATCH", p)
    print(f"checked {len(summary['deltas'])} deltas, {len(records)} records: "
          f"{'ok' if not problems else 'FAILED'}")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
