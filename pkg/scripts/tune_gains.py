#!/usr/bin/env python3
"""Grid sweep that produced the shipped PI gains.

Searches kp in [0.5, 10] (step 0.1) and ki in [0, 50] (step 0.5) on the
tau = 0.15 s first-order plant, keeps pairs without overshoot and picks the
one minimising |rise - 0.254| + |settling - 0.451|.

    python3 scripts/tune_gains.py [--out sweep.csv]
"""

import argparse
import csv
import json
import time

from follower.control import DEFAULT_GAINS, tune_gains


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="write every evaluated pair to this CSV")
    ap.add_argument("--tau", type=float, default=0.15, help="plant time constant, s")
    args = ap.parse_args()

    t0 = time.perf_counter()
    best, metrics, table = tune_gains(plant_tau=args.tau)
    elapsed = time.perf_counter() - t0

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kp", "ki", "rise_s", "settling_s", "overshoot_pct", "cost"])
            for kp, ki, m, cost in table:
                w.writerow([kp, ki, m.rise_time, m.settling_time, m.overshoot_pct, cost])

    eligible = sum(1 for row in table if row[3] != float("inf"))
    print(json.dumps({
        "best_kp": best.kp,
        "best_ki": best.ki,
        **metrics.to_json(),
        "pairs_evaluated": len(table),
        "pairs_without_overshoot": eligible,
        "matches_shipped_default": best == DEFAULT_GAINS,
        "seconds": round(elapsed, 1),
    }, indent=1))


if __name__ == "__main__":
    main()
