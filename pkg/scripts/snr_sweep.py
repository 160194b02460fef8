"""Median MSE per arm of the reference preset over a range of receive SNRs.

    python scripts/snr_sweep.py --snr 10 15 20 25 30 --trials 20 --out results/snr.csv
"""

import argparse
import csv
from pathlib import Path

from ueris import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, nargs="+", default=[10.0, 15.0, 20.0, 25.0, 30.0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--method", default="BP")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/snr_sweep.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "arm", "median_delta"])
        for snr in args.snr:
            spec = harness.reference_spec(args.method.upper(), args.trials, args.seed)
            spec.snr_db = snr
            table = harness.run_experiment(spec, workers=args.workers)
            for arm in spec.arms:
                med = table.median_delta(arm.name)
                w.writerow([snr, arm.name, repr(med)])
                print(f"{snr:5.1f} dB  {arm.name:>8s}  {med:.4f}")


if __name__ == "__main__":
    main()
