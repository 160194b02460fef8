"""Reference-grid comparison: no-RIS vs distributed UE-mounted RIS arms with N_d*M = 12.

    python scripts/run_reference_grid.py --trials 100 --method bp --out results/fig5
"""

import argparse

from ueris import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--method", default="BP", choices=["ES", "BP", "es", "bp"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ideal-csi", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/fig5")
    args = ap.parse_args()

    spec = harness.reference_spec(args.method.upper(), args.trials, args.seed, ideal_csi=args.ideal_csi)
    table = harness.run_experiment(spec, workers=args.workers)
    harness.emit_results(table, args.out)
    print(harness.summary_csv(table), end="")


if __name__ == "__main__":
    main()
