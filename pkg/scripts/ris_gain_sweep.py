"""Sensitivity of the arm medians to the RIS element gain relative to the direct path.

    python scripts/ris_gain_sweep.py --gains -15 -10 -5 0 --trials 20
"""

import argparse

from ueris import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gains", type=float, nargs="+", default=[-15.0, -10.0, -5.0, 0.0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ideal-csi", action="store_true")
    args = ap.parse_args()

    for gain in args.gains:
        spec = harness.reference_spec("BP", args.trials, args.seed, ideal_csi=args.ideal_csi)
        spec.config = spec.config.replace(ris_relative_gain_db=gain)
        table = harness.run_experiment(spec)
        meds = "  ".join(f"{a.name} {table.median_delta(a.name):.3f}" for a in spec.arms)
        print(f"{gain:6.1f} dB  {meds}")


if __name__ == "__main__":
    main()
