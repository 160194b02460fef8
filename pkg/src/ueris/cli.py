"""Command line: ``ueris run | validate | replay``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .scenario import ConfigError, ScenarioConfig, load_config, validate


def _build_spec(args) -> harness.ExperimentSpec:
    method = (args.method or "bp").upper()
    if args.preset == harness.REFERENCE_PRESET:
        spec = harness.reference_spec(method, args.trials or 100, args.seed)
        if args.config:
            spec.config = load_config(args.config, base=spec.config)
    else:
        config = load_config(args.config) if args.config else validate(ScenarioConfig())
        arm = harness.Arm(f"Nd{config.n_cooperating_ues}xM{config.ris_elements_per_ue}",
                          config.n_cooperating_ues, config.ris_elements_per_ue, method,
                          no_ris=config.n_cooperating_ues == 0)
        spec = harness.ExperimentSpec([arm], args.trials or 100, config, args.seed)
    spec.ideal_csi = args.ideal_csi
    spec.record_timing = args.record_timing
    if args.snr_db is not None:
        spec.snr_db = args.snr_db
    return spec


def cmd_run(args) -> int:
    spec = _build_spec(args)
    table = harness.run_experiment(spec, workers=args.workers, check_failures=False)
    written = harness.emit_results(table, args.out)
    for arm in spec.arms:
        print(f"{arm.name:>10s}  median delta = {table.median_delta(arm.name):.6g}")
    print("wrote " + ", ".join(str(p) for p in written.values()))
    if table.failure_fraction() > harness.MAX_FAILURE_FRACTION:
        print(f"experiment failed: {table.failure_fraction():.0%} of trials errored", file=sys.stderr)
        return 2
    return 0


def cmd_validate(args) -> int:
    try:
        if args.config:
            load_config(args.config)
        else:
            validate(ScenarioConfig())
    except ConfigError as exc:
        for issue in exc.errors:
            print(f"{issue.field}: {issue.message}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def cmd_replay(args) -> int:
    fresh, recorded = harness.replay(args.out, args.trial_id)
    same = repr(fresh.delta_analytic) == recorded["delta_analytic"]
    print(f"recorded delta = {recorded['delta_analytic']}")
    print(f"replayed delta = {fresh.delta_analytic!r}")
    print("bitwise identical" if same else "MISMATCH")
    return 0 if same else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ueris", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded Monte Carlo experiment")
    run.add_argument("--config", help="flat TOML file of ScenarioConfig fields")
    run.add_argument("--preset", choices=[harness.REFERENCE_PRESET])
    run.add_argument("--method", choices=["es", "bp", "ES", "BP"])
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--snr-db", type=float, dest="snr_db")
    run.add_argument("--ideal-csi", action="store_true", help="skip UE selection and channel estimation")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--record-timing", action="store_true",
                     help="fill the wall_time column (outputs are then not byte-stable)")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config")
    val.set_defaults(func=cmd_validate)

    rep = sub.add_parser("replay", help="re-run one recorded trial")
    rep.add_argument("--out", required=True, help="directory written by 'run'")
    rep.add_argument("--trial-id", required=True, help="<arm>/<trial>, e.g. Nd12xM1/7")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
