"""Seeded Monte Carlo experiments: protocol -> AO -> MSE, and result files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ao import run_ao
from .channel import RisConfiguration, generate_channels
from .mse import mse_matrix, noise_power_for_snr, simulate_link
from .protocol import farfield_identify, make_population, ue_select
from .scenario import (ScenarioConfig, build_phase_set, config_from_mapping,
                       config_to_mapping, derive_seed, sample_geometry, substream, validate)
from .transceiver import design_transceiver

log = logging.getLogger(__name__)

REFERENCE_PRESET = "paper-fig5"
REFERENCE_TOTAL_ELEMENTS = 12
MAX_FAILURE_FRACTION = 0.10
RESULT_COLUMNS = ("arm", "trial", "seed", "delta_analytic", "mse_empirical",
                  "iterations", "nodes_expanded", "wall_time")
SEED_STREAMS = ("geometry", "channel/direct", "channel/ue", "protocol/population",
                "protocol", "transceiver/precoder", "transceiver/combiner", "symbols")


@dataclass(frozen=True)
class Arm:
    name: str
    n_ues: int
    elements_per_ue: int = 1
    method: str = "BP"
    no_ris: bool = False
    no_los: bool = False


@dataclass
class ExperimentSpec:
    arms: list[Arm]
    trials: int = 100
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 0
    snr_db: float | None = 25.0
    ideal_csi: bool = False
    population_factor: int = 2
    preset: str | None = None
    record_timing: bool = False

    def to_dict(self) -> dict:
        return {
            "arms": [asdict(a) for a in self.arms],
            "trials": self.trials,
            "config": config_to_mapping(self.config),
            "seed": self.seed,
            "snr_db": self.snr_db,
            "ideal_csi": self.ideal_csi,
            "population_factor": self.population_factor,
            "preset": self.preset,
            "record_timing": self.record_timing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["arms"] = [Arm(**a) for a in d["arms"]]
        d["config"] = config_from_mapping(d["config"])
        return cls(**d)


def reference_arms(method: str = "BP") -> list[Arm]:
    arms = [Arm("no-RIS", 0, 1, method, no_ris=True)]
    for n_ues, m in ((1, 12), (3, 4), (6, 2), (12, 1)):
        arms.append(Arm(f"Nd{n_ues}xM{m}", n_ues, m, method))
    return arms


def reference_spec(method: str = "BP", trials: int = 100, seed: int = 0, **kw) -> ExperimentSpec:
    """N_t=12, N_r=16, N=8, K=3, 28 GHz, 60 m, 25 dB, 64-QAM, 200 symbols."""
    config = ScenarioConfig(n_tx_antennas=12, n_rx_antennas=16, n_tx_rf_chains=8,
                            n_rx_rf_chains=8, n_streams=8, phase_cardinality=3,
                            carrier_frequency_hz=28e9, tx_rx_distance_m=60.0,
                            n_symbols=200, constellation_order=64)
    return ExperimentSpec(reference_arms(method), trials, config, seed, 25.0, preset=REFERENCE_PRESET, **kw)


def validate_spec(spec: ExperimentSpec) -> ExperimentSpec:
    validate(spec.config)
    if spec.trials < 1:
        raise ValueError("trials must be >= 1")
    names = [a.name for a in spec.arms]
    if len(set(names)) != len(names):
        raise ValueError("arm names must be unique")
    if "/" in "".join(names) or "," in "".join(names):
        raise ValueError("arm names may not contain '/' or ','")
    for arm in spec.arms:
        if arm.method.upper() not in ("ES", "BP"):
            raise ValueError(f"arm {arm.name}: unknown method {arm.method}")
        if spec.preset == REFERENCE_PRESET and not arm.no_ris \
                and arm.n_ues * arm.elements_per_ue != REFERENCE_TOTAL_ELEMENTS:
            raise ValueError(f"arm {arm.name}: N_d*M must be {REFERENCE_TOTAL_ELEMENTS} in the reference preset")
        trial_config(spec, arm, 0)
    return spec


def trial_config(spec: ExperimentSpec, arm: Arm, trial_seed: int) -> ScenarioConfig:
    cfg = spec.config.replace(
        n_cooperating_ues=0 if arm.no_ris else arm.n_ues,
        ris_elements_per_ue=arm.elements_per_ue,
        ue_ris_mode=arm.elements_per_ue <= 4,
        no_los=arm.no_los or spec.config.no_los,
        rng_seed=trial_seed,
        population_size=None,
        selection_pool=None,
    )
    if spec.snr_db is not None:
        cfg = cfg.replace(noise_power=noise_power_for_snr(cfg, spec.snr_db))
    return validate(cfg)


@dataclass
class TrialResult:
    arm: str
    trial: int
    seed: int
    delta_analytic: float
    mse_empirical: float
    iterations: int
    nodes_expanded: int
    wall_time: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_trial(spec: ExperimentSpec, arm: Arm, trial: int) -> TrialResult:
    """One arm x trial. Raises on any module error."""
    start = time.perf_counter()
    seed = derive_seed(spec.seed, trial)
    cfg = trial_config(spec, arm, seed)
    n_d = cfg.n_cooperating_ues
    n_pop = n_d if (spec.ideal_csi or n_d == 0) else max(n_d, spec.population_factor * n_d)
    geometry = sample_geometry(cfg, substream(seed, "geometry"), n_ues=n_pop)
    channels = generate_channels(cfg, geometry)

    if n_d == 0:
        phase_set = build_phase_set(cfg.phase_cardinality)
        ris = RisConfiguration.zeros(0, cfg.ris_elements_per_ue, phase_set)
        tx = design_transceiver(channels.h_direct, cfg)
        true_channels = channels
        iterations = nodes = 0
    else:
        if spec.ideal_csi:
            opt_channels = true_channels = channels
        else:
            population = make_population(n_pop, cfg, substream(seed, "protocol/population"))
            sel = ue_select(population, channels, cfg, substream(seed, "protocol"))
            est = sel.estimated_channels()
            ident = farfield_identify(est.g_list, est.q_list, geometry.subset(sel.selected),
                                      h_direct=est.h_direct)
            opt_channels = ident.channels
            true_channels = channels.subset(sel.selected)
        trace = run_ao(opt_channels, cfg, arm.method)
        ris, tx = trace.ris, trace.transceiver
        iterations, nodes = trace.iterations_used, trace.nodes_expanded

    delta = mse_matrix(true_channels, ris, tx, cfg).delta
    emp = simulate_link(true_channels, ris, tx, cfg, substream(seed, "symbols"))
    wall = time.perf_counter() - start if spec.record_timing else None
    return TrialResult(arm.name, trial, seed, delta, emp.mse, iterations, nodes, wall)


def _safe_trial(args) -> TrialResult:
    spec, arm, trial = args
    try:
        return run_trial(spec, arm, trial)
    except Exception as exc:  # recorded per trial, the run continues
        log.warning("trial %s/%d failed: %s", arm.name, trial, exc)
        return TrialResult(arm.name, trial, derive_seed(spec.seed, trial), math.nan, math.nan,
                           0, 0, None, f"{type(exc).__name__}: {exc}")


class ExperimentFailed(RuntimeError):
    pass


@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list[TrialResult]

    def for_arm(self, name: str) -> list[TrialResult]:
        return [r for r in self.rows if r.arm == name]

    def failure_fraction(self) -> float:
        return sum(r.failed for r in self.rows) / max(len(self.rows), 1)

    def median_delta(self, name: str) -> float:
        vals = [r.delta_analytic for r in self.for_arm(name) if not r.failed]
        return float(np.median(vals)) if vals else math.nan


def run_experiment(spec: ExperimentSpec, workers: int = 1, check_failures: bool = True) -> ResultTable:
    """All arms x trials; rows ordered by arm then trial regardless of ``workers``."""
    validate_spec(spec)
    jobs = [(spec, arm, t) for arm in spec.arms for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_safe_trial, jobs, chunksize=4))
    else:
        rows = [_safe_trial(job) for job in jobs]
    order = {a.name: i for i, a in enumerate(spec.arms)}
    rows.sort(key=lambda r: (order[r.arm], r.trial))
    table = ResultTable(spec, rows)
    if check_failures and table.failure_fraction() > MAX_FAILURE_FRACTION:
        raise ExperimentFailed(f"{table.failure_fraction():.0%} of trials failed")
    return table


# -- output -----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _arm_stats(rows):
    ok = [r for r in rows if not r.failed]
    if not ok:
        return dict(median=math.nan, q1=math.nan, q3=math.nan, emp=math.nan, its=math.nan)
    d = np.array([r.delta_analytic for r in ok])
    q1, med, q3 = np.percentile(d, [25, 50, 75])
    return dict(median=float(med), q1=float(q1), q3=float(q3),
                emp=float(np.median([r.mse_empirical for r in ok])),
                its=float(np.median([r.iterations for r in ok])))


def summary_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("arm", "n_ues", "elements_per_ue", "method", "trials", "failed",
                "median_delta", "q1_delta", "q3_delta", "median_mse_empirical", "median_iterations"))
    for arm in table.spec.arms:
        rows = table.for_arm(arm.name)
        s = _arm_stats(rows)
        w.writerow([arm.name, 0 if arm.no_ris else arm.n_ues, arm.elements_per_ue, arm.method.upper(),
                    len(rows), sum(r.failed for r in rows),
                    _fmt(s["median"]), _fmt(s["q1"]), _fmt(s["q3"]), _fmt(s["emp"]), _fmt(s["its"])])
    return buf.getvalue()


def plotdata_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("arm", "x", "median_delta", "lower", "upper"))
    for x, arm in enumerate(table.spec.arms):
        s = _arm_stats(table.for_arm(arm.name))
        w.writerow([arm.name, x, _fmt(s["median"]), _fmt(s["q1"]), _fmt(s["q3"])])
    return buf.getvalue()


def seeds_jsonl(table: ResultTable) -> str:
    lines = []
    for r in table.rows:
        lines.append(json.dumps({"arm": r.arm, "trial": r.trial, "trial_seed": r.seed,
                                 "streams": list(SEED_STREAMS), "error": r.error}, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def emit_results(table: ResultTable, out_dir: str | Path) -> dict[str, Path]:
    """Write results.csv, summary.csv, plotdata.csv, seeds.jsonl and spec.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": results_csv(table.rows),
        "summary.csv": summary_csv(table),
        "plotdata.csv": plotdata_csv(table),
        "seeds.jsonl": seeds_jsonl(table),
        "spec.json": json.dumps(table.spec.to_dict(), indent=2, sort_keys=True) + "\n",
    }
    written = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written[name] = path
    return written


def read_results(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_spec(out_dir: str | Path) -> ExperimentSpec:
    return ExperimentSpec.from_dict(json.loads((Path(out_dir) / "spec.json").read_text()))


def parse_trial_id(trial_id: str) -> tuple[str, int]:
    arm, _, trial = trial_id.rpartition("/")
    if not arm:
        raise ValueError(f"trial id must look like '<arm>/<trial>', got {trial_id!r}")
    return arm, int(trial)


def replay(out_dir: str | Path, trial_id: str) -> tuple[TrialResult, dict]:
    """Re-run one recorded trial; returns the fresh result and the recorded row."""
    spec = load_spec(out_dir)
    arm_name, trial = parse_trial_id(trial_id)
    arms = {a.name: a for a in spec.arms}
    if arm_name not in arms:
        raise KeyError(f"no arm {arm_name!r} in {out_dir}")
    recorded = [row for row in read_results(Path(out_dir) / "results.csv")
                if row["arm"] == arm_name and int(row["trial"]) == trial]
    if not recorded:
        raise KeyError(f"trial {trial_id} not in results")
    return run_trial(spec, arms[arm_name], trial), recorded[0]
