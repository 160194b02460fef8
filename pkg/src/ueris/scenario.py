"""Experiment parameters, the discrete phase alphabet, geometry and seeding."""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SPEED_OF_LIGHT = 299_792_458.0
FARFIELD_RATIO = 100.0
MAX_UE_RIS_ELEMENTS = 4


class ConfigError(ValueError):
    """Raised when a ScenarioConfig violates one or more invariants."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e.field}: {e.message}" for e in self.errors))


@dataclass(frozen=True)
class ConfigIssue:
    field: str
    message: str


@dataclass(frozen=True)
class ScenarioConfig:
    # array and stream dimensions
    n_tx_antennas: int = 12
    n_rx_antennas: int = 16
    n_tx_rf_chains: int = 8
    n_rx_rf_chains: int = 8
    n_streams: int = 8
    n_cooperating_ues: int = 12
    ris_elements_per_ue: int = 1
    phase_cardinality: int = 3
    ue_ris_mode: bool = True
    # signal and noise (linear units, channels normalized, see channel.py)
    symbol_power: float = 1.0
    noise_power: float = 0.01
    # propagation
    carrier_frequency_hz: float = 28e9
    tx_rx_distance_m: float = 60.0
    element_spacing_multiplier: int = 1
    ris_patch_offset_m: float = 0.05
    rician_k_db: float = 10.0
    normalize_gain: bool = True
    direct_power: float | None = None
    ris_relative_gain_db: float = -10.0
    no_los: bool = False
    # optimization
    ao_tolerance: float = 1e-4
    ao_tolerance_relative: bool = True
    ao_max_iterations: int = 50
    near_optimality_gap: float = 0.01
    es_budget: int = 10**7
    bp_node_budget: int = 20_000
    # link simulation
    rng_seed: int = 0
    n_symbols: int = 200
    constellation_order: int = 64
    # control plane
    pilot_snr_db: float = 30.0
    accept_probability: float = 1.0
    ack_timeout_probability: float = 0.0
    population_size: int | None = None
    selection_pool: int | None = None

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def n_ris_elements(self) -> int:
        return self.n_cooperating_ues * self.ris_elements_per_ue

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def config_issues(config: ScenarioConfig) -> list[ConfigIssue]:
    """Return every violated invariant of ``config`` (empty when valid)."""
    issues = []

    def bad(name, message):
        issues.append(ConfigIssue(name, message))

    positive = (
        "n_tx_antennas", "n_rx_antennas", "n_tx_rf_chains", "n_rx_rf_chains",
        "n_streams", "ris_elements_per_ue", "phase_cardinality",
        "element_spacing_multiplier", "ao_max_iterations", "n_symbols",
    )
    for name in positive:
        value = getattr(config, name)
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
            bad(name, "must be a positive integer")
    broken = {i.field for i in issues}

    def ok(*names):
        return not broken.intersection(names)

    c = config
    if c.n_cooperating_ues < 0:
        bad("n_cooperating_ues", "must be nonnegative")
    if ok("n_streams", "n_rx_rf_chains") and c.n_streams > c.n_rx_rf_chains:
        bad("n_streams", "streams exceed RX RF chains")
    if ok("n_rx_rf_chains", "n_rx_antennas") and c.n_rx_rf_chains > c.n_rx_antennas:
        bad("n_rx_rf_chains", "RX RF chains exceed RX antennas")
    if ok("n_streams", "n_tx_rf_chains") and c.n_streams > c.n_tx_rf_chains:
        bad("n_streams", "streams exceed TX RF chains")
    if ok("n_tx_rf_chains", "n_tx_antennas") and c.n_tx_rf_chains > c.n_tx_antennas:
        bad("n_tx_rf_chains", "TX RF chains exceed TX antennas")
    if ok("ris_elements_per_ue") and c.ue_ris_mode and c.ris_elements_per_ue > MAX_UE_RIS_ELEMENTS:
        bad("ris_elements_per_ue", f"UE RIS exceeds {MAX_UE_RIS_ELEMENTS} elements")
    if not c.symbol_power > 0:
        bad("symbol_power", "must be > 0")
    if not c.noise_power > 0:
        bad("noise_power", "must be > 0")
    if not c.carrier_frequency_hz > 0:
        bad("carrier_frequency_hz", "must be > 0")
    if not c.tx_rx_distance_m > 0:
        bad("tx_rx_distance_m", "must be > 0")
    if not c.ris_patch_offset_m > 0:
        bad("ris_patch_offset_m", "must be > 0")
    if c.direct_power is not None and not c.direct_power > 0:
        bad("direct_power", "must be > 0 when set")
    if c.ao_tolerance < 0:
        bad("ao_tolerance", "must be nonnegative")
    if c.near_optimality_gap < 0:
        bad("near_optimality_gap", "must be nonnegative")
    if c.es_budget < 1:
        bad("es_budget", "must be >= 1")
    if c.bp_node_budget < 1:
        bad("bp_node_budget", "must be >= 1")
    if c.rng_seed < 0:
        bad("rng_seed", "must be an unsigned integer")
    order = c.constellation_order
    side = math.isqrt(order) if order > 0 else 0
    if order < 4 or side * side != order:
        bad("constellation_order", "must be a square QAM size (4, 16, 64, ...)")
    for name in ("accept_probability", "ack_timeout_probability"):
        if not 0.0 <= getattr(c, name) <= 1.0:
            bad(name, "must lie in [0, 1]")
    if c.population_size is not None and c.population_size < c.n_cooperating_ues:
        bad("population_size", "must be >= n_cooperating_ues")
    if c.selection_pool is not None and c.selection_pool < c.n_cooperating_ues:
        bad("selection_pool", "must be >= n_cooperating_ues")
    return issues


def validate(config: ScenarioConfig) -> ScenarioConfig:
    """Return ``config`` unchanged if valid, else raise ConfigError naming every issue."""
    issues = config_issues(config)
    if issues:
        raise ConfigError(issues)
    return config


def load_config(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Read a flat TOML key/value file whose keys are ScenarioConfig field names."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_mapping(raw, base)


def config_from_mapping(raw: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError([ConfigIssue(k, "unknown key") for k in unknown])
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError([ConfigIssue(k, "nested tables are not allowed") for k in nested])
    return validate(dataclasses.replace(base or ScenarioConfig(), **raw))


def config_to_mapping(config: ScenarioConfig) -> dict:
    return {k: v for k, v in dataclasses.asdict(config).items() if v is not None}


# -- phase alphabet ---------------------------------------------------------

@dataclass(frozen=True)
class PhaseSet:
    angles: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.angles)

    @property
    def phasors(self) -> np.ndarray:
        return np.exp(1j * np.asarray(self.angles))

    def __getitem__(self, index: int) -> float:
        return self.angles[index]

    def __len__(self) -> int:
        return len(self.angles)


def build_phase_set(k: int) -> PhaseSet:
    """Uniform K-PSK grid ``{2*pi*m/K}`` starting at zero."""
    if int(k) != k or k < 1:
        raise ValueError(f"phase cardinality must be a positive integer, got {k!r}")
    return PhaseSet(tuple(2.0 * math.pi * m / k for m in range(int(k))))


# -- seeding ----------------------------------------------------------------

def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose (geometry, channel, noise, ...)."""
    key = zlib.crc32(name.encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed, e.g. per Monte Carlo trial."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


# -- geometry ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Geometry:
    tx_position: np.ndarray
    rx_position: np.ndarray
    ue_positions: np.ndarray
    ue_orientations: np.ndarray
    ris_patch_offset: float
    wavelength: float

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    def tx_ue_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ue_positions - self.tx_position, axis=1)

    def ue_rx_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ue_positions - self.rx_position, axis=1)

    def farfield_ratio(self) -> float:
        """Smallest link distance divided by the RIS-to-patch offset."""
        if self.n_ues == 0:
            return math.inf
        closest = min(self.tx_ue_distances().min(), self.ue_rx_distances().min())
        return float(closest / self.ris_patch_offset)

    def subset(self, ue_ids) -> "Geometry":
        ids = np.asarray(list(ue_ids), dtype=int)
        return dataclasses.replace(
            self,
            ue_positions=self.ue_positions[ids].reshape(-1, 3),
            ue_orientations=self.ue_orientations[ids],
        )


def sample_geometry(config: ScenarioConfig, rng: np.random.Generator,
                    n_ues: int | None = None) -> Geometry:
    """TX at the origin, RX on the x-axis, UEs uniform in a disc around the midpoint.

    The disc has radius ``0.4 * tx_rx_distance_m``; draws closer than
    ``max(0.5 m, 100 * d')`` to either end are rejected.
    """
    n = config.n_cooperating_ues if n_ues is None else n_ues
    dist = config.tx_rx_distance_m
    tx = np.zeros(3)
    rx = np.array([dist, 0.0, 0.0])
    centre = 0.5 * (tx + rx)
    radius = 0.4 * dist
    keep_out = max(0.5, FARFIELD_RATIO * config.ris_patch_offset_m)

    positions = np.empty((n, 3))
    filled = 0
    while filled < n:
        r = radius * np.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        p = centre + np.array([r * math.cos(theta), r * math.sin(theta), 0.0])
        if np.linalg.norm(p - tx) < keep_out or np.linalg.norm(p - rx) < keep_out:
            continue
        positions[filled] = p
        filled += 1
    orientations = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return Geometry(tx, rx, positions, orientations, config.ris_patch_offset_m, config.wavelength)
