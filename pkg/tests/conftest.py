import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ueris.channel import ChannelSet, generate_channels  # noqa: E402
from ueris.scenario import ScenarioConfig, sample_geometry, substream  # noqa: E402

SMALL = dict(n_tx_antennas=4, n_rx_antennas=4, n_tx_rf_chains=2, n_rx_rf_chains=2,
             n_streams=2, n_cooperating_ues=2, ris_elements_per_ue=2, phase_cardinality=3)


def small_config(**changes) -> ScenarioConfig:
    return ScenarioConfig(**{**SMALL, **changes})


def random_channels(rng, n_r, n_t, n_d, m, ris_scale=0.5) -> ChannelSet:
    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelSet(cn(n_r, n_t), [ris_scale * cn(m, n_t) for _ in range(n_d)],
                      [ris_scale * cn(n_r, m) for _ in range(n_d)])


def scenario_channels(config: ScenarioConfig):
    geo = sample_geometry(config, substream(config.rng_seed, "geometry"))
    return geo, generate_channels(config, geo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
