import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ueris.scenario import (ConfigError, ScenarioConfig, build_phase_set, config_from_mapping,
                            config_to_mapping, derive_seed, load_config, sample_geometry,
                            substream, validate)


def messages(config):
    with pytest.raises(ConfigError) as exc:
        validate(config)
    return [e.message for e in exc.value.errors]


def test_phase_set_examples():
    assert build_phase_set(1).angles == (0.0,)
    np.testing.assert_allclose(build_phase_set(3).angles, [0, 2 * math.pi / 3, 4 * math.pi / 3])
    np.testing.assert_allclose(build_phase_set(4).angles, [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    with pytest.raises(ValueError):
        build_phase_set(0)


@given(st.integers(1, 64))
def test_phase_set_invariants(k):
    ps = build_phase_set(k)
    a = np.array(ps.angles)
    assert len(set(ps.angles)) == k
    assert np.all(np.diff(a) > 0) and a[0] == 0.0 and a[-1] < 2 * math.pi
    assert build_phase_set(k) == ps


def test_full_sizes_valid():
    cfg = ScenarioConfig(n_tx_antennas=12, n_rx_antennas=16, n_streams=8,
                         n_rx_rf_chains=8, n_tx_rf_chains=8, phase_cardinality=3)
    assert validate(cfg) is cfg


def test_streams_exceed_rx_chains():
    assert "streams exceed RX RF chains" in messages(ScenarioConfig(n_streams=9, n_rx_rf_chains=8))


def test_ue_ris_limit():
    assert "UE RIS exceeds 4 elements" in messages(ScenarioConfig(ris_elements_per_ue=5))
    validate(ScenarioConfig(ris_elements_per_ue=12, n_cooperating_ues=1, ue_ris_mode=False))


def test_every_violation_reported():
    cfg = ScenarioConfig(n_streams=9, ris_elements_per_ue=5, noise_power=0.0, phase_cardinality=0)
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert len(exc.value.errors) >= 4


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("n_cooperating_ues = 3\nris_elements_per_ue = 4\nnoise_power = 0.5\n")
    cfg = load_config(path)
    assert (cfg.n_cooperating_ues, cfg.ris_elements_per_ue, cfg.noise_power) == (3, 4, 0.5)
    assert config_from_mapping(config_to_mapping(cfg)) == cfg


def test_config_unknown_key(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("n_tx_antenas = 3\n")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert exc.value.errors[0].field == "n_tx_antenas"


def test_geometry_empty_and_deterministic():
    cfg = ScenarioConfig(n_cooperating_ues=0)
    assert sample_geometry(cfg, substream(0, "geometry")).ue_positions.shape == (0, 3)
    cfg = ScenarioConfig(n_cooperating_ues=5)
    a = sample_geometry(cfg, substream(7, "geometry"))
    b = sample_geometry(cfg, substream(7, "geometry"))
    assert np.array_equal(a.ue_positions, b.ue_positions)
    assert np.array_equal(a.ue_orientations, b.ue_orientations)


def test_geometry_bounds_over_seeds():
    cfg = ScenarioConfig(n_cooperating_ues=12)
    for seed in range(1000):
        g = sample_geometry(cfg, substream(seed, "geometry"))
        d = np.concatenate([g.tx_ue_distances(), g.ue_rx_distances()])
        assert np.all(d > 0.5) and np.all(d < 120.0)
        assert g.farfield_ratio() >= 100.0
        assert abs(np.linalg.norm(g.rx_position - g.tx_position) - 60.0) <= 1e-9


def test_seed_streams_independent_and_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(0, 2)
    a = substream(3, "geometry").random(4)
    assert np.array_equal(a, substream(3, "geometry").random(4))
    assert not np.array_equal(a, substream(3, "channel/ue").random(4))


@settings(max_examples=50)
@given(n=st.integers(1, 16), extra_rs=st.integers(0, 4), extra_r=st.integers(0, 4))
def test_valid_dimension_chains(n, extra_rs, extra_r):
    cfg = ScenarioConfig(n_streams=n, n_rx_rf_chains=n + extra_rs, n_rx_antennas=n + extra_rs + extra_r,
                         n_tx_rf_chains=n, n_tx_antennas=n + extra_r)
    validate(cfg)
