import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channels, scenario_channels
from oracles import effective_channel_loop, friis_entry_power
from ueris.channel import (ChannelSet, RisConfiguration, assemble_effective_channel,
                           generate_channels, ris_phase_matrix)
from ueris.container import dumps, load_channels, loads, save_channels
from ueris.scenario import ScenarioConfig, build_phase_set, sample_geometry, substream

K3 = build_phase_set(3)


def test_no_ues_gives_direct_only():
    geo, ch = scenario_channels(ScenarioConfig(n_cooperating_ues=0))
    assert len(ch.g_list) == 0 and len(ch.q_list) == 0
    assert ch.h_direct.shape == (16, 12)
    ris = RisConfiguration.zeros(0, 1, K3)
    assert np.array_equal(assemble_effective_channel(ch, ris), ch.h_direct)


def test_generation_deterministic():
    cfg = ScenarioConfig(rng_seed=11)
    _, a = scenario_channels(cfg)
    _, b = scenario_channels(cfg)
    assert a.equal(b)
    assert a.h_direct.tobytes() == b.h_direct.tobytes()


def test_direct_channel_independent_of_ue_count():
    base = ScenarioConfig(rng_seed=5)
    _, a = scenario_channels(base.replace(n_cooperating_ues=1, ris_elements_per_ue=12, ue_ris_mode=False))
    _, b = scenario_channels(base.replace(n_cooperating_ues=12))
    assert np.array_equal(a.h_direct, b.h_direct)


def test_friis_mean_power():
    cfg = ScenarioConfig(n_cooperating_ues=0, normalize_gain=False)
    geo = sample_geometry(cfg, substream(0, "geometry"))
    powers = [np.mean(np.abs(generate_channels(cfg.replace(rng_seed=s), geo).h_direct) ** 2)
              for s in range(10_000)]
    expected = friis_entry_power(60.0, cfg.wavelength)
    assert abs(10 * math.log10(np.mean(powers) / expected)) < 0.5


def test_phase_matrix_examples():
    ris = RisConfiguration(np.zeros((2, 3), dtype=int), K3)
    assert np.array_equal(ris_phase_matrix(ris, 1), np.eye(3))
    ris = RisConfiguration(np.array([[1, 2]]), K3)
    np.testing.assert_allclose(ris_phase_matrix(ris, 0),
                               np.diag([np.exp(2j * math.pi / 3), np.exp(4j * math.pi / 3)]), atol=1e-15)
    with pytest.raises(IndexError):
        ris_phase_matrix(ris, 1)
    with pytest.raises(ValueError):
        RisConfiguration(np.array([[3]]), K3)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=8))
def test_phase_matrix_unitary(idx):
    phi = ris_phase_matrix(RisConfiguration(np.array([idx]), K3), 0)
    assert np.all(np.abs(np.diag(phi)) == 1.0) or np.allclose(np.abs(np.diag(phi)), 1.0, atol=1e-15)
    assert abs(abs(np.linalg.det(phi)) - 1.0) <= 1e-12
    np.testing.assert_allclose(phi @ phi.conj().T, np.eye(len(idx)), atol=1e-14)


def test_identity_phase_single_ue(rng):
    ch = random_channels(rng, 4, 3, 1, 2)
    ris = RisConfiguration.zeros(1, 2, K3)
    np.testing.assert_allclose(assemble_effective_channel(ch, ris),
                               ch.h_direct + ch.q_list[0] @ ch.g_list[0], atol=1e-14)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), n_d=st.integers(0, 4), m=st.integers(1, 4), k=st.integers(1, 5))
def test_assembly_matches_loop(seed, n_d, m, k):
    rng = np.random.default_rng(seed)
    ch = random_channels(rng, 5, 3, n_d, m)
    ps = build_phase_set(k)
    ris = RisConfiguration(rng.integers(0, k, size=(n_d, m)), ps)
    phases = [[ps[i] for i in row] for row in ris.phase_indices]
    np.testing.assert_allclose(assemble_effective_channel(ch, ris),
                               effective_channel_loop(ch.h_direct, ch.g_list, ch.q_list, phases), atol=1e-12)


def test_linearity_in_one_phase(rng):
    ch = random_channels(rng, 4, 4, 3, 2)
    a = RisConfiguration(rng.integers(0, 3, (3, 2)), K3)
    idx = np.array(a.phase_indices)
    idx[1] = (idx[1] + 1) % 3
    b = RisConfiguration(idx, K3)
    diff = assemble_effective_channel(ch, a) - assemble_effective_channel(ch, b)
    expected = ch.q_list[1] @ (ris_phase_matrix(a, 1) - ris_phase_matrix(b, 1)) @ ch.g_list[1]
    np.testing.assert_allclose(diff, expected, atol=1e-10)


def test_dimension_checks(rng):
    ch = random_channels(rng, 4, 4, 2, 2)
    with pytest.raises(ValueError):
        assemble_effective_channel(ch, RisConfiguration.zeros(3, 2, K3))
    with pytest.raises(ValueError):
        ChannelSet(ch.h_direct, ch.g_list, ch.q_list[:1])
    bad = ch.h_direct.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        ChannelSet(bad, [], [])


def test_container_roundtrip(tmp_path, rng):
    ch = random_channels(rng, 4, 3, 2, 2)
    path = tmp_path / "ch.bin"
    save_channels(path, ch)
    back = load_channels(path)
    assert back.n_ues == 2
    np.testing.assert_allclose(back.h_direct, ch.h_direct, atol=1e-6)
    np.testing.assert_allclose(back.q_list[1], ch.q_list[1], atol=1e-6)
    blob = path.read_bytes()
    assert blob[:8] == b"UERISMAT"
    assert dumps(loads(blob)) == blob
    with pytest.raises(ValueError):
        loads(b"NOTMAGIC" + blob[8:])
