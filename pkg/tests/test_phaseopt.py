import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channels, small_config
from oracles import brute_force_phases, greedy_per_ue
from ueris.channel import RisConfiguration, assemble_effective_channel
from ueris.phaseopt import (ReducedObjective, SearchBudgetError, branch_prune_search,
                            exhaustive_search, information_order, jsonl_trace, objective, search)
from ueris.scenario import build_phase_set
from ueris.transceiver import design_transceiver


def instance(seed, n_d=2, m=2, k=3, n=4, streams=2, noise=0.05):
    cfg = small_config(n_tx_antennas=n, n_rx_antennas=n, n_cooperating_ues=n_d,
                       ris_elements_per_ue=m, phase_cardinality=k, n_streams=streams,
                       n_tx_rf_chains=streams, n_rx_rf_chains=streams, noise_power=noise, rng_seed=seed)
    rng = np.random.default_rng(seed)
    ch = random_channels(rng, n, n, n_d, m, ris_scale=0.6)
    ris = RisConfiguration(rng.integers(0, k, (n_d, m)), build_phase_set(k))
    tx = design_transceiver(assemble_effective_channel(ch, ris), cfg)
    return cfg, ch, tx


def test_es_single_candidate():
    cfg, ch, tx = instance(0, n_d=1, m=1, k=1)
    res = exhaustive_search(ch, tx, cfg)
    assert res.nodes_expanded == 1 and res.ris.key() == (0,)
    assert abs(res.objective - objective(ch, res.ris, tx, cfg)) <= 1e-10


def test_es_counts():
    cfg, ch, tx = instance(1, n_d=1, m=2)
    assert exhaustive_search(ch, tx, cfg).nodes_expanded == 9
    cfg, ch, tx = instance(1, n_d=2, m=2)
    assert exhaustive_search(ch, tx, cfg).nodes_expanded == 81


def test_es_budget_refusal():
    cfg, ch, tx = instance(2)
    with pytest.raises(SearchBudgetError):
        exhaustive_search(ch, tx, cfg, budget=80)


def test_es_dominates_random_probes():
    cfg, ch, tx = instance(3)
    best = exhaustive_search(ch, tx, cfg)
    rng = np.random.default_rng(0)
    ps = build_phase_set(3)
    for _ in range(10_000):
        ris = RisConfiguration(rng.integers(0, 3, (2, 2)), ps)
        assert best.objective <= objective(ch, ris, tx, cfg) + 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_es_matches_brute_force(seed):
    cfg, ch, tx = instance(seed, n_d=2, m=2)
    res = exhaustive_search(ch, tx, cfg)
    val, idx, count = brute_force_phases(ch.h_direct, ch.g_list, ch.q_list, tx.combiner, tx.precoder,
                                         cfg.symbol_power, cfg.noise_power, 3)
    assert count == res.nodes_expanded == 81
    assert abs(val - res.objective) <= 1e-10
    assert res.ris.key() == idx


def test_es_lexicographic_tie_break():
    # K=2 with zero RIS channels: every assignment ties, so all-zeros wins
    cfg, ch, tx = instance(4, k=2)
    ch = type(ch)(ch.h_direct, [0 * g for g in ch.g_list], [0 * q for q in ch.q_list])
    assert exhaustive_search(ch, tx, cfg).ris.key() == (0, 0, 0, 0)


def test_bp_single_phase_equals_es():
    cfg, ch, tx = instance(5, k=1)
    a, b = exhaustive_search(ch, tx, cfg), branch_prune_search(ch, tx, cfg)
    assert a.ris.key() == b.ris.key() and a.objective == b.objective


def test_bp_near_optimal_over_instances():
    ok = 0
    for seed in range(100):
        cfg, ch, tx = instance(seed)
        es, bp = exhaustive_search(ch, tx, cfg), branch_prune_search(ch, tx, cfg)
        assert bp.nodes_expanded <= es.nodes_expanded
        assert bp.objective >= es.objective - 1e-10
        ok += abs(bp.objective - es.objective) <= 0.01 * es.objective
    assert ok >= 95


def test_bp_twelve_single_element_ues():
    for seed in range(3):
        cfg, ch, tx = instance(seed, n_d=12, m=1, n=6, streams=3)
        bp = branch_prune_search(ch, tx, cfg)
        assert bp.nodes_expanded < 3 ** 12
        greedy = greedy_per_ue(ch.h_direct, ch.g_list, ch.q_list, tx.combiner, tx.precoder,
                               cfg.symbol_power, cfg.noise_power, 3, information_order(ch))
        assert bp.objective <= greedy + 1e-10


def test_bp_not_worse_than_initial():
    cfg, ch, tx = instance(7, n_d=4, m=2)
    init = RisConfiguration(np.random.default_rng(1).integers(0, 3, (4, 2)), build_phase_set(3))
    res = branch_prune_search(ch, tx, cfg, initial=init, node_budget=1)
    assert res.objective <= objective(ch, init, tx, cfg) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), method=st.sampled_from(["ES", "BP"]))
def test_result_objective_consistent_and_deterministic(seed, method):
    cfg, ch, tx = instance(seed, n_d=2, m=2)
    a = search(method, ch, tx, cfg)
    b = search(method, ch, tx, cfg)
    assert a.ris.key() == b.ris.key() and a.objective == b.objective and a.method == method
    assert abs(a.objective - objective(ch, a.ris, tx, cfg)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_reduced_objective_matches_full(seed):
    cfg, ch, tx = instance(seed % 500, n_d=3, m=2)
    red = ReducedObjective(ch, tx, cfg)
    flat = np.random.default_rng(seed).integers(0, 3, 6)
    ris = RisConfiguration.from_flat(flat, 3, 2, build_phase_set(3))
    assert abs(red.value(flat) - objective(ch, ris, tx, cfg)) <= 1e-10


def test_information_order():
    cfg, ch, tx = instance(0, n_d=4, m=1)
    s = [np.linalg.norm(q) * np.linalg.norm(g) for g, q in zip(ch.g_list, ch.q_list)]
    assert information_order(ch) == list(np.argsort(-np.array(s), kind="stable"))


def test_trace_records():
    cfg, ch, tx = instance(9)
    buf = io.StringIO()
    branch_prune_search(ch, tx, cfg, trace=jsonl_trace(buf))
    for line in buf.getvalue().splitlines():
        assert set(json.loads(line)) == {"node", "depth", "bound", "incumbent"}


def test_unknown_method():
    cfg, ch, tx = instance(0)
    with pytest.raises(ValueError):
        search("XX", ch, tx, cfg)
