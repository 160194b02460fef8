import dataclasses

import numpy as np
import pytest

from conftest import random_channels, small_config
from ueris.ao import AoDivergenceError, run_ao
from ueris.channel import ChannelSet


def small(seed, **kw):
    cfg = small_config(rng_seed=seed, noise_power=0.05, **kw)
    ch = random_channels(np.random.default_rng(seed), 4, 4, cfg.n_cooperating_ues,
                         cfg.ris_elements_per_ue, ris_scale=0.6)
    return cfg, ch


def check_trace(trace, cfg):
    deltas = [r.delta for r in trace.records]
    for prev, rec in zip(trace.records, trace.records[1:]):
        assert rec.err == prev.delta - rec.delta
    assert trace.iterations_used <= cfg.ao_max_iterations
    last = trace.records[-1]
    assert trace.converged == (last.err is not None and last.err <= trace.tolerance)
    for rec in trace.records[1:-1]:
        assert rec.err > trace.tolerance
    return deltas


def test_no_ues():
    cfg, _ = small(0, n_cooperating_ues=0)
    ch = ChannelSet(random_channels(np.random.default_rng(0), 4, 4, 0, 1).h_direct, [], [])
    tr = run_ao(ch, cfg, "ES")
    assert tr.iterations_used == 1 and tr.converged and tr.records[1].err == 0.0


def test_single_phase_alphabet():
    cfg, ch = small(1, phase_cardinality=1)
    tr = run_ao(ch, cfg, "BP")
    assert tr.iterations_used == 1 and tr.converged
    assert tr.records[1].err <= tr.tolerance


@pytest.mark.parametrize("method", ["ES", "BP"])
def test_small_instances(method):
    for seed in range(15):
        cfg, ch = small(seed)
        tr = run_ao(ch, cfg, method)
        deltas = check_trace(tr, cfg)
        for prev, rec in zip(tr.records, tr.records[1:]):
            assert rec.phase_delta <= prev.delta + 1e-10
        assert deltas[-1] <= deltas[0] + 1e-10


def test_reproducible():
    cfg, ch = small(3)
    a, b = run_ao(ch, cfg, "BP"), run_ao(ch, cfg, "BP")
    assert a.to_jsonl() == b.to_jsonl()
    assert a.transceiver.fingerprint() == b.transceiver.fingerprint()


def test_iteration_cap():
    cfg, ch = small(4, ao_max_iterations=1, ao_tolerance=0.0)
    tr = run_ao(ch, cfg, "ES")
    assert tr.iterations_used == 1
    assert tr.converged == (tr.records[-1].err <= 0.0)


def test_absolute_tolerance():
    cfg, ch = small(5, ao_tolerance=1e-3, ao_tolerance_relative=False)
    assert run_ao(ch, cfg, "ES").tolerance == 1e-3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_trace():
    cfg, ch = small(6)
    cfg = dataclasses.replace(cfg, noise_power=float("inf"))
    with pytest.raises(AoDivergenceError) as exc:
        run_ao(ch, cfg, "ES")
    assert len(exc.value.trace.records) == 1


def test_jsonl_fields():
    cfg, ch = small(7)
    lines = run_ao(ch, cfg, "BP").to_jsonl().splitlines()
    assert lines and all('"transceiver_id"' in line for line in lines)
