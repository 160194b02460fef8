"""Alternating optimization of RIS phases and the hybrid transceiver."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, RisConfiguration, assemble_effective_channel
from .mse import mse_matrix
from .phaseopt import max_gain_phases, search
from .scenario import ScenarioConfig
from .transceiver import HybridTransceiver, design_transceiver


class AoDivergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AoIteration:
    iteration: int
    delta: float
    err: float | None
    phase_delta: float | None
    phase_indices: tuple[int, ...]
    transceiver_id: str
    nodes_expanded: int = 0

    @property
    def redesign_increased(self) -> bool:
        """True when the transceiver redesign raised the MSE above the phase step."""
        return self.phase_delta is not None and self.delta > self.phase_delta


@dataclass(eq=False)
class AoTrace:
    records: list[AoIteration] = field(default_factory=list)
    ris: RisConfiguration | None = None
    transceiver: HybridTransceiver | None = None
    converged: bool = False
    iterations_used: int = 0
    tolerance: float = 0.0
    method: str = ""

    @property
    def delta0(self) -> float:
        return self.records[0].delta

    @property
    def final_delta(self) -> float:
        return self.records[-1].delta

    @property
    def nodes_expanded(self) -> int:
        return sum(r.nodes_expanded for r in self.records)

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(json.dumps({
                "iteration": r.iteration, "delta": r.delta, "err": r.err,
                "phase_delta": r.phase_delta, "phase_indices": list(r.phase_indices),
                "transceiver_id": r.transceiver_id, "nodes_expanded": r.nodes_expanded,
            }))
        return "\n".join(lines) + "\n"


def run_ao(channels: ChannelSet, config: ScenarioConfig, phase_method: str = "BP",
           initial: RisConfiguration | None = None) -> AoTrace:
    """Alternate phase search and transceiver redesign until ``err <= eps_T``.

    Iteration 0 picks phases that maximize ``||H||_F`` (no transceiver
    exists yet), designs the transceiver on that channel and records
    ``delta_0``. Each later iteration searches phases against the previous
    transceiver, redesigns the transceiver on the new channel and records
    ``err = delta_{k-1} - delta_k``. With a relative tolerance,
    ``eps_T = ao_tolerance * delta_0``.
    """
    method = phase_method.upper()
    trace = AoTrace(method=method)

    ris = initial if initial is not None else max_gain_phases(channels, config)
    tx = design_transceiver(assemble_effective_channel(channels, ris), config)
    delta = mse_matrix(channels, ris, tx, config).delta
    trace.records.append(AoIteration(0, delta, None, None, ris.key(), tx.fingerprint()))
    _check_finite(delta, trace)
    eps = config.ao_tolerance * delta if config.ao_tolerance_relative else config.ao_tolerance
    trace.tolerance = eps

    for k in range(1, config.ao_max_iterations + 1):
        found = search(method, channels, tx, config, initial=ris)
        phase_delta = found.objective
        ris = found.ris
        tx = design_transceiver(assemble_effective_channel(channels, ris), config)
        new_delta = mse_matrix(channels, ris, tx, config).delta
        err = delta - new_delta
        trace.records.append(AoIteration(k, new_delta, err, phase_delta, ris.key(),
                                         tx.fingerprint(), found.nodes_expanded))
        _check_finite(new_delta, trace)
        delta = new_delta
        trace.iterations_used = k
        if err <= eps:
            trace.converged = True
            break
    trace.ris = ris
    trace.transceiver = tx
    return trace


def _check_finite(delta, trace):
    if not math.isfinite(delta):
        raise AoDivergenceError(f"non-finite MSE at iteration {len(trace.records) - 1}", trace)
