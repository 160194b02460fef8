"""Discrete RIS phase search for a fixed precoder/combiner.

With the transceiver fixed, the MSE is a quadratic in the RIS phasors.
Writing ``W`` for the combiner and ``F`` for the precoder,

    K - I = (W H_d F - I) + sum_e z_e (W q_e)(g_e^T F)

where ``e`` runs over every RIS element of every UE, ``q_e`` is a column
of ``Q_i`` and ``g_e^T`` a row of ``G_i``. Each element therefore adds a
fixed N x N rank-one term scaled by its phasor ``z_e``, and both searches
work in this reduced N*N space instead of reassembling the N_r x N_t
channel.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import ChannelSet, RisConfiguration
from .mse import mse_matrix
from .scenario import ScenarioConfig, build_phase_set
from .transceiver import HybridTransceiver

ES = "ES"
BP = "BP"
BLOCK_GREEDY_LIMIT = 4096
ENUM_CHUNK_ROWS = 1 << 18


class SearchBudgetError(RuntimeError):
    """Exhaustive search refused: the instance exceeds the enumeration budget."""


@dataclass(frozen=True, eq=False)
class PhaseSearchResult:
    ris: RisConfiguration
    objective: float
    nodes_expanded: int
    method: str
    complete: bool = True


def objective(channels: ChannelSet, ris: RisConfiguration, tx: HybridTransceiver,
              config: ScenarioConfig) -> float:
    """MSE trace for one phase assignment."""
    return mse_matrix(channels, ris, tx, config).delta


class ReducedObjective:
    """The MSE as a function of the flattened per-element phasors."""

    def __init__(self, channels: ChannelSet, tx: HybridTransceiver, config: ScenarioConfig):
        self.phase_set = build_phase_set(config.phase_cardinality)
        self.phasors = self.phase_set.phasors
        self.n_ues = channels.n_ues
        self.m = channels.g_list[0].shape[0] if channels.n_ues else config.ris_elements_per_ue
        w = tx.combiner
        f = tx.precoder
        n = w.shape[0]
        self.n = n
        self.base = (w @ channels.h_direct @ f - np.eye(n)).reshape(-1)
        q_all, g_all = channels.stacked()
        a = w @ q_all
        b = g_all @ f
        self.terms = np.einsum("ie,ej->eij", a, b).reshape(-1, n * n)
        self.power = config.symbol_power
        self.noise_term = config.noise_power * float(np.linalg.norm(w) ** 2)

    @property
    def n_elements(self) -> int:
        return self.terms.shape[0]

    def residual(self, flat) -> np.ndarray:
        z = self.phasors[np.asarray(flat, dtype=np.int64)]
        return self.base + z @ self.terms

    def value(self, flat) -> float:
        r = self.residual(flat)
        return self.power * float(np.vdot(r, r).real) + self.noise_term

    def values_from_residuals(self, r: np.ndarray) -> np.ndarray:
        return self.power * np.einsum("ij,ij->i", r.real, r.real) \
            + self.power * np.einsum("ij,ij->i", r.imag, r.imag) + self.noise_term

    def partial_sums(self, elements) -> np.ndarray:
        """``sum_e z_e C_e`` for every assignment of ``elements``, lexicographic order."""
        table = np.zeros((1, self.terms.shape[1]), dtype=complex)
        for e in elements:
            step = self.phasors[:, None] * self.terms[e][None, :]
            table = (table[:, None, :] + step[None, :, :]).reshape(-1, self.terms.shape[1])
        return table

    def to_ris(self, flat) -> RisConfiguration:
        return RisConfiguration.from_flat(flat, self.n_ues, self.m, self.phase_set)


def _finish(channels, tx, config, red, flat, nodes, method, complete=True):
    ris = red.to_ris(flat)
    return PhaseSearchResult(ris, objective(channels, ris, tx, config), nodes, method, complete)


def _digits(start: int, stop: int, width: int, k: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((len(idx), width), dtype=np.int64)
    for col in range(width - 1, -1, -1):
        out[:, col] = idx % k
        idx //= k
    return out


def exhaustive_search(channels: ChannelSet, tx: HybridTransceiver, config: ScenarioConfig,
                      budget: int | None = None) -> PhaseSearchResult:
    """Global optimum over all ``K^(N_d*M)`` assignments.

    Ties go to the lexicographically smallest flattened index vector.
    Raises SearchBudgetError when the candidate count exceeds ``budget``
    (default ``config.es_budget``).
    """
    red = ReducedObjective(channels, tx, config)
    k = red.phase_set.size
    n_el = red.n_elements
    total = k ** n_el
    limit = config.es_budget if budget is None else budget
    if total > limit:
        raise SearchBudgetError(f"{total} candidates exceed the exhaustive-search budget {limit}")
    if n_el == 0:
        return _finish(channels, tx, config, red, [], 1, ES)

    # meet in the middle: prefix sums x suffix sums, prefix most significant
    n_prefix = n_el // 2
    prefix = red.partial_sums(range(n_prefix))
    suffix = red.partial_sums(range(n_prefix, n_el)) + red.base
    n_suffix_rows = suffix.shape[0]
    block = max(1, ENUM_CHUNK_ROWS // n_suffix_rows)

    best_val = math.inf
    best_row = -1
    for start in range(0, prefix.shape[0], block):
        stop = min(start + block, prefix.shape[0])
        r = (prefix[start:stop, None, :] + suffix[None, :, :]).reshape(-1, suffix.shape[1])
        vals = red.values_from_residuals(r)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_row = start * n_suffix_rows + j
    flat = _digits(best_row, best_row + 1, n_el, k)[0]
    return _finish(channels, tx, config, red, flat, total, ES)


def information_order(channels: ChannelSet) -> list[int]:
    """UEs by descending ``||Q_i||_F * ||G_i||_F`` (stable on index)."""
    strength = [np.linalg.norm(q) * np.linalg.norm(g) for g, q in zip(channels.g_list, channels.q_list)]
    return sorted(range(channels.n_ues), key=lambda i: (-strength[i], i))


def _coordinate_descent(red: ReducedObjective, flat: np.ndarray, ue_order, m: int,
                        block_first: bool, max_sweeps: int = 50) -> np.ndarray:
    """Greedy sweeps in ``ue_order``; the first sweep optimizes whole UEs when cheap."""
    flat = flat.copy()
    z = red.phasors
    resid = red.residual(flat)
    if block_first and red.phase_set.size ** m <= BLOCK_GREEDY_LIMIT:
        for ue in ue_order:
            els = list(range(ue * m, (ue + 1) * m))
            resid_rest = resid - z[flat[els]] @ red.terms[els]
            table = red.partial_sums(els) + resid_rest
            j = int(np.argmin(red.values_from_residuals(table)))
            flat[els] = _digits(j, j + 1, m, red.phase_set.size)[0]
            resid = table[j]
    elements = [ue * m + j for ue in ue_order for j in range(m)]
    for _ in range(max_sweeps):
        changed = False
        for e in elements:
            rest = resid - z[flat[e]] * red.terms[e]
            cand = rest[None, :] + z[:, None] * red.terms[e][None, :]
            vals = red.values_from_residuals(cand)
            j = int(np.argmin(vals))
            if vals[j] < vals[flat[e]] and j != flat[e]:
                flat[e] = j
                resid = cand[j]
                changed = True
        if not changed:
            break
    return flat


def _better(val, flat, best_val, best_flat) -> bool:
    if val < best_val:
        return True
    return val == best_val and tuple(flat) < tuple(best_flat)


def branch_prune_search(channels: ChannelSet, tx: HybridTransceiver, config: ScenarioConfig,
                        initial: RisConfiguration | None = None,
                        node_budget: int | None = None,
                        trace: Callable[[dict], None] | None = None) -> PhaseSearchResult:
    """Best-first branch-and-prune over RIS elements.

    Elements are decided UE by UE in :func:`information_order`. The
    incumbent starts from greedy sweeps (and ``initial`` when given), so the
    result is never worse than either. A node is pruned when
    ``(1 + gap) * bound >= incumbent`` with ``gap = config.near_optimality_gap``,
    which keeps the result within a factor ``1 + gap`` of the optimum when
    the search completes within ``node_budget`` expansions.
    """
    red = ReducedObjective(channels, tx, config)
    k = red.phase_set.size
    m = red.m
    n_el = red.n_elements
    if n_el == 0 or k == 1:
        return _finish(channels, tx, config, red, np.zeros(n_el, dtype=np.int64), 1, BP)
    budget = config.bp_node_budget if node_budget is None else node_budget
    gap = config.near_optimality_gap

    ue_order = information_order(channels)
    perm = np.array([ue * m + j for ue in ue_order for j in range(m)], dtype=np.int64)

    starts = [np.zeros(n_el, dtype=np.int64)]
    if initial is not None:
        starts.append(initial.flat().astype(np.int64))
    best_flat, best_val = None, math.inf
    for start in starts:
        for cand in (start, _coordinate_descent(red, start, ue_order, m, block_first=True)):
            val = red.value(cand)
            if best_flat is None or _better(val, cand, best_val, best_flat):
                best_flat, best_val = cand.copy(), val

    terms = red.terms[perm]
    dim = terms.shape[1]
    # bound data per depth: orthonormal basis of the remaining terms and their norm sum
    bases, tri = [], []
    norms = np.linalg.norm(terms, axis=1)
    for d in range(n_el + 1):
        rest = terms[d:]
        if len(rest) == 0:
            bases.append(np.zeros((dim, 0), dtype=complex))
        elif len(rest) >= dim:
            bases.append(None)
        else:
            bases.append(np.linalg.qr(rest.T)[0])
        tri.append(float(norms[d:].sum()))

    p, noise = red.power, red.noise_term

    def bound(resid: np.ndarray, depth: int) -> np.ndarray:
        basis = bases[depth]
        if basis is None:
            perp2 = np.zeros(resid.shape[0])
            par = np.linalg.norm(resid, axis=1)
        else:
            coef = resid @ basis.conj()
            par = np.linalg.norm(coef, axis=1)
            perp2 = np.maximum(np.einsum("ij,ij->i", resid.conj(), resid).real - par ** 2, 0.0)
        return p * (perp2 + np.maximum(par - tri[depth], 0.0) ** 2) + noise

    z = red.phasors
    root = red.base.copy()
    heap = [(float(bound(root[None, :], 0)[0]), (), root)]
    expanded = 0
    complete = True
    node_id = 0
    while heap:
        b, path, resid = heapq.heappop(heap)
        if (1.0 + gap) * b >= best_val:
            break
        if expanded >= budget:
            complete = False
            break
        expanded += 1
        depth = len(path)
        children = resid[None, :] + z[:, None] * terms[depth][None, :]
        if trace is not None:
            trace({"node": node_id, "depth": depth, "bound": b, "incumbent": best_val})
        node_id += 1
        if depth + 1 == n_el:
            vals = red.values_from_residuals(children)
            for j in range(k):
                full = np.empty(n_el, dtype=np.int64)
                full[perm] = path + (j,)
                if _better(float(vals[j]), full, best_val, best_flat):
                    best_val, best_flat = float(vals[j]), full
            continue
        child_bounds = bound(children, depth + 1)
        for j in range(k):
            if (1.0 + gap) * child_bounds[j] < best_val:
                heapq.heappush(heap, (float(child_bounds[j]), path + (j,), children[j]))
    return _finish(channels, tx, config, red, best_flat, expanded, BP, complete)


def max_gain_phases(channels: ChannelSet, config: ScenarioConfig,
                    max_sweeps: int = 50) -> RisConfiguration:
    """Phases that locally maximize ``||H||_F`` by element-wise ascent.

    Used before any transceiver exists; elements are visited in
    :func:`information_order`.
    """
    phase_set = build_phase_set(config.phase_cardinality)
    m = channels.g_list[0].shape[0] if channels.n_ues else config.ris_elements_per_ue
    if channels.n_ues == 0:
        return RisConfiguration.zeros(0, m, phase_set)
    z = phase_set.phasors
    q_all, g_all = channels.stacked()
    rank_one = np.einsum("ie,ej->eij", q_all, g_all).reshape(q_all.shape[1], -1)
    flat = np.zeros(rank_one.shape[0], dtype=np.int64)
    total = channels.h_direct.reshape(-1) + z[flat] @ rank_one
    elements = [ue * m + j for ue in information_order(channels) for j in range(m)]
    for _ in range(max_sweeps):
        changed = False
        for e in elements:
            rest = total - z[flat[e]] * rank_one[e]
            cand = rest[None, :] + z[:, None] * rank_one[e][None, :]
            gains = np.linalg.norm(cand, axis=1)
            j = int(np.argmax(gains))
            if gains[j] > gains[flat[e]] and j != flat[e]:
                flat[e] = j
                total = cand[j]
                changed = True
        if not changed:
            break
    return RisConfiguration.from_flat(flat, channels.n_ues, m, phase_set)


def search(method: str, channels: ChannelSet, tx: HybridTransceiver, config: ScenarioConfig,
           initial: RisConfiguration | None = None) -> PhaseSearchResult:
    method = method.upper()
    if method == ES:
        return exhaustive_search(channels, tx, config)
    if method == BP:
        return branch_prune_search(channels, tx, config, initial=initial)
    raise ValueError(f"unknown phase search method {method!r}")


def jsonl_trace(fh) -> Callable[[dict], None]:
    """Trace sink writing one JSON record per expanded node."""
    def emit(record: dict) -> None:
        fh.write(json.dumps(record) + "\n")
    return emit

