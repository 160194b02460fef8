"""Control-plane simulation: cooperating-UE selection and sequential channel estimation.

The TX broadcasts a participation request, estimates ``G_i`` for every UE
that accepts, keeps the ``L_M`` most static UEs (channel quality breaks
ties), has the RX estimate ``Q_i`` for those one UE at a time with a
known pilot, and finally keeps the ``N_d`` UEs with the strongest
estimated ``Q_i``. Every control message is appended to a log in the
order it would be sent.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .scenario import FARFIELD_RATIO, Geometry, ScenarioConfig

TX = "TX"
RX = "RX"


class MessageKind(str, enum.Enum):
    REQUEST_TO_PARTICIPATE = "REQUEST_TO_PARTICIPATE"
    ACCEPT = "ACCEPT"
    START_CE = "START_CE"
    ACK = "ACK"
    SEND_S = "SEND_S"
    CE_COMPLETE = "CE_COMPLETE"


CE_SEQUENCE = (MessageKind.START_CE, MessageKind.ACK, MessageKind.SEND_S, MessageKind.CE_COMPLETE)


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    source: str
    destination: str
    ue_index: int | None = None


class MessageLog(list):
    def send(self, kind, source, destination, ue_index=None):
        self.append(ControlMessage(kind, source, destination, ue_index))

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"t": t, "kind": m.kind.value, "src": m.source, "dst": m.destination, "ue": m.ue_index}) + "\n"
            for t, m in enumerate(self)
        )


def ue_name(i: int) -> str:
    return f"UE{i}"


class ShortfallError(RuntimeError):
    def __init__(self, needed: int, achieved: int, log: MessageLog | None = None):
        super().__init__(f"only {achieved} eligible UEs, {needed} required")
        self.needed = needed
        self.achieved = achieved
        self.log = log


class FarFieldError(ValueError):
    pass


@dataclass
class UeRecord:
    ue_id: int
    accepted: bool
    mobility_score: float
    g_hat: np.ndarray | None = None
    q_hat: np.ndarray | None = None
    cqi: float = 0.0


def make_population(n_ues: int, config: ScenarioConfig, rng: np.random.Generator) -> list[UeRecord]:
    """Candidate UEs with acceptance draws and exponential mobility scores (mean 1)."""
    accepted = rng.random(n_ues) < config.accept_probability
    mobility = rng.exponential(1.0, size=n_ues)
    return [UeRecord(i, bool(a), float(s)) for i, (a, s) in enumerate(zip(accepted, mobility))]


def pilot_matrix(n: int, energy: float = 1.0) -> np.ndarray:
    """Scaled unitary DFT pilot, ``S S^H = energy * I``."""
    k = np.arange(n)
    return math.sqrt(energy / n) * np.exp(-2j * math.pi * np.outer(k, k) / n)


def ls_estimate(true_channel: np.ndarray, pilot: np.ndarray, noise_power: float,
                rng: np.random.Generator) -> np.ndarray:
    """Least-squares estimate of ``H`` from ``Y = H S + N`` with ``N ~ CN(0, noise_power)``."""
    y = true_channel @ pilot
    if noise_power > 0:
        y = y + math.sqrt(noise_power / 2.0) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return y @ np.linalg.pinv(pilot)


def pilot_energy(true_channel: np.ndarray, noise_power: float, pilot_snr_db: float) -> float:
    """Pilot energy giving the requested per-entry SNR, so estimation NMSE = 1/SNR."""
    entry_power = float(np.mean(np.abs(true_channel) ** 2))
    if entry_power == 0.0:
        return 1.0
    return noise_power * 10.0 ** (pilot_snr_db / 10.0) / entry_power


def _estimate(true_channel, config, rng, pilot_snr_db=None):
    snr = config.pilot_snr_db if pilot_snr_db is None else pilot_snr_db
    if math.isinf(snr):
        return true_channel.copy()
    n_cols = true_channel.shape[1]
    pilot = pilot_matrix(n_cols, pilot_energy(true_channel, config.noise_power, snr))
    return ls_estimate(true_channel, pilot, config.noise_power, rng)


@dataclass
class ChannelEstimates:
    q_hat: dict[int, np.ndarray]
    log: MessageLog
    skipped: list[int] = field(default_factory=list)


def chan_est(ue_ids, channels: ChannelSet, config: ScenarioConfig, rng: np.random.Generator,
             log: MessageLog | None = None, pilot_snr_db: float | None = None) -> ChannelEstimates:
    """Sequential RX-side estimation of ``Q_i`` for each listed UE.

    Per UE: START_CE (TX to UE and RX), ACK (both to TX), SEND_S (TX to
    UE), LS estimation at the RX, CE_COMPLETE (RX to TX). A UE whose ACK
    times out (``config.ack_timeout_probability``) is skipped after its
    START_CE. ``pilot_snr_db=inf`` gives noiseless pilots.
    """
    log = MessageLog() if log is None else log
    out = ChannelEstimates({}, log)
    for i in ue_ids:
        ue = ue_name(i)
        log.send(MessageKind.START_CE, TX, f"{ue},{RX}", i)
        if config.ack_timeout_probability > 0 and rng.random() < config.ack_timeout_probability:
            out.skipped.append(i)
            continue
        log.send(MessageKind.ACK, f"{ue},{RX}", TX, i)
        log.send(MessageKind.SEND_S, TX, ue, i)
        out.q_hat[i] = _estimate(channels.q_list[i], config, rng, pilot_snr_db)
        log.send(MessageKind.CE_COMPLETE, RX, TX, i)
    return out


@dataclass
class Selection:
    selected: list[int]
    log: MessageLog
    records: list[UeRecord]
    shortlist: list[int]
    h_direct_hat: np.ndarray

    def estimated_channels(self) -> ChannelSet:
        by_id = {r.ue_id: r for r in self.records}
        return ChannelSet(self.h_direct_hat,
                          [by_id[i].g_hat for i in self.selected],
                          [by_id[i].q_hat for i in self.selected])


def ue_select(population: list[UeRecord], channels: ChannelSet, config: ScenarioConfig,
              rng: np.random.Generator, n_select: int | None = None,
              pool_size: int | None = None) -> Selection:
    """Pick ``n_select`` cooperating UEs from ``population``.

    Ranking after the broadcast: ascending mobility score, then descending
    CQI ``||G_hat_i||_F``, then UE id; the first ``L_M`` are estimated and
    ranked by descending ``||Q_hat_i||_F`` (then UE id). ``L_M`` defaults to
    ``config.selection_pool`` or ``min(N_D, 2 * n_select)``.
    """
    n_select = config.n_cooperating_ues if n_select is None else n_select
    if len(population) < n_select:
        raise ShortfallError(n_select, len(population))
    log = MessageLog()
    records = [UeRecord(r.ue_id, r.accepted, r.mobility_score) for r in population]

    for r in records:
        log.send(MessageKind.REQUEST_TO_PARTICIPATE, TX, ue_name(r.ue_id), r.ue_id)
    acceptors = [r for r in records if r.accepted]
    for r in acceptors:
        log.send(MessageKind.ACCEPT, ue_name(r.ue_id), TX, r.ue_id)
    for r in acceptors:
        r.g_hat = _estimate(channels.g_list[r.ue_id], config, rng)
        r.cqi = float(np.linalg.norm(r.g_hat))
    if len(acceptors) < n_select:
        raise ShortfallError(n_select, len(acceptors), log)

    if pool_size is None:
        pool_size = config.selection_pool or min(len(population), 2 * n_select)
    ranked = sorted(acceptors, key=lambda r: (r.mobility_score, -r.cqi, r.ue_id))
    shortlist = [r.ue_id for r in ranked[:pool_size]]

    est = chan_est(shortlist, channels, config, rng, log)
    by_id = {r.ue_id: r for r in records}
    for i, q in est.q_hat.items():
        by_id[i].q_hat = q
    estimated = sorted(est.q_hat, key=lambda i: (-float(np.linalg.norm(est.q_hat[i])), i))
    if len(estimated) < n_select:
        raise ShortfallError(n_select, len(estimated), log)

    h_hat = _estimate(channels.h_direct, config, rng) if np.any(channels.h_direct) else channels.h_direct.copy()
    return Selection(estimated[:n_select], log, records, shortlist, h_hat)


@dataclass(frozen=True, eq=False)
class IdentifiedChannels:
    channels: ChannelSet
    farfield_ratio: float
    substituted: bool = True


def farfield_identify(g_hat, q_hat, geometry: Geometry, h_direct=None,
                      threshold: float = FARFIELD_RATIO) -> IdentifiedChannels:
    """Adopt the patch-antenna estimates as the RIS-element channels.

    Valid only when every TX-UE and UE-RX distance exceeds ``threshold``
    times the RIS-to-patch offset.
    """
    ratio = geometry.farfield_ratio()
    if ratio < threshold:
        raise FarFieldError(f"far-field ratio {ratio:.1f} below {threshold:g}; estimates not identifiable")
    g_hat = list(g_hat)
    q_hat = list(q_hat)
    if h_direct is None:
        n_r, n_t = q_hat[0].shape[0], g_hat[0].shape[1]
        h_direct = np.zeros((n_r, n_t), dtype=complex)
    return IdentifiedChannels(ChannelSet(h_direct, g_hat, q_hat), ratio)


def check_message_order(log) -> list[str]:
    """Violations of the per-UE CE order and of strict UE-by-UE sequencing."""
    problems = []
    ce = [m for m in log if m.kind in CE_SEQUENCE]
    current = None
    step = 0
    finished = set()
    for pos, m in enumerate(ce):
        if m.kind is MessageKind.START_CE:
            if current is not None and step not in (1, 4):
                problems.append(f"UE {current} interrupted at step {step}")
            if m.ue_index in finished:
                problems.append(f"UE {m.ue_index} estimated twice")
            current, step = m.ue_index, 1
            continue
        if m.ue_index != current:
            problems.append(f"message {pos} for UE {m.ue_index} while UE {current} active")
            continue
        if step >= len(CE_SEQUENCE) or m.kind is not CE_SEQUENCE[step]:
            problems.append(f"UE {current}: {m.kind.value} out of order")
            continue
        step += 1
        if step == 4:
            finished.add(current)
    return problems
