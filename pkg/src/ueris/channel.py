"""Direct and per-UE channels, RIS phase matrices and the effective channel.

Every link is narrowband and geometric: one LOS ray along the true
direction between the two arrays plus a few NLOS rays with uniformly drawn
angles and complex Gaussian gains. Arrays are uniform linear: TX and RX
arrays lie along the y-axis with half-wavelength spacing, each UE strip
lies in the horizontal plane at its own orientation with spacing
``element_spacing_multiplier * lambda / 2``.

Gains follow free-space (Friis) loss over the geometric distance. With
``normalize_gain`` set, all channels are divided by a common constant so
that ``E||H_d||_F^2 = direct_power`` (default ``n_streams``); the RIS
cascade through one element at the TX-RX midpoint then carries
``ris_relative_gain_db`` relative to one entry of the direct channel.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .scenario import Geometry, PhaseSet, ScenarioConfig, build_phase_set, substream

N_DIRECT_NLOS = 3
N_SEGMENT_NLOS = 2
ARRAY_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True, eq=False)
class ChannelSet:
    h_direct: np.ndarray
    g_list: tuple[np.ndarray, ...]
    q_list: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "g_list", tuple(self.g_list))
        object.__setattr__(self, "q_list", tuple(self.q_list))
        n_r, n_t = self.h_direct.shape
        if len(self.g_list) != len(self.q_list):
            raise ValueError("g_list and q_list differ in length")
        for i, (g, q) in enumerate(zip(self.g_list, self.q_list)):
            m = g.shape[0]
            if g.shape != (m, n_t) or q.shape != (n_r, m):
                raise ValueError(f"UE {i}: G is {g.shape}, Q is {q.shape}, H_d is {self.h_direct.shape}")
        for arr in (self.h_direct, *self.g_list, *self.q_list):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel contains non-finite entries")

    @property
    def n_ues(self) -> int:
        return len(self.g_list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.h_direct.shape

    def element_counts(self) -> list[int]:
        return [g.shape[0] for g in self.g_list]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All RIS elements side by side: ``Q_all`` (N_r x L) and ``G_all`` (L x N_t)."""
        n_r, n_t = self.shape
        if not self.g_list:
            return np.zeros((n_r, 0), complex), np.zeros((0, n_t), complex)
        return np.hstack(self.q_list), np.vstack(self.g_list)

    def subset(self, ue_ids) -> "ChannelSet":
        ids = list(ue_ids)
        return ChannelSet(self.h_direct, [self.g_list[i] for i in ids], [self.q_list[i] for i in ids])

    def without_direct(self) -> "ChannelSet":
        return dataclasses.replace(self, h_direct=np.zeros_like(self.h_direct))

    def equal(self, other: "ChannelSet") -> bool:
        if self.n_ues != other.n_ues or not np.array_equal(self.h_direct, other.h_direct):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.g_list + self.q_list, other.g_list + other.q_list))


@dataclass(frozen=True, eq=False)
class RisConfiguration:
    phase_indices: np.ndarray
    phase_set: PhaseSet

    def __post_init__(self):
        idx = np.asarray(self.phase_indices, dtype=np.int64)
        if idx.ndim == 1 and idx.size == 0:
            idx = idx.reshape(0, 0)
        if idx.ndim != 2:
            raise ValueError("phase_indices must be an (N_d, M) array")
        if idx.size and (idx.min() < 0 or idx.max() >= self.phase_set.size):
            raise ValueError(f"phase index outside 0..{self.phase_set.size - 1}")
        idx.setflags(write=False)
        object.__setattr__(self, "phase_indices", idx)

    @classmethod
    def zeros(cls, n_ues: int, m: int, phase_set: PhaseSet) -> "RisConfiguration":
        return cls(np.zeros((n_ues, m), dtype=np.int64), phase_set)

    @classmethod
    def from_flat(cls, flat, n_ues: int, m: int, phase_set: PhaseSet) -> "RisConfiguration":
        return cls(np.asarray(flat, dtype=np.int64).reshape(n_ues, m), phase_set)

    @property
    def n_ues(self) -> int:
        return self.phase_indices.shape[0]

    def flat(self) -> np.ndarray:
        return self.phase_indices.reshape(-1)

    def phasors(self) -> np.ndarray:
        """Diagonal entries of every Phi_i, flattened in element order."""
        return self.phase_set.phasors[self.flat()]

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.flat())


def ris_phase_matrix(ris: RisConfiguration, ue_index: int) -> np.ndarray:
    """``Phi_i = diag(exp(j*phi_1), ..., exp(j*phi_M))`` for one UE."""
    if not 0 <= ue_index < ris.n_ues:
        raise IndexError(f"ue_index {ue_index} out of range for {ris.n_ues} UEs")
    return np.diag(ris.phase_set.phasors[ris.phase_indices[ue_index]])


def assemble_effective_channel(channels: ChannelSet, ris: RisConfiguration) -> np.ndarray:
    """``H_d + sum_i Q_i Phi_i G_i``."""
    if ris.n_ues != channels.n_ues:
        raise ValueError(f"RIS configuration has {ris.n_ues} UEs, channels have {channels.n_ues}")
    if channels.n_ues == 0:
        return channels.h_direct.copy()
    if any(m != ris.phase_indices.shape[1] for m in channels.element_counts()):
        raise ValueError("RIS element count does not match G_i/Q_i dimensions")
    q_all, g_all = channels.stacked()
    return channels.h_direct + (q_all * ris.phasors()) @ g_all


# -- generation -------------------------------------------------------------

def friis_gain(distance: float, wavelength: float) -> float:
    """Free-space power gain between isotropic antennas."""
    return (wavelength / (4.0 * math.pi * distance)) ** 2


def steering_vector(n: int, spacing: float, sin_angle: float) -> np.ndarray:
    """ULA response with element spacing given in wavelengths; unit-modulus entries."""
    return np.exp(2j * math.pi * spacing * np.arange(n) * sin_angle)


def _ray_channel(n_rx, n_tx, rx_axis, tx_axis, direction, rx_spacing, tx_spacing,
                 entry_power, k_factor, n_nlos, rng):
    """LOS ray along ``direction`` (unit vector TX->RX) plus ``n_nlos`` scattered rays."""
    los_power = entry_power * k_factor / (1.0 + k_factor)
    nlos_power = entry_power / (1.0 + k_factor) / n_nlos
    sin_aod = float(direction @ tx_axis)
    sin_aoa = float(-direction @ rx_axis)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    h = math.sqrt(los_power) * np.exp(1j * phase) * np.outer(
        steering_vector(n_rx, rx_spacing, sin_aoa),
        steering_vector(n_tx, tx_spacing, sin_aod).conj(),
    )
    for _ in range(n_nlos):
        aoa, aod = rng.uniform(-math.pi / 2, math.pi / 2, size=2)
        gain = math.sqrt(nlos_power / 2.0) * (rng.standard_normal() + 1j * rng.standard_normal())
        h = h + gain * np.outer(
            steering_vector(n_rx, rx_spacing, math.sin(aoa)),
            steering_vector(n_tx, tx_spacing, math.sin(aod)).conj(),
        )
    return h


def _unit(v):
    return v / np.linalg.norm(v)


def gain_scales(config: ScenarioConfig) -> tuple[float, float]:
    """(direct per-entry power, RIS element gain) after normalization.

    The RIS element gain multiplies ``friis(d1) * friis(d2)`` to give the
    per-entry power of a single-element cascade.
    """
    lam = config.wavelength
    d = config.tx_rx_distance_m
    direct_friis = friis_gain(d, lam)
    if config.normalize_gain:
        target = config.direct_power if config.direct_power is not None else config.n_streams
        direct_entry = target / (config.n_tx_antennas * config.n_rx_antennas)
    else:
        direct_entry = direct_friis
    relative = 10.0 ** (config.ris_relative_gain_db / 10.0)
    element_gain = direct_entry * relative / friis_gain(d / 2.0, lam) ** 2
    return direct_entry, element_gain


def generate_direct_channel(config: ScenarioConfig, geometry: Geometry,
                            rng: np.random.Generator) -> np.ndarray:
    direct_entry, _ = gain_scales(config)
    k_factor = 10.0 ** (config.rician_k_db / 10.0)
    direction = _unit(geometry.rx_position - geometry.tx_position)
    h = _ray_channel(config.n_rx_antennas, config.n_tx_antennas, ARRAY_AXIS, ARRAY_AXIS,
                     direction, 0.5, 0.5, direct_entry, k_factor, N_DIRECT_NLOS, rng)
    if config.no_los:
        h = np.zeros_like(h)
    return h


def generate_ue_channels(config: ScenarioConfig, geometry: Geometry, rng: np.random.Generator):
    """Per-UE ``G_i`` (M x N_t) and ``Q_i`` (N_r x M) lists."""
    _, element_gain = gain_scales(config)
    lam = config.wavelength
    m = config.ris_elements_per_ue
    k_factor = 10.0 ** (config.rician_k_db / 10.0)
    ris_spacing = 0.5 * config.element_spacing_multiplier
    split = math.sqrt(element_gain)
    g_list, q_list = [], []
    for pos, orient in zip(geometry.ue_positions, geometry.ue_orientations):
        strip_axis = np.array([math.cos(orient), math.sin(orient), 0.0])
        d1 = np.linalg.norm(pos - geometry.tx_position)
        d2 = np.linalg.norm(geometry.rx_position - pos)
        g = _ray_channel(m, config.n_tx_antennas, strip_axis, ARRAY_AXIS,
                         _unit(pos - geometry.tx_position), ris_spacing, 0.5,
                         friis_gain(d1, lam) * split, k_factor, N_SEGMENT_NLOS, rng)
        q = _ray_channel(config.n_rx_antennas, m, ARRAY_AXIS, strip_axis,
                         _unit(geometry.rx_position - pos), 0.5, ris_spacing,
                         friis_gain(d2, lam) * split, k_factor, N_SEGMENT_NLOS, rng)
        g_list.append(g)
        q_list.append(q)
    return g_list, q_list


def generate_channels(config: ScenarioConfig, geometry: Geometry,
                      rng: np.random.Generator | None = None) -> ChannelSet:
    """Draw ``H_d`` and every ``(G_i, Q_i)`` for the UEs in ``geometry``.

    With ``rng=None`` the direct channel and the UE channels come from
    separate named sub-streams of ``config.rng_seed``, so ``H_d`` does not
    depend on how many UEs are present.
    """
    if rng is None:
        direct_rng = substream(config.rng_seed, "channel/direct")
        ue_rng = substream(config.rng_seed, "channel/ue")
    else:
        direct_rng = ue_rng = rng
    h = generate_direct_channel(config, geometry, direct_rng)
    g_list, q_list = generate_ue_channels(config, geometry, ue_rng)
    return ChannelSet(h, g_list, q_list)


def default_phase_set(config: ScenarioConfig) -> PhaseSet:
    return build_phase_set(config.phase_cardinality)
