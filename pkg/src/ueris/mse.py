"""Analytic MSE matrix and symbol-level Monte Carlo estimate of the link MSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, RisConfiguration, assemble_effective_channel, gain_scales
from .scenario import ScenarioConfig
from .transceiver import HybridTransceiver

SYMBOL_CHUNK = 50_000


@dataclass(frozen=True, eq=False)
class MseReport:
    mse_matrix: np.ndarray
    delta: float
    keff: np.ndarray
    w_combined: np.ndarray


def mse_for_channel(h: np.ndarray, tx: HybridTransceiver, symbol_power: float,
                    noise_power: float) -> MseReport:
    """``M = p (K - I)(K - I)^H + sigma^2 W W^H`` with ``K = W H F``."""
    w = tx.combiner
    f = tx.precoder
    if w.shape[1] != h.shape[0] or f.shape[0] != h.shape[1] or w.shape[0] != f.shape[1]:
        raise ValueError(f"dimension mismatch: W {w.shape}, H {h.shape}, F {f.shape}")
    keff = w @ h @ f
    err = keff - np.eye(keff.shape[0])
    m = symbol_power * (err @ err.conj().T) + noise_power * (w @ w.conj().T)
    m = 0.5 * (m + m.conj().T)
    return MseReport(m, float(np.trace(m).real), keff, w)


def mse_matrix(channels: ChannelSet, ris: RisConfiguration, tx: HybridTransceiver,
               config: ScenarioConfig) -> MseReport:
    h = assemble_effective_channel(channels, ris)
    return mse_for_channel(h, tx, config.symbol_power, config.noise_power)


def noise_power_for_snr(config: ScenarioConfig, snr_db: float) -> float:
    """Noise power giving the requested per-receive-antenna SNR.

    SNR is ``p * E||H_d F||_F^2 / (N_r * sigma^2)``, the expectation taken
    over the direct-link ensemble with a precoder of squared norm N, which
    gives ``E||H_d F||^2 = N * E||H_d||^2 / N_t``. Depends on the config
    only, so every arm of an experiment shares the same noise floor.
    """
    direct_entry, _ = gain_scales(config)
    return config.symbol_power * config.n_streams * direct_entry / 10.0 ** (snr_db / 10.0)


def qam_constellation(order: int) -> np.ndarray:
    """Square QAM points scaled to unit average energy."""
    side = math.isqrt(order)
    if order < 4 or side * side != order:
        raise ValueError(f"constellation order {order} is not a square QAM size")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).reshape(-1)
    return points / math.sqrt(np.mean(np.abs(points) ** 2))


@dataclass(frozen=True)
class EmpiricalMse:
    mse: float
    std_error: float
    n_symbols: int

    def __float__(self) -> float:
        return self.mse


def simulate_link(channels: ChannelSet, ris: RisConfiguration, tx: HybridTransceiver,
                  config: ScenarioConfig, rng: np.random.Generator,
                  n_symbols: int | None = None, h: np.ndarray | None = None) -> EmpiricalMse:
    """Average of ``||y - x||^2`` over QAM symbol vectors sent through the link.

    ``h`` overrides the assembled effective channel (test fixtures).
    """
    n_sym = config.n_symbols if n_symbols is None else n_symbols
    if n_sym < 1:
        raise ValueError("n_symbols must be >= 1")
    points = qam_constellation(config.constellation_order)
    if h is None:
        h = assemble_effective_channel(channels, ris)
    w = tx.combiner
    keff = w @ h @ tx.precoder
    n = keff.shape[0]
    n_r = w.shape[1]
    amp = math.sqrt(config.symbol_power)
    noise_amp = math.sqrt(config.noise_power / 2.0)

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_sym:
        c = min(SYMBOL_CHUNK, n_sym - done)
        x = amp * points[rng.integers(0, len(points), size=(n, c))]
        noise = noise_amp * (rng.standard_normal((n_r, c)) + 1j * rng.standard_normal((n_r, c)))
        y = keff @ x + w @ noise
        err = np.sum(np.abs(y - x) ** 2, axis=0)
        total += float(err.sum())
        total_sq += float(np.dot(err, err))
        done += c
    mean = total / n_sym
    var = max(total_sq / n_sym - mean * mean, 0.0)
    stderr = math.sqrt(var / n_sym) if n_sym > 1 else math.inf
    return EmpiricalMse(mean, stderr, n_sym)
