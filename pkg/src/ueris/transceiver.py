"""SVD of the effective channel and hybrid analog/digital factorization.

The precoder targets the top-N right singular vectors ``V_N`` and the
combiner targets ``U_N^H``. Each target is split into a constant-modulus
analog stage and an unconstrained digital stage. The digital stage is
eliminated by least squares and the analog phases are optimized by
L-BFGS on the remaining residual, so every accepted iterate lowers it.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .scenario import ScenarioConfig, substream

MAX_ITERATIONS = 200
RESIDUAL_TOL = 1e-9
N_RESTARTS = 4
SCREEN_ITERATIONS = 40


@dataclass(frozen=True, eq=False)
class SvdTriple:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        n_r, n_t = self.u.shape[0], self.v.shape[0]
        s = np.zeros((n_r, n_t))
        k = len(self.sigma)
        s[:k, :k] = np.diag(self.sigma)
        return self.u @ s @ self.v.conj().T


def _first_nonzero_phase(cols: np.ndarray) -> np.ndarray:
    """Unit phasor of the first non-negligible entry of each column."""
    tol = 1e-12 * max(1.0, float(np.abs(cols).max(initial=0.0)))
    mags = np.abs(cols)
    first = np.argmax(mags > tol, axis=0)
    pivot = cols[first, np.arange(cols.shape[1])]
    out = np.ones(cols.shape[1], dtype=complex)
    nz = np.abs(pivot) > tol
    out[nz] = pivot[nz] / np.abs(pivot[nz])
    return out


def svd_decompose(h: np.ndarray) -> SvdTriple:
    """Full SVD with descending singular values and a fixed phase convention.

    The first non-negligible entry of every left singular vector is made
    real and positive; paired right singular vectors are rotated alike so
    ``U diag(sigma) V^H`` still equals ``h``.
    """
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    u, s, vh = np.linalg.svd(h, full_matrices=True)
    v = vh.conj().T
    k = len(s)
    rot_u = _first_nonzero_phase(u)
    u = u * rot_u.conj()
    v[:, :k] = v[:, :k] * rot_u[:k].conj()
    if v.shape[1] > k:
        v[:, k:] = v[:, k:] * _first_nonzero_phase(v[:, k:]).conj()
    return SvdTriple(u, s, v)


@dataclass(frozen=True, eq=False)
class HybridFactor:
    """``target ~= analog @ digital`` with constant-modulus ``analog``."""

    analog: np.ndarray
    digital: np.ndarray
    residual: float
    history: tuple[float, ...] = field(default=())

    def __iter__(self):
        yield self.analog
        yield self.digital

    @property
    def product(self) -> np.ndarray:
        return self.analog @ self.digital


def _phase_only(x: np.ndarray, n_antennas: int) -> np.ndarray:
    mag = np.abs(x)
    unit = np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 1.0)
    return unit / math.sqrt(n_antennas)


def _least_squares_digital(analog: np.ndarray, target: np.ndarray) -> np.ndarray:
    gram = analog.conj().T @ analog
    try:
        return np.linalg.solve(gram, analog.conj().T @ target)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(analog, target, rcond=None)[0]


def _residual_and_gradient(theta, target, shape):
    """Squared residual with the digital stage eliminated, and its phase gradient."""
    analog = np.exp(1j * theta.reshape(shape)) / math.sqrt(shape[0])
    digital = _least_squares_digital(analog, target)
    r = target - analog @ digital
    grad = 2.0 * np.imag(np.conj(r @ digital.conj().T) * analog)
    return float(np.vdot(r, r).real), grad.ravel()


def refine_analog_phases(target: np.ndarray, analog0: np.ndarray,
                           max_iterations: int = MAX_ITERATIONS,
                           tol: float = RESIDUAL_TOL):
    """One solver run from ``analog0``.

    The digital stage is always the least-squares fit for the current
    analog stage; the analog phases are updated by L-BFGS on that reduced
    residual. Returns (analog, digital, residual history); the line search
    only accepts decreasing iterates, so the history never increases.
    """
    shape = analog0.shape
    theta0 = np.angle(analog0).ravel()
    f0 = _residual_and_gradient(theta0, target, shape)[0]
    history = [math.sqrt(f0)]
    floor = (tol * max(1.0, float(np.linalg.norm(target)))) ** 2

    def record(intermediate_result):
        history.append(math.sqrt(max(intermediate_result.fun, 0.0)))
        if intermediate_result.fun < floor:
            raise StopIteration

    res = minimize(_residual_and_gradient, theta0, args=(target, shape), jac=True,
                   method="L-BFGS-B", callback=record,
                   options={"maxiter": max_iterations, "gtol": 1e-12, "ftol": 1e-16})
    theta = res.x if res.fun <= f0 else theta0
    analog = np.exp(1j * theta.reshape(shape)) / math.sqrt(shape[0])
    digital = _least_squares_digital(analog, target)
    return analog, digital, history


def factorize_hybrid(target: np.ndarray, n_rf: int, power: float,
                     rng: np.random.Generator, restarts: int = N_RESTARTS,
                     initial: np.ndarray | None = None,
                     max_iterations: int = MAX_ITERATIONS,
                     screen_iterations: int = SCREEN_ITERATIONS) -> HybridFactor:
    """Best of ``restarts`` solver runs, then scale digital so ||A D||_F^2 = power.

    ``initial`` (n_antennas x n_rf) seeds the first run; the others start
    from uniformly random phases. Every start gets ``screen_iterations``
    steps and only the best continues up to ``max_iterations`` in total.
    """
    n_ant, n_cols = target.shape
    if n_rf > n_ant:
        raise ValueError(f"{n_rf} RF chains exceed {n_ant} antennas")
    if n_cols > n_rf:
        raise ValueError(f"{n_cols} streams exceed {n_rf} RF chains")
    starts = []
    if initial is not None:
        starts.append(np.asarray(initial, dtype=complex))
    while len(starts) < max(restarts, 1):
        starts.append(np.exp(2j * math.pi * rng.random((n_ant, n_rf))))

    screen = min(screen_iterations, max_iterations)
    runs = [refine_analog_phases(target, start, screen) for start in starts]
    analog, digital, history = min(runs, key=lambda run: run[2][-1])
    if max_iterations > screen:
        analog, digital, more = refine_analog_phases(target, analog, max_iterations - screen)
        history = history + more[1:]
    norm = np.linalg.norm(analog @ digital)
    if norm > 0:
        digital = digital * (math.sqrt(power) / norm)
    residual = float(np.linalg.norm(target - analog @ digital))
    return HybridFactor(analog, digital, residual, tuple(history))


def _default_rng(config: ScenarioConfig, rng):
    return rng if rng is not None else substream(config.rng_seed, "transceiver")


def design_hybrid_precoder(svd: SvdTriple, config: ScenarioConfig,
                           rng: np.random.Generator | None = None,
                           restarts: int = N_RESTARTS) -> HybridFactor:
    """(F_A, F_D) with ``F_A F_D ~= V_N`` and ``||F_A F_D||_F^2 = N``."""
    n, n_rf = config.n_streams, config.n_tx_rf_chains
    if n > n_rf or n_rf > svd.v.shape[0]:
        raise ValueError("infeasible precoder dimensions")
    target = svd.v[:, :n]
    return factorize_hybrid(target, n_rf, n, _default_rng(config, rng), restarts,
                            initial=svd.v[:, :n_rf])


def design_hybrid_combiner(svd: SvdTriple, config: ScenarioConfig,
                           rng: np.random.Generator | None = None,
                           restarts: int = N_RESTARTS) -> tuple[np.ndarray, np.ndarray, HybridFactor]:
    """(W_A^H, W_D^H) with ``W_D^H W_A^H ~= U_N^H`` and unit-trace-per-stream norm.

    The third element is the underlying factorization of ``U_N`` (residual
    and solver history), conjugate-transposed relative to the outputs.
    """
    n, n_rf = config.n_streams, config.n_rx_rf_chains
    if n > n_rf or n_rf > svd.u.shape[0]:
        raise ValueError("infeasible combiner dimensions")
    target = svd.u[:, :n]
    fac = factorize_hybrid(target, n_rf, n, _default_rng(config, rng), restarts,
                           initial=svd.u[:, :n_rf])
    return fac.analog.conj().T, fac.digital.conj().T, fac


@dataclass(frozen=True, eq=False)
class HybridTransceiver:
    f_analog: np.ndarray
    f_digital: np.ndarray
    w_analog_h: np.ndarray
    w_digital_h: np.ndarray
    precoder_residual: float = float("nan")
    combiner_residual: float = float("nan")

    @property
    def precoder(self) -> np.ndarray:
        return self.f_analog @ self.f_digital

    @property
    def combiner(self) -> np.ndarray:
        """``W = W_D^H W_A^H`` (N x N_r)."""
        return self.w_digital_h @ self.w_analog_h

    def matrices(self) -> dict[str, np.ndarray]:
        return {"F_A": self.f_analog, "F_D": self.f_digital,
                "W_A_H": self.w_analog_h, "W_D_H": self.w_digital_h}

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for mat in self.matrices().values():
            h.update(np.ascontiguousarray(mat).tobytes())
        return h.hexdigest()[:12]


def design_transceiver(h: np.ndarray, config: ScenarioConfig,
                       rng: np.random.Generator | None = None) -> HybridTransceiver:
    """SVD of ``h`` followed by hybrid precoder and combiner design.

    Without an explicit ``rng`` the restarts are seeded from
    ``config.rng_seed``, so equal channels give identical transceivers.
    """
    svd = svd_decompose(h)
    if rng is None:
        p_rng = substream(config.rng_seed, "transceiver/precoder")
        c_rng = substream(config.rng_seed, "transceiver/combiner")
    else:
        p_rng = c_rng = rng
    pre = design_hybrid_precoder(svd, config, p_rng)
    w_a_h, w_d_h, comb = design_hybrid_combiner(svd, config, c_rng)
    return HybridTransceiver(pre.analog, pre.digital, w_a_h, w_d_h, pre.residual, comb.residual)
