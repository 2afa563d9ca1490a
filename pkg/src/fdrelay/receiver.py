"""Destination-side block detection over the delay-shifted effective system.

Builds the exact frame-to-samples matrix and the colored noise covariance
(relay-forwarded noise plus destination noise), then detects with linear
MMSE, block MMSE-DFE, or an exhaustive ML search.

The destination is assumed to know all link gains, the relay's own loop
estimate, the amplifying factor, the generator, and the delay profile.
Under imperfect loop knowledge the model is the nominal one (as if the
cancellation were exact); the residual error term is unmodeled interference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .coding import GeneratorMatrix, convolution_matrix
from .core import ChannelRealization, DelayProfile, qpsk_demodulate_hard, qpsk_slice

_SQRT_HALF = math.sqrt(0.5)

ML_MAX_FRAME = 8

# Relative diagonal jitter applied once when a factorization fails.
_JITTER = 1e-12


@dataclass(frozen=True)
class EffectiveSystem:
    """y = g @ s + n with E[s s^H] = I and Hermitian noise covariance r_n."""

    g: np.ndarray
    r_n: np.ndarray

    @property
    def n_out(self) -> int:
        return self.g.shape[0]

    @property
    def frame_len(self) -> int:
        return self.g.shape[1]


@dataclass(frozen=True)
class DetectionResult:
    symbols: np.ndarray
    bits: np.ndarray
    soft: np.ndarray
    failed: bool = False
    cond_estimate: float = math.nan


def build_effective_system(gen: GeneratorMatrix | None, ch: ChannelRealization,
                           delta: DelayProfile, frame_len: int, *,
                           invert_h_sr: bool = False,
                           source_amp: float = 1.0) -> EffectiveSystem:
    """Assemble the frame-to-samples matrix and noise covariance.

    ``gen is None`` means direct transmission only (no relay path, window of
    frame_len samples). Otherwise the window is frame_len + b - 1 + tau_max
    samples; the direct row lands at the profile's direct delay and the relay
    row (scaled by h_rd*h_sr, or h_rd alone when the relay inverts h_sr) at
    the relay delay. The covariance is sigma2_r |h_rd|^2 B B^H + sigma2_d I
    with B the delay-shifted convolution of the forwarded-noise taps.
    """
    l = frame_len
    if gen is None:
        g = source_amp * ch.h_sd * np.eye(l, dtype=complex)
        return EffectiveSystem(g=g, r_n=ch.sigma2_d * np.eye(l, dtype=complex))

    b = gen.b
    q = l + b - 1
    n_y = q + delta.tau_max
    t0, t1 = delta.tau_direct, delta.tau_relay

    g = np.zeros((n_y, l), dtype=complex)
    g[t0:t0 + l, :] += source_amp * ch.h_sd * np.eye(l, dtype=complex)
    relay_gain = ch.h_rd * (1.0 if invert_h_sr else ch.h_sr) * source_amp
    g[t1:t1 + q, :] += relay_gain * convolution_matrix(gen.relay_taps, l)

    r_n = ch.sigma2_d * np.eye(n_y, dtype=complex)
    if ch.sigma2_r > 0:
        w = gen.relay_taps / ch.h_sr if invert_h_sr else gen.relay_taps
        bn = np.zeros((n_y, n_y), dtype=complex)
        for d in range(1, b + 1):
            off = t1 + d - 1
            if off < n_y:
                idx = np.arange(n_y - off)
                bn[idx + off, idx] = w[d - 1]
        r_n = r_n + ch.sigma2_r * abs(ch.h_rd) ** 2 * (bn @ bn.conj().T)
    return EffectiveSystem(g=g, r_n=r_n)


def _slice_result(soft: np.ndarray, failed: bool = False,
                  cond: float = math.nan) -> DetectionResult:
    symbols = qpsk_slice(soft)
    return DetectionResult(symbols=symbols, bits=qpsk_demodulate_hard(symbols),
                           soft=np.asarray(soft), failed=failed, cond_estimate=cond)


def _chol_with_jitter(m: np.ndarray):
    """Hermitian factorization with a one-shot relative jitter fallback."""
    try:
        return cho_factor(m, lower=True, check_finite=False), False
    except LinAlgError:
        bump = _JITTER * np.trace(m).real / m.shape[0]
        try:
            return cho_factor(m + bump * np.eye(m.shape[0]), lower=True,
                              check_finite=False), True
        except LinAlgError:
            return None, True


def _cond_from_factor(factor) -> float:
    d = np.abs(np.diag(factor[0]))
    lo = d.min()
    if lo == 0:
        return math.inf
    return float((d.max() / lo) ** 2)


def mmse_detect(sys: EffectiveSystem, y) -> DetectionResult:
    """Linear MMSE for unit-energy symbols: s_hat = G^H (G G^H + R_n)^-1 y."""
    y = np.asarray(y, dtype=complex)
    m = sys.g @ sys.g.conj().T + sys.r_n
    factor, _ = _chol_with_jitter(m)
    if factor is None:
        nan = np.full(sys.frame_len, np.nan + 1j * np.nan)
        return _slice_result(nan, failed=True, cond=math.inf)
    soft = sys.g.conj().T @ cho_solve(factor, y, check_finite=False)
    return _slice_result(soft, cond=_cond_from_factor(factor))


def mmse_dfe_detect(sys: EffectiveSystem, y) -> DetectionResult:
    """Block MMSE decision feedback.

    Factor G^H R_n^-1 G + I = L L^H; the forward-substituted statistic
    z = L^-1 G^H R_n^-1 y sees symbol k only through itself and later
    indices, so symbols are detected last-to-first, subtracting the
    feedback of already-decided symbols before slicing.
    """
    y = np.asarray(y, dtype=complex)
    rfac, _ = _chol_with_jitter(sys.r_n)
    if rfac is None:
        nan = np.full(sys.frame_len, np.nan + 1j * np.nan)
        return _slice_result(nan, failed=True, cond=math.inf)
    ri_g = cho_solve(rfac, sys.g, check_finite=False)
    w = sys.g.conj().T @ ri_g + np.eye(sys.frame_len)
    v = ri_g.conj().T @ y
    try:
        lower = np.linalg.cholesky(w)
    except LinAlgError:
        nan = np.full(sys.frame_len, np.nan + 1j * np.nan)
        return _slice_result(nan, failed=True, cond=math.inf)
    z = solve_triangular(lower, v, lower=True, check_finite=False)

    l = sys.frame_len
    decided = np.zeros(l, dtype=complex)
    soft = np.zeros(l, dtype=complex)
    for k in range(l - 1, -1, -1):
        u = z[k]
        if k < l - 1:
            u = u - lower[k + 1:, k].conj() @ decided[k + 1:]
        soft[k] = u / lower[k, k].real
        decided[k] = qpsk_slice(soft[k])
    diag = np.abs(np.diag(lower))
    cond = float((diag.max() / diag.min()) ** 2) if diag.min() > 0 else math.inf
    return DetectionResult(symbols=decided, bits=qpsk_demodulate_hard(decided),
                           soft=soft, cond_estimate=cond)


_CANDIDATES: dict[int, np.ndarray] = {}


def _qpsk_frames(frame_len: int) -> np.ndarray:
    """All constellation^frame_len candidates as a (frame_len, 4^l) matrix."""
    cached = _CANDIDATES.get(frame_len)
    if cached is not None:
        return cached
    points = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) * _SQRT_HALF
    grids = np.meshgrid(*([points] * frame_len), indexing="ij")
    cand = np.stack([g.reshape(-1) for g in grids])
    _CANDIDATES[frame_len] = cand
    return cand


def ml_detect(sys: EffectiveSystem, y) -> DetectionResult:
    """Exhaustive maximum likelihood: argmin (y-Gs)^H R_n^-1 (y-Gs) over the
    whole constellation grid. Oracle-scale only (frame_len <= 8)."""
    l = sys.frame_len
    if l > ML_MAX_FRAME:
        raise ValueError(f"ml_detect is exhaustive; frame_len must be <= {ML_MAX_FRAME}")
    y = np.asarray(y, dtype=complex)
    lr = np.linalg.cholesky(sys.r_n)
    gw = solve_triangular(lr, sys.g, lower=True, check_finite=False)
    yw = solve_triangular(lr, y, lower=True, check_finite=False)
    cand = _qpsk_frames(l)
    resid = yw[:, None] - gw @ cand
    best = int(np.argmin(np.einsum("ij,ij->j", resid.conj(), resid).real))
    symbols = cand[:, best].copy()
    return DetectionResult(symbols=symbols, bits=qpsk_demodulate_hard(symbols),
                           soft=symbols)


_DETECTORS = {
    "mmse": mmse_detect,
    "mmse-dfe": mmse_dfe_detect,
    "ml": ml_detect,
}


def detect(sys: EffectiveSystem, y, receiver: str) -> DetectionResult:
    try:
        fn = _DETECTORS[receiver]
    except KeyError:
        raise ValueError(f"unknown receiver {receiver!r}") from None
    return fn(sys, y)
