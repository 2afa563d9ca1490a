"""Generator matrices for the two-link convolutional space-time code.

The direct link contributes the fixed row [1, 0, ..., 0]; the relay row
carries the code taps. A generator keeps full cooperative diversity under
unknown integer link delays exactly when every shifted, zero-padded stack
of the two rows stays full row rank (for two rows: the relay row must not
be a scaled unit coordinate vector).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DelayProfile

# Full rank is declared when sigma_min > RANK_RTOL * sigma_max. Generator
# entries are O(1), so this margin is safe for the tap counts used here.
RANK_RTOL = 1e-9

# Stability margin: the loop gain |h_li| * beta is kept strictly below 1.
_BETA_MARGIN = 1e-6


@dataclass(frozen=True)
class GeneratorMatrix:
    """2 x b code generator: row 0 = [1, 0, ..., 0], row 1 = relay taps."""

    relay_taps: np.ndarray

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.relay_taps, dtype=complex))
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("relay taps must be a nonempty 1-D sequence")
        object.__setattr__(self, "relay_taps", taps)

    @property
    def b(self) -> int:
        return self.relay_taps.size

    @property
    def matrix(self) -> np.ndarray:
        rows = np.zeros((2, self.b), dtype=complex)
        rows[0, 0] = 1.0
        rows[1] = self.relay_taps
        return rows

    @property
    def relay_power(self) -> float:
        return float(np.sum(np.abs(self.relay_taps) ** 2))


def convolution_matrix(taps, frame_len: int) -> np.ndarray:
    """Banded (b + frame_len - 1) x frame_len matrix; A @ s is the linear
    convolution of the taps with the frame."""
    v = np.atleast_1d(np.asarray(taps, dtype=complex))
    if v.size < 1:
        raise ValueError("taps must be nonempty")
    if frame_len < 1:
        raise ValueError("frame_len must be >= 1")
    b = v.size
    out = np.zeros((b + frame_len - 1, frame_len), dtype=complex)
    for d in range(b):
        idx = np.arange(frame_len)
        out[idx + d, idx] = v[d]
    return out


def scheme1_generator(b: int) -> GeneratorMatrix:
    """Equal-tap relay row [1/sqrt(b)] * b; unit relay power by construction."""
    if b < 2:
        raise ValueError("complete-cancellation coding needs b >= 2 to be shift-full-rank")
    return GeneratorMatrix(np.full(b, 1.0 / np.sqrt(b), dtype=complex))


def delay_diversity_generator(b: int, tap_index: int) -> GeneratorMatrix:
    """Single unit tap at 1-based tap_index: the relay just delays and repeats.

    Not shift-full-rank, so it loses diversity under some delay profiles.
    """
    if not 1 <= tap_index <= b:
        raise ValueError(f"tap_index {tap_index} outside [1, {b}]")
    taps = np.zeros(b, dtype=complex)
    taps[tap_index - 1] = 1.0
    return GeneratorMatrix(taps)


def scheme2_generator(h_li: complex, beta: float, b: int) -> GeneratorMatrix:
    """Self-coding relay row [beta, beta*(h_li*beta), ..., beta*(h_li*beta)^(b-1)].

    The taps are the loop-channel recursion the relay keeps alive after
    cancelling only the b-times-looped signal. ``h_li`` is the loop gain the
    relay codes with (its estimate when knowledge is imperfect).
    """
    if b < 2:
        raise ValueError("self-coding needs b >= 2 to be shift-full-rank")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if abs(h_li) * beta >= 1:
        raise ValueError("beta * |h_li| must stay below 1 or the loop diverges")
    taps = beta * (h_li * beta) ** np.arange(b)
    return GeneratorMatrix(taps)


def scheme2_power_beta(h_li: complex, b: int) -> float:
    """Largest stable beta meeting the mean relay-power constraint.

    Solves sum_{i=1..b} beta^2 * |h_li * beta|^(2(i-1)) = 1 for beta in
    (0, 1/|h_li|). When |h_li|^2 >= b no stable beta reaches unit power and
    the stability edge (minus a small margin) is returned instead; the root
    itself never exceeds 1.
    """
    if b < 2:
        raise ValueError("power constraint applies to b >= 2 self-coding")
    mag = abs(h_li)
    hi = 1.0 if mag == 0 else min(1.0, (1.0 - _BETA_MARGIN) / mag)

    def power(beta: float) -> float:
        x = (beta * mag) ** 2
        return beta * beta * float(np.sum(x ** np.arange(b)))

    if power(hi) <= 1.0:
        return hi
    lo = 0.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if power(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shifted_matrix(gen: GeneratorMatrix, profile: DelayProfile) -> np.ndarray:
    """Zero-padded per-row shift of the generator: row k becomes
    [0^tau_k, row_k, 0^(tau_max - tau_k)]."""
    rows = gen.matrix
    width = gen.b + profile.tau_max
    out = np.zeros((2, width), dtype=complex)
    out[0, profile.tau_direct:profile.tau_direct + gen.b] = rows[0]
    out[1, profile.tau_relay:profile.tau_relay + gen.b] = rows[1]
    return out


def is_sfr(gen: GeneratorMatrix, tau_max: int) -> tuple[bool, DelayProfile | None]:
    """Shift-full-rank test; on failure also returns a witnessing delay profile.

    For two rows the exact criterion is that the relay row has at least two
    nonzero taps; the test applies it and cross-checks by enumerating every
    profile with delays in {0..tau_max} and rank-testing the shifted stack.
    A single-tap relay row is rejected with its collision profile even when
    that profile needs a shift beyond tau_max.
    """
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    taps = gen.relay_taps
    scale = max(float(np.max(np.abs(taps))), np.finfo(float).tiny)
    nonzero = np.flatnonzero(np.abs(taps) > 1e-12 * scale)
    if nonzero.size <= 1:
        # Single tap at offset p: shifting the direct row by p aligns the
        # two rows exactly, collapsing the stack to rank 1.
        p = int(nonzero[0]) if nonzero.size else 0
        witness = DelayProfile(tau_direct=p, tau_relay=0, tau_max=max(tau_max, p))
        return False, witness

    profiles = [DelayProfile(t0, t1, tau_max)
                for t0 in range(tau_max + 1) for t1 in range(tau_max + 1)]
    stacks = np.stack([shifted_matrix(gen, p) for p in profiles])
    sv = np.linalg.svd(stacks, compute_uv=False)
    deficient = sv[:, 1] <= RANK_RTOL * sv[:, 0]
    if deficient.any():
        return False, profiles[int(np.argmax(deficient))]
    return True, None


def effective_code(gen: GeneratorMatrix, symbols, delta: DelayProfile) -> np.ndarray:
    """Delay-shifted, zero-padded 2 x (b + l - 1 + tau_max) codeword matrix.

    Row k is the convolution of row k's taps with the frame, shifted by the
    profile's delay and padded to the common width.
    """
    s = np.asarray(symbols, dtype=complex)
    l = s.size
    q = gen.b + l - 1
    width = q + delta.tau_max
    rows = gen.matrix
    out = np.zeros((2, width), dtype=complex)
    out[0, delta.tau_direct:delta.tau_direct + q] = convolution_matrix(rows[0], l) @ s
    out[1, delta.tau_relay:delta.tau_relay + q] = convolution_matrix(rows[1], l) @ s
    return out
