"""Time-domain full-duplex relay engine.

Per-sample recursion of the loop: the relay receives through the true loop
channel while cancelling with its own (possibly erroneous) estimate. Modes:

* ``Scheme1Mode``  - cancel the loop completely, re-encode b past estimates
  with fixed code taps.
* ``Scheme2Mode``  - amplify-and-forward with partial cancellation: only the
  b-times-looped signal is subtracted, the shorter loops become self-coding.
* ``ResidualAFMode`` - classic one-tap AF with a cancellation filter w.
* ``OffMode``      - silent relay (direct transmission only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analysis
from .coding import scheme2_power_beta
from .core import ChannelRealization, DelayProfile

# Any stable mode keeps |t| near unity; crossing this means the loop diverged.
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class Scheme1Mode:
    taps: np.ndarray
    invert_h_sr: bool = False


@dataclass(frozen=True)
class Scheme2Mode:
    b: int
    beta: float


@dataclass(frozen=True)
class ResidualAFMode:
    w: complex
    beta: float


@dataclass(frozen=True)
class OffMode:
    pass


@dataclass
class RelayTrace:
    """Received / transmitted / estimated sample streams on the relay clock."""

    r: np.ndarray
    t: np.ndarray
    xhat: np.ndarray
    aborted: bool = False


def scheme1_transmit(xhat_history, taps, ch: ChannelRealization,
                     invert_h_sr: bool = False) -> complex:
    """One coded output sample: convolve the most recent source estimates
    with the code taps. ``xhat_history[-1]`` is the estimate one period back;
    missing pre-history counts as zero.
    """
    if invert_h_sr and abs(ch.h_sr) < 1e-6:
        raise ValueError("source-relay gain too small to invert")
    acc = 0j
    n = len(xhat_history)
    for j, tap in enumerate(taps, start=1):
        if j <= n:
            acc += tap * xhat_history[-j]
    return acc / ch.h_sr if invert_h_sr else acc


def scheme2_transmit(r_history, xhat_history, ch: ChannelRealization,
                     b: int, beta: float) -> complex:
    """One amplify-and-cancel output sample: beta times the last received
    sample minus the b-times-looped estimate from b+1 periods back."""
    fb = (ch.h_li_est * beta) ** b
    r_prev = r_history[-1] if len(r_history) >= 1 else 0j
    x_old = xhat_history[-(b + 1)] if len(xhat_history) >= b + 1 else 0j
    return beta * (r_prev - fb * x_old)


def run_relay(x_padded, ch: ChannelRealization, mode,
              rng: np.random.Generator | None) -> RelayTrace:
    """Run the full-duplex recursion over the padded source frame.

    Each step first forms t(i) from samples strictly before i, then the
    relay input r(i) = h_sr*x(i) + h_li*t(i) + n_r(i), then the estimate
    xhat(i) = r(i) - h_li_est*t(i). Pre-history is all zeros. If |t| ever
    exceeds DIVERGENCE_LIMIT the trial is marked aborted.
    """
    x = np.asarray(x_padded, dtype=complex)
    n = x.size
    if ch.sigma2_r > 0:
        if rng is None:
            raise ValueError("rng required when relay noise is on")
        scale = math.sqrt(ch.sigma2_r / 2)
        noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    else:
        noise = np.zeros(n, dtype=complex)

    h_sr, h_li, h_est = ch.h_sr, ch.h_li, ch.h_li_est
    r = np.zeros(n, dtype=complex)
    t = np.zeros(n, dtype=complex)
    xhat = np.zeros(n, dtype=complex)
    aborted = False

    if isinstance(mode, OffMode):
        r = h_sr * x + noise
        xhat = r.copy()
        return RelayTrace(r=r, t=t, xhat=xhat)

    if isinstance(mode, Scheme1Mode):
        if mode.invert_h_sr and abs(h_sr) < 1e-6:
            return RelayTrace(r=r, t=t, xhat=xhat, aborted=True)
        scale = 1.0 / h_sr if mode.invert_h_sr else 1.0
        taps = [complex(c) for c in mode.taps]
        for i in range(n):
            acc = 0j
            for j, tap in enumerate(taps, start=1):
                if i - j >= 0:
                    acc += tap * xhat[i - j]
            ti = scale * acc
            if abs(ti) > DIVERGENCE_LIMIT:
                aborted = True
                break
            ri = h_sr * x[i] + h_li * ti + noise[i]
            t[i], r[i], xhat[i] = ti, ri, ri - h_est * ti
        return RelayTrace(r=r, t=t, xhat=xhat, aborted=aborted)

    if isinstance(mode, Scheme2Mode):
        beta, b = mode.beta, mode.b
        fb = (h_est * beta) ** b
        for i in range(n):
            r_prev = r[i - 1] if i >= 1 else 0j
            x_old = xhat[i - b - 1] if i - b - 1 >= 0 else 0j
            ti = beta * (r_prev - fb * x_old)
            if abs(ti) > DIVERGENCE_LIMIT:
                aborted = True
                break
            ri = h_sr * x[i] + h_li * ti + noise[i]
            t[i], r[i], xhat[i] = ti, ri, ri - h_est * ti
        return RelayTrace(r=r, t=t, xhat=xhat, aborted=aborted)

    if isinstance(mode, ResidualAFMode):
        beta, w = mode.beta, mode.w
        for i in range(n):
            ti = beta * (r[i - 1] - w * t[i - 1]) if i >= 1 else 0j
            if abs(ti) > DIVERGENCE_LIMIT:
                aborted = True
                break
            ri = h_sr * x[i] + h_li * ti + noise[i]
            t[i], r[i], xhat[i] = ti, ri, ri - w * ti
        return RelayTrace(r=r, t=t, xhat=xhat, aborted=aborted)

    raise TypeError(f"unknown relay mode {type(mode).__name__}")


def optimal_beta(ch: ChannelRealization, b: int) -> float:
    """Closed-form amplifying factor for self-coding under loop estimation
    error, capped by the relay power constraint (which also keeps the loop
    gain |h_li_est| * beta below 1)."""
    if ch.sigma2_d <= 0:
        raise ValueError("destination noise variance must be positive")
    cap = scheme2_power_beta(ch.h_li_est, b)
    return min(analysis.beta_star(ch), cap)


def scheme2_beta(ch: ChannelRealization, b: int, policy: str = "auto") -> float:
    """Resolve the amplifying factor per policy: maximum allowed power under
    perfect loop knowledge, the error-aware closed form otherwise."""
    if policy == "power-max":
        return scheme2_power_beta(ch.h_li_est, b)
    if policy == "optimal":
        return optimal_beta(ch, b)
    if policy == "auto":
        if ch.sigma2_h > 0:
            return optimal_beta(ch, b)
        return scheme2_power_beta(ch.h_li_est, b)
    raise ValueError(f"unknown beta policy {policy!r}")


def destination_receive(trace: RelayTrace, x_padded, ch: ChannelRealization,
                        delta: DelayProfile, rng: np.random.Generator | None,
                        n_out: int | None = None) -> np.ndarray:
    """Destination samples over the observation window.

    The relay's one-sample encoding latency is folded into the path delay:
    the profile's relay delay is the net shift of the relay codeword row
    relative to the direct row, so y(i) picks up t(i + 1 - tau_relay).
    """
    x = np.asarray(x_padded, dtype=complex)
    n_y = x.size - 1 if n_out is None else n_out
    if n_y < 1 or n_y + 1 > x.size:
        raise ValueError("padded frame too short for the observation window")
    y = ch.h_sd * x[:n_y]
    shift = delta.tau_relay - 1
    start = max(0, shift)
    y[start:] += ch.h_rd * trace.t[start - shift:n_y - shift]
    if ch.sigma2_d > 0:
        if rng is None:
            raise ValueError("rng required when destination noise is on")
        scale = math.sqrt(ch.sigma2_d / 2)
        y = y + scale * (rng.standard_normal(n_y) + 1j * rng.standard_normal(n_y))
    return y
