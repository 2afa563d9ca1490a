"""Shared domain types: simulation config, channel draws, QPSK mapping,
integer delay profiles, and deterministic per-trial RNG substreams."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

SCHEMES = ("scheme1", "scheme2", "delay-diversity", "direct")
RECEIVERS = ("mmse", "mmse-dfe", "ml")
BETA_POLICIES = ("auto", "power-max", "optimal")

# Substream purpose tags. Every random quantity in a trial gets its own
# stream so trials reproduce bit-for-bit regardless of scheduling.
BITS = "bits"
CHANNEL = "channel"
DELAY = "delay"
RELAY_NOISE = "relay-noise"
DEST_NOISE = "dest-noise"

_SQRT_HALF = math.sqrt(0.5)


def substream(seed: int, trial: int, purpose: str) -> np.random.Generator:
    """Deterministic generator for one (seed, trial, purpose) tuple.

    Distinct tuples give statistically independent streams; the same tuple
    always reproduces the same sequence, so trials can run in any order or
    concurrently and still produce identical draws.
    """
    code = zlib.crc32(purpose.encode("ascii"))
    ss = np.random.SeedSequence(entropy=seed & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(trial, code))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ChannelRealization:
    """One quasi-static draw of the four link gains plus noise parameters.

    ``delta_h`` is the relay's loop-channel estimation error; the estimate
    the relay actually works with is ``h_li_est = h_li - delta_h``.
    """

    h_sr: complex
    h_rd: complex
    h_li: complex
    h_sd: complex
    sigma2_r: float
    sigma2_d: float
    sigma2_h: float = 0.0
    delta_h: complex = 0j

    @property
    def h_li_est(self) -> complex:
        return self.h_li - self.delta_h


@dataclass(frozen=True)
class DelayProfile:
    """Integer symbol-period delays per link (direct link is the reference)."""

    tau_direct: int
    tau_relay: int
    tau_max: int

    def __post_init__(self):
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        for tau in (self.tau_direct, self.tau_relay):
            if not 0 <= tau <= self.tau_max:
                raise ValueError(f"delay {tau} outside [0, {self.tau_max}]")


@dataclass(frozen=True)
class SimConfig:
    """One experiment point: frame/code geometry, SNRs, scheme, receiver, seed.

    ``rho_db`` is the loop-channel knowledge quality 10*log10(1/sigma_h^2);
    ``None`` means the relay knows the loop channel perfectly.
    """

    frame_len: int = 20
    b: int = 3
    tau_max: int = 3
    snr_r_db: float = 30.0
    snr_d_db: float = 30.0
    rho_db: float | None = None
    scheme: str = "scheme1"
    receiver: str = "mmse-dfe"
    seed: int = 0
    frames: int = 10_000
    beta_policy: str = "auto"

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.receiver not in RECEIVERS:
            raise ValueError(f"unknown receiver {self.receiver!r}")
        if self.beta_policy not in BETA_POLICIES:
            raise ValueError(f"unknown beta policy {self.beta_policy!r}")
        if self.scheme == "scheme2" and self.b < 2:
            raise ValueError("scheme2 needs b >= 2 for a shift-full-rank code")
        if self.receiver == "ml" and self.frame_len > 8:
            raise ValueError("ml receiver is exhaustive; frame_len must be <= 8")

    @property
    def sigma2_r(self) -> float:
        return 10.0 ** (-self.snr_r_db / 10.0)

    @property
    def sigma2_d(self) -> float:
        return 10.0 ** (-self.snr_d_db / 10.0)

    @property
    def sigma2_h(self) -> float:
        if self.rho_db is None:
            return 0.0
        return 10.0 ** (-self.rho_db / 10.0)

    @property
    def bits_per_frame(self) -> int:
        return 2 * self.frame_len


def qpsk_modulate(bits) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: pair (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1))/sqrt(2)."""
    bits = np.asarray(bits)
    if bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    pairs = bits.reshape(-1, 2)
    return ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1])) * _SQRT_HALF


def qpsk_demodulate_hard(symbols) -> np.ndarray:
    """Per-symbol sign slicing; exact inverse of qpsk_modulate on clean input."""
    sym = np.asarray(symbols)
    bits = np.empty((sym.size, 2), dtype=np.int64)
    bits[:, 0] = sym.real < 0
    bits[:, 1] = sym.imag < 0
    return bits.reshape(-1)


def qpsk_slice(values) -> np.ndarray:
    """Nearest QPSK constellation point, ties broken toward the positive quadrant."""
    v = np.asarray(values)
    re = np.where(v.real < 0, -_SQRT_HALF, _SQRT_HALF)
    im = np.where(v.imag < 0, -_SQRT_HALF, _SQRT_HALF)
    return re + 1j * im


def draw_channel(cfg: SimConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw the four CN(0,1) gains and the loop-channel estimation error."""
    z = rng.standard_normal(10)
    sigma2_h = cfg.sigma2_h
    if sigma2_h > 0:
        delta_h = math.sqrt(sigma2_h / 2) * (z[8] + 1j * z[9])
    else:
        delta_h = 0j
    return ChannelRealization(
        h_sr=_SQRT_HALF * (z[0] + 1j * z[1]),
        h_rd=_SQRT_HALF * (z[2] + 1j * z[3]),
        h_li=_SQRT_HALF * (z[4] + 1j * z[5]),
        h_sd=_SQRT_HALF * (z[6] + 1j * z[7]),
        sigma2_r=cfg.sigma2_r,
        sigma2_d=cfg.sigma2_d,
        sigma2_h=sigma2_h,
        delta_h=delta_h,
    )


def draw_delay_profile(tau_max: int, rng: np.random.Generator) -> DelayProfile:
    """Relay-path delay uniform on {0..tau_max}; the direct link is the timing reference."""
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    tau = int(rng.integers(0, tau_max + 1))
    return DelayProfile(tau_direct=0, tau_relay=tau, tau_max=tau_max)
