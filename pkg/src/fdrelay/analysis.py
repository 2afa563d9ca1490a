"""Closed-form interference powers and destination SINRs under loop-channel
estimation error, plus the interference-plus-noise objective that drives the
relay's amplifying-factor control and its analytic minimizer.

All quantities are per channel realization; ensemble statements are made by
Monte Carlo over realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coding import scheme2_power_beta
from .core import ChannelRealization


def _checked_h2(ch: ChannelRealization) -> float:
    h2 = abs(ch.h_sr) ** 2
    if h2 == 0:
        raise ValueError("source-relay gain must be nonzero")
    return h2


def p_is1(ch: ChannelRealization, taps) -> float:
    """Interference power from the loop estimation error under complete
    cancellation and re-encoding with the given (real, unit-power) taps."""
    h2 = _checked_h2(ch)
    m = np.asarray(taps, dtype=complex)
    auto = np.convolve(m, m)  # entry j-2 holds sum_{u+v=j} m_u m_v, j = 2..2b
    core = float(np.sum(np.abs(auto) ** 2))
    return ch.sigma2_h / h2 ** 2 * core * (h2 + ch.sigma2_r)


def p_idd(ch: ChannelRealization) -> float:
    """Single-tap special case of p_is1 (delay-diversity relay row)."""
    h2 = _checked_h2(ch)
    return ch.sigma2_h / h2 * (1.0 + ch.sigma2_r / h2)


def _sinr(ch: ChannelRealization, interference: float) -> float:
    hrd2 = abs(ch.h_rd) ** 2
    if hrd2 == 0:
        raise ValueError("relay-destination gain must be nonzero")
    num = 1.0 + abs(ch.h_sd) ** 2 / hrd2
    den = ch.sigma2_r / _checked_h2(ch) + interference + ch.sigma2_d / hrd2
    if den == 0:
        return math.inf
    return num / den


def gamma_s1(ch: ChannelRealization, taps) -> float:
    return _sinr(ch, p_is1(ch, taps))


def gamma_dd(ch: ChannelRealization) -> float:
    return _sinr(ch, p_idd(ch))


def p_is2(ch: ChannelRealization, beta: float, b: int) -> float:
    """Closed-form interference power under partial cancellation, in
    a = |h_li_est * beta| < 1.

    Identical (to rounding) to summing the squared error-term tap magnitudes
    in p_is2_from_taps; the rational form here is that sum's exact value
    N(a^2) / (1 - a^2)^3 with
    N(x) = 1 + x - b(b+2) x^b + (2b^2+2b-3) x^(b+1) + (1-b^2) x^(b+2)
           - x^(2b) + 2 x^(2b+1) - x^(2b+2).
    """
    h2 = _checked_h2(ch)
    a = abs(ch.h_li_est) * beta
    if a >= 1:
        raise ValueError("loop gain a = |h_li_est|*beta must stay below 1")
    x = a * a
    num = (1.0 + x
           - b * (b + 2) * x ** b
           + (2 * b * b + 2 * b - 3) * x ** (b + 1)
           + (1 - b * b) * x ** (b + 2)
           - x ** (2 * b) + 2 * x ** (2 * b + 1) - x ** (2 * b + 2))
    series = num / (1.0 - x) ** 3
    return ch.sigma2_h * (1.0 + ch.sigma2_r / h2) * beta ** 4 * h2 * series


def p_is2_from_taps(ch: ChannelRealization, beta: float, b: int) -> float:
    """Independent route to p_is2: enumerate the first-order error-term taps
    (b loop-weighted signal taps plus b late cancellation leftovers) and sum
    their squared magnitudes."""
    h_est = ch.h_li_est
    if abs(h_est) * beta >= 1:
        raise ValueError("loop gain a = |h_li_est|*beta must stay below 1")
    total = 0.0
    for j in range(2, b + 2):
        total += abs((j - 1) * h_est ** (j - 2) * beta ** j) ** 2
    for j in range(1, b + 1):
        total += abs(h_est ** (j + b - 1) * beta ** (j + b + 1)) ** 2
    return ch.sigma2_h * (abs(ch.h_sr) ** 2 + ch.sigma2_r) * total


def gamma_s2(ch: ChannelRealization, beta: float, b: int) -> float:
    """Destination SINR under partial cancellation, assembled from the relay
    signal power, forwarded noise, interference power, and destination noise."""
    h2 = _checked_h2(ch)
    a2 = (abs(ch.h_li_est) * beta) ** 2
    s = float(np.sum(a2 ** np.arange(b)))
    hrd2 = abs(ch.h_rd) ** 2
    num = hrd2 * beta * beta * s + abs(ch.h_sd) ** 2
    den = hrd2 * (ch.sigma2_r / h2 * beta * beta * s + p_is2(ch, beta, b)) + ch.sigma2_d
    if den == 0:
        return math.inf
    return num / den


def phi_exact(ch: ChannelRealization, beta: float, b: int) -> float:
    """Exact interference-plus-noise objective: (p_is2 + sigma2_d/|h_rd|^2)
    normalized by the relay signal power beta^2 * sum a^(2(j-1))."""
    a2 = (abs(ch.h_li_est) * beta) ** 2
    s = float(np.sum(a2 ** np.arange(b)))
    hrd2 = abs(ch.h_rd) ** 2
    return (p_is2(ch, beta, b) + ch.sigma2_d / hrd2) / (beta * beta * s)


def phi_approx(ch: ChannelRealization, beta: float) -> float:
    """Truncated objective (terms beyond a^2 dropped) used for amplifier
    control; +inf outside its validity region a^2 < 1/2."""
    h2 = _checked_h2(ch)
    a2 = (abs(ch.h_li_est) * beta) ** 2
    if 1.0 - 2.0 * a2 <= 0:
        return math.inf
    term1 = ch.sigma2_h * (1.0 + ch.sigma2_r / h2) * beta * beta * h2 / (1.0 - 2.0 * a2)
    term2 = ch.sigma2_d * (1.0 - a2) / (abs(ch.h_rd) ** 2 * beta * beta)
    return term1 + term2


def beta_star(ch: ChannelRealization) -> float:
    """Minimizer of the truncated objective:
    sqrt(1 / (sqrt(|h_rd|^2 sigma_h^2 (|h_sr|^2 + sigma_r^2) / sigma_d^2)
              + 2 |h_li_est|^2)).

    The resulting loop gain satisfies a^2 <= 1/2 automatically. Uncapped;
    physical use additionally enforces the relay power constraint.
    """
    if ch.sigma2_d <= 0:
        raise ValueError("destination noise variance must be positive")
    denom = (math.sqrt(abs(ch.h_rd) ** 2 * ch.sigma2_h
                       * (abs(ch.h_sr) ** 2 + ch.sigma2_r) / ch.sigma2_d)
             + 2.0 * abs(ch.h_li_est) ** 2)
    if denom <= 0:
        return math.inf
    return math.sqrt(1.0 / denom)


def phi_min(ch: ChannelRealization) -> float:
    """Value of the truncated objective at beta_star:
    2 sigma_d |h_sr| / |h_rd| * sqrt(sigma_h^2 (1 + sigma_r^2/|h_sr|^2))
    + |h_li_est|^2 sigma_d^2 / |h_rd|^2."""
    h2 = _checked_h2(ch)
    sigma_d = math.sqrt(ch.sigma2_d)
    lead = (2.0 * sigma_d * abs(ch.h_sr) / abs(ch.h_rd)
            * math.sqrt(ch.sigma2_h * (1.0 + ch.sigma2_r / h2)))
    return lead + abs(ch.h_li_est) ** 2 * ch.sigma2_d / abs(ch.h_rd) ** 2


@dataclass(frozen=True)
class SinrReport:
    """Per-realization summary of the three schemes' interference and SINR."""

    p_is1: float
    p_idd: float
    p_is2: float
    gamma_s1: float
    gamma_dd: float
    gamma_s2: float
    beta_star: float
    beta_used: float
    phi_min: float
    a: float
    phi_of_beta: Callable[[float], float]


def sinr_report(ch: ChannelRealization, taps, b: int,
                beta: float | None = None) -> SinrReport:
    """Evaluate every closed form for one realization. When beta is omitted
    the control value is used, capped by the power constraint."""
    raw = beta_star(ch)
    if beta is None:
        beta = min(raw, scheme2_power_beta(ch.h_li_est, b))
    return SinrReport(
        p_is1=p_is1(ch, taps),
        p_idd=p_idd(ch),
        p_is2=p_is2(ch, beta, b),
        gamma_s1=gamma_s1(ch, taps),
        gamma_dd=gamma_dd(ch),
        gamma_s2=gamma_s2(ch, beta, b),
        beta_star=raw,
        beta_used=beta,
        phi_min=phi_min(ch),
        a=abs(ch.h_li_est) * beta,
        phi_of_beta=lambda bb: phi_approx(ch, bb),
    )
