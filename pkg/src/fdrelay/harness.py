"""Monte Carlo experiment orchestration.

One trial is a full frame end to end: channel and delay draw, bits, QPSK,
zero padding, time-domain relay run, destination sampling, effective-system
construction, block detection, bit-error count. Sweeps aggregate trials in
fixed-size batches consumed in batch order, so the adaptive stopping point
(and therefore the emitted CSV) is byte-identical for any worker count.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import os
from dataclasses import dataclass, replace

import numpy as np

from .coding import delay_diversity_generator, scheme1_generator, scheme2_generator
from .core import (BITS, CHANNEL, DELAY, DEST_NOISE, RELAY_NOISE, SimConfig,
                   draw_channel, draw_delay_profile, qpsk_modulate, substream)
from .receiver import build_effective_system, detect
from .relay import OffMode, Scheme1Mode, Scheme2Mode, destination_receive, run_relay, scheme2_beta

log = logging.getLogger(__name__)

WORKERS_ENV = "FDRELAY_WORKERS"

CSV_FIELDS = ("scheme", "receiver", "b", "snr_r_db", "snr_d_db", "rho_db",
              "frames", "bit_errors", "ber", "aborted", "seed")

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BerRecord:
    """One Monte Carlo measurement point.

    ``errors_sq_sum`` (sum of squared per-frame error counts) supports the
    frame-clustered standard error; it is a diagnostic, not a CSV column.
    """

    scheme: str
    receiver: str
    b: int
    snr_r_db: float
    snr_d_db: float
    rho_db: float | None
    frames: int
    bit_errors: int
    ber: float
    aborted: int
    seed: int
    errors_sq_sum: int = 0
    stopped_on: str = "frames"

    def csv_row(self) -> str:
        rho = "perfect" if self.rho_db is None else _fmt(self.rho_db)
        return ",".join([
            self.scheme, self.receiver, str(self.b),
            _fmt(self.snr_r_db), _fmt(self.snr_d_db), rho,
            str(self.frames), str(self.bit_errors), repr(self.ber),
            str(self.aborted), str(self.seed),
        ])


def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records) -> str:
    lines = [",".join(CSV_FIELDS)]
    lines.extend(rec.csv_row() for rec in records)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StoppingRule:
    """Stop a point after min_errors bit errors or max_frames completed
    frames, whichever first; both enforced at batch granularity."""

    min_errors: int = 200
    max_frames: int = 200_000
    batch: int = 512

    def __post_init__(self):
        if self.min_errors < 1 or self.max_frames < 1 or self.batch < 1:
            raise ValueError("stopping-rule parameters must be positive")


@dataclass(frozen=True)
class TrialOutcome:
    bit_errors: int
    bits: int
    aborted: bool
    tx_power: float = math.nan


def _generator_and_mode(cfg: SimConfig, ch):
    if cfg.scheme == "scheme1":
        gen = scheme1_generator(cfg.b)
        return gen, Scheme1Mode(gen.relay_taps)
    if cfg.scheme == "delay-diversity":
        gen = delay_diversity_generator(1, 1)
        return gen, Scheme1Mode(gen.relay_taps)
    if cfg.scheme == "scheme2":
        beta = scheme2_beta(ch, cfg.b, cfg.beta_policy)
        gen = scheme2_generator(ch.h_li_est, beta, cfg.b)
        return gen, Scheme2Mode(cfg.b, beta)
    return None, OffMode()


def run_trial(cfg: SimConfig, trial_index: int, engine: str = "time") -> TrialOutcome:
    """One frame end to end. ``engine="matrix"`` skips the time-domain relay
    and synthesizes y = G s + colored noise directly from the effective
    system (statistically equivalent pipeline used for cross-validation)."""
    rng_ch = substream(cfg.seed, trial_index, CHANNEL)
    rng_delay = substream(cfg.seed, trial_index, DELAY)
    rng_bits = substream(cfg.seed, trial_index, BITS)
    rng_nd = substream(cfg.seed, trial_index, DEST_NOISE)

    ch = draw_channel(cfg, rng_ch)
    delta = draw_delay_profile(cfg.tau_max, rng_delay)
    bits = rng_bits.integers(0, 2, size=cfg.bits_per_frame)
    s = qpsk_modulate(bits)
    l = cfg.frame_len

    if cfg.scheme == "direct":
        # Doubled transmit power for the single-link baseline.
        sys = build_effective_system(None, ch, delta, l, source_amp=_SQRT2)
        noise = math.sqrt(ch.sigma2_d / 2) * (rng_nd.standard_normal(l)
                                              + 1j * rng_nd.standard_normal(l))
        y = sys.g @ s + noise
        det = detect(sys, y, cfg.receiver)
        if det.failed:
            return TrialOutcome(0, 0, aborted=True)
        errors = int(np.count_nonzero(det.bits != bits))
        return TrialOutcome(errors, bits.size, aborted=False)

    gen, mode = _generator_and_mode(cfg, ch)
    n_y = l + gen.b - 1 + cfg.tau_max
    sys = build_effective_system(gen, ch, delta, l)

    tx_power = math.nan
    if engine == "time":
        x = np.concatenate([s, np.zeros(n_y + 1 - l, dtype=complex)])
        rng_nr = substream(cfg.seed, trial_index, RELAY_NOISE)
        trace = run_relay(x, ch, mode, rng_nr)
        if trace.aborted:
            return TrialOutcome(0, 0, aborted=True)
        if l > gen.b:
            tx_power = float(np.mean(np.abs(trace.t[gen.b:l]) ** 2))
        y = destination_receive(trace, x, ch, delta, rng_nd, n_out=n_y)
    elif engine == "matrix":
        white = math.sqrt(0.5) * (rng_nd.standard_normal(n_y)
                                  + 1j * rng_nd.standard_normal(n_y))
        y = sys.g @ s + np.linalg.cholesky(sys.r_n) @ white
    else:
        raise ValueError(f"unknown engine {engine!r}")

    det = detect(sys, y, cfg.receiver)
    if det.failed:
        return TrialOutcome(0, 0, aborted=True)
    errors = int(np.count_nonzero(det.bits != bits))
    return TrialOutcome(errors, bits.size, aborted=False, tx_power=tx_power)


# Per-worker state for the multiprocessing pool.
_WORKER: dict = {}


def _init_worker(cfg: SimConfig, engine: str, batch: int):
    _WORKER["cfg"] = cfg
    _WORKER["engine"] = engine
    _WORKER["batch"] = batch


def _run_batch_worker(batch_index: int):
    return _run_batch(_WORKER["cfg"], _WORKER["engine"], _WORKER["batch"], batch_index)


def _run_batch(cfg: SimConfig, engine: str, batch: int, batch_index: int):
    errors = frames = bits = aborted = err_sq = 0
    power_sum = 0.0
    power_n = 0
    for trial in range(batch_index * batch, (batch_index + 1) * batch):
        out = run_trial(cfg, trial, engine)
        if out.aborted:
            aborted += 1
            continue
        errors += out.bit_errors
        err_sq += out.bit_errors * out.bit_errors
        bits += out.bits
        frames += 1
        if not math.isnan(out.tx_power):
            power_sum += out.tx_power
            power_n += 1
    return errors, frames, bits, aborted, err_sq, power_sum, power_n


def _mp_context():
    # fork keeps worker startup cheap and avoids re-importing __main__;
    # fall back to spawn where fork is unavailable.
    try:
        return multiprocessing.get_context("fork")
    except ValueError:
        return multiprocessing.get_context("spawn")


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_point(cfg: SimConfig, stop: StoppingRule | None = None,
              workers: int | None = None, engine: str = "time") -> BerRecord:
    """Estimate one BER point under the stopping rule.

    Batches are consumed strictly in index order; the stopping decision
    depends only on that prefix, so the record is identical for 1 or N
    workers (extra speculative batches computed by idle workers are
    discarded).
    """
    stop = stop or StoppingRule(max_frames=cfg.frames)
    workers = default_workers() if workers is None else max(1, workers)
    max_batches = max(1, math.ceil(stop.max_frames / stop.batch))

    errors = frames = bits = aborted = err_sq = 0
    power_sum = 0.0
    power_n = 0

    def consume(result) -> bool:
        nonlocal errors, frames, bits, aborted, err_sq, power_sum, power_n
        e, f, nb, a, sq, ps, pn = result
        errors += e
        frames += f
        bits += nb
        aborted += a
        err_sq += sq
        power_sum += ps
        power_n += pn
        return errors >= stop.min_errors or frames >= stop.max_frames

    if workers == 1:
        for bi in range(max_batches):
            if consume(_run_batch(cfg, engine, stop.batch, bi)):
                break
    else:
        ctx = _mp_context()
        with ctx.Pool(workers, initializer=_init_worker,
                      initargs=(cfg, engine, stop.batch)) as pool:
            for result in pool.imap(_run_batch_worker, range(max_batches)):
                if consume(result):
                    break
            pool.terminate()

    ber = errors / bits if bits else math.nan
    if power_n:
        log.debug("point %s: measured relay tx power %.4f over %d frames",
                  cfg.scheme, power_sum / power_n, power_n)
    return BerRecord(scheme=cfg.scheme, receiver=cfg.receiver, b=cfg.b,
                     snr_r_db=cfg.snr_r_db, snr_d_db=cfg.snr_d_db,
                     rho_db=cfg.rho_db, frames=frames, bit_errors=errors,
                     ber=ber, aborted=aborted, seed=cfg.seed,
                     errors_sq_sum=err_sq,
                     stopped_on="errors" if errors >= stop.min_errors else "frames")


@dataclass(frozen=True)
class SweepSpec:
    """A swept parameter over a value grid on top of a base config.

    ``param`` is one of snr_d, snr_r, rho, b, snr_joint. A b-sweep value of 1
    runs the delay-diversity baseline (the single-tap special case).
    """

    param: str
    values: tuple
    base: SimConfig
    stop: StoppingRule = StoppingRule()

    def __post_init__(self):
        if self.param not in ("snr_d", "snr_r", "rho", "b", "snr_joint"):
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if not self.values:
            raise ValueError("sweep grid must be nonempty")

    def configs(self):
        for v in self.values:
            if self.param == "snr_d":
                yield replace(self.base, snr_d_db=float(v))
            elif self.param == "snr_r":
                yield replace(self.base, snr_r_db=float(v))
            elif self.param == "rho":
                rho = None if v is None else float(v)
                yield replace(self.base, rho_db=rho)
            elif self.param == "snr_joint":
                yield replace(self.base, snr_r_db=float(v), snr_d_db=float(v))
            elif self.param == "b":
                b = int(v)
                if b == 1:
                    yield replace(self.base, scheme="delay-diversity", b=1)
                else:
                    yield replace(self.base, b=b)


def run_sweep(spec: SweepSpec, workers: int | None = None,
              engine: str = "time") -> list[BerRecord]:
    records = []
    for cfg in spec.configs():
        rec = run_point(cfg, spec.stop, workers=workers, engine=engine)
        log.info("%s %s b=%d snr_r=%g snr_d=%g rho=%s: ber=%.3e (%d errors / %d frames)",
                 rec.scheme, rec.receiver, rec.b, rec.snr_r_db, rec.snr_d_db,
                 rec.rho_db, rec.ber, rec.bit_errors, rec.frames)
        records.append(rec)
    return records


def ber_standard_error(record: BerRecord) -> float:
    """Frame-clustered standard error of the BER estimate. Bit errors arrive
    in bursts within a frame, so the naive binomial error underestimates."""
    n = record.frames
    if n < 2 or record.bit_errors == 0:
        return math.nan
    mean = record.bit_errors / n
    var = record.errors_sq_sum / n - mean * mean
    bits_per_frame = (record.bit_errors / n) / record.ber if record.ber else math.nan
    return math.sqrt(max(var, 0.0) / n) / bits_per_frame


def fit_diversity_order(records, window: tuple[float, float]) -> float:
    """Negative least-squares slope of log10(BER) against SNR_dB/10 over the
    window (inclusive); NaN when fewer than 3 usable points."""
    lo, hi = window
    pts = [(rec.snr_d_db, rec.ber) for rec in records
           if lo <= rec.snr_d_db <= hi and rec.ber > 0]
    if len(pts) < 3:
        return math.nan
    x = np.array([p[0] / 10.0 for p in pts])
    y = np.log10([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope)
