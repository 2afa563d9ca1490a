"""Experiment command line.

Subcommands mirror the standard experiment layouts: BER against destination
SNR, relay SNR, loop-knowledge quality, or code length; a joint-SNR sweep
with diversity-slope fitting; closed-form SINR sampling; and a generator
shift-full-rank check. Flags override values from an optional JSON config
file. Results stream as CSV to stdout or --out.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import analysis
from .coding import GeneratorMatrix, is_sfr
from .core import CHANNEL, SimConfig, draw_channel, substream
from .harness import (StoppingRule, SweepSpec, fit_diversity_order,
                      records_to_csv, run_sweep)

_SCHEME_ALIASES = {
    "scheme1": "scheme1",
    "scheme2": "scheme2",
    "delay-div": "delay-diversity",
    "delay-diversity": "delay-diversity",
    "direct": "direct",
}


class ConfigError(Exception):
    pass


def _parse_grid(text: str) -> tuple[float, ...]:
    """Accept "0,5,10" or "0:30:5" (start:stop:step, stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad grid {text!r}; expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid {text!r}")
        n = int(round((stop - start) / step))
        return tuple(start + i * step for i in range(n + 1))
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def _parse_schemes(text: str) -> list[str]:
    out = []
    for token in text.split(","):
        token = token.strip()
        if token not in _SCHEME_ALIASES:
            raise ConfigError(f"unknown scheme {token!r} (choose from "
                              f"{', '.join(sorted(_SCHEME_ALIASES))})")
        out.append(_SCHEME_ALIASES[token])
    return out


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file; flags take precedence")
    parser.add_argument("--schemes", default="scheme1,scheme2,delay-div",
                        help="comma list: scheme1,scheme2,delay-div,direct")
    parser.add_argument("--receiver", default=None, help="mmse | mmse-dfe | ml")
    parser.add_argument("--b", type=int, default=None, help="consecutive coding symbols")
    parser.add_argument("--frame-len", type=int, default=None)
    parser.add_argument("--tau-max", type=int, default=None)
    parser.add_argument("--rho", default=None,
                        help="loop-knowledge quality in dB, or 'perfect'")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--min-errors", type=int, default=None)
    parser.add_argument("--max-frames", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="CSV output file (default stdout)")
    parser.add_argument("--verbose", action="store_true")


_DEFAULTS = {
    "receiver": "mmse-dfe",
    "b": 3,
    "frame_len": 20,
    "tau_max": 3,
    "rho": "perfect",
    "seed": 0,
    "min_errors": 200,
    "max_frames": 200_000,
}


def _settings(args) -> dict:
    """Merge defaults, config file, and explicit flags (flags win)."""
    merged = dict(_DEFAULTS)
    merged.update(_load_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _rho_value(raw) -> float | None:
    if raw is None or (isinstance(raw, str) and raw.lower() == "perfect"):
        return None
    return float(raw)


def _base_config(settings, scheme: str, **overrides) -> SimConfig:
    b = int(settings["b"])
    if scheme == "delay-diversity":
        b = 1
    fields = dict(
        frame_len=int(settings["frame_len"]),
        b=b,
        tau_max=int(settings["tau_max"]),
        rho_db=_rho_value(settings["rho"]),
        scheme=scheme,
        receiver=settings["receiver"],
        seed=int(settings["seed"]),
    )
    fields.update(overrides)
    try:
        return SimConfig(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _stopping(settings) -> StoppingRule:
    return StoppingRule(min_errors=int(settings["min_errors"]),
                        max_frames=int(settings["max_frames"]))


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_ber_sweeps(args, param: str, grid, fixed: dict) -> str:
    settings = _settings(args)
    stop = _stopping(settings)
    records = []
    for scheme in _parse_schemes(args.schemes):
        base = _base_config(settings, scheme, **fixed)
        spec = SweepSpec(param=param, values=tuple(grid), base=base, stop=stop)
        records.extend(run_sweep(spec, workers=args.workers))
    return records_to_csv(records)


def _cmd_ber_vs_snrd(args) -> int:
    grid = _parse_grid(args.grid)
    csv = _run_ber_sweeps(args, "snr_d", grid, {"snr_r_db": args.snr_r})
    _emit(csv, args.out)
    return 0


def _cmd_ber_vs_snrr(args) -> int:
    grid = _parse_grid(args.grid)
    csv = _run_ber_sweeps(args, "snr_r", grid, {"snr_d_db": args.snr_d})
    _emit(csv, args.out)
    return 0


def _cmd_ber_vs_rho(args) -> int:
    grid = _parse_grid(args.grid)
    csv = _run_ber_sweeps(args, "rho", grid,
                          {"snr_r_db": args.snr, "snr_d_db": args.snr})
    _emit(csv, args.out)
    return 0


def _cmd_ber_vs_b(args) -> int:
    settings = _settings(args)
    stop = _stopping(settings)
    grid = tuple(int(v) for v in args.b_grid.split(","))
    base = _base_config(settings, "scheme2",
                        snr_r_db=args.snr_r, snr_d_db=args.snr_d,
                        b=max(2, max(grid)))
    spec = SweepSpec(param="b", values=grid, base=base, stop=stop)
    _emit(records_to_csv(run_sweep(spec, workers=args.workers)), args.out)
    return 0


def _cmd_diversity(args) -> int:
    settings = _settings(args)
    stop = _stopping(settings)
    grid = _parse_grid(args.grid)
    lo, hi = (float(v) for v in args.window.split(":"))
    lines = ["scheme,receiver,b,window_lo_db,window_hi_db,slope,points"]
    for scheme in _parse_schemes(args.schemes):
        base = _base_config(settings, scheme)
        spec = SweepSpec(param="snr_joint", values=tuple(grid), base=base, stop=stop)
        records = run_sweep(spec, workers=args.workers)
        slope = fit_diversity_order(records, (lo, hi))
        used = sum(1 for r in records if lo <= r.snr_d_db <= hi and r.ber > 0)
        lines.append(",".join([scheme, base.receiver, str(base.b),
                               repr(lo), repr(hi),
                               "undefined" if math.isnan(slope) else repr(slope),
                               str(used)]))
        if args.records_out:
            with open(args.records_out, "a", encoding="utf-8") as fh:
                fh.write(records_to_csv(records))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_sinr_analysis(args) -> int:
    settings = _settings(args)
    rho = _rho_value(settings["rho"])
    if rho is None:
        raise ConfigError("sinr-analysis needs a finite --rho (loop error variance)")
    cfg = _base_config(settings, "scheme2", snr_r_db=args.snr_r, snr_d_db=args.snr_d)
    taps = np.full(cfg.b, 1.0 / math.sqrt(cfg.b))
    rows = ["kind,draw,gamma_s1,gamma_dd,gamma_s2,p_is1,p_idd,p_is2,beta_used,beta_star"]
    names = ("gamma_s1", "gamma_dd", "gamma_s2", "p_is1", "p_idd", "p_is2",
             "beta_used", "beta_star")
    samples = {k: [] for k in names}
    for i in range(args.draws):
        ch = draw_channel(cfg, substream(cfg.seed, i, CHANNEL))
        rep = analysis.sinr_report(ch, taps, cfg.b)
        vals = (rep.gamma_s1, rep.gamma_dd, rep.gamma_s2, rep.p_is1,
                rep.p_idd, rep.p_is2, rep.beta_used, rep.beta_star)
        for k, v in zip(names, vals):
            samples[k].append(v)
        rows.append("draw,%d,%s" % (i, ",".join(repr(v) for v in vals)))
    rows.append("median,," + ",".join(repr(float(np.median(samples[k]))) for k in names))
    rows.append("mean,," + ",".join(repr(float(np.mean(samples[k]))) for k in names))
    _emit("\n".join(rows) + "\n", args.out)
    return 0


def _cmd_sfr_check(args) -> int:
    try:
        taps = [complex(tok) for tok in args.taps.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad taps {args.taps!r}") from exc
    gen = GeneratorMatrix(np.asarray(taps))
    ok, witness = is_sfr(gen, args.tau_max)
    if ok:
        print("SFR: true")
    else:
        print(f"SFR: false (witness delays tau_direct={witness.tau_direct}, "
              f"tau_relay={witness.tau_relay})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdrelay",
        description="Full-duplex relaying BER experiments and closed-form analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ber-vs-snrd", help="BER against destination SNR")
    _add_common(p)
    p.add_argument("--snr-r", type=float, default=30.0)
    p.add_argument("--grid", default="0:50:5")
    p.set_defaults(fn=_cmd_ber_vs_snrd)

    p = sub.add_parser("ber-vs-snrr", help="BER against relay SNR")
    _add_common(p)
    p.add_argument("--snr-d", type=float, default=30.0)
    p.add_argument("--grid", default="0:50:5")
    p.set_defaults(fn=_cmd_ber_vs_snrr)

    p = sub.add_parser("ber-vs-rho", help="BER against loop-knowledge quality")
    _add_common(p)
    p.add_argument("--snr", type=float, default=30.0, help="joint SNR_R = SNR_D")
    p.add_argument("--grid", default="0:30:5")
    p.set_defaults(fn=_cmd_ber_vs_rho)

    p = sub.add_parser("ber-vs-b", help="self-coding BER against code length b")
    _add_common(p)
    p.add_argument("--snr-r", type=float, default=30.0)
    p.add_argument("--snr-d", type=float, default=20.0)
    p.add_argument("--b-grid", default="1,2,3,4")
    p.set_defaults(fn=_cmd_ber_vs_b)

    p = sub.add_parser("diversity", help="joint-SNR sweep and slope fit")
    _add_common(p)
    p.add_argument("--grid", default="20,25,30")
    p.add_argument("--window", default="20:30", help="fit window lo:hi in dB")
    p.add_argument("--records-out", default=None,
                   help="also append raw BER records to this CSV")
    p.set_defaults(fn=_cmd_diversity)

    p = sub.add_parser("sinr-analysis", help="closed-form SINR sampling")
    _add_common(p)
    p.add_argument("--snr-r", type=float, default=30.0)
    p.add_argument("--snr-d", type=float, default=30.0)
    p.add_argument("--draws", type=int, default=1000)
    p.set_defaults(fn=_cmd_sinr_analysis)

    p = sub.add_parser("sfr-check", help="shift-full-rank test of a relay row")
    p.add_argument("--taps", required=True, help="comma list of complex taps")
    p.add_argument("--tau-max", type=int, default=3)
    p.set_defaults(fn=_cmd_sfr_check)

    return parser


def main(argv=None) -> int:
    import logging

    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
