"""Command-line interface: simulate | sync | stats | fit | calibrate.

Configuration comes from an optional flat key=value file plus flag
overrides; every run is deterministic given its configuration, and every
output file embeds the tool version together with digests of the
configuration and of the input file.  Exit codes: 0 success, 2 invalid
parameters or data, 3 convergence failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, formats
from .detection import coherent_mandel, infer_composition, mandel_from_counts
from .errors import ConvergenceError, ValidationError
from .fitting import fit_g2, fit_mandel
from .simulate import SourceParams, simulate
from .stats import default_m_grid, empirical_pmf, g2_empirical, mandel_sweep
from .sync import assign_pulses, estimate_clock, gate_counts

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

_SIM_KEYS = (
    "tau_rep_true",
    "t_start_true",
    "n_pulses",
    "p_isc",
    "tau_triplet",
    "eta",
    "gamma",
    "lifetime",
    "deadtime",
    "dark_rate",
    "seed",
)


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    config: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line without '=': {raw!r}")
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


def _setting(args, config: dict, key: str, cast, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return cast(flag)
    if key in config:
        return cast(config[key])
    return default


def _effective(args, config: dict, keys, casts, defaults) -> dict:
    return {
        key: _setting(args, config, key, cast, default)
        for key, cast, default in zip(keys, casts, defaults)
    }


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    defaults = SourceParams()
    casts = (float, float, int, float, float, float, float, float, float, float, int)
    values = _effective(
        args, config, _SIM_KEYS, casts, [getattr(defaults, k) for k in _SIM_KEYS]
    )
    params = SourceParams(**values)
    record = simulate(params)
    digest = formats.digest_config({**values, "format": args.format})
    formats.write_timestamps(args.out, record, mode=args.format, config_digest=digest)
    print(f"wrote {args.out}: {len(record)} events over {params.n_pulses} pulses")
    print(
        f"channel A: {int(np.sum(record.channels == 0))}  "
        f"channel B: {int(np.sum(record.channels == 1))}"
    )
    return EXIT_OK


def cmd_sync(args) -> int:
    config = _load_config(args.config)
    keys = ("tau_guess", "window", "max_iter")
    values = _effective(args, config, keys, (float, float, int), (488e-9, 30e-9, 60))
    record = formats.read_timestamps(args.infile)
    if len(record) == 0:
        raise ValidationError(f"{args.infile}: no events to synchronize")
    clock = estimate_clock(
        record, tau_guess=values["tau_guess"], max_iter=values["max_iter"]
    )
    assignment = assign_pulses(record, clock)
    n_pulses = int(assignment.pulse_index.max()) + 1
    series = gate_counts(assignment, n_pulses, values["window"])
    in_digest = formats.digest_file(args.infile)
    cfg_digest = formats.digest_config(values)
    formats.write_series(
        args.out, series, config_digest=cfg_digest, input_digest=in_digest
    )
    retained = series.total_counts / len(record)
    print(f"recovered tau_rep = {clock.tau_rep:.12e} s in {clock.iterations} iterations")
    print(f"residual drift {clock.residual_slope:.3e} s/pulse")
    print(
        f"wrote {args.out}: {series.total_counts} of {len(record)} events retained "
        f"({retained:.4f}) over {n_pulses} pulses"
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    config = _load_config(args.config)
    keys = ("max_lag", "m_points", "n_boot", "boot_seed")
    values = _effective(args, config, keys, (int, int, int, int), (1000, 25, 200, 0x5EED))
    series = formats.read_series(args.infile)
    in_digest = formats.digest_file(args.infile)
    cfg_digest = formats.digest_config(values)

    pmf = empirical_pmf(series)
    q_single = mandel_from_counts(pmf)
    q_coh = coherent_mandel(pmf.mean)

    grid = default_m_grid(series.n_pulses, points=values["m_points"])
    curve = mandel_sweep(series, m_grid=grid, n_boot=values["n_boot"], seed=values["boot_seed"])
    max_lag = min(values["max_lag"], max(series.n_pulses // 10 - 1, 1))
    g2c = g2_empirical(series, max_lag, n_boot=values["n_boot"], seed=values["boot_seed"])

    prefix = args.out_prefix
    formats.write_curve(
        f"{prefix}.mandel.curve", curve, config_digest=cfg_digest, input_digest=in_digest
    )
    formats.write_curve(
        f"{prefix}.g2.curve",
        g2c,
        tau_rep=series.tau_rep,
        n_pulses=series.n_pulses,
        config_digest=cfg_digest,
        input_digest=in_digest,
    )
    report = {
        "n_pulses": series.n_pulses,
        "total_counts": series.total_counts,
        "p0": f"{pmf.pmf[0]:.6e}",
        "p1": f"{pmf.pmf[1]:.6e}",
        "p2": f"{pmf.pmf[2]:.6e}",
        "mean_per_pulse": f"{pmf.mean:.6e}",
        "mandel_q": f"{q_single:.6e}",
        "coherent_reference_q": f"{q_coh:.6e}",
        "tool": __version__,
        "config": cfg_digest,
        "input": in_digest,
    }
    formats.write_report(f"{prefix}.stats.txt", report)
    for key, value in report.items():
        print(f"{key} = {value}")
    print(f"wrote {prefix}.mandel.curve, {prefix}.g2.curve, {prefix}.stats.txt")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    keys = ("eta", "m_min", "weights")
    values = _effective(args, config, keys, (float, int, str), (None, 8, "stderr"))
    report: dict[str, object] = {"tool": __version__}
    if args.mandel is None and args.g2 is None:
        raise ValidationError("provide at least one of --mandel / --g2 curve files")

    if args.mandel is not None:
        kind, curve, tau_rep = formats.read_curve(args.mandel)
        report["mandel.input"] = formats.digest_file(args.mandel)
        if kind != "mandel":
            raise ValidationError(f"{args.mandel} is a {kind} curve, expected mandel")
        if values["eta"] is None:
            raise ValidationError("--eta is required to fit a Mandel curve")
        fit = fit_mandel(
            curve,
            values["eta"],
            tau_rep,
            weights=values["weights"],
            m_min=values["m_min"],
        )
        report.update(
            {
                "mandel.p_isc": f"{fit.p_isc:.6e}",
                "mandel.tau_triplet": f"{fit.tau_triplet:.6e}",
                "mandel.p_isc_error": f"{fit.p_isc_error:.3e}",
                "mandel.tau_triplet_error": f"{fit.tau_triplet_error:.3e}",
                "mandel.eta_fixed": f"{fit.eta_fixed:.6e}",
                "mandel.residual_norm": f"{fit.residual_norm:.3e}",
                "mandel.n_iterations": fit.n_iterations,
                "mandel.weights": values["weights"],
                "mandel.m_min": values["m_min"],
            }
        )
    if args.g2 is not None:
        kind, curve, tau_rep = formats.read_curve(args.g2)
        report["g2.input"] = formats.digest_file(args.g2)
        if kind != "g2":
            raise ValidationError(f"{args.g2} is a {kind} curve, expected g2")
        fit = fit_g2(curve, tau_rep, weights=values["weights"])
        report.update(
            {
                "g2.p_isc": f"{fit.p_isc:.6e}",
                "g2.tau_triplet": f"{fit.tau_triplet:.6e}",
                "g2.p_isc_error": f"{fit.p_isc_error:.3e}",
                "g2.tau_triplet_error": f"{fit.tau_triplet_error:.3e}",
                "g2.residual_norm": f"{fit.residual_norm:.3e}",
                "g2.n_iterations": fit.n_iterations,
                "g2.weights": values["weights"],
            }
        )
    if args.out:
        formats.write_report(args.out, report)
    for key, value in report.items():
        print(f"{key} = {value}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    series = formats.read_series(args.infile)
    pmf = empirical_pmf(series)
    comp = infer_composition(float(pmf.pmf[1]), float(pmf.pmf[2]))
    q_single = mandel_from_counts(pmf)
    q_coh = coherent_mandel(pmf.mean)
    report = {
        "p1_measured": f"{pmf.pmf[1]:.6e}",
        "p2_measured": f"{pmf.pmf[2]:.6e}",
        "mean_per_pulse": f"{pmf.mean:.6e}",
        "eta": f"{comp.eta:.6e}",
        "eta_gamma": f"{comp.eta_gamma:.6e}",
        "signal_to_background": f"{comp.signal_to_background:.4f}",
        "mandel_q_source": f"{q_single:.6e}",
        "mandel_q_coherent_same_mean": f"{q_coh:.6e}",
        "tool": __version__,
        "input": formats.digest_file(args.infile),
    }
    if args.out:
        formats.write_report(args.out, report)
    for key, value in report.items():
        print(f"{key} = {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonstat",
        description="simulate, decode and characterize pulsed single-photon "
        "counting records",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic timestamp file")
    p_sim.add_argument("out", help="output timestamp file")
    p_sim.add_argument("--config", help="key=value config file")
    p_sim.add_argument("--format", choices=("text", "binary"), default="binary")
    for key in _SIM_KEYS:
        p_sim.add_argument(f"--{key.replace('_', '-')}", dest=key)
    p_sim.set_defaults(func=cmd_simulate)

    p_sync = sub.add_parser(
        "sync", help="recover the pulse clock and gate counts per pulse"
    )
    p_sync.add_argument("infile", help="timestamp file")
    p_sync.add_argument("out", help="output photocount-series file")
    p_sync.add_argument("--config", help="key=value config file")
    p_sync.add_argument("--tau-guess", dest="tau_guess", help="trial period (s)")
    p_sync.add_argument("--window", dest="window", help="gate duration (s)")
    p_sync.add_argument("--max-iter", dest="max_iter")
    p_sync.set_defaults(func=cmd_sync)

    p_stats = sub.add_parser(
        "stats", help="per-pulse statistics, Mandel sweep and G2 of a series"
    )
    p_stats.add_argument("infile", help="photocount-series file")
    p_stats.add_argument("out_prefix", help="prefix for curve and report files")
    p_stats.add_argument("--config", help="key=value config file")
    p_stats.add_argument("--max-lag", dest="max_lag")
    p_stats.add_argument("--m-points", dest="m_points")
    p_stats.add_argument("--n-boot", dest="n_boot")
    p_stats.add_argument("--boot-seed", dest="boot_seed")
    p_stats.set_defaults(func=cmd_stats)

    p_fit = sub.add_parser("fit", help="fit blinking parameters to curve files")
    p_fit.add_argument("--mandel", help="Mandel curve file")
    p_fit.add_argument("--g2", help="G2 curve file")
    p_fit.add_argument("--out", help="write the report here as key=value text")
    p_fit.add_argument("--config", help="key=value config file")
    p_fit.add_argument("--eta", dest="eta", help="fixed detection efficiency")
    p_fit.add_argument("--m-min", dest="m_min", help="smallest window to fit")
    p_fit.add_argument("--weights", dest="weights", choices=("stderr", "uniform"))
    p_fit.set_defaults(func=cmd_fit)

    p_cal = sub.add_parser(
        "calibrate", help="infer efficiency and background from a series"
    )
    p_cal.add_argument("infile", help="photocount-series file")
    p_cal.add_argument("--out", help="write the report here as key=value text")
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
