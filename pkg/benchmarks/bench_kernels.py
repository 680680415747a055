#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python/numpy fallback.

Times the two hot kernels (per-channel deadtime filtering and the sparse
pair correlator behind G2) on realistic event densities, plus an
end-to-end simulate -> sync -> stats pass.  Run once normally and once
with PHOTONSTAT_PURE_PYTHON=1 to compare backends, or use --both to fork
the comparison automatically.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def timed(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(n_pulses: int, max_lag: int) -> None:
    from photonstat import backend
    from photonstat._kernels import deadtime_filter, pair_product_hist
    from photonstat.simulate import SourceParams, simulate
    from photonstat.stats import g2_empirical, mandel_sweep
    from photonstat.sync import assign_pulses, estimate_clock, gate_counts

    print(f"backend: {backend()}")
    rng = np.random.default_rng(0)

    # deadtime filter on a dense channel stream
    n_events = max(n_pulses // 20, 10_000)
    times = np.sort(rng.integers(0, n_pulses * 488_000, size=n_events))
    t = timed(deadtime_filter, np.ascontiguousarray(times), 280_000)
    print(f"deadtime_filter   {n_events:>9} events: {t * 1e3:9.2f} ms")

    # sparse pair correlator at reference density
    occupied = np.sort(
        rng.choice(n_pulses, size=int(n_pulses * 0.045), replace=False)
    ).astype(np.int64)
    counts = rng.integers(1, 3, size=occupied.size).astype(np.int64)
    t = timed(pair_product_hist, occupied, counts, max_lag, n_pulses // 30, 30)
    print(f"pair_product_hist {occupied.size:>9} events: {t * 1e3:9.2f} ms")

    # end-to-end pass
    t0 = time.perf_counter()
    record = simulate(SourceParams(n_pulses=n_pulses, t_start_true=2e-4, seed=3))
    t_sim = time.perf_counter() - t0
    t0 = time.perf_counter()
    clock = estimate_clock(record, tau_guess=488e-9 * (1 + 1e-4))
    assignment = assign_pulses(record, clock)
    series = gate_counts(assignment, int(assignment.pulse_index.max()) + 1, 30e-9)
    t_sync = time.perf_counter() - t0
    t0 = time.perf_counter()
    mandel_sweep(series)
    g2_empirical(series, max_lag)
    t_stats = time.perf_counter() - t0
    print(
        f"pipeline {n_pulses} pulses ({len(record)} events): "
        f"simulate {t_sim:.2f}s  sync {t_sync:.2f}s  stats {t_stats:.2f}s"
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pulses", type=int, default=2_000_000)
    parser.add_argument("--max-lag", type=int, default=1000)
    parser.add_argument(
        "--both",
        action="store_true",
        help="run the compiled backend, then re-run this script with "
        "PHOTONSTAT_PURE_PYTHON=1",
    )
    args = parser.parse_args()

    bench(args.pulses, args.max_lag)
    if args.both and not os.environ.get("PHOTONSTAT_PURE_PYTHON"):
        print(flush=True)
        env = dict(os.environ, PHOTONSTAT_PURE_PYTHON="1")
        subprocess.run(
            [
                sys.executable,
                __file__,
                "--pulses",
                str(args.pulses),
                "--max-lag",
                str(args.max_lag),
            ],
            env=env,
            check=True,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
