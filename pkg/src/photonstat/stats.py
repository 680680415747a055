"""Empirical estimators on per-pulse photocount series.

Single-pulse count probabilities, the Mandel parameter of counts summed
over windows of M consecutive pulses, and the discrete pulse-lag
autocorrelation G2.  Uncertainties come from block bootstraps that
resample stretches long compared to the source correlation time, since
neighbouring windows (and pair products) of a blinking source are far
from independent; per-block sufficient statistics keep a resample at
O(number of blocks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pair_product_hist
from .detection import CountDistribution
from .errors import InsufficientData, UndefinedMean, ValidationError
from .sync import PhotocountSeries

__all__ = [
    "MandelCurve",
    "G2Curve",
    "empirical_pmf",
    "mandel_window",
    "mandel_sweep",
    "g2_empirical",
    "default_m_grid",
    "resample_series",
]

DEFAULT_BOOTSTRAP = 200
_BOOT_SEED = 0x5EED


@dataclass
class MandelCurve:
    """Mandel parameter vs integration window, with per-point uncertainty.

    Arrays are aligned: window length in pulses (strictly increasing),
    window duration in seconds, Q estimate, bootstrap standard error and
    the number of disjoint windows averaged.  Grid points that could not
    be evaluated are listed in ``skipped`` with the reason.
    """

    m_pulses: np.ndarray
    t_seconds: np.ndarray
    q_values: np.ndarray
    std_errors: np.ndarray
    n_samples: np.ndarray
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.m_pulses = np.asarray(self.m_pulses, dtype=np.int64)
        self.t_seconds = np.asarray(self.t_seconds, dtype=np.float64)
        self.q_values = np.asarray(self.q_values, dtype=np.float64)
        self.std_errors = np.asarray(self.std_errors, dtype=np.float64)
        self.n_samples = np.asarray(self.n_samples, dtype=np.int64)
        sizes = {
            arr.size
            for arr in (
                self.m_pulses,
                self.t_seconds,
                self.q_values,
                self.std_errors,
                self.n_samples,
            )
        }
        if len(sizes) != 1:
            raise ValidationError("curve columns must have equal length")
        if self.m_pulses.size:
            if np.any(np.diff(self.m_pulses) <= 0) or self.m_pulses[0] < 1:
                raise ValidationError("m_pulses must be >= 1 and strictly increasing")
            if np.any(self.n_samples < 2):
                raise ValidationError("each point needs at least 2 windows")
            if np.any(self.q_values < -1.0):
                raise ValidationError("Mandel parameter cannot be below -1")

    def __len__(self) -> int:
        return int(self.m_pulses.size)


@dataclass
class G2Curve:
    """Discrete pulse-lag autocorrelation with bootstrap uncertainties."""

    lags: np.ndarray
    g2_values: np.ndarray
    std_errors: np.ndarray

    def __post_init__(self) -> None:
        self.lags = np.asarray(self.lags, dtype=np.int64)
        self.g2_values = np.asarray(self.g2_values, dtype=np.float64)
        self.std_errors = np.asarray(self.std_errors, dtype=np.float64)
        if not (self.lags.size == self.g2_values.size == self.std_errors.size):
            raise ValidationError("curve columns must have equal length")
        if self.lags.size and self.lags[0] < 1:
            raise ValidationError("lags must be >= 1")
        if np.any(self.g2_values < 0):
            raise ValidationError("G2 cannot be negative")

    def __len__(self) -> int:
        return int(self.lags.size)


def empirical_pmf(series: PhotocountSeries) -> CountDistribution:
    """Relative frequencies of the per-pulse counts 0, 1, 2."""
    if series.n_pulses < 1:
        raise InsufficientData("need at least one pulse")
    freq = np.bincount(series.counts, minlength=3) / series.n_pulses
    return CountDistribution.from_pmf(freq)


def _window_sums(counts: np.ndarray, m: int) -> np.ndarray:
    n_samples = counts.size // m
    return (
        counts[: n_samples * m]
        .reshape(n_samples, m)
        .sum(axis=1, dtype=np.int64)
    )


def resample_series(
    series: PhotocountSeries,
    rng: np.random.Generator,
    block_pulses: int | None = None,
) -> PhotocountSeries:
    """Circular moving-block bootstrap resample of a photocount series.

    Contiguous blocks of ``block_pulses`` pulses (default: 1/50 of the
    record, so blinking correlations stay intact within blocks) are drawn
    with replacement at uniform circular starts and concatenated to the
    original length, rounded down to whole blocks.
    """
    n = series.n_pulses
    if block_pulses is None:
        block_pulses = max(n // 50, 1)
    block_pulses = min(max(int(block_pulses), 1), n)
    n_blocks = n // block_pulses
    if n_blocks < 2:
        raise InsufficientData("record too short for block resampling")
    starts = rng.integers(0, n, size=n_blocks)
    offsets = np.arange(block_pulses)
    idx = (starts[:, None] + offsets[None, :]).ravel() % n
    return PhotocountSeries(
        counts=series.counts[idx],
        n_pulses=n_blocks * block_pulses,
        window=series.window,
        tau_rep=series.tau_rep,
    )


def _bootstrap_q(
    sums: np.ndarray,
    n_boot: int,
    n_blocks: int,
    rng: np.random.Generator,
) -> float:
    """Standard error of Q by block bootstrap of the window sums.

    Consecutive windows stay correlated when the source correlation time
    exceeds the window, so windows are grouped into ``n_blocks``
    contiguous blocks that are resampled with replacement; only per-block
    first and second moments are needed, making a resample O(n_blocks).
    """
    if n_boot < 2:
        return float("nan")
    per_block = max(sums.size // n_blocks, 1)
    nb = sums.size // per_block
    if nb < 2:
        return float("nan")
    grouped = sums[: nb * per_block].reshape(nb, per_block).astype(np.float64)
    s1 = grouped.sum(axis=1)
    s2 = (grouped * grouped).sum(axis=1)
    draws = rng.integers(0, nb, size=(n_boot, nb))
    total = nb * per_block
    means = s1[draws].sum(axis=1) / total
    seconds = s2[draws].sum(axis=1) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        qs = (seconds - means**2) / means - 1.0
    qs = qs[np.isfinite(qs)]
    if qs.size < 2:
        return float("nan")
    return float(qs.std(ddof=1))


def mandel_window(
    series: PhotocountSeries,
    m_pulses: int,
    n_boot: int = DEFAULT_BOOTSTRAP,
    n_blocks: int = 50,
    seed: int = _BOOT_SEED,
) -> tuple[float, float]:
    """Q of counts summed over disjoint windows of m_pulses pulses.

    The series is split into floor(N/m) consecutive windows (leftover
    pulses discarded); Q = Var/Mean - 1 of the window sums with the
    population variance.  Returns (q_value, standard error from a block
    bootstrap over ``n_blocks`` groups of consecutive windows).
    """
    if m_pulses < 1:
        raise ValidationError(f"m_pulses must be >= 1, got {m_pulses}")
    n_samples = series.n_pulses // m_pulses
    if n_samples < 2:
        raise InsufficientData(
            f"need at least 2 windows of {m_pulses} pulses, have {n_samples}"
        )
    sums = _window_sums(series.counts, m_pulses)
    mean = sums.mean()
    if mean == 0.0:
        raise UndefinedMean("all windows are empty; Q is undefined")
    q = float(sums.var() / mean - 1.0)
    stderr = _bootstrap_q(sums, n_boot, n_blocks, np.random.default_rng(seed))
    return q, stderr


def default_m_grid(n_pulses: int, points: int = 25) -> np.ndarray:
    """Log-spaced window lengths from 1 to n_pulses/10."""
    top = max(n_pulses // 10, 1)
    grid = np.unique(np.round(np.logspace(0, np.log10(top), points)).astype(np.int64))
    return grid[grid >= 1]


def mandel_sweep(
    series: PhotocountSeries,
    m_grid=None,
    n_boot: int = DEFAULT_BOOTSTRAP,
    n_blocks: int = 50,
    seed: int = _BOOT_SEED,
) -> MandelCurve:
    """mandel_window over a grid of window lengths.

    Grid points that fail (too few windows, empty windows) are recorded in
    the curve's ``skipped`` list instead of aborting the sweep.
    """
    if m_grid is None:
        m_grid = default_m_grid(series.n_pulses)
    m_grid = np.unique(np.asarray(m_grid, dtype=np.int64))
    if m_grid.size == 0 or m_grid[0] < 1:
        raise ValidationError("m_grid must contain integers >= 1")

    kept, qs, errs, samples, skipped = [], [], [], [], []
    for m in m_grid.tolist():
        try:
            q, err = mandel_window(
                series, m, n_boot=n_boot, n_blocks=n_blocks, seed=seed
            )
        except (InsufficientData, UndefinedMean) as exc:
            skipped.append((m, str(exc)))
            continue
        kept.append(m)
        qs.append(q)
        errs.append(err)
        samples.append(series.n_pulses // m)
    return MandelCurve(
        m_pulses=np.array(kept, dtype=np.int64),
        t_seconds=np.array(kept, dtype=np.float64) * series.tau_rep,
        q_values=np.array(qs),
        std_errors=np.array(errs),
        n_samples=np.array(samples, dtype=np.int64),
        skipped=skipped,
    )


def g2_empirical(
    series: PhotocountSeries,
    max_lag: int,
    n_boot: int = DEFAULT_BOOTSTRAP,
    n_blocks: int = 30,
    seed: int = _BOOT_SEED,
) -> G2Curve:
    """Discrete autocorrelation G2(d) = <n_i n_{i+d}> / <n>^2 for d = 1..max_lag.

    The numerator averages n_i * n_{i+d} over all valid pulse pairs; the
    normalization uses the full-series mean.  Standard errors come from a
    block bootstrap: the pulse axis is cut into ~``n_blocks`` contiguous
    blocks (never shorter than twice max_lag), per-block pair-product sums
    are accumulated by the sparse correlator, and blocks are resampled
    with replacement, re-deriving numerator and normalization together.
    """
    n = series.n_pulses
    if max_lag < 1:
        raise ValidationError(f"max_lag must be >= 1, got {max_lag}")
    if max_lag >= n / 10:
        raise InsufficientData(
            f"max_lag {max_lag} too large for a series of {n} pulses"
        )
    counts = series.counts
    mean = counts.mean()
    if mean == 0.0:
        raise UndefinedMean("series has zero mean; G2 is undefined")

    block_len = max(n // n_blocks, 2 * max_lag)
    nb = n // block_len

    occupied = np.flatnonzero(counts).astype(np.int64)
    occ_counts = counts[occupied].astype(np.int64)
    prod_sum, prod_block = pair_product_hist(
        occupied, occ_counts, max_lag, block_len, nb
    )

    lags = np.arange(1, max_lag + 1, dtype=np.int64)
    n_pairs = n - lags
    g2 = prod_sum[1:] / n_pairs / mean**2

    errs = np.full(max_lag, np.nan)
    if n_boot < 2 or nb < 2:
        return G2Curve(lags=lags, g2_values=g2, std_errors=errs)

    # per-(lag, block) count of valid left indices i in [0, n - lag)
    starts = np.arange(nb) * block_len
    stops = np.minimum(starts + block_len, (n - lags)[:, None])
    valid = np.clip(stops - starts, 0, block_len)  # (max_lag, nb)
    count_block = np.add.reduceat(
        counts[: nb * block_len].astype(np.int64), starts
    ).astype(np.float64)

    rng = np.random.default_rng(seed)
    prod_f = prod_block[1:].astype(np.float64)
    boot = np.empty((n_boot, max_lag))
    for b in range(n_boot):
        weights = np.bincount(rng.integers(0, nb, size=nb), minlength=nb).astype(
            np.float64
        )
        num = prod_f @ weights
        den = valid @ weights
        mean_b = (count_block @ weights) / (nb * block_len)
        with np.errstate(divide="ignore", invalid="ignore"):
            boot[b] = num / den / mean_b**2
    with np.errstate(invalid="ignore"):
        errs = np.nanstd(boot, axis=0, ddof=1)
    return G2Curve(lags=lags, g2_values=g2, std_errors=errs)
