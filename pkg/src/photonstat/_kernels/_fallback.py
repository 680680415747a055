"""Pure-Python / numpy implementations of the hot kernels.

These are the reference implementations; the compiled extension in
``_core.pyx`` computes exactly the same results.  Selected automatically
when the extension is not built, or explicitly via PHOTONSTAT_PURE_PYTHON=1.
"""

from __future__ import annotations

import numpy as np

# chunk size (in pair count) for the vectorized correlator
_PAIR_CHUNK = 4_000_000


def deadtime_filter(times: np.ndarray, deadtime: int) -> np.ndarray:
    """Greedy deadtime on one detection channel.

    ``times`` must be sorted ascending (integer picoseconds).  An event is
    kept iff it falls at least ``deadtime`` after the previously *kept*
    event, which is the behaviour of a non-paralyzable counter.  Returns a
    boolean keep mask aligned with ``times``.
    """
    keep = np.zeros(times.shape[0], dtype=bool)
    last = None
    for i, t in enumerate(times.tolist()):
        if last is None or t - last >= deadtime:
            keep[i] = True
            last = t
    return keep


def pair_product_hist(
    pulses: np.ndarray,
    counts: np.ndarray,
    max_lag: int,
    block_len: int = 0,
    n_blocks: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse pair correlator over a per-pulse count series.

    ``pulses`` are the strictly increasing pulse indices of the non-empty
    pulses, ``counts`` the counts recorded there (1 or 2).  For every lag
    d = 1..max_lag this accumulates the product counts[j]*counts[k] over
    ordered pairs (j, k) with pulses[k] - pulses[j] == d.

    When ``block_len`` > 0 the same products are additionally histogrammed
    by the pulse block of the left pair member (block = pulses[j] //
    block_len, kept for blocks < n_blocks), which feeds the block
    bootstrap.  Returns (prod_sum, prod_block) with shapes (max_lag + 1,)
    and (max_lag + 1, n_blocks); lag entry 0 is unused.
    """
    pulses = np.asarray(pulses, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    n = pulses.shape[0]
    prod_sum = np.zeros(max_lag + 1, dtype=np.int64)
    prod_block = np.zeros((max_lag + 1, n_blocks), dtype=np.int64)
    if n == 0:
        return prod_sum, prod_block

    left = np.searchsorted(pulses, pulses + 1, side="left")
    right = np.searchsorted(pulses, pulses + max_lag, side="right")
    partners = right - left

    start = 0
    while start < n:
        stop = start
        acc = 0
        while stop < n and (acc == 0 or acc + partners[stop] <= _PAIR_CHUNK):
            acc += partners[stop]
            stop += 1
        if acc > 0:
            m = partners[start:stop]
            cum = np.concatenate(([0], np.cumsum(m)))
            within = np.arange(acc) - np.repeat(cum[:-1], m)
            j = np.repeat(np.arange(start, stop), m)
            k = np.repeat(left[start:stop], m) + within
            lag = pulses[k] - pulses[j]
            prod = counts[j] * counts[k]
            prod_sum += np.bincount(lag, weights=prod, minlength=max_lag + 1).astype(
                np.int64
            )
            if block_len > 0 and n_blocks > 0:
                block = pulses[j] // block_len
                ok = block < n_blocks
                flat = lag[ok] * n_blocks + block[ok]
                prod_block += (
                    np.bincount(
                        flat,
                        weights=prod[ok],
                        minlength=(max_lag + 1) * n_blocks,
                    )
                    .astype(np.int64)
                    .reshape(max_lag + 1, n_blocks)
                )
        start = stop
    return prod_sum, prod_block
