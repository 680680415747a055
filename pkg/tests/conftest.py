import numpy as np
import pytest

from photonstat.onoff import OnOffRates
from photonstat.sync import PhotocountSeries

TAU_REP = 488e-9

# single-pulse count numbers of the bundled reference acquisition:
# 325313 pulses with 15108 one-count and 15 two-count pulses
REF_COUNTS = (310190, 15108, 15)
REF_N_PULSES = 325313


@pytest.fixture(scope="session")
def ref_rates() -> OnOffRates:
    """Blinking rates of the reference acquisition's fitted chain."""
    return OnOffRates.from_blink_params(2.1e-4, 250e-6, TAU_REP)


@pytest.fixture(scope="session")
def ref_series() -> PhotocountSeries:
    """Photocount series with the reference single-pulse statistics."""
    counts = np.zeros(REF_N_PULSES, dtype=np.uint8)
    counts[: REF_COUNTS[1]] = 1
    counts[REF_COUNTS[1] : REF_COUNTS[1] + REF_COUNTS[2]] = 2
    np.random.default_rng(20260810).shuffle(counts)
    return PhotocountSeries(
        counts=counts, n_pulses=REF_N_PULSES, window=30e-9, tau_rep=TAU_REP
    )
