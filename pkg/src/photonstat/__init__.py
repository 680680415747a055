"""Photocount statistics toolkit for triggered single-photon sources.

Simulates raw two-channel photodetection timestamp records, recovers the
excitation clock from them, decodes per-pulse photocounts, and
characterizes the result: single-pulse count algebra with deadtime bias,
time-dependent Mandel parameter, discrete pulse-lag autocorrelation, an
ON-OFF intermittency model, and parameter recovery by fitting.
"""

__version__ = "0.1.0"

from ._kernels import backend
from .detection import (
    CountDistribution,
    SourceComposition,
    attenuate,
    coherent_counts,
    coherent_counts_from_mean,
    coherent_mandel,
    eta_alpha_from_mean,
    hbt_counts,
    infer_composition,
    mandel_from_counts,
    mandel_q,
    single_apd_counts,
    sps_counts,
)
from .fitting import BlinkingFits, FitResult, fit_blinking, fit_g2, fit_mandel
from .onoff import (
    ModelQ,
    OnOffRates,
    correlation_function,
    g2_model,
    mandel_detected,
    mandel_exact,
    mandel_simplified,
    on_probability,
    stationary_probabilities,
)
from .simulate import SourceParams, TimestampRecord, simulate, state_trace
from .stats import (
    G2Curve,
    MandelCurve,
    default_m_grid,
    empirical_pmf,
    g2_empirical,
    mandel_sweep,
    mandel_window,
    resample_series,
)
from .sync import (
    ClockEstimate,
    PhotocountSeries,
    PulseAssignment,
    assign_pulses,
    delay_of,
    estimate_clock,
    gate_counts,
)

__all__ = [
    "__version__",
    "backend",
    "CountDistribution",
    "SourceComposition",
    "attenuate",
    "coherent_counts",
    "coherent_counts_from_mean",
    "coherent_mandel",
    "eta_alpha_from_mean",
    "hbt_counts",
    "infer_composition",
    "mandel_from_counts",
    "mandel_q",
    "single_apd_counts",
    "sps_counts",
    "BlinkingFits",
    "FitResult",
    "fit_blinking",
    "fit_g2",
    "fit_mandel",
    "ModelQ",
    "OnOffRates",
    "correlation_function",
    "g2_model",
    "mandel_detected",
    "mandel_exact",
    "mandel_simplified",
    "on_probability",
    "stationary_probabilities",
    "SourceParams",
    "TimestampRecord",
    "simulate",
    "state_trace",
    "G2Curve",
    "MandelCurve",
    "default_m_grid",
    "empirical_pmf",
    "g2_empirical",
    "mandel_sweep",
    "mandel_window",
    "resample_series",
    "ClockEstimate",
    "PhotocountSeries",
    "PulseAssignment",
    "assign_pulses",
    "delay_of",
    "estimate_clock",
    "gate_counts",
]
