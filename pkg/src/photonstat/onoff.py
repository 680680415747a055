"""Closed-form statistics of an intermittent (ON-OFF) pulsed single-photon source.

The emitter is modeled as a two-state Markov chain sampled once per
excitation pulse: ON -> OFF with per-second rate ``p_rate`` and OFF -> ON
with rate ``q_rate``.  A perfect source emits exactly one photon on every
ON pulse and nothing otherwise, which makes the per-pulse photon number a
stationary 0/1 chain whose window statistics (Mandel parameter over M
consecutive pulses, discrete autocorrelation) have exact closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "OnOffRates",
    "ModelQ",
    "stationary_probabilities",
    "on_probability",
    "correlation_function",
    "mandel_exact",
    "mandel_simplified",
    "mandel_detected",
    "g2_model",
]


@dataclass(frozen=True)
class OnOffRates:
    """Transition rates of the two-state emitter under pulsed excitation.

    p_rate : ON -> OFF rate in 1/s (intersystem crossing).
    q_rate : OFF -> ON rate in 1/s (dark-state decay, 1/tau_off).
    tau_rep : excitation repetition period in seconds.

    The discrete chain uses per-pulse transition probabilities
    p_rate*tau_rep and q_rate*tau_rep; its validity requires
    beta = (p_rate + q_rate)*tau_rep < 1, enforced at construction.
    """

    p_rate: float
    q_rate: float
    tau_rep: float

    def __post_init__(self) -> None:
        if not (self.p_rate > 0 and self.q_rate > 0 and self.tau_rep > 0):
            raise ValidationError(
                "p_rate, q_rate and tau_rep must all be positive, got "
                f"({self.p_rate}, {self.q_rate}, {self.tau_rep})"
            )
        if not self.beta < 1.0:
            raise ValidationError(
                f"(p_rate + q_rate) * tau_rep = {self.beta} must be < 1 for the "
                "discrete chain to be a valid probability model"
            )

    @classmethod
    def from_blink_params(
        cls, p_isc: float, tau_triplet: float, tau_rep: float
    ) -> "OnOffRates":
        """Build rates from the per-pulse ON->OFF probability and the OFF lifetime."""
        return cls(p_rate=p_isc / tau_rep, q_rate=1.0 / tau_triplet, tau_rep=tau_rep)

    @property
    def beta(self) -> float:
        """(p + q) * tau_rep, the per-pulse total relaxation probability."""
        return (self.p_rate + self.q_rate) * self.tau_rep

    @property
    def p_pulse(self) -> float:
        """Per-pulse ON->OFF probability p*tau_rep (the ISC probability)."""
        return self.p_rate * self.tau_rep

    @property
    def q_pulse(self) -> float:
        """Per-pulse OFF->ON probability q*tau_rep."""
        return self.q_rate * self.tau_rep

    @property
    def p_isc(self) -> float:
        return self.p_pulse

    @property
    def tau_on(self) -> float:
        """Mean ON dwell time in seconds (1/p)."""
        return 1.0 / self.p_rate

    @property
    def tau_off(self) -> float:
        """Mean OFF dwell time in seconds (1/q)."""
        return 1.0 / self.q_rate


@dataclass(frozen=True)
class ModelQ:
    """Mandel parameter of counts integrated over a window of m_pulses pulses."""

    m_pulses: int
    q_value: float

    def __post_init__(self) -> None:
        if self.m_pulses < 1:
            raise ValidationError(f"m_pulses must be >= 1, got {self.m_pulses}")
        if self.q_value < -1.0:
            raise ValidationError(f"q_value must be >= -1, got {self.q_value}")

    def t_seconds(self, tau_rep: float) -> float:
        """Window duration T = m_pulses * tau_rep."""
        return self.m_pulses * tau_rep


def stationary_probabilities(rates: OnOffRates) -> tuple[float, float]:
    """Stationary (P_on, P_off) = (q, p) / (p + q) of the two-state chain."""
    total = rates.p_rate + rates.q_rate
    p_on = rates.q_rate / total
    return p_on, 1.0 - p_on


def on_probability(u0: float, rates: OnOffRates, k: int) -> float:
    """Probability of being ON k pulses after starting with ON-probability u0.

    u_k = (u0 - q/(p+q)) * (1 - beta)^k + q/(p+q): geometric relaxation of
    the initial preparation toward the stationary value.
    """
    if not 0.0 <= u0 <= 1.0:
        raise ValidationError(f"u0 must be a probability, got {u0}")
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    p_on, _ = stationary_probabilities(rates)
    return (u0 - p_on) * (1.0 - rates.beta) ** k + p_on


def correlation_function(rates: OnOffRates, lag) -> float | np.ndarray:
    """Covariance C(lag) of the ON indicator between pulses lag apart.

    C(l) = p*q/(p+q)^2 * (1-beta)^l.  At l = 0 this is the Bernoulli
    variance P_on*(1-P_on); it decays geometrically with the lag.
    Accepts a scalar or an array of non-negative lags.
    """
    lag_arr = np.asarray(lag)
    if np.any(lag_arr < 0):
        raise ValidationError("lag must be >= 0")
    p_on, p_off = stationary_probabilities(rates)
    out = p_on * p_off * np.exp(lag_arr * math.log1p(-rates.beta))
    return float(out) if np.isscalar(lag) else out


def _mean_deficit(beta: float, m) -> np.ndarray:
    """D(m) = (m*beta - (1 - (1-beta)^m)) / m, computed without cancellation.

    This is the quantity through which the finite window enters both the
    exact and the simplified Mandel expressions.  For m*beta < 0.1 the
    direct form loses precision, so an alternating binomial series in beta
    is used there; both branches agree to ~1e-15 relative at the switch.
    """
    m_arr = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m_arr)
    small = m_arr * beta < 0.1

    if np.any(~small):
        mb = m_arr[~small]
        out[~small] = (mb * beta + np.expm1(mb * np.log1p(-beta))) / mb

    if np.any(small):
        ms = m_arr[small]
        # sum_{j>=2} (-1)^j C(m, j) beta^j / m, term ratio < m*beta/3 < 1/30
        term = ms * (ms - 1.0) / 2.0 * beta * beta
        total = term.copy()
        j = 3.0
        while True:
            term = term * (-(beta)) * (ms - (j - 1.0)) / j
            total += term
            j += 1.0
            if np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
                break
        out[small] = total / ms
    return out


def _mandel_exact_values(rates: OnOffRates, m) -> np.ndarray:
    """Exact window Mandel parameter of the perfect intermittent source.

    Derived from the chain covariance: with alpha = 1 - beta and
    D(m) = (m*beta - (1 - alpha^m)) / m,

        Q(m) = -P_on + 2 * P_off * alpha * D(m) / beta^2.

    This is algebraically identical to the textbook form
    P_off*[(2-beta)/beta - 2(1-beta)(1-alpha^m)/(m beta^2)] - 1 but stays
    exact at m = 1 (where it reduces to -P_on with no cancellation).
    """
    p_on, p_off = stationary_probabilities(rates)
    beta = rates.beta
    d = _mean_deficit(beta, m)
    return -p_on + 2.0 * p_off * (1.0 - beta) * d / (beta * beta)


def mandel_exact(rates: OnOffRates, m_pulses: int) -> ModelQ:
    """Exact Mandel parameter over a window of m_pulses pulses."""
    if m_pulses < 1:
        raise ValidationError(f"m_pulses must be >= 1, got {m_pulses}")
    value = float(_mandel_exact_values(rates, m_pulses))
    return ModelQ(m_pulses=int(m_pulses), q_value=value)


def _mandel_simplified_values(rates: OnOffRates, m) -> np.ndarray:
    # same deficit as the exact form: Q = 2 * p * tau_rep * D(m) / beta^3 - 1
    beta = rates.beta
    d = _mean_deficit(beta, m)
    return 2.0 * rates.p_pulse * d / beta**3 - 1.0


def mandel_simplified(rates: OnOffRates, m_pulses: int) -> ModelQ:
    """Small-beta (beta << 1) approximation of the window Mandel parameter.

    Q(m) = 2 p tau_rep / beta^2 * [1 - (1 - (1-beta)^m)/(m beta)] - 1.
    Accurate relative to the curve's plateau scale to about beta/2; near
    m = 1 its offset from the exact value approaches P_off in absolute
    terms, so prefer mandel_exact unless matching the approximate form.
    """
    if m_pulses < 1:
        raise ValidationError(f"m_pulses must be >= 1, got {m_pulses}")
    value = float(_mandel_simplified_values(rates, m_pulses))
    return ModelQ(m_pulses=int(m_pulses), q_value=max(value, -1.0))


def mandel_detected(rates: OnOffRates, m_pulses: int, eta: float) -> ModelQ:
    """Window Mandel parameter after linear detection loss: Q_det = eta * Q."""
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must be in [0, 1], got {eta}")
    ideal = mandel_exact(rates, m_pulses)
    return ModelQ(m_pulses=ideal.m_pulses, q_value=eta * ideal.q_value)


def _mandel_detected_values(rates: OnOffRates, m, eta: float) -> np.ndarray:
    return eta * _mandel_exact_values(rates, m)


def g2_model(rates: OnOffRates, lag, include_baseline: bool = True):
    """Model pulse-lag autocorrelation of the blinking source.

    With the uncorrelated baseline (default):
        g2(lag) = 1 + (p/q) * exp(-(p+q) * lag * tau_rep)
    which shares its large-lag asymptote with the empirical estimator.
    With include_baseline=False the bare exponential (p/q)*exp(...) is
    returned instead.  Accepts scalar or array lags >= 1.
    """
    lag_arr = np.asarray(lag, dtype=np.float64)
    if np.any(lag_arr < 1):
        raise ValidationError("lag must be >= 1")
    total = rates.p_rate + rates.q_rate
    contrast = rates.p_rate / rates.q_rate
    out = contrast * np.exp(-total * lag_arr * rates.tau_rep)
    if include_baseline:
        out = 1.0 + out
    return float(out) if np.isscalar(lag) else out
