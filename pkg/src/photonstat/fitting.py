"""Recovery of blinking parameters from measured Q(T) and G2 curves.

Both fits optimize in log-rate space (positivity for free, rates spanning
decades) with damped least squares, weighted by the per-point bootstrap
errors when the curve carries them.  The Mandel fit holds the detection
efficiency fixed at an externally measured value and adjusts the two
chain rates; the correlation fit adjusts contrast and decay length of
A*exp(-lag/lag0) + 1 and maps them back to the rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    ConvergenceError,
    DegenerateCurve,
    NegativeContrast,
    NonConvergence,
    ValidationError,
)
from .onoff import OnOffRates, _mandel_exact_values
from .stats import G2Curve, MandelCurve, g2_empirical, mandel_sweep, resample_series

__all__ = ["FitResult", "BlinkingFits", "fit_mandel", "fit_g2", "fit_blinking"]

MAX_ITERATIONS = 500
_STEP_TOL = 1e-8
_GRAD_TOL = 1e-10


@dataclass
class FitResult:
    """Outcome of one parameter fit.

    p_isc : per-pulse ON->OFF probability p*tau_rep.
    tau_triplet : OFF lifetime 1/q in seconds.
    eta_fixed : efficiency held fixed during the fit (None for G2 fits,
        whose normalization cancels linear loss).
    covariance : 2x2 covariance of (p_isc, tau_triplet).
    residual_norm : Euclidean norm of the weighted residual at the optimum.
    """

    p_isc: float
    tau_triplet: float
    eta_fixed: float | None
    residual_norm: float
    covariance: np.ndarray
    converged: bool
    n_iterations: int
    details: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.p_isc < 1.0:
            raise ValidationError(f"fitted p_isc {self.p_isc} outside (0, 1)")
        if self.tau_triplet <= 0:
            raise ValidationError(f"fitted tau_triplet {self.tau_triplet} <= 0")
        self.covariance = np.asarray(self.covariance, dtype=np.float64)

    @property
    def p_isc_error(self) -> float:
        return float(np.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def tau_triplet_error(self) -> float:
        return float(np.sqrt(max(self.covariance[1, 1], 0.0)))


def _weights_from(std_errors: np.ndarray | None, n: int, mode: str) -> np.ndarray:
    if mode == "uniform" or std_errors is None:
        return np.ones(n)
    err = np.asarray(std_errors, dtype=np.float64)
    finite = err[np.isfinite(err) & (err > 0)]
    if finite.size == 0:
        return np.ones(n)
    floor = max(1e-3 * float(np.median(finite)), 1e-300)
    safe = np.where(np.isfinite(err) & (err > 0), err, np.median(finite))
    return 1.0 / np.maximum(safe, floor)


def _run_least_squares(resid_fn, x0, max_iter):
    result = least_squares(
        resid_fn,
        x0,
        method="lm",
        xtol=_STEP_TOL,
        gtol=_GRAD_TOL,
        ftol=1e-14,
        max_nfev=max_iter * len(x0),
    )
    if not np.all(np.isfinite(result.x)):
        raise NonConvergence("optimizer left the finite parameter domain")
    if result.status == 0:
        raise NonConvergence(
            f"no convergence within {max_iter} iterations (cost {result.cost:.3g})"
        )
    return result


def _covariance_log(result, weighted: bool) -> np.ndarray:
    jac = result.jac
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    if not weighted:
        dof = max(jac.shape[0] - jac.shape[1], 1)
        cov = cov * (2.0 * result.cost / dof)
    return cov


def _mandel_init(curve: MandelCurve, eta: float, tau_rep: float) -> tuple[float, float]:
    """Heuristic seed: plateau height fixes 2*p*tau/beta^2, the knee
    position fixes beta."""
    q = curve.q_values
    m = curve.m_pulses.astype(np.float64)
    plateau_perf = float(q.max()) / eta + 1.0
    half = (float(q.max()) + float(q.min())) / 2.0
    above = np.flatnonzero(q >= half)
    m_half = float(m[above[0]]) if above.size else float(m[-1]) / 3.0
    beta = min(max(1.5936 / m_half, 1e-9), 0.5)
    p_pulse = plateau_perf * beta * beta / 2.0
    p_pulse = min(max(p_pulse, 1e-12), 0.45 * beta)
    q_pulse = beta - p_pulse
    return p_pulse, q_pulse


def fit_mandel(
    curve: MandelCurve,
    eta: float,
    tau_rep: float,
    init: tuple[float, float] | None = None,
    weights: str = "stderr",
    m_min: int | None = None,
    m_max: int | None = None,
    max_iter: int = MAX_ITERATIONS,
    free_eta: bool = False,
) -> FitResult:
    """Fit (P_ISC, tau_T) to a measured Q(T) curve with eta held fixed.

    The model is eta * Q_chain(m; p, q) with the exact window expression.
    ``init`` optionally seeds the per-pulse probabilities (p*tau_rep,
    q*tau_rep); otherwise a plateau/knee heuristic is used.  ``weights``
    is "stderr" (default; 1/sigma^2 from the curve) or "uniform".
    Raises DegenerateCurve when the curve carries no intermittency signal.

    ``free_eta`` switches on a diagnostic three-parameter mode where the
    efficiency floats too (started from the given value); useful to probe
    a disagreement with the single-pulse calibration, not meant for
    routine use since eta is nearly degenerate with the rate scale.
    """
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must be in (0, 1], got {eta}")
    if tau_rep <= 0:
        raise ValidationError("tau_rep must be positive")

    sel = np.ones(len(curve), dtype=bool)
    if m_min is not None:
        sel &= curve.m_pulses >= m_min
    if m_max is not None:
        sel &= curve.m_pulses <= m_max
    m = curve.m_pulses[sel].astype(np.float64)
    q_data = curve.q_values[sel]
    errs = curve.std_errors[sel]
    if m.size < 5 or (m.size and math.log10(m.max() / m.min()) < 2.0):
        raise ValidationError(
            "need at least 5 curve points spanning two decades in window length"
        )

    w = _weights_from(errs, m.size, weights)
    span = float(q_data.max() - q_data.min())
    noise = float(np.median(1.0 / w)) if weights != "uniform" else 0.0
    if q_data.max() <= 0.0 and span <= 10.0 * noise:
        raise DegenerateCurve(
            "curve is flat within errors: no intermittency signal to fit"
        )

    starts = [_mandel_init(curve, eta, tau_rep)]
    if init is not None:
        p0, q0 = init
        if not (p0 > 0 and q0 > 0 and p0 + q0 < 1):
            raise ValidationError(f"invalid init ({p0}, {q0})")
        # the user seed is tried alongside the heuristic; the better
        # optimum wins, which keeps distant seeds out of local minima
        starts.insert(0, (float(p0), float(q0)))

    def resid(x):
        # clip the log-rates to a generous physical window so probing
        # steps can neither underflow nor leave the chain domain silently
        p_pulse, q_pulse = np.exp(np.clip(x[:2], -45.0, 0.0))
        eta_eff = float(np.exp(np.clip(x[2], -45.0, 0.0))) if free_eta else eta
        total = p_pulse + q_pulse
        if total >= 1.0:
            # outside the discrete-chain domain: steeply growing penalty
            return w * (1e3 * total)
        rates = OnOffRates(p_pulse / tau_rep, q_pulse / tau_rep, tau_rep)
        out = w * (eta_eff * _mandel_exact_values(rates, m) - q_data)
        return np.where(np.isfinite(out), out, 1e6)

    result = None
    for p0, q0 in starts:
        x0 = np.log([p0, q0, eta] if free_eta else [p0, q0])
        candidate = _run_least_squares(resid, x0, max_iter)
        if result is None or candidate.cost < result.cost:
            result = candidate
    p_pulse, q_pulse = np.exp(result.x[:2])
    eta_out = float(np.exp(result.x[2])) if free_eta else eta

    cov_log = _covariance_log(result, weighted=(weights != "uniform"))[:2, :2]
    p_isc = float(p_pulse)
    tau_t = float(tau_rep / q_pulse)
    transform = np.array([[p_isc, 0.0], [0.0, -tau_t]])
    cov = transform @ cov_log @ transform.T

    details = {
        "method": "mandel",
        "weights": weights,
        "n_points": int(m.size),
        "starts": [(float(a), float(b)) for a, b in starts],
    }
    if free_eta:
        details["eta_fitted"] = eta_out

    return FitResult(
        p_isc=p_isc,
        tau_triplet=tau_t,
        eta_fixed=None if free_eta else eta,
        residual_norm=float(np.linalg.norm(result.fun)),
        covariance=cov,
        converged=True,
        n_iterations=int(result.nfev),
        details=details,
    )


def fit_g2(
    curve: G2Curve,
    tau_rep: float,
    weights: str = "stderr",
    max_iter: int = MAX_ITERATIONS,
) -> FitResult:
    """Fit A*exp(-lag/lag0) + 1 to a measured G2 curve and map
    (A, lag0) -> (P_ISC, tau_T) via A = p/q and (p+q)*tau_rep = 1/lag0.
    """
    if tau_rep <= 0:
        raise ValidationError("tau_rep must be positive")
    lags = curve.lags.astype(np.float64)
    g2 = curve.g2_values
    if lags.size < 10:
        raise ValidationError("need at least 10 lag points")
    w = _weights_from(curve.std_errors, lags.size, weights)

    head = g2[: max(3, lags.size // 20)]
    contrast0 = float(head.mean() - 1.0)
    if contrast0 <= 0.0:
        raise NegativeContrast(
            "correlation curve shows no positive blinking contrast at short lags"
        )
    excess = g2 - 1.0
    pos = excess > 0
    if pos.sum() >= 2:
        slope = np.polyfit(lags[pos], np.log(excess[pos]), 1)[0]
        lag0_init = -1.0 / slope if slope < 0 else float(lags[-1])
    else:
        lag0_init = float(lags[-1]) / 3.0
    lag0_init = min(max(lag0_init, 1.0), 100.0 * float(lags[-1]))

    def resid(x):
        contrast, lag0 = np.exp(x)
        return w * (contrast * np.exp(-lags / lag0) + 1.0 - g2)

    result = _run_least_squares(
        resid, np.log([contrast0, lag0_init]), max_iter
    )
    contrast, lag0 = np.exp(result.x)
    if contrast <= 1e-8:
        raise NegativeContrast(f"fitted contrast collapsed to {contrast:.3g}")

    beta = 1.0 / lag0
    q_pulse = beta / (1.0 + contrast)
    p_pulse = contrast * q_pulse
    p_isc = float(p_pulse)
    tau_t = float(tau_rep / q_pulse)

    # delta method from (ln A, ln lag0) to (P_ISC, tau_T)
    cov_log = _covariance_log(result, weighted=(weights != "uniform"))
    a_frac = contrast / (1.0 + contrast)
    jac_map = np.array(
        [
            [p_isc * (1.0 - a_frac), -p_isc],
            [tau_t * a_frac, tau_t],
        ]
    )
    cov = jac_map @ cov_log @ jac_map.T

    return FitResult(
        p_isc=p_isc,
        tau_triplet=tau_t,
        eta_fixed=None,
        residual_norm=float(np.linalg.norm(result.fun)),
        covariance=cov,
        converged=True,
        n_iterations=int(result.nfev),
        details={
            "method": "g2",
            "weights": weights,
            "n_points": int(lags.size),
            "contrast": float(contrast),
            "decay_lag": float(lag0),
        },
    )


@dataclass
class BlinkingFits:
    """Mandel-curve and correlation-curve fits of one record, with
    resampling-based parameter covariances and their joint comparison.

    Each fit's covariance is the scatter of its parameters over block
    resamples of the series.  For the consistency check the two estimates
    are compared as independent measurements (the usual convention when
    quoting two methods side by side): diff_covariance = C_mandel + C_g2,
    and joint_chi2 = d^T diff_covariance^-1 d for the parameter
    difference d.
    """

    mandel: FitResult
    g2: FitResult
    diff_covariance: np.ndarray
    joint_chi2: float
    n_resamples: int


def _param_vec(fit: FitResult) -> np.ndarray:
    return np.array([fit.p_isc, fit.tau_triplet])


def fit_blinking(
    series,
    eta: float,
    max_lag: int = 1000,
    m_grid=None,
    m_min: int | None = 8,
    n_resamples: int = 24,
    block_pulses: int | None = None,
    seed: int = 0xB007,
) -> BlinkingFits:
    """Fit the blinking parameters by both routes with honest errors.

    Curve points extracted from a single record are strongly correlated,
    so least-squares covariances understate the parameter uncertainty.
    This wrapper fits the measured Q(T) and G2 curves, then repeats both
    fits on circular block resamples of the photocount series; the
    scatter of the resampled parameters replaces the covariance of each
    FitResult, and the two estimates are compared as independent
    measurements through a chi-square on their difference.

    The Mandel fit starts at ``m_min`` = 8 windows by default: the chain
    model deliberately omits single-pulse detection biases (background
    coincidences, the two-channel cap), which distort Q only on few-pulse
    windows, while the blinking signal lives at large windows.
    """
    curve = mandel_sweep(series, m_grid=m_grid)
    g2c = g2_empirical(series, max_lag)
    fit_m = fit_mandel(curve, eta, series.tau_rep, m_min=m_min)
    fit_c = fit_g2(g2c, series.tau_rep)

    rng = np.random.default_rng(seed)
    params_m, params_c = [], []
    attempts = 0
    while len(params_m) < n_resamples and attempts < 3 * n_resamples:
        attempts += 1
        boot = resample_series(series, rng, block_pulses)
        try:
            bcurve = mandel_sweep(boot, m_grid=curve.m_pulses, n_boot=0)
            # reuse the measured per-point errors as fit weights
            bcurve.std_errors = curve.std_errors[
                np.searchsorted(curve.m_pulses, bcurve.m_pulses)
            ]
            bg2 = g2_empirical(boot, max_lag, n_boot=0)
            bg2.std_errors = g2c.std_errors
            bm = fit_mandel(bcurve, eta, series.tau_rep, m_min=m_min)
            bc = fit_g2(bg2, series.tau_rep)
        except (ConvergenceError, ValidationError):
            continue
        params_m.append(_param_vec(bm))
        params_c.append(_param_vec(bc))
    if len(params_m) < max(4, n_resamples // 3):
        raise NonConvergence(
            f"only {len(params_m)} of {n_resamples} resample fits succeeded"
        )

    pm = np.asarray(params_m)
    pc = np.asarray(params_c)
    fit_m.covariance = np.cov(pm.T)
    fit_c.covariance = np.cov(pc.T)
    diff_cov = fit_m.covariance + fit_c.covariance

    d = _param_vec(fit_m) - _param_vec(fit_c)
    try:
        chi2 = float(d @ np.linalg.solve(diff_cov, d))
    except np.linalg.LinAlgError:
        chi2 = float("inf")
    return BlinkingFits(
        mandel=fit_m,
        g2=fit_c,
        diff_covariance=diff_cov,
        joint_chi2=chi2,
        n_resamples=len(params_m),
    )
