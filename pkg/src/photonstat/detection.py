"""Exact photocount algebra of the detection chain.

Relates the photon-number distribution produced by a source to the
photocount distribution registered by one or two ideal APDs behind a 50/50
beamsplitter, where "ideal" means unit click efficiency but at most one
click per channel per excitation pulse (deadtime shorter than the period).
Linear losses enter as binomial thinning; coherent and
single-photon-plus-background sources have closed forms, and the (eta,
eta*gamma) composition can be recovered from measured single-pulse
probabilities by damped Newton inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import NoSolution, UndefinedMean, ValidationError

__all__ = [
    "CountDistribution",
    "SourceComposition",
    "attenuate",
    "single_apd_counts",
    "hbt_counts",
    "coherent_counts",
    "coherent_counts_from_mean",
    "eta_alpha_from_mean",
    "sps_counts",
    "infer_composition",
    "mandel_q",
    "mandel_from_counts",
    "coherent_mandel",
]

_NORM_TOL = 1e-12
_POISSON_TAIL = 1e-15


@dataclass(frozen=True)
class CountDistribution:
    """Probability mass over photon numbers n = 0..n_max with its mean."""

    pmf: np.ndarray
    mean: float

    def __post_init__(self) -> None:
        pmf = np.asarray(self.pmf, dtype=np.float64)
        object.__setattr__(self, "pmf", pmf)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValidationError("pmf must be a non-empty 1-D array")
        if np.any(pmf < -1e-15):
            raise ValidationError("pmf entries must be non-negative")
        total = float(pmf.sum())
        if abs(total - 1.0) > _NORM_TOL:
            raise ValidationError(f"pmf must sum to 1 within {_NORM_TOL}, got {total}")
        implied = float(np.arange(pmf.size) @ pmf)
        if abs(implied - self.mean) > _NORM_TOL:
            raise ValidationError(
                f"stored mean {self.mean} disagrees with pmf mean {implied}"
            )

    @classmethod
    def from_pmf(cls, pmf) -> "CountDistribution":
        pmf = np.asarray(pmf, dtype=np.float64)
        return cls(pmf=pmf, mean=float(np.arange(pmf.size) @ pmf))

    @classmethod
    def point_mass(cls, n: int) -> "CountDistribution":
        pmf = np.zeros(n + 1)
        pmf[n] = 1.0
        return cls(pmf=pmf, mean=float(n))

    @classmethod
    def poisson(cls, mean: float) -> "CountDistribution":
        """Poisson law truncated where the residual tail mass drops below
        1e-15, then renormalized so downstream sums stay exact."""
        if mean < 0:
            raise ValidationError(f"Poisson mean must be >= 0, got {mean}")
        if mean == 0:
            return cls.point_mass(0)
        terms = [math.exp(-mean)]
        n = 0
        cumulative = terms[0]
        while 1.0 - cumulative > _POISSON_TAIL:
            n += 1
            terms.append(terms[-1] * mean / n)
            cumulative += terms[-1]
        pmf = np.array(terms)
        pmf /= pmf.sum()
        return cls.from_pmf(pmf)

    @property
    def n_max(self) -> int:
        return self.pmf.size - 1


@dataclass(frozen=True)
class SourceComposition:
    """Linear-loss efficiency and background level of a real source.

    eta is the overall detection efficiency and gamma the background mean
    photon number per pulse referred to the source, so eta*gamma is the
    detected background mean and 1/gamma the signal-to-background ratio.
    """

    eta: float
    gamma: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError(f"eta must be in [0, 1], got {self.eta}")
        if self.gamma < 0.0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")

    @property
    def eta_gamma(self) -> float:
        """Background mean photons detected per pulse."""
        return self.eta * self.gamma

    @property
    def signal_to_background(self) -> float:
        return math.inf if self.gamma == 0 else 1.0 / self.gamma


def attenuate(dist: CountDistribution, eta: float) -> CountDistribution:
    """Binomial thinning: every photon independently survives with
    probability eta, so P_in(n) = sum_m C(m, n) eta^n (1-eta)^(m-n) P(m)."""
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must be in [0, 1], got {eta}")
    if eta == 1.0:
        return dist
    n_max = dist.n_max
    m = np.arange(n_max + 1)
    # thin[n, m] = P(n survive | m incident)
    thin = binom.pmf(m[:, None], m[None, :], eta)
    return CountDistribution.from_pmf(thin @ dist.pmf)


def single_apd_counts(incoming: CountDistribution) -> CountDistribution:
    """Photocounts of one ideal APD: any n >= 1 incident photons give one click."""
    p0 = float(incoming.pmf[0])
    return CountDistribution.from_pmf([p0, 1.0 - p0])


def hbt_counts(incoming: CountDistribution) -> CountDistribution:
    """Photocounts of two ideal APDs behind a 50/50 beamsplitter.

    n incident photons all land on one side with probability 2^(1-n), so
    P(1) = sum_n P_in(n) / 2^(n-1) and P(2) collects the remainder; no
    outcome beyond two clicks is possible.
    """
    pmf = incoming.pmf
    n = np.arange(pmf.size)
    one_side = np.ones(pmf.size)
    one_side[1:] = 0.5 ** (n[1:] - 1)
    p0 = float(pmf[0])
    p1 = float(np.sum(pmf[1:] * one_side[1:]))
    p2 = float(np.sum(pmf[2:] * (1.0 - one_side[2:])))
    return CountDistribution.from_pmf([p0, p1, p2])


def coherent_counts(eta_alpha: float) -> CountDistribution:
    """Two-APD photocounts of a pulsed coherent beam of detected mean eta_alpha.

    Closed form of hbt_counts over a Poisson law:
    P(0) = exp(-x), P(1) = 2 exp(-x/2)(1 - exp(-x/2)), P(2) = (1 - exp(-x/2))^2
    with x = eta_alpha.
    """
    if eta_alpha < 0:
        raise ValidationError(f"eta_alpha must be >= 0, got {eta_alpha}")
    half = math.exp(-eta_alpha / 2.0)
    return CountDistribution.from_pmf(
        [half * half, 2.0 * half * (1.0 - half), (1.0 - half) ** 2]
    )


def eta_alpha_from_mean(mean_detected: float) -> float:
    """Poisson parameter eta*alpha giving a registered mean count of
    mean_detected = 2 (1 - exp(-eta*alpha/2)); requires mean_detected < 2."""
    if not 0.0 <= mean_detected < 2.0:
        raise ValidationError(
            f"two-channel registered mean must be in [0, 2), got {mean_detected}"
        )
    return -2.0 * math.log1p(-mean_detected / 2.0)


def coherent_counts_from_mean(mean_detected: float) -> CountDistribution:
    """coherent_counts parametrized by the registered mean instead of eta*alpha."""
    return coherent_counts(eta_alpha_from_mean(mean_detected))


def sps_counts(comp: SourceComposition) -> CountDistribution:
    """Two-APD photocounts of a lossy single-photon source plus coherent
    background of detected mean eta*gamma.

    With g = eta*gamma:
      P(0) = exp(-g) (1 - eta)
      P(1) = 2 (exp(-g/2) - exp(-g)) + eta (2 exp(-g) - exp(-g/2))
      P(2) = (1 - exp(-g/2))^2 + eta (exp(-g/2) - exp(-g))
    """
    g = comp.eta_gamma
    eta = comp.eta
    eg = math.exp(-g)
    eh = math.exp(-g / 2.0)
    p0 = eg * (1.0 - eta)
    p1 = 2.0 * (eh - eg) + eta * (2.0 * eg - eh)
    p2 = (1.0 - eh) ** 2 + eta * (eh - eg)
    return CountDistribution.from_pmf([p0, p1, p2])


def _sps_p1p2(eta: float, g: float) -> tuple[float, float]:
    eg = math.exp(-g)
    eh = math.exp(-g / 2.0)
    p1 = 2.0 * (eh - eg) + eta * (2.0 * eg - eh)
    p2 = (1.0 - eh) ** 2 + eta * (eh - eg)
    return p1, p2


def _sps_jacobian(eta: float, g: float) -> np.ndarray:
    eg = math.exp(-g)
    eh = math.exp(-g / 2.0)
    d1_eta = 2.0 * eg - eh
    d1_g = -eh + 2.0 * eg + eta * (0.5 * eh - 2.0 * eg)
    d2_eta = eh - eg
    d2_g = (1.0 - eh) * eh + eta * (eg - 0.5 * eh)
    return np.array([[d1_eta, d1_g], [d2_eta, d2_g]])


def infer_composition(
    p1: float, p2: float, tol: float = 1e-14, max_iter: int = 80
) -> SourceComposition:
    """Recover (eta, gamma) from measured single-pulse P(1) and P(2).

    Solves the sps_counts forward model by damped Newton iteration seeded
    with the small-background closed form (eta ~ p1 + 2 p2, eta*gamma ~
    2 p2 / eta), polishing to machine-level residuals.  Raises NoSolution
    when (p1, p2) is outside the model's reachable set.
    """
    if not 0.0 < p1 < 1.0:
        raise ValidationError(f"p1 must be in (0, 1), got {p1}")
    if not 0.0 <= p2 < p1:
        raise ValidationError(f"p2 must satisfy 0 <= p2 < p1, got {p2}")
    if p2 == 0.0:
        # background-free: P(1) = eta exactly
        return SourceComposition(eta=p1, gamma=0.0)

    eta = min(max(p1 + 2.0 * p2, 1e-9), 1.0 - 1e-12)
    g = 2.0 * p2 / eta
    # residuals are scaled by the targets: P(2) can be orders of magnitude
    # below P(1) and would otherwise be ignored by the step control
    scale_vec = np.array([p1, p2])

    def scaled_residual(e, gg):
        f1, f2 = _sps_p1p2(e, gg)
        return np.array([f1 - p1, f2 - p2]) / scale_vec

    stalled = 0
    best = (math.inf, eta, g)
    for _ in range(max_iter):
        residual = scaled_residual(eta, g)
        rmax = float(np.max(np.abs(residual)))
        if rmax < best[0]:
            best = (rmax, eta, g)
            stalled = 0
        else:
            stalled += 1
        if rmax < tol or stalled >= 3:
            break
        jac = _sps_jacobian(eta, g) / scale_vec[:, None]
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError:
            break
        norm0 = float(residual @ residual)
        damping = 1.0
        improved = False
        for _ in range(30):
            eta_new = min(max(eta + damping * step[0], 0.0), 1.0)
            g_new = max(g + damping * step[1], 0.0)
            r_new = scaled_residual(eta_new, g_new)
            if float(r_new @ r_new) < norm0:
                eta, g = eta_new, g_new
                improved = True
                break
            damping *= 0.5
        if not improved:
            break
    rmax, eta, g = best
    if rmax > 1e-9:
        raise NoSolution(
            f"(p1={p1}, p2={p2}) lies outside the reachable set of the "
            f"single-photon-plus-background model (best relative residual "
            f"{rmax:.2e})"
        )
    return SourceComposition(eta=eta, gamma=g / eta if eta > 0 else 0.0)


def mandel_q(dist: CountDistribution) -> float:
    """Mandel parameter Q = Var(n)/<n> - 1 of an arbitrary count distribution."""
    if dist.mean == 0.0:
        raise UndefinedMean("Mandel Q is undefined for a zero-mean distribution")
    n = np.arange(dist.pmf.size)
    second = float((n * n) @ dist.pmf)
    var = second - dist.mean**2
    return var / dist.mean - 1.0


def mandel_from_counts(dist: CountDistribution) -> float:
    """Mandel parameter from two-channel single-pulse probabilities:
    Q = [P(1) + 2 P(2)] * {2 P(2) / [P(1) + 2 P(2)]^2 - 1}."""
    if dist.n_max > 2:
        raise ValidationError("distribution support must not exceed n = 2")
    p1 = float(dist.pmf[1]) if dist.n_max >= 1 else 0.0
    p2 = float(dist.pmf[2]) if dist.n_max >= 2 else 0.0
    mean = p1 + 2.0 * p2
    if mean == 0.0:
        raise UndefinedMean("Mandel Q is undefined when P(1) + 2 P(2) = 0")
    return mean * (2.0 * p2 / mean**2 - 1.0)


def coherent_mandel(mean_detected: float) -> float:
    """Deadtime-biased Mandel parameter of a coherent reference beam,
    Q_C = -<n>_C / 2 at equal registered mean count."""
    if mean_detected < 0:
        raise ValidationError(f"mean_detected must be >= 0, got {mean_detected}")
    return -mean_detected / 2.0
