"""Statistics of a time-variant channel with diffusing transmitter and receiver.

The transmitter-receiver separation performs a 3D random walk with diffusion
coefficient D2 = D_tx + D_rx, while a molecule moves relative to the receiver
with D1 = D + D_rx. The mean received signal then depends on the release time
tau through the random distance d(tau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats

from .errors import ConvergenceError, DomainError


@dataclass(frozen=True)
class MobileChannel:
    D: float
    D_tx: float
    D_rx: float
    d0: float
    V_rx: float
    N_tx: float = 1.0

    def __post_init__(self):
        if not self.D1 > 0:
            raise DomainError("D + D_rx must be positive")
        if self.D_tx < 0 or self.D_rx < 0:
            raise DomainError("transceiver diffusion coefficients must be non-negative")
        if not self.d0 > 0:
            raise DomainError("initial distance must be positive")

    @property
    def D1(self) -> float:
        return self.D + self.D_rx

    @property
    def D2(self) -> float:
        return self.D_tx + self.D_rx

    def peak_time(self) -> float:
        """Time of the CIR maximum at distance d0."""
        return self.d0**2 / (6.0 * self.D1)


def displacement_pdf(ch: MobileChannel, tau: float, d) -> float:
    """Density of the separation vector at release time tau."""
    if ch.D2 == 0 or tau <= 0:
        raise DomainError("degenerate displacement law: D2*tau must be positive")
    var = 2.0 * ch.D2 * tau
    diff = np.asarray(d, dtype=float) - np.array([ch.d0, 0.0, 0.0])
    r2 = np.sum(diff * diff, axis=-1)
    out = np.exp(-r2 / (2.0 * var)) / (2.0 * math.pi * var) ** 1.5
    return float(out) if np.ndim(out) == 0 else out


def cir_given_distance(ch: MobileChannel, t, d):
    t = np.asarray(t, dtype=float)
    out = ch.V_rx / (4.0 * math.pi * ch.D1 * t) ** 1.5 * np.exp(-np.asarray(d) ** 2 / (4.0 * ch.D1 * t))
    return float(out) if np.ndim(out) == 0 else out


def mobile_mean(ch: MobileChannel, t, tau):
    s = ch.D1 * np.asarray(t, dtype=float) + ch.D2 * np.asarray(tau, dtype=float)
    out = ch.N_tx * ch.V_rx / (4.0 * math.pi * s) ** 1.5 * np.exp(-ch.d0**2 / (4.0 * s))
    return float(out) if np.ndim(out) == 0 else out


def mobile_second_moment(ch: MobileChannel, t, tau):
    a = ch.D1 * np.asarray(t, dtype=float)
    b = a + 2.0 * ch.D2 * np.asarray(tau, dtype=float)
    out = (ch.N_tx * ch.V_rx) ** 2 * np.exp(-ch.d0**2 / (2.0 * b)) / ((4.0 * math.pi * a) ** 1.5 * (4.0 * math.pi * b) ** 1.5)
    return float(out) if np.ndim(out) == 0 else out


def mobile_variance(ch: MobileChannel, t, tau):
    return mobile_second_moment(ch, t, tau) - np.square(mobile_mean(ch, t, tau))


def mobile_cross_correlation(ch: MobileChannel, t: float, tau1: float, tau2: float) -> float:
    """E[r(t, tau1) r(t, tau2)] for 0 < tau1 < tau2 (arguments are swapped if needed)."""
    if tau1 > tau2:
        tau1, tau2 = tau2, tau1
    if not (0 < tau1 < tau2):
        raise DomainError("need 0 < tau1 < tau2")
    if ch.D2 == 0:
        return mobile_mean(ch, t, tau1) ** 2
    dtau = tau2 - tau1
    phi = ch.V_rx / (4.0 * math.pi * ch.D1 * t) ** 1.5
    alpha = 1.0 / (4.0 * ch.D1 * t)
    beta1 = 1.0 / (4.0 * ch.D2 * tau1)
    beta2 = 1.0 / (4.0 * ch.D2 * dtau)
    theta = (alpha + beta1) * (alpha + beta2) + alpha * beta2
    # lambda(tau) = (beta(tau)/pi)^{3/2}; logs keep tiny lags from overflowing
    log_pref = (
        2.0 * math.log(ch.N_tx * phi)
        + 3.0 * math.log(2.0 * math.pi)
        + 1.5 * math.log(beta1 / math.pi)
        + 1.5 * math.log(beta2 / math.pi)
        - 1.5 * math.log(4.0 * theta)
    )
    expo = -beta1 * ch.d0**2 * (1.0 - (alpha + beta2) * beta1 / theta)
    return math.exp(log_pref + expo)


def rho_tau(ch: MobileChannel, t: float, tau1: float, tau2: float) -> float:
    """Correlation of the mean signal at release times tau1 and tau2."""
    if tau1 == tau2:
        return 1.0
    if ch.D2 == 0:
        raise DomainError("correlation undefined for a deterministic channel")
    cross = mobile_cross_correlation(ch, t, tau1, tau2)
    m1, m2 = mobile_mean(ch, t, tau1), mobile_mean(ch, t, tau2)
    s1 = math.sqrt(max(mobile_variance(ch, t, tau1), 0.0))
    s2 = math.sqrt(max(mobile_variance(ch, t, tau2), 0.0))
    if s1 == 0 or s2 == 0:
        raise DomainError("correlation undefined for a deterministic channel")
    return (cross - m1 * m2) / (s1 * s2)


def coherence_time(ch: MobileChannel, t: float, tau1: float, zeta_tau: float, horizon: float | None = None) -> float:
    """Smallest lag at which rho_tau drops below zeta_tau (bracketing then bisection)."""
    if not 0 < zeta_tau < 1:
        raise DomainError("threshold must lie in (0, 1)")
    horizon = 1e9 * tau1 if horizon is None else horizon
    f = lambda dt: rho_tau(ch, t, tau1, tau1 + dt) - zeta_tau
    lo, hi = 0.0, tau1 * 1e-6
    while f(hi) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > horizon:
            raise ConvergenceError("correlation never drops below the threshold", bound=hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return hi


class LognormalApprox(NamedTuple):
    mu: float
    sigma2: float
    valid: bool

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma2)

    def pdf_h(self, h):
        return stats.lognorm.pdf(h, math.sqrt(self.sigma2), scale=math.exp(self.mu))

    def pdf_mean_signal(self, r, N_tx: float):
        """Density of N_tx * h."""
        return self.pdf_h(np.asarray(r, dtype=float) / N_tx) / N_tx


def lognormal_approx(ch: MobileChannel, t: float, tau: float) -> LognormalApprox:
    x = ch.D2 * tau
    if x == 0:
        # point mass at the static CIR
        return LognormalApprox(math.log(cir_given_distance(ch, t, ch.d0)), 0.0, True)
    ratio = x / (ch.D1 * t)
    mu = math.log(ch.V_rx / (4.0 * math.pi * ch.D1 * t) ** 1.5) - ratio / 4.0 * (6.0 + ch.d0**2 / x)
    sigma2 = (ratio / 2.0) ** 2 * (6.0 + 2.0 * ch.d0**2 / x)
    return LognormalApprox(mu, sigma2, x <= ch.d0**2 / 200.0)


def lognormal_pdf_mass(approx: LognormalApprox, N_tx: float) -> float:
    """Integral of the scaled mean-signal density over (0, inf)."""
    if approx.sigma2 == 0:
        return 1.0
    s = math.sqrt(approx.sigma2)
    log_med = math.log(N_tx) + approx.mu
    # integrate over u = ln r, where the integrand is smooth and bell-shaped
    g = lambda u: float(approx.pdf_mean_signal(math.exp(u), N_tx)) * math.exp(u)
    val, _ = integrate.quad(g, log_med - 40 * s, log_med + 40 * s, points=[log_med], epsabs=0, epsrel=1e-12, limit=500)
    return val


class MonteCarloMoments(NamedTuple):
    mean1: float
    mean2: float
    second1: float
    cross: float
    rho: float
    se_mean1: float
    se_second1: float
    se_cross: float
    se_rho: float


def monte_carlo_moments(ch: MobileChannel, t: float, tau1: float, tau2: float, R: int, rng: np.random.Generator) -> MonteCarloMoments:
    """Sample the separation at tau1 and tau2 as a Gaussian increment chain."""
    start = np.array([ch.d0, 0.0, 0.0])
    d1 = start + math.sqrt(2.0 * ch.D2 * tau1) * rng.standard_normal((R, 3))
    d2 = d1 + math.sqrt(2.0 * ch.D2 * (tau2 - tau1)) * rng.standard_normal((R, 3))
    r1 = ch.N_tx * cir_given_distance(ch, t, np.linalg.norm(d1, axis=1))
    r2 = ch.N_tx * cir_given_distance(ch, t, np.linalg.norm(d2, axis=1))
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(R))
    rho = float(np.corrcoef(r1, r2)[0, 1])
    # batch means: the counts are skewed, so the normal-theory SE is not trusted
    batches = 50
    rb = [np.corrcoef(a, b)[0, 1] for a, b in zip(np.array_split(r1, batches), np.array_split(r2, batches))]
    se_rho = float(np.std(rb, ddof=1) / math.sqrt(batches))
    return MonteCarloMoments(
        float(r1.mean()), float(r2.mean()), float(np.mean(r1 * r1)), float(np.mean(r1 * r2)), rho,
        se(r1), se(r1 * r1), se(r1 * r2), se_rho,
    )
