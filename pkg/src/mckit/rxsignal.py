"""Received-signal models for counting and timing receivers.

Covers deterministic responses, Binomial/Gaussian/Poisson count statistics and
their RMSE comparison, the Poisson limit, ISI sampling, SNR regimes, first
passage delay laws, arrival-order densities, Monte Carlo sample correlation and
the saturation-plus-drift model fitted to testbed measurements.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConvergenceError, DomainError


# Deterministic responses -----------------------------------------------------

@dataclass(frozen=True)
class Impulse:
    N_tx: float


@dataclass(frozen=True)
class Pulse:
    """Release at rate g(t) molecules/s over [0, T_rls]."""

    g: Callable[[float], float]
    T_rls: float

    def total(self) -> float:
        return integrate.quad(self.g, 0.0, self.T_rls, limit=200)[0]


def deterministic_response(pattern, h: Callable[[float], float], t: float) -> float:
    """Expected number of observed molecules at time t."""
    if t < 0:
        raise DomainError("t must be non-negative")
    if isinstance(pattern, Impulse):
        return pattern.N_tx * float(h(t))
    upper = min(t, pattern.T_rls)
    if upper <= 0:
        return 0.0
    value, err = integrate.quad(lambda s: pattern.g(s) * float(h(t - s)), 0.0, upper, limit=400)
    if not math.isfinite(value):
        raise ConvergenceError("pulse response quadrature failed", bound=err)
    return value


def rect_pulse(N_tx: float, T_rls: float) -> Pulse:
    rate = N_tx / T_rls
    return Pulse(lambda s: rate if 0.0 <= s <= T_rls else 0.0, T_rls)


# Count statistics -------------------------------------------------------------

class CountKind(str, enum.Enum):
    BINOMIAL = "binomial"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


@dataclass(frozen=True)
class CountModel:
    kind: CountKind
    N_tx: int
    h: float

    def __post_init__(self):
        object.__setattr__(self, "kind", CountKind(self.kind))
        if not 0.0 <= self.h <= 1.0:
            raise DomainError("h must lie in [0, 1]")
        if self.N_tx < 0 or int(self.N_tx) != self.N_tx:
            raise DomainError("N_tx must be a non-negative integer")

    @property
    def mean(self) -> float:
        return self.N_tx * self.h

    @property
    def variance(self) -> float:
        if self.kind is CountKind.POISSON:
            return self.mean
        return self.N_tx * self.h * (1.0 - self.h)


def _check_integer(n):
    n = np.asarray(n)
    if np.any(n < 0) or np.any(np.floor(n) != n):
        raise DomainError("counts must be non-negative integers")
    return n


def count_pmf(model: CountModel, n):
    """PMF for Binomial and Poisson, density for the Gaussian model."""
    if model.kind is CountKind.GAUSSIAN:
        sd = math.sqrt(model.variance)
        out = stats.norm.pdf(np.asarray(n, dtype=float), model.mean, sd)
    elif model.kind is CountKind.BINOMIAL:
        out = stats.binom.pmf(_check_integer(n), model.N_tx, model.h)
    else:
        out = stats.poisson.pmf(_check_integer(n), model.mean)
    return float(out) if np.ndim(out) == 0 else out


def count_cdf(model: CountModel, n):
    n = np.asarray(n, dtype=float)
    if model.kind is CountKind.GAUSSIAN:
        out = stats.norm.cdf(n, model.mean, math.sqrt(model.variance))
    elif model.kind is CountKind.BINOMIAL:
        out = stats.binom.cdf(n, model.N_tx, model.h)
    else:
        out = stats.poisson.cdf(n, model.mean)
    return float(out) if np.ndim(out) == 0 else out


def rmse_vs_binomial(kind, N_tx: int, h: float) -> float:
    """RMSE between a model CDF and the Binomial CDF over n = 0..N_tx.

    The Gaussian CDF is taken at the integers, without continuity correction.
    """
    if not 0.0 < h < 1.0:
        raise DomainError("h must lie strictly between 0 and 1")
    n = np.arange(N_tx + 1)
    ref = count_cdf(CountModel(CountKind.BINOMIAL, N_tx, h), n)
    approx = count_cdf(CountModel(kind, N_tx, h), n)
    return float(np.sqrt(np.mean((approx - ref) ** 2)))


def poisson_limit_gap(N: int, lam: float) -> float:
    """Sup-norm distance between the Binomial(N, lam/N) and Poisson(lam) CDFs."""
    if lam > N:
        raise DomainError("lambda cannot exceed N")
    if lam == 0:
        return 0.0
    top = int(max(N, lam + 40.0 * math.sqrt(lam) + 40))
    n = np.arange(top + 1)
    gap = np.abs(stats.binom.cdf(n, N, lam / N) - stats.poisson.cdf(n, lam))
    return float(gap.max())


# ISI channel ------------------------------------------------------------------

@dataclass(frozen=True)
class IsiChannel:
    """Time-slotted channel; ``r_sig[l, m]`` is N_tx h(t_{l,m}) for tap l = 1..L."""

    r_sig: np.ndarray
    r_int: float
    T_symb: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.r_sig, dtype=float))
        object.__setattr__(self, "r_sig", r)
        if r.shape[0] < 1:
            raise DomainError("need at least one tap")
        if np.any(r < 0) or self.r_int < 0:
            raise DomainError("expected counts must be non-negative")
        if r.shape[1] * self.dt > self.T_symb * (1 + 1e-12):
            raise DomainError("samples must fit inside one symbol interval")

    @property
    def L(self) -> int:
        return self.r_sig.shape[0]

    def expected_signal(self, symbols) -> np.ndarray:
        """sum_l r_sig[l, m] s[k - l + 1] for every (k, m); earlier symbols are zero."""
        s = np.asarray(symbols, dtype=float)
        if np.any((s < 0) | (s > 1)):
            raise DomainError("symbols must lie in [0, 1]")
        K, (L, M) = len(s), self.r_sig.shape
        mean = np.zeros((K, M))
        for lag in range(L):
            mean[lag:] += np.outer(s[: K - lag], self.r_sig[lag]) if lag < K else 0.0
        return mean


class IsiComponents(NamedTuple):
    signal: np.ndarray
    diffusion_noise: np.ndarray
    interference_noise: np.ndarray

    @property
    def centred(self) -> np.ndarray:
        return self.signal + self.diffusion_noise + self.interference_noise


def sample_isi(channel: IsiChannel, symbols, rng: np.random.Generator, model: str = "poisson"):
    """Draw r[k, m] for a symbol sequence under the Poisson or Gaussian model."""
    mean = channel.expected_signal(symbols) + channel.r_int
    if model == "poisson":
        return rng.poisson(mean)
    if model == "gaussian":
        return rng.normal(mean, np.sqrt(mean))
    raise DomainError("model must be 'poisson' or 'gaussian'")


def isi_components(channel: IsiChannel, symbols, rng: np.random.Generator, model: str = "poisson") -> IsiComponents:
    """Additive view r - r_int = signal + zero-mean diffusion noise + zero-mean interference."""
    sig = channel.expected_signal(symbols)
    r_int = np.full_like(sig, channel.r_int)
    if model == "poisson":
        dfn = rng.poisson(sig) - sig
        inf = rng.poisson(r_int) - r_int
    elif model == "gaussian":
        dfn = rng.normal(0.0, np.sqrt(sig))
        inf = rng.normal(0.0, np.sqrt(r_int))
    else:
        raise DomainError("model must be 'poisson' or 'gaussian'")
    return IsiComponents(sig, dfn, inf)


def noise_count(r_int: float, rng: np.random.Generator, model: str = "poisson", size=None):
    if r_int < 0:
        raise DomainError("expected interference count must be non-negative")
    if model == "poisson":
        return rng.poisson(r_int, size=size)
    if model == "gaussian":
        return rng.normal(r_int, math.sqrt(r_int), size=size)
    raise DomainError("model must be 'poisson' or 'gaussian'")


class SnrRegime(str, enum.Enum):
    DIFFUSION_LIMITED = "diffusion-limited"
    INTERFERENCE_LIMITED = "interference-limited"
    MIXED = "mixed"


class SnrResult(NamedTuple):
    value: float
    regime: SnrRegime


def snr(r_sig: float, r_int: float, high: float = 10.0, low: float = 0.1) -> SnrResult:
    if r_sig < 0 or r_int < 0:
        raise DomainError("expected counts must be non-negative")
    if r_sig == 0 and r_int == 0:
        raise DomainError("SNR undefined when both counts are zero")
    value = r_sig**2 / (r_sig + r_int)
    ratio = math.inf if r_int == 0 else r_sig / r_int
    if ratio > high:
        regime = SnrRegime.DIFFUSION_LIMITED
    elif ratio < low:
        regime = SnrRegime.INTERFERENCE_LIMITED
    else:
        regime = SnrRegime.MIXED
    return SnrResult(value, regime)


# Timing receivers ---------------------------------------------------------------

@dataclass(frozen=True)
class Levy:
    """First passage time to distance d of 1D diffusion without flow."""

    d: float
    D: float

    def __post_init__(self):
        if not (self.d > 0 and self.D > 0):
            raise DomainError("Levy parameters must be positive")


@dataclass(frozen=True)
class InverseGaussian:
    """First passage time to distance d of 1D diffusion with drift v (mean d/v)."""

    d: float
    D: float
    v: float

    def __post_init__(self):
        if not (self.d > 0 and self.D > 0 and self.v > 0):
            raise DomainError("inverse Gaussian parameters must be positive")

    @property
    def mean(self) -> float:
        return self.d / self.v

    @property
    def shape(self) -> float:
        return self.d**2 / (2.0 * self.D)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.wald(self.mean, self.shape, size=size)


DelayModel = Levy | InverseGaussian


def delay_pdf(model: DelayModel, t):
    t = np.asarray(t, dtype=float)
    tp = np.where(t > 0, t, 1.0)
    if isinstance(model, Levy):
        val = model.d / np.sqrt(4.0 * math.pi * model.D * tp**3) * np.exp(-model.d**2 / (4.0 * model.D * tp))
    else:
        mu, lam = model.mean, model.shape
        val = np.sqrt(lam / (2.0 * math.pi * tp**3)) * np.exp(-lam * (tp - mu) ** 2 / (2.0 * mu * mu * tp))
    out = np.where(t > 0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def delay_cdf(model: DelayModel, t):
    t = np.asarray(t, dtype=float)
    tp = np.where(t > 0, t, 1.0)
    if isinstance(model, Levy):
        val = special.erfc(model.d / np.sqrt(4.0 * model.D * tp))
    else:
        val = stats.invgauss.cdf(tp, model.mean / model.shape, scale=model.shape)
    out = np.where(t > 0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def arrival_order_density(N_tx: int, times: Sequence[float], t: float, delay: DelayModel) -> float:
    """Density of observing exactly the ordered arrival times ``times`` by time t.

    All N_tx molecules are released at time zero, so the ordered arrivals are
    order statistics: N_tx!/(N_tx-n)! * prod f(t_i) * (1 - F(t))^(N_tx - n).
    """
    ts = np.asarray(times, dtype=float)
    n = ts.size
    if n > N_tx:
        raise DomainError("more arrivals than released molecules")
    if n and (np.any(np.diff(ts) < 0) or ts[0] <= 0 or ts[-1] > t):
        raise DomainError("arrival times must be ascending inside (0, t]")
    log_coef = special.gammaln(N_tx + 1) - special.gammaln(N_tx - n + 1)
    survive = 1.0 - float(delay_cdf(delay, t))
    dens = np.asarray(delay_pdf(delay, ts), dtype=float)
    if np.any(dens == 0) or (survive == 0 and N_tx > n):
        return 0.0
    logval = log_coef + float(np.sum(np.log(dens))) + (N_tx - n) * math.log(survive)
    return math.exp(logval)


# Sample correlation ---------------------------------------------------------------

def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(np.dot(xc, xc)), float(np.dot(yc, yc))
    if sxx == 0 or syy == 0:
        raise DomainError("correlation undefined for a constant sample")
    return float(np.dot(xc, yc) / math.sqrt(sxx * syy))


@dataclass(frozen=True)
class SphereScenario:
    """Point release of N_tx molecules at distance d from a transparent sphere."""

    N_tx: int
    d: float
    a_rx: float
    D: float


def sample_correlation_mc(scenario: SphereScenario, t1: float, t2: float, R: int, seed: int = 0) -> float:
    """Pearson correlation of the counts at t1 and t2 across R particle realizations."""
    if R < 1000:
        raise DomainError("at least 1000 realizations are required")
    from .stochsim import free_sphere_counts

    counts = free_sphere_counts(scenario.N_tx, scenario.d, scenario.a_rx, scenario.D, [t1, t2], R, seed)
    if t1 == t2:
        return 1.0
    return pearson(counts[:, 0], counts[:, 1])


# Saturation and drift --------------------------------------------------------------

@dataclass(frozen=True)
class SatDriftModel:
    c_t0: float
    c_inf: float
    tau_on: float
    tau_off: float
    t0: float = 0.0
    m_d: float = 0.0

    def __post_init__(self):
        for tau in (self.tau_on, self.tau_off):
            if not tau > 0:
                raise DomainError("time constants must be positive")


def eval_sat_drift(model: SatDriftModel, t, light_on: bool = True):
    t = np.asarray(t, dtype=float)
    tau = model.tau_on if light_on else model.tau_off
    dt = t - model.t0
    val = model.c_t0 + (model.c_inf - model.c_t0) * (-np.expm1(-dt / tau)) + model.m_d * dt
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    light_on: bool = True


class SegmentFit(NamedTuple):
    segment: Segment
    model: SatDriftModel
    sse: float


class SatDriftFit(NamedTuple):
    segments: list
    residual: float

    @property
    def model(self) -> SatDriftModel:
        return self.segments[0].model


def _fit_segment(t, y, seg: Segment, max_nfev: int) -> SegmentFit:
    t0 = seg.t_start
    dt = t - t0
    span = max(float(dt.max()), 1e-12)

    def design(tau):
        rise = -np.expm1(-dt / tau)
        # columns multiply c_t0, c_inf and m_d
        return np.column_stack([1.0 - rise, rise, dt])

    # profile out the linear parameters on a log grid of time constants
    best = None
    for tau in np.geomspace(span * 1e-3, span * 10.0, 121):
        A = design(tau)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, tau, coef)
    _, tau0, coef0 = best
    x0 = np.array([coef0[0], coef0[1], math.log(tau0), coef0[2]])

    def resid(x):
        c0, cinf, log_tau, m = x
        rise = -np.expm1(-dt / math.exp(log_tau))
        return c0 + (cinf - c0) * rise + m * dt - y

    sol = optimize.least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    c0, cinf, log_tau, m = sol.x
    tau = math.exp(log_tau)
    model = SatDriftModel(c0, cinf, tau, tau, t0, m)
    sse = float(np.sum(sol.fun**2))
    if sol.status <= 0:
        raise ConvergenceError("saturation-drift fit did not converge", bound=sse, best=model)
    return SegmentFit(seg, model, sse)


def fit_sat_drift(samples, segments: Sequence[Segment] | None = None, max_nfev: int = 2000) -> SatDriftFit:
    """Least-squares fit of the saturation-plus-drift model on each light segment.

    ``samples`` is an (n, 2) array of (t, concentration). Segment start times
    are the declared light switch times and serve as t0; t0 cannot be fitted
    jointly with c(t0) because a shift in t0 is absorbed exactly by the other
    parameters.
    """
    data = np.asarray(samples, dtype=float)
    t, y = data[:, 0], data[:, 1]
    if segments is None:
        segments = [Segment(float(t.min()), float(t.max()), True)]
    fits = []
    for seg in segments:
        mask = (t >= seg.t_start) & (t <= seg.t_end)
        if mask.sum() < 3:
            raise DomainError("each segment needs at least three samples")
        fits.append(_fit_segment(t[mask], y[mask], seg, max_nfev))
    return SatDriftFit(fits, float(sum(f.sse for f in fits)))


def load_trace_csv(path) -> np.ndarray:
    """Read a two-column (t_seconds, concentration) CSV with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DomainError("trace CSV needs a two-column header")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise DomainError("trace CSV has no data rows")
    return np.array(rows)
