"""Closed-form channel impulse responses.

Every model is a frozen dataclass with an ``h(t)`` method; :func:`cir_eval`
dispatches on the model. ``h`` accepts scalars or arrays of times and returns
the probability of observing a released molecule at the receiver at time t.
The fully absorbing receiver is the exception: its ``h`` is the first-arrival
density k(t) in 1/s, and probabilities come from :func:`absorbed_fraction` and
:func:`absorbed_window`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, DomainError

SQRT_PI = math.sqrt(math.pi)


def _times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise DomainError("CIRs are evaluated at t >= 0")
    return arr


def _out(values):
    return float(values) if np.ndim(values) == 0 else values


def _positive_part(t):
    """Return (tp, mask): t with zeros replaced by 1 so formulas stay finite."""
    mask = t > 0
    return np.where(mask, t, 1.0), mask


def _uca_kernel(V_rx, D, d0, t):
    tp, mask = _positive_part(t)
    val = V_rx / (4.0 * math.pi * D * tp) ** 1.5 * np.exp(-d0 * d0 / (4.0 * D * tp))
    return np.where(mask, val, 0.0)


class CirModel:
    """Base class; subclasses implement ``h``."""

    def h(self, t):
        raise NotImplementedError


def cir_eval(model: CirModel, t):
    return model.h(t)


# Passive and absorbing spheres in free space ---------------------------------

@dataclass(frozen=True)
class PassiveUca(CirModel):
    """Passive receiver under the uniform concentration assumption."""

    d0: float
    D: float
    V_rx: float

    def __post_init__(self):
        if not (self.d0 >= 0 and self.D > 0 and self.V_rx > 0):
            raise DomainError("PassiveUca needs d0 >= 0, D > 0, V_rx > 0")

    def h(self, t):
        return _out(_uca_kernel(self.V_rx, self.D, self.d0, _times(t)))

    def at_distance(self, t, s):
        return _uca_kernel(self.V_rx, self.D, s, _times(t))


def _sphere_occupancy(a, D, s, t, form="exact"):
    """Probability of sitting inside a transparent sphere of radius a at time t,
    for a point release at distance s from the sphere centre."""
    tp, mask = _positive_part(t)
    w = np.sqrt(4.0 * D * tp)
    s_safe = np.where(s > 0, s, 1.0)
    erf_part = 0.5 * (special.erf((a - s) / w) + special.erf((a + s) / w))
    e_minus = np.exp(-((a - s) ** 2) / w**2)
    e_plus = np.exp(-((a + s) ** 2) / w**2)
    if form == "printed":
        val = erf_part + np.sqrt(D * tp) / (a * SQRT_PI) * (e_minus + e_plus)
    else:
        val = erf_part - np.sqrt(D * tp) / (s_safe * SQRT_PI) * (e_minus - e_plus)
        # centred release: limit s -> 0 of the expression above
        centred = special.erf(a / w) - 2.0 * a / (w * SQRT_PI) * np.exp(-(a * a) / w**2)
        val = np.where(s > 0, val, centred)
    return np.where(mask, val, np.where(s < a, 1.0, 0.0))


@dataclass(frozen=True)
class PassiveSphere(CirModel):
    """Transparent spherical receiver of radius a_rx without the UCA.

    ``form="exact"`` is the occupancy probability of the ball. ``form="printed"``
    reproduces the published expression, which carries a_rx instead of d0 in the
    second term's denominator and a sum instead of a difference of exponentials;
    it exceeds 1 at late times and is kept only for comparison.
    """

    d0: float
    a_rx: float
    D: float
    form: str = "exact"

    def __post_init__(self):
        if not (self.a_rx > 0 and self.D > 0 and self.d0 > self.a_rx):
            raise DomainError("PassiveSphere needs d0 > a_rx > 0 and D > 0")

    @property
    def V_rx(self) -> float:
        return 4.0 / 3.0 * math.pi * self.a_rx**3

    def as_uca(self) -> PassiveUca:
        return PassiveUca(self.d0, self.D, self.V_rx)

    def h(self, t):
        return _out(_sphere_occupancy(self.a_rx, self.D, self.d0, _times(t), self.form))

    def at_distance(self, t, s):
        return _sphere_occupancy(self.a_rx, self.D, s, _times(t), self.form)


def uca_gap(model: PassiveSphere, t) -> float:
    """Largest gap between the UCA and exact sphere responses over the grid t,
    relative to the exact peak. Pointwise ratios blow up in the far tails, where
    both responses are negligible."""
    exact = np.asarray(model.h(t), dtype=float)
    approx = np.asarray(model.as_uca().h(t), dtype=float)
    return float(np.max(np.abs(approx - exact)) / np.max(exact))


def _absorbing_rate(a, D, s, t):
    tp, mask = _positive_part(t)
    val = a * (s - a) / (tp * s * np.sqrt(4.0 * math.pi * D * tp)) * np.exp(
        -((s - a) ** 2) / (4.0 * D * tp)
    )
    return np.where(mask, val, 0.0)


def _absorbing_fraction(a, D, s, t):
    tp, mask = _positive_part(t)
    with np.errstate(divide="ignore"):
        val = a / s * special.erfc((s - a) / np.sqrt(4.0 * D * tp))
    return np.where(mask, val, 0.0)


@dataclass(frozen=True)
class AbsorbingSphere(CirModel):
    """Fully absorbing sphere; ``h`` is the first-arrival density in 1/s."""

    d0: float
    a_rx: float
    D: float

    def __post_init__(self):
        if not (self.a_rx > 0 and self.D > 0 and self.d0 > self.a_rx):
            raise DomainError("AbsorbingSphere needs d0 > a_rx > 0 and D > 0")

    def h(self, t):
        return _out(_absorbing_rate(self.a_rx, self.D, self.d0, _times(t)))

    rate = h

    def fraction(self, t):
        return _out(_absorbing_fraction(self.a_rx, self.D, self.d0, _times(t)))

    def at_distance(self, t, s):
        return _absorbing_rate(self.a_rx, self.D, s, _times(t))

    def fraction_at_distance(self, t, s):
        return _absorbing_fraction(self.a_rx, self.D, s, _times(t))


def absorbed_fraction(model: AbsorbingSphere, t):
    """Probability that a molecule has been absorbed by time t."""
    return model.fraction(t)


def absorbed_window(model: AbsorbingSphere, t_l, t_u):
    """Probability of absorption inside the observation window [t_l, t_u]."""
    t_l = np.asarray(t_l, dtype=float)
    t_u = np.asarray(t_u, dtype=float)
    if np.any(t_l > t_u):
        raise DomainError("window needs t_l <= t_u")
    upper = np.where(np.isinf(t_u), model.a_rx / model.d0, model.fraction(np.where(np.isinf(t_u), 0.0, t_u)))
    return _out(np.maximum(upper - model.fraction(t_l), 0.0))


# Transmitter geometry --------------------------------------------------------

@dataclass(frozen=True)
class SphereShape:
    a_tx: float


@dataclass(frozen=True)
class SegmentShape:
    """Straight line transmitter centred at the nominal transmitter position.

    ``theta`` is the angle between the segment and the transmitter-receiver axis.
    """

    length: float
    theta: float = 0.0


@dataclass(frozen=True)
class VolumeTx(CirModel):
    """Molecules released uniformly over a transmitter region.

    The base model must depend on the transmitter position only through its
    distance to the receiver, so the volume average collapses to a 1D integral
    over the distance density of a uniform point in the region.
    """

    shape: SphereShape | SegmentShape
    base: CirModel
    rtol: float = 1e-8
    use_fraction: bool = False

    def _kernel(self, t, s):
        if self.use_fraction:
            return self.base.fraction_at_distance(t, s)
        return self.base.at_distance(t, s)

    def _average(self, t: float) -> float:
        d0 = self.base.d0
        shape = self.shape
        if isinstance(shape, SphereShape):
            a = shape.a_tx
            if a == 0:
                return float(self._kernel(t, d0))
            if a >= d0:
                raise DomainError("the transmitter sphere must not contain the receiver centre")

            def integrand(s):
                # distance density of a uniform point in a ball of radius a at offset d0
                return float(self._kernel(t, s)) * 3.0 * s * (a * a - (s - d0) ** 2) / (4.0 * a**3 * d0)

            lo, hi = d0 - a, d0 + a
        else:
            L = shape.length
            if L == 0:
                return float(self._kernel(t, d0))
            c = math.cos(shape.theta)

            def integrand(u):
                s = math.sqrt(max(d0 * d0 + u * u + 2.0 * d0 * u * c, 0.0))
                return float(self._kernel(t, s)) / L

            lo, hi = -L / 2.0, L / 2.0
        value, err = integrate.quad(integrand, lo, hi, epsrel=self.rtol, epsabs=0.0, limit=200)
        if err > max(self.rtol * abs(value), 1e-300) * 10:
            raise ConvergenceError("volume transmitter quadrature did not converge", bound=err, best=value)
        return value

    def h(self, t):
        t = _times(t)
        if t.ndim == 0:
            return self._average(float(t))
        return np.array([self._average(float(x)) for x in t.ravel()]).reshape(t.shape)


def cir_volume_tx(shape, base: CirModel, t, use_fraction: bool = False):
    return VolumeTx(shape, base, use_fraction=use_fraction).h(t)


@dataclass(frozen=True)
class IonChannelTx(CirModel):
    """Spherical transmitter whose membrane is covered with open ion channels.

    ``form="printed"`` evaluates the approximation in its published shape.
    ``form="shell"`` is the dimensionally consistent surface-release version
    V_rx / (2 pi a_tx d0 sqrt(4 pi D t)) exp(-(d0^2+a_tx^2)/(4Dt)) sinh(d0 a_tx/(2Dt)),
    which tends to the point-source UCA response as a_tx -> 0.
    """

    a_tx: float
    d0: float
    D: float
    V_rx: float
    form: str = "printed"

    def __post_init__(self):
        if not (self.a_tx > 0 and self.d0 > self.a_tx and self.D > 0):
            raise DomainError("IonChannelTx needs d0 > a_tx > 0 and D > 0")
        if self.form not in ("printed", "shell"):
            raise DomainError("form must be 'printed' or 'shell'")

    def h(self, t):
        t = _times(t)
        tp, mask = _positive_part(t)
        a, d0, D = self.a_tx, self.d0, self.D
        # exp(-(d0^2+a^2)/4Dt) sinh(d0 a / 2Dt) written without overflow
        core = 0.5 * (np.exp(-((d0 - a) ** 2) / (4.0 * D * tp)) - np.exp(-((d0 + a) ** 2) / (4.0 * D * tp)))
        if self.form == "printed":
            val = a / (d0 * np.sqrt(2.0 * D * tp)) * core
        else:
            val = self.V_rx / (2.0 * math.pi * a * d0 * np.sqrt(4.0 * math.pi * D * tp)) * core
        return _out(np.where(mask, val, 0.0))


# Bounded ducts ---------------------------------------------------------------

def _cos_series_factor(L, x_rx, x_tx, D, t, tol, max_terms=200_000):
    """1 + 2 sum_n exp(-D n^2 pi^2 t / L^2) cos(n pi x_rx / L) cos(n pi x_tx / L).

    Returns (value, bound) where bound caps the neglected tail.
    """
    c = D * math.pi**2 * t / L**2
    if c <= 0:
        raise DomainError("series needs t > 0")
    # smallest n whose tail bound is below tol
    n_needed = int(math.ceil(math.sqrt(max(math.log(2.0 / (tol * (1 - math.exp(-c)))), 0.0) / c))) + 1
    if n_needed > max_terms:
        raise ConvergenceError("duct cosine series needs too many terms", bound=2.0 * math.exp(-c * max_terms**2))
    n = np.arange(1, n_needed + 1, dtype=float)
    terms = np.exp(-c * n * n) * np.cos(n * math.pi * x_rx / L) * np.cos(n * math.pi * x_tx / L)
    value = 1.0 + 2.0 * float(np.sum(terms))
    m = n_needed + 1
    bound = 2.0 * math.exp(-c * m * m) / (1.0 - math.exp(-c * (2 * m + 1)))
    if bound > tol * max(abs(value), 1e-300):
        raise ConvergenceError("duct cosine series did not converge", bound=bound, best=value)
    return value, bound


@dataclass(frozen=True)
class RectDuct(CirModel):
    """Reflective duct of cross-section [0, l_x] x [0, l_y], unbounded in z."""

    l_x: float
    l_y: float
    tx: tuple
    rx: tuple
    D: float
    V_rx: float
    series_tol: float = 1e-10

    def __post_init__(self):
        if not (self.l_x > 0 and self.l_y > 0 and self.D > 0 and self.V_rx > 0):
            raise DomainError("RectDuct needs positive dimensions, D and V_rx")
        if not 0 < self.series_tol <= 1e-3:
            raise DomainError("series_tol must lie in (0, 1e-3]")
        for p in (self.tx, self.rx):
            if not (0 <= p[0] <= self.l_x and 0 <= p[1] <= self.l_y):
                raise DomainError("positions must lie inside the duct cross-section")

    def h_with_bound(self, t: float):
        if t == 0:
            return 0.0, 0.0
        fx, bx = _cos_series_factor(self.l_x, self.rx[0], self.tx[0], self.D, t, self.series_tol)
        fy, by = _cos_series_factor(self.l_y, self.rx[1], self.tx[1], self.D, t, self.series_tol)
        dz = self.rx[2] - self.tx[2]
        axial = math.exp(-dz * dz / (4.0 * self.D * t)) / math.sqrt(4.0 * math.pi * self.D * t)
        scale = self.V_rx / (self.l_x * self.l_y) * axial
        value = scale * fx * fy
        bound = scale * (abs(fx) * by + abs(fy) * bx + bx * by)
        return value, bound

    def h(self, t):
        t = _times(t)
        vals = [self.h_with_bound(float(x))[0] for x in np.atleast_1d(t).ravel()]
        return _out(np.array(vals).reshape(t.shape)) if t.ndim else vals[0]


def _bessel_root_scan(n: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of J_n'(x), located by a sign-change scan."""
    f = lambda x: special.jvp(n, x, 1)
    roots = []
    step = math.pi / 16.0
    x = max(float(n), 1e-3) if n > 0 else 1e-3
    fx = f(x)
    guard = 0
    while len(roots) < count:
        x_next = x + step
        f_next = f(x_next)
        if fx == 0.0:
            roots.append(x)
        elif fx * f_next < 0:
            r = optimize.brentq(f, x, x_next, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(r)
        x, fx = x_next, f_next
        guard += 1
        if guard > 64 * (count + n + 10) * 16:
            raise ConvergenceError("Bessel derivative root scan failed")
    return np.array(roots[:count])


@lru_cache(maxsize=256)
def _unit_roots(n: int, count: int) -> tuple:
    return tuple(_bessel_root_scan(n, count))


def bessel_prime_roots(n: int, a_c: float, count: int) -> np.ndarray:
    """Positive roots alpha of J_n'(alpha * a_c) = 0, ascending."""
    if count < 1:
        raise DomainError("count must be at least 1")
    if not a_c > 0:
        raise DomainError("a_c must be positive")
    x = np.array(_unit_roots(abs(int(n)), int(count)))
    residual = np.abs(special.jvp(abs(int(n)), x, 1))
    if np.any(residual > 1e-12):
        raise ConvergenceError("Bessel root residual above 1e-12", bound=float(residual.max()))
    return x / a_c


@dataclass
class BesselRootTable:
    """Lazily grown cache of J_n' roots for one duct radius."""

    a_c: float
    roots: dict = field(default_factory=dict)

    def get(self, n: int, count: int) -> np.ndarray:
        have = self.roots.get(n)
        if have is None or len(have) < count:
            self.roots[n] = bessel_prime_roots(n, self.a_c, count)
        return self.roots[n][:count]


@dataclass(frozen=True)
class CircDuct(CirModel):
    """Reflective circular duct of radius a_c; tx and rx given as (rho, phi, z)."""

    a_c: float
    tx: tuple
    rx: tuple
    D: float
    V_rx: float
    series_tol: float = 1e-10
    max_n: int = 64
    max_roots: int = 200
    table: BesselRootTable = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (self.a_c > 0 and self.D > 0 and self.V_rx > 0):
            raise DomainError("CircDuct needs positive a_c, D and V_rx")
        if not 0 < self.series_tol <= 1e-3:
            raise DomainError("series_tol must lie in (0, 1e-3]")
        for p in (self.tx, self.rx):
            if not 0 <= p[0] <= self.a_c:
                raise DomainError("radial positions must lie inside the duct")
        if self.table is None:
            object.__setattr__(self, "table", BesselRootTable(self.a_c))

    def _order_sum(self, n, t, scale_ref):
        """Radial sum for angular order n; returns (value, tail bound)."""
        a, D = self.a_c, self.D
        count = 8
        while True:
            alphas = self.table.get(n, count)
            env = np.exp(-D * alphas**2 * t) * alphas**2 / (alphas**2 - n * n / a**2) / special.jv(n, a * alphas) ** 2
            terms = env * special.jv(n, alphas * self.rx[0]) * special.jv(n, alphas * self.tx[0])
            # |J_n| <= 1, so env bounds each term; once it decays geometrically the tail is bounded too
            if env[-1] == 0.0:
                return float(np.sum(terms)), 0.0
            if env[-1] < self.series_tol * scale_ref and env[-1] < env[-2]:
                r = env[-1] / env[-2]
                return float(np.sum(terms)), float(env[-1] * r / (1.0 - r))
            if count >= self.max_roots:
                raise ConvergenceError(
                    f"circular duct series did not converge in order {n}",
                    bound=float(env[-1]),
                    best=float(np.sum(terms)),
                )
            count = min(2 * count, self.max_roots)

    def bracket(self, t: float):
        """Return (value, bound) of the bracketed angular-radial series."""
        dphi = self.rx[1] - self.tx[1]
        on_axis = self.rx[0] == 0 or self.tx[0] == 0
        s0, b0 = self._order_sum(0, t, 1.0)
        value, bound = 1.0 + s0, b0
        if on_axis:
            return value, bound
        for n in range(1, self.max_n + 1):
            sn, bn = self._order_sum(n, t, abs(value))
            value += 2.0 * math.cos(n * dphi) * sn
            bound += 2.0 * bn
            first = self.table.get(n, 1)[0]
            lead = math.exp(-self.D * first**2 * t) * first**2 / (first**2 - n * n / self.a_c**2) / special.jv(
                n, self.a_c * first
            ) ** 2
            if lead < self.series_tol * abs(value) and abs(sn) < self.series_tol * abs(value):
                return value, bound
        raise ConvergenceError("circular duct angular series did not converge", bound=bound, best=value)

    def h_with_bound(self, t: float):
        if t == 0:
            return 0.0, 0.0
        dz = self.rx[2] - self.tx[2]
        pref = self.V_rx * math.exp(-dz * dz / (4.0 * self.D * t)) / (
            2.0 * math.pi * self.a_c**2 * math.sqrt(math.pi * self.D * t)
        )
        value, bound = self.bracket(t)
        return pref * value, pref * bound

    def h(self, t):
        t = _times(t)
        vals = [self.h_with_bound(float(x))[0] for x in np.atleast_1d(t).ravel()]
        return _out(np.array(vals).reshape(t.shape)) if t.ndim else vals[0]


# Flow ------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformFlow(CirModel):
    """Passive UCA receiver at z_rx on the axis, transmitter at [0, 0, -z_tx]."""

    z_tx: float
    D: float
    V_rx: float
    v_par: float = 0.0
    v_perp: float = 0.0
    z_rx: float = 0.0

    def h(self, t):
        t = _times(t)
        tp, mask = _positive_part(t)
        r2 = (self.v_perp * tp) ** 2 + (self.z_rx + self.z_tx - self.v_par * tp) ** 2
        val = self.V_rx / (4.0 * math.pi * self.D * tp) ** 1.5 * np.exp(-r2 / (4.0 * self.D * tp))
        return _out(np.where(mask, val, 0.0))


def aris_taylor(D: float, v_eff: float, a_c: float, mode: str = "classic") -> float:
    """Effective axial dispersion coefficient of laminar duct flow.

    ``classic`` gives D (1 + Pe^2/48) with Pe = v_eff a_c / D. ``printed`` keeps
    the unit-less leading 1, 1 + (v_eff a_c)^2/(48 D).
    """
    corr = (v_eff * a_c) ** 2 / (48.0 * D)
    if mode == "classic":
        return D + corr
    if mode == "printed":
        return 1.0 + corr
    raise DomainError("mode must be 'classic' or 'printed'")


def _q(x):
    return 0.5 * special.erfc(x / math.sqrt(2.0))


@dataclass(frozen=True)
class DispersionDuct(CirModel):
    a_c: float
    v_eff: float
    D: float
    d_z: float
    l_rho: float
    l_phi: float
    l_z: float
    uca: bool = True
    V_rx: float | None = None
    mode: str = "classic"

    def __post_init__(self):
        if self.l_rho > self.a_c:
            raise DomainError("l_rho cannot exceed the duct radius")
        if not (self.a_c > 0 and self.D > 0 and self.l_rho > 0 and self.l_z > 0):
            raise DomainError("DispersionDuct needs positive geometry and D")

    @property
    def D_eff(self) -> float:
        return aris_taylor(self.D, self.v_eff, self.a_c, self.mode)

    @property
    def area_factor(self) -> float:
        return self.l_phi * (2.0 * self.a_c * self.l_rho - self.l_rho**2) / (2.0 * math.pi * self.a_c**2)

    @property
    def receiver_volume(self) -> float:
        return self.area_factor * math.pi * self.a_c**2 * self.l_z

    def alpha_d(self, d_c: float) -> float:
        return self.D * self.d_z / (self.v_eff * d_c**2)

    def h(self, t):
        t = _times(t)
        tp, mask = _positive_part(t)
        De = self.D_eff
        if self.uca:
            V = self.receiver_volume if self.V_rx is None else self.V_rx
            val = V / (math.pi * self.a_c**2) / np.sqrt(4.0 * math.pi * De * tp) * np.exp(
                -((self.d_z - self.v_eff * tp) ** 2) / (4.0 * De * tp)
            )
        else:
            s = np.sqrt(2.0 * De * tp)
            lo = (self.d_z - self.l_z / 2.0 - self.v_eff * tp) / s
            hi = (self.d_z + self.l_z / 2.0 - self.v_eff * tp) / s
            val = self.area_factor * (_q(lo) - _q(hi))
        return _out(np.where(mask, val, 0.0))


def dispersion_regime_cir(model: DispersionDuct, t):
    return model.h(t)


@dataclass(frozen=True)
class FlowDominantDuct(CirModel):
    """Pure advection in Poiseuille flow; diffusion neglected.

    ``rho_tx=None`` means release spread uniformly over the cross-section.
    """

    a_c: float
    v_eff: float
    d_z: float
    l_rho: float
    l_phi: float
    l_z: float
    rho_tx: float | None = None

    def __post_init__(self):
        if not (0 < self.l_rho <= self.a_c):
            raise DomainError("need 0 < l_rho <= a_c")
        if self.rho_tx is not None and not (self.a_c - self.l_rho <= self.rho_tx <= self.a_c):
            raise DomainError("point release must lie in the receiver's radial band")

    @property
    def crossing_times(self):
        v_max = 2.0 * self.v_eff * (1.0 - (1.0 - self.l_rho / self.a_c) ** 2)
        return (self.d_z - self.l_z / 2.0) / v_max, (self.d_z + self.l_z / 2.0) / v_max

    def branch_middle(self, t):
        a, lr, lp = self.a_c, self.l_rho, self.l_phi
        return lp * (2 * a * lr - lr * lr) / (2 * math.pi * a * a) - lp / (2 * math.pi) * (
            self.d_z - self.l_z / 2.0
        ) / (2.0 * self.v_eff * t)

    def branch_late(self, t):
        return self.l_phi / (2 * math.pi) * self.l_z / (2.0 * self.v_eff * t)

    def h(self, t):
        t = _times(t)
        if self.rho_tx is not None:
            speed = 2.0 * self.v_eff * (1.0 - self.rho_tx**2 / self.a_c**2)
            z = speed * t
            inside = (z >= self.d_z - self.l_z / 2.0) & (z <= self.d_z + self.l_z / 2.0)
            return _out(inside.astype(float))
        t1, t2 = self.crossing_times
        tp = np.where(t > 0, t, 1.0)
        val = np.where(t <= t1, 0.0, np.where(t < t2, self.branch_middle(tp), self.branch_late(tp)))
        return _out(val)


def flow_dominant_cir(model: FlowDominantDuct, t):
    return model.h(t)


# Reactions -------------------------------------------------------------------

@dataclass(frozen=True)
class Degraded(CirModel):
    base: CirModel
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("kappa must be non-negative")

    def h(self, t):
        t = _times(t)
        return _out(np.asarray(self.base.h(t)) * np.exp(-self.kappa * t))


@dataclass(frozen=True)
class EnzymaticApprox(CirModel):
    """Passive UCA receiver with enzymatic degradation of the signalling molecules.

    ``variant`` is ``"app1"``, ``"lower"`` or ``"app3"``. ``c_E`` is the free
    enzyme concentration for app1/lower and the total enzyme concentration for
    app3.
    """

    d0: float
    D: float
    V_rx: float
    kappa_f: float
    kappa_b: float
    kappa_d: float
    c_E: float
    c_AE: float = 0.0
    variant: str = "app1"

    def __post_init__(self):
        if self.variant not in ("app1", "lower", "app3"):
            raise DomainError("variant must be app1, lower or app3")
        if min(self.kappa_f, self.kappa_b, self.kappa_d, self.c_E, self.c_AE) < 0:
            raise DomainError("rates and concentrations must be non-negative")

    @property
    def rate(self) -> float:
        if self.variant == "app3":
            denom = self.kappa_b + self.kappa_d
            return 0.0 if denom == 0 else self.kappa_f * self.kappa_d / denom * self.c_E
        return self.kappa_f * self.c_E

    def h(self, t):
        t = _times(t)
        val = _uca_kernel(self.V_rx, self.D, self.d0, t) * np.exp(-self.rate * t)
        if self.variant == "app1":
            val = val + self.kappa_b * self.c_AE * t
        return _out(val)


def enzymatic_cir(model: EnzymaticApprox, t):
    return model.h(t)
