"""Transport and reaction primitives: random walks, closed-form concentration
fields, dimensionless regime numbers and reaction kinetics.

All quantities are SI. Concentrations are in molecules per cubic metre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .errors import DomainError, UnsupportedModelError

K_B = 1.38e-23  # J/K, fixed so that results are bit-stable

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SpacePoint:
    """Cartesian position in metres, with a cylindrical view about the z-axis."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise DomainError("SpacePoint components must be finite")

    @classmethod
    def from_cylindrical(cls, rho: float, phi: float, z: float) -> "SpacePoint":
        if rho < 0:
            raise DomainError("rho must be non-negative")
        return cls(rho * math.cos(phi), rho * math.sin(phi), z)

    @classmethod
    def of(cls, value) -> "SpacePoint":
        if isinstance(value, SpacePoint):
            return value
        x, y, z = (float(c) for c in value)
        return cls(x, y, z)

    @property
    def rho(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def phi(self) -> float:
        return math.atan2(self.y, self.x)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __sub__(self, other: "SpacePoint") -> np.ndarray:
        return self.as_array() - SpacePoint.of(other).as_array()


def _vec(d) -> np.ndarray:
    """Coerce a SpacePoint, a 3-vector or an (..., 3) array to float arrays."""
    if isinstance(d, SpacePoint):
        return d.as_array()
    arr = np.asarray(d, dtype=float)
    if arr.shape[-1] != 3:
        raise DomainError("positions need three Cartesian components")
    return arr


@dataclass(frozen=True)
class FluidMedium:
    D: float
    eta: float | None = None
    T: float | None = None
    nu: float | None = None

    def __post_init__(self):
        for name in ("D", "eta", "T", "nu"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be strictly positive")

    @property
    def zeta(self) -> float:
        """Friction coefficient from zeta*D = k_B*T."""
        if self.T is None:
            raise DomainError("temperature is required for the friction coefficient")
        return friction_from_diffusion(self.D, self.T)


# Flow fields ---------------------------------------------------------------

class FlowField:
    """Base class for velocity fields v(d, t)."""

    def velocity(self, pos, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class NoFlow(FlowField):
    def velocity(self, pos, t=0.0):
        return np.zeros_like(_vec(pos))


@dataclass(frozen=True)
class UniformConstant(FlowField):
    v: tuple = (0.0, 0.0, 0.0)

    def velocity(self, pos, t=0.0):
        p = _vec(pos)
        return np.broadcast_to(np.asarray(self.v, dtype=float), p.shape).copy()


@dataclass(frozen=True)
class UniformTimeVarying(FlowField):
    """Space-independent velocity given by a callable ``v(t) -> 3-vector``."""

    v: Callable[[float], Sequence[float]] = field(default=lambda t: (0.0, 0.0, 0.0))

    def velocity(self, pos, t=0.0):
        if t < 0:
            raise DomainError("velocity is defined for t >= 0")
        p = _vec(pos)
        return np.broadcast_to(np.asarray(self.v(t), dtype=float), p.shape).copy()


@dataclass(frozen=True)
class Poiseuille(FlowField):
    """Laminar parabolic profile in a circular duct whose axis is the z-axis."""

    v0: float
    a_c: float

    def __post_init__(self):
        if not self.a_c > 0:
            raise DomainError("duct radius a_c must be positive")

    @property
    def v_eff(self) -> float:
        return self.v0 / 2.0

    def axial_speed(self, rho: ArrayLike) -> ArrayLike:
        rho = np.asarray(rho, dtype=float)
        if np.any(rho > self.a_c * (1 + 1e-12)) or np.any(rho < 0):
            raise DomainError("Poiseuille profile evaluated outside the duct")
        out = self.v0 * (1.0 - np.minimum(rho, self.a_c) ** 2 / self.a_c**2)
        return float(out) if out.ndim == 0 else out

    def velocity(self, pos, t=0.0):
        p = _vec(pos)
        rho = np.hypot(p[..., 0], p[..., 1])
        out = np.zeros_like(p)
        out[..., 2] = self.axial_speed(rho)
        return out


# Reactions -----------------------------------------------------------------

@dataclass(frozen=True)
class UniDegradation:
    kappa: float
    order: int = 1

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("rate constants must be non-negative")
        if self.order not in (0, 1, 2):
            raise UnsupportedModelError("degradation order must be 0, 1 or 2")


@dataclass(frozen=True)
class Bimolecular:
    kappa_f: float
    kappa_b: float = 0.0

    def __post_init__(self):
        if self.kappa_f < 0 or self.kappa_b < 0:
            raise DomainError("rate constants must be non-negative")

    def pseudo_first_order(self, c_B: float) -> UniDegradation:
        """Large, nearly constant c_B turns A + B -> C into A -> 0 at rate kappa_f*c_B."""
        return UniDegradation(self.kappa_f * c_B, 1)


@dataclass(frozen=True)
class Enzymatic:
    kappa_f: float
    kappa_b: float
    kappa_d: float

    def __post_init__(self):
        if min(self.kappa_f, self.kappa_b, self.kappa_d) < 0:
            raise DomainError("rate constants must be non-negative")

    def effective_rate(self, c_E: float) -> float:
        denom = self.kappa_b + self.kappa_d
        if denom == 0:
            return 0.0
        return self.kappa_f * self.kappa_d / denom * c_E


ReactionSpec = Union[UniDegradation, Bimolecular, Enzymatic]


@dataclass(frozen=True)
class PointSource:
    N: float
    d0: SpacePoint = SpacePoint(0.0, 0.0, 0.0)
    t0: float = 0.0

    def __post_init__(self):
        if self.N < 0:
            raise DomainError("molecule count must be non-negative")
        object.__setattr__(self, "d0", SpacePoint.of(self.d0))


# Single-particle moves -------------------------------------------------------

def einstein_diffusion(T: float, eta: float, R: float) -> float:
    """Stokes-Einstein diffusion coefficient of a sphere of radius R."""
    if not (T > 0 and eta > 0 and R > 0):
        raise DomainError("T, eta and R must be strictly positive")
    return K_B * T / (6.0 * math.pi * eta * R)


def friction_from_diffusion(D: float, T: float) -> float:
    if not (D > 0 and T > 0):
        raise DomainError("D and T must be strictly positive")
    return K_B * T / D


def brownian_step(pos, D: float, dt: float, rng: np.random.Generator):
    """Add an isotropic Gaussian displacement with per-axis variance 2*D*dt.

    ``pos`` may be a SpacePoint (returns a SpacePoint) or an (n, 3) array.
    """
    if D < 0 or dt < 0:
        raise DomainError("D and dt must be non-negative")
    p = _vec(pos)
    sigma = math.sqrt(2.0 * D * dt)
    moved = p + sigma * rng.standard_normal(p.shape)
    if isinstance(pos, SpacePoint):
        return SpacePoint(*moved)
    return moved


def advect_step(pos, flow: FlowField | None, t: float, dt: float):
    if flow is None or isinstance(flow, NoFlow):
        return pos
    p = _vec(pos)
    moved = p + flow.velocity(p, t) * dt
    if isinstance(pos, SpacePoint):
        return SpacePoint(*moved)
    return moved


def stokes_velocity(F, zeta: float) -> np.ndarray:
    if not zeta > 0:
        raise DomainError("friction coefficient must be positive")
    return np.asarray(F, dtype=float) / zeta


# Concentration fields ----------------------------------------------------------

def _elapsed(t, t0) -> np.ndarray:
    dt = np.asarray(t, dtype=float) - t0
    if np.any(dt <= 0):
        raise DomainError("concentration is only defined for t > t0")
    return dt


def _gaussian_kernel(N, D, r2, dt):
    if not D > 0:
        raise DomainError("diffusion coefficient must be positive")
    return N / (4.0 * math.pi * D * dt) ** 1.5 * np.exp(-r2 / (4.0 * D * dt))


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def point_source_concentration(src: PointSource, D: float, d, t) -> ArrayLike:
    """Free-space Green's function of the diffusion equation for N molecules."""
    dt = _elapsed(t, src.t0)
    diff = _vec(d) - src.d0.as_array()
    r2 = np.sum(diff * diff, axis=-1)
    return _scalar(_gaussian_kernel(src.N, D, r2, dt))


def duct_cross_section_concentration(N, a_c, z0, t0, D, z, t) -> ArrayLike:
    """Cross-section averaged concentration in an infinite reflective circular duct."""
    if not a_c > 0:
        raise DomainError("duct radius must be positive")
    dt = _elapsed(t, t0)
    dz = np.asarray(z, dtype=float) - z0
    out = N / (math.pi * a_c**2 * np.sqrt(4.0 * math.pi * D * dt)) * np.exp(-dz**2 / (4.0 * D * dt))
    return _scalar(out)


def advected_concentration(src: PointSource, D: float, v, d, t) -> ArrayLike:
    dt = _elapsed(t, src.t0)
    vel = np.asarray(v, dtype=float)
    shift = np.multiply.outer(dt, vel) if np.ndim(dt) else dt * vel
    diff = _vec(d) - shift - src.d0.as_array()
    r2 = np.sum(diff * diff, axis=-1)
    return _scalar(_gaussian_kernel(src.N, D, r2, dt))


def reaction_advection_diffusion_concentration(src, D, v, kappa, d, t, order: int = 1):
    """Advected point source with first-order degradation; other orders have no closed form."""
    if order != 1:
        raise UnsupportedModelError("closed form exists for first-order degradation only")
    if kappa < 0:
        raise DomainError("kappa must be non-negative")
    dt = _elapsed(t, src.t0)
    return _scalar(advected_concentration(src, D, v, d, t) * np.exp(-kappa * dt))


def degradation_decay(c0, spec: UniDegradation, dt) -> ArrayLike:
    """Homogeneous decay of concentration c0 after time dt for order 0, 1 or 2."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise DomainError("dt must be non-negative")
    c0 = np.asarray(c0, dtype=float)
    k = spec.kappa
    if spec.order == 0:
        out = np.maximum(0.0, c0 - k * dt)
    elif spec.order == 1:
        out = c0 * np.exp(-k * dt)
    else:
        with np.errstate(divide="ignore"):
            out = np.where(c0 > 0, 1.0 / (k * dt + 1.0 / np.where(c0 > 0, c0, 1.0)), 0.0)
    return _scalar(out)


class RegimeNumbers(NamedTuple):
    Re: float
    Pe: float
    alpha_d: float


def regime_numbers(v_eff, d_eff, d_c, d_z, D, nu) -> RegimeNumbers:
    """Reynolds, Peclet and dispersion numbers of a flow-diffusion setting."""
    if nu == 0 or D == 0 or v_eff == 0 or d_c == 0:
        raise DomainError("zero denominator in regime numbers")
    return RegimeNumbers(
        Re=d_eff * v_eff / nu,
        Pe=v_eff * d_c / D,
        alpha_d=D * d_z / (v_eff * d_c**2),
    )


def reaction_rate(kappa: float, concentrations, orders) -> float:
    """Rate law kappa * prod(c_I ** eps_I)."""
    c = np.asarray(concentrations, dtype=float)
    e = np.asarray(orders, dtype=float)
    if c.shape != e.shape:
        raise DomainError("one order per reactant is required")
    if np.any(c < 0):
        raise DomainError("concentrations must be non-negative")
    return float(kappa * np.prod(c**e))
