"""Simulation environments: accessible regions, boundary surfaces, probes and results."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import DomainError, GeometryError
from ..physics import FlowField, NoFlow


class Behavior(enum.IntEnum):
    REFLECTIVE = 0
    ABSORBING = 1
    TRANSPARENT = 2


# Regions ---------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(c) for c in self.lo)
        hi = tuple(float(c) for c in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise DomainError("box needs lo < hi on all three axes")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, 3))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("sphere radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    def contains(self, p) -> np.ndarray:
        diff = np.asarray(p, dtype=float) - self.center
        return np.sum(diff * diff, axis=-1) <= self.radius**2


@dataclass(frozen=True)
class Cylinder:
    """Finite cylinder whose axis is parallel to coordinate ``axis``."""

    center: tuple  # the two transverse coordinates, in increasing axis order
    radius: float
    lo: float
    hi: float
    axis: int = 2

    def __post_init__(self):
        if not self.radius > 0 or not self.lo < self.hi or self.axis not in (0, 1, 2):
            raise DomainError("cylinder needs radius > 0, lo < hi and axis in {0, 1, 2}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def volume(self) -> float:
        return math.pi * self.radius**2 * (self.hi - self.lo)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        a, b = [k for k in range(3) if k != self.axis]
        r2 = (p[..., a] - self.center[0]) ** 2 + (p[..., b] - self.center[1]) ** 2
        along = p[..., self.axis]
        return (r2 <= self.radius**2) & (along >= self.lo) & (along <= self.hi)


Region = Union[Box, Ball, Cylinder]


# Surfaces --------------------------------------------------------------------

@dataclass(frozen=True)
class RectPatch:
    """Axis-aligned rectangle lying in the plane x[axis] = coord."""

    axis: int
    coord: float
    lo: tuple  # bounds on the other two axes, in increasing axis order
    hi: tuple

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise DomainError("axis must be 0, 1 or 2")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise DomainError("patch needs lo <= hi")


@dataclass(frozen=True)
class SphereShell:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("sphere radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Surface:
    """A boundary patch with its behavior.

    Sphere shells act on the ball they enclose: absorbing shells remove
    particles whose step ends inside, reflective shells are impenetrable
    obstacles. ``crossing_check`` additionally removes particles whose
    straight step stayed outside but whose Brownian path plausibly touched the
    shell, using the planar bridge crossing probability.
    """

    patch: Union[RectPatch, SphereShell]
    behavior: Behavior = Behavior.REFLECTIVE
    crossing_check: bool = False


# Reactions and species -------------------------------------------------------

@dataclass(frozen=True)
class FirstOrderReaction:
    kappa: float
    reactant: int
    product: int = -1  # -1 removes the molecule

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("rate constants must be non-negative")


@dataclass(frozen=True)
class Environment:
    """Accessible domain plus everything that happens to particles inside it.

    An empty ``regions`` list means unbounded free space.
    """

    regions: tuple = ()
    surfaces: tuple = ()
    flow: FlowField = field(default_factory=NoFlow)
    reactions: tuple = ()
    species_D: tuple = (1e-10,)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "species_D", tuple(float(d) for d in self.species_D))
        if any(d < 0 for d in self.species_D):
            raise DomainError("diffusion coefficients must be non-negative")
        for r in self.reactions:
            if not (0 <= r.reactant < self.n_species and -1 <= r.product < self.n_species):
                raise DomainError("reaction refers to an unknown species")
        for s in self.surfaces:
            if isinstance(s.patch, RectPatch) and self.regions and not self._on_boundary(s.patch):
                raise GeometryError("surface patch does not lie on a region boundary")

    @property
    def n_species(self) -> int:
        return len(self.species_D)

    @property
    def unbounded(self) -> bool:
        return not self.regions

    def _on_boundary(self, patch: RectPatch) -> bool:
        a, b = [k for k in range(3) if k != patch.axis]
        for reg in self.regions:
            if not isinstance(reg, Box):
                continue
            if patch.coord not in (reg.lo[patch.axis], reg.hi[patch.axis]):
                continue
            if reg.lo[a] <= patch.lo[0] and patch.hi[0] <= reg.hi[a] and reg.lo[b] <= patch.lo[1] and patch.hi[1] <= reg.hi[b]:
                return True
        return False

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.unbounded:
            inside = np.ones(p.shape[:-1], dtype=bool)
        else:
            inside = np.zeros(p.shape[:-1], dtype=bool)
            for reg in self.regions:
                inside |= reg.contains(p)
        for s in self.surfaces:
            if isinstance(s.patch, SphereShell) and s.behavior == Behavior.REFLECTIVE:
                inside &= ~Ball(s.patch.center, s.patch.radius).contains(p)
        return inside

    def volume(self) -> float:
        """Accessible volume for regions that are boxes meeting only on faces."""
        if self.unbounded:
            return math.inf
        boxes = [r for r in self.regions if isinstance(r, Box)]
        if len(boxes) != len(self.regions):
            raise DomainError("exact volume is only available for unions of boxes")
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                overlap = math.prod(max(0.0, min(a.hi[k], b.hi[k]) - max(a.lo[k], b.lo[k])) for k in range(3))
                if overlap > 0:
                    raise DomainError("overlapping boxes")
        return sum(b.volume for b in boxes)

    def bounding_box(self) -> Box:
        if self.unbounded:
            raise DomainError("free space has no bounding box")
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for reg in self.regions:
            if isinstance(reg, Box):
                rl, rh = np.array(reg.lo), np.array(reg.hi)
            elif isinstance(reg, Ball):
                c = np.array(reg.center)
                rl, rh = c - reg.radius, c + reg.radius
            else:
                a, b = [k for k in range(3) if k != reg.axis]
                rl, rh = np.empty(3), np.empty(3)
                rl[reg.axis], rh[reg.axis] = reg.lo, reg.hi
                for k, c in zip((a, b), reg.center):
                    rl[k], rh[k] = c - reg.radius, c + reg.radius
            lo, hi = np.minimum(lo, rl), np.maximum(hi, rh)
        return Box(tuple(lo), tuple(hi))


# Release schemes ---------------------------------------------------------------

@dataclass(frozen=True)
class PointRelease:
    point: tuple

    def place(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(np.asarray(self.point, dtype=float), (n, 1))


@dataclass(frozen=True)
class UniformRelease:
    box: Box

    def place(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.box.sample(n, rng)


@dataclass(frozen=True)
class Release:
    N: int
    scheme: Union[PointRelease, UniformRelease]
    species: int = 0

    def __post_init__(self):
        if self.N < 0:
            raise DomainError("molecule count must be non-negative")


# Probes and results ------------------------------------------------------------

@dataclass(frozen=True)
class TransparentSphere:
    """Instantaneous count of molecules inside a ball."""

    center: tuple
    a_rx: float
    species: int = 0


@dataclass(frozen=True)
class AbsorbingSurface:
    """Cumulative count of molecules absorbed by surface ``surface_index``."""

    surface_index: int


ReceiverProbe = Union[TransparentSphere, AbsorbingSurface]


@dataclass
class RealizationSeries:
    """Probe time series of one realization on a shared time grid."""

    t: np.ndarray
    series: dict
    arrival_times: dict = field(default_factory=dict)
    departure_times: dict = field(default_factory=dict)
    snapshots: np.ndarray | None = None

    def __post_init__(self):
        for key, times in self.arrival_times.items():
            if np.any(np.diff(times) < 0):
                raise GeometryError(f"arrival times of probe {key} are not ascending")


# Built-in geometry ---------------------------------------------------------------

CUBE = 32e-6
PIPE_SIDE = 12e-6


def build_dumbbell(pipe_length: float = 60e-6) -> Environment:
    """Two 32 um cubes along x joined by a 12 x 12 um pipe.

    Every wall reflects except the far x-face of the right cube, which absorbs.
    Use :func:`dumbbell_release` to fill the left cube.
    """
    if not pipe_length > 0:
        raise DomainError("pipe length must be positive")
    off = (CUBE - PIPE_SIDE) / 2.0
    left = Box((0.0, 0.0, 0.0), (CUBE, CUBE, CUBE))
    pipe = Box((CUBE, off, off), (CUBE + pipe_length, off + PIPE_SIDE, off + PIPE_SIDE))
    x_r = CUBE + pipe_length
    right = Box((x_r, 0.0, 0.0), (x_r + CUBE, CUBE, CUBE))
    sink = Surface(RectPatch(0, x_r + CUBE, (0.0, 0.0), (CUBE, CUBE)), Behavior.ABSORBING)
    return Environment(regions=(left, pipe, right), surfaces=(sink,), species_D=(1e-10,))


def dumbbell_release(N: int = 500) -> Release:
    return Release(N, UniformRelease(Box((0.0, 0.0, 0.0), (CUBE, CUBE, CUBE))))


def voxel_connected(env: Environment, start, target: Surface, h: float) -> bool:
    """Flood fill over voxel centres from ``start`` until a voxel touches ``target``."""
    if not isinstance(target.patch, RectPatch):
        raise DomainError("target must be a rectangular patch")
    bb = env.bounding_box()
    lo = np.array(bb.lo)
    shape = np.ceil((np.array(bb.hi) - lo) / h).astype(int)
    grid = np.stack(np.meshgrid(*[lo[k] + (np.arange(n) + 0.5) * h for k, n in enumerate(shape)], indexing="ij"), axis=-1)
    free = env.contains(grid)
    idx0 = tuple(((np.asarray(start) - lo) // h).astype(int))
    if not free[idx0]:
        raise DomainError("start point is not accessible")
    p = target.patch
    a, b = [k for k in range(3) if k != p.axis]

    def touches(ijk):
        c = grid[ijk]
        return abs(c[p.axis] - p.coord) <= h and p.lo[0] <= c[a] <= p.hi[0] and p.lo[1] <= c[b] <= p.hi[1]

    seen = np.zeros_like(free)
    seen[idx0] = True
    queue = deque([idx0])
    while queue:
        cur = queue.popleft()
        if touches(cur):
            return True
        for k in range(3):
            for step in (-1, 1):
                nxt = list(cur)
                nxt[k] += step
                nxt = tuple(nxt)
                if 0 <= nxt[k] < shape[k] and free[nxt] and not seen[nxt]:
                    seen[nxt] = True
                    queue.append(nxt)
    return False
