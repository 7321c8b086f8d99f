"""Subvolume stochastic simulation: continuous time, discrete space.

The domain is a lattice of cubic subvolumes of edge ell. Molecules jump to a
face neighbour with rate D/ell^2 per direction, and react inside a subvolume
with zeroth-, first- or second-order propensities. Events are drawn with the
direct method: an exponential waiting time from the total propensity, then a
linear scan over cumulative propensities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from ..errors import DomainError
from .env import RealizationSeries
from .micro import realization_rng

DIRECTIONS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))
MAX_PRODUCTS = 2


@dataclass(frozen=True)
class MesoReaction:
    """Mass-action reaction; ``where`` restricts it to the listed subvolumes.

    Units of kappa: 1/(m^3 s) for order 0, 1/s for order 1, m^3/s for order 2.
    """

    kappa: float
    reactants: tuple = ()
    products: tuple = ()
    where: tuple | None = None

    def __post_init__(self):
        if self.kappa < 0:
            raise DomainError("rate constants must be non-negative")
        if len(self.reactants) > 2 or len(self.products) > MAX_PRODUCTS:
            raise DomainError("at most two reactants and two products")

    @property
    def order(self) -> int:
        return len(self.reactants)


@dataclass
class MesoGrid:
    shape: tuple
    ell: float
    D: tuple
    counts: np.ndarray = None
    reactions: tuple = ()

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise DomainError("grid shape needs three positive sizes")
        if not self.ell > 0:
            raise DomainError("subvolume edge must be positive")
        self.D = tuple(float(d) for d in self.D)
        if any(d < 0 for d in self.D):
            raise DomainError("diffusion coefficients must be non-negative")
        if self.counts is None:
            self.counts = np.zeros((len(self.D), self.size), dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(len(self.D), self.size)
        if np.any(self.counts < 0):
            raise DomainError("counts must be non-negative")
        self.reactions = tuple(self.reactions)
        for r in self.reactions:
            if any(not 0 <= s < self.n_species for s in (*r.reactants, *r.products)):
                raise DomainError("reaction refers to an unknown species")

    @property
    def n_species(self) -> int:
        return len(self.D)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def volume(self) -> float:
        return self.ell**3

    def index(self, i: int, j: int = 0, k: int = 0) -> int:
        return int(np.ravel_multi_index((i, j, k), self.shape))

    def neighbors(self) -> np.ndarray:
        """(M, 6) table of face neighbours, -1 where the lattice ends."""
        coords = np.array(np.unravel_index(np.arange(self.size), self.shape)).T
        out = np.full((self.size, 6), -1, dtype=np.int64)
        for q, step in enumerate(DIRECTIONS):
            moved = coords + step
            ok = np.all((moved >= 0) & (moved < self.shape), axis=1)
            out[ok, q] = np.ravel_multi_index(moved[ok].T, self.shape)
        return out


class Propensities(NamedTuple):
    alpha: np.ndarray  # (S, 6, M)
    beta: np.ndarray  # (P, M)
    gamma_tot: float


def _reaction_arrays(grid: MesoGrid):
    P, M = len(grid.reactions), grid.size
    order = np.zeros(P, dtype=np.int64)
    reac = np.full((P, 2), -1, dtype=np.int64)
    prod = np.full((P, MAX_PRODUCTS), -1, dtype=np.int64)
    kappa = np.zeros(P)
    mask = np.ones((P, M), dtype=np.bool_)
    for p, r in enumerate(grid.reactions):
        order[p] = r.order
        reac[p, : r.order] = r.reactants
        prod[p, : len(r.products)] = r.products
        kappa[p] = r.kappa
        if r.where is not None:
            mask[p] = False
            mask[p, list(r.where)] = True
    return order, reac, prod, kappa, mask


@numba.njit(cache=True)
def _rx_prop(p, m, U, order, reac, kappa, mask, V):
    if not mask[p, m]:
        return 0.0
    o = order[p]
    if o == 0:
        return kappa[p] * V
    if o == 1:
        return kappa[p] * U[reac[p, 0], m]
    a = reac[p, 0]
    b = reac[p, 1]
    if a == b:
        return kappa[p] * U[a, m] * (U[a, m] - 1) / V
    return kappa[p] * U[a, m] * U[b, m] / V


def meso_propensities(grid: MesoGrid) -> Propensities:
    """Diffusion propensities per direction and reaction propensities per subvolume."""
    nbr = grid.neighbors()
    rate = np.asarray(grid.D) / grid.ell**2
    alpha = rate[:, None, None] * (nbr.T[None, :, :] >= 0) * grid.counts[:, None, :]
    order, reac, _, kappa, mask = _reaction_arrays(grid)
    beta = np.zeros((len(grid.reactions), grid.size))
    for p in range(len(grid.reactions)):
        for m in range(grid.size):
            beta[p, m] = _rx_prop(p, m, grid.counts, order, reac, kappa, mask, grid.volume)
    return Propensities(alpha, beta, float(alpha.sum() + beta.sum()))


def meso_next_event(gamma_tot: float, rng: np.random.Generator) -> float | None:
    """Waiting time to the next event, or None when nothing can happen."""
    if gamma_tot < 0:
        raise DomainError("total propensity must be non-negative")
    if gamma_tot == 0:
        return None
    return -math.log(1.0 - rng.random()) / gamma_tot


def meso_select_event(propensities, rng: np.random.Generator) -> int:
    """Index i with probability a_i / sum(a): first i where u*sum < cumsum[i]."""
    a = np.asarray(propensities, dtype=float).ravel()
    if np.any(a < 0):
        raise DomainError("propensities must be non-negative")
    cum = np.cumsum(a)
    if cum[-1] == 0:
        raise DomainError("all propensities are zero")
    return _select(cum, rng.random() * cum[-1])


def _select(cum, target):
    i = int(np.searchsorted(cum, target, side="right"))
    return min(i, cum.size - 1)


# Kernel ------------------------------------------------------------------------------

DONE, NEED_RANDOMS, UNDERFLOW, CACHE_MISMATCH = 0, 1, 2, 3


@numba.njit(cache=True)
def _sub_prop(m, U, nbr_count, drate, order, reac, kappa, mask, V):
    tot = 0.0
    for s in range(U.shape[0]):
        tot += nbr_count[m] * drate[s] * U[s, m]
    for p in range(order.shape[0]):
        tot += _rx_prop(p, m, U, order, reac, kappa, mask, V)
    return tot


@numba.njit(cache=True)
def _meso_kernel(U, nbr, nbr_count, drate, order, reac, prod, kappa, mask, V,
                 a_sub, state, T_end, sample_t, snaps, unif, debug):
    """Run events until T_end or until ``unif`` runs out.

    state = [t, next sample index, events done]; returns a status code.
    """
    t = state[0]
    k = int(state[1])
    events = int(state[2])
    n_u = unif.shape[0]
    used = 0
    M = U.shape[1]
    S = U.shape[0]
    P = order.shape[0]
    while True:
        gamma = 0.0
        for m in range(M):
            gamma += a_sub[m]
        if gamma <= 0.0:
            t_next = np.inf
        else:
            if used + 2 > n_u:
                state[0] = t
                state[1] = k
                state[2] = events
                return NEED_RANDOMS
            t_next = t - math.log(1.0 - unif[used]) / gamma
        # record the state on every sample time passed before the event
        while k < sample_t.shape[0] and sample_t[k] < t_next and sample_t[k] <= T_end:
            snaps[k, :, :] = U
            k += 1
        if t_next > T_end:
            state[0] = T_end
            state[1] = k
            state[2] = events
            return DONE
        target = unif[used + 1] * gamma
        used += 2
        t = t_next
        # pick the subvolume, then the event inside it
        m = 0
        acc = 0.0
        while m < M - 1 and not target < acc + a_sub[m]:
            acc += a_sub[m]
            m += 1
        rem = target - acc
        done = False
        for s in range(S):
            w = drate[s] * U[s, m]
            for q in range(6):
                if nbr[m, q] < 0:
                    continue
                if rem < w:
                    if U[s, m] < 1:
                        return UNDERFLOW
                    n2 = nbr[m, q]
                    U[s, m] -= 1
                    U[s, n2] += 1
                    a_sub[m] = _sub_prop(m, U, nbr_count, drate, order, reac, kappa, mask, V)
                    a_sub[n2] = _sub_prop(n2, U, nbr_count, drate, order, reac, kappa, mask, V)
                    done = True
                    break
                rem -= w
            if done:
                break
        if not done:
            for p in range(P):
                w = _rx_prop(p, m, U, order, reac, kappa, mask, V)
                if rem < w or p == P - 1:
                    for r in range(order[p]):
                        if U[reac[p, r], m] < 1:
                            return UNDERFLOW
                        U[reac[p, r], m] -= 1
                    for r in range(prod.shape[1]):
                        if prod[p, r] >= 0:
                            U[prod[p, r], m] += 1
                    a_sub[m] = _sub_prop(m, U, nbr_count, drate, order, reac, kappa, mask, V)
                    done = True
                    break
                rem -= w
        if not done:
            # rounding pushed the target past the last diffusion channel
            return CACHE_MISMATCH
        events += 1
        if debug and events % 10000 == 0:
            for mm in range(M):
                fresh = _sub_prop(mm, U, nbr_count, drate, order, reac, kappa, mask, V)
                if abs(fresh - a_sub[mm]) > 1e-9 * max(1.0, abs(fresh)):
                    return CACHE_MISMATCH


@dataclass(frozen=True)
class CountProbe:
    """Number of molecules of ``species`` summed over ``subvolumes`` (all when None)."""

    species: int = 0
    subvolumes: tuple | None = None


def meso_run(grid: MesoGrid, T_end: float, probes=(), seed: int = 0, sample_times=None,
             realization: int = 0, debug: bool = False, block: int = 1 << 16) -> RealizationSeries:
    """One SSA realization; the grid is not modified.

    The state is sampled at ``sample_times`` (default: 100 equal steps up to
    T_end). Full count snapshots are kept in ``snapshots`` with shape
    (times, species, subvolumes).
    """
    if not T_end > 0:
        raise DomainError("T_end must be positive")
    if sample_times is None:
        sample_times = np.linspace(T_end / 100, T_end, 100)
    sample_t = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_t) <= 0) or sample_t[0] < 0 or sample_t[-1] > T_end:
        raise DomainError("sample times must increase within [0, T_end]")
    rng = realization_rng(seed, realization)
    U = grid.counts.copy()
    nbr = grid.neighbors()
    nbr_count = np.count_nonzero(nbr >= 0, axis=1).astype(np.int64)
    drate = np.asarray(grid.D) / grid.ell**2
    order, reac, prod, kappa, mask = _reaction_arrays(grid)
    V = grid.volume
    a_sub = np.array([_sub_prop(m, U, nbr_count, drate, order, reac, kappa, mask, V) for m in range(grid.size)])
    snaps = np.zeros((sample_t.size, grid.n_species, grid.size), dtype=np.int64)
    state = np.zeros(3)
    while True:
        unif = rng.random(block)
        code = _meso_kernel(U, nbr, nbr_count, drate, order, reac, prod, kappa, mask, V,
                            a_sub, state, T_end, sample_t, snaps, unif, debug)
        if code == DONE:
            break
        if code == UNDERFLOW:
            raise ArithmeticError("molecule count would become negative")
        if code == CACHE_MISMATCH:
            raise ArithmeticError("cached propensities drifted from a fresh evaluation")
    series = {}
    for j, probe in enumerate(probes):
        cols = slice(None) if probe.subvolumes is None else list(probe.subvolumes)
        series[j] = snaps[:, probe.species, cols].sum(axis=-1)
    return RealizationSeries(t=sample_t.copy(), series=series, snapshots=snaps)


# Lattice resolution -----------------------------------------------------------------

class SizeCheck(NamedTuple):
    ok: bool
    diffusion_ratio: float
    flow_ratio: float


def subvolume_size_check(ell: float, n: int, D: float, t_r: float, v: float = 0.0, margin: float = 0.1) -> SizeCheck:
    """Compare ell with the diffusion length sqrt(2 n D t_r) and with 2D/|v|."""
    if not (ell > 0 and n in (1, 2, 3) and D > 0 and t_r > 0):
        raise DomainError("need ell > 0, n in {1, 2, 3}, D > 0 and t_r > 0")
    r_diff = ell / math.sqrt(2.0 * n * D * t_r)
    r_flow = ell * abs(v) / (2.0 * D)
    return SizeCheck(r_diff < margin and r_flow < margin, r_diff, r_flow)
