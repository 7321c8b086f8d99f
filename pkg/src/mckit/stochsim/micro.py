"""Particle-based simulator: discrete time, continuous space.

Each step applies, per particle, a first-order reaction coin flip, a Gaussian
displacement plus flow drift, and boundary handling resolved axis by axis in
x, y, z order. A move along one axis that leaves the accessible domain is
undone on that axis only. Moves that end beyond an absorbing patch, or inside
an absorbing sphere, remove the particle and record its arrival at the end of
the step.

Random numbers come from a numpy Generator in blocks of steps; the numba
kernel only consumes them, so a run is a pure function of its seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np

from ..errors import AlignmentError, DomainError, GeometryError
from ..physics import NoFlow, Poiseuille, UniformConstant, UniformTimeVarying
from .env import (
    AbsorbingSurface,
    Ball,
    Behavior,
    Box,
    Cylinder,
    Environment,
    PointRelease,
    RealizationSeries,
    RectPatch,
    Release,
    SphereShell,
    TransparentSphere,
)

OK, ESCAPED = 0, 1
DEGRADED = -2
BLOCK_BUDGET = 1_500_000  # normals per block


# Kernel ------------------------------------------------------------------------

@numba.njit(cache=True)
def _in_regions(x, y, z, rtype, rpar):
    for r in range(rtype.shape[0]):
        t = rtype[r]
        if t == 0:
            if rpar[r, 0] <= x <= rpar[r, 1] and rpar[r, 2] <= y <= rpar[r, 3] and rpar[r, 4] <= z <= rpar[r, 5]:
                return True
        elif t == 1:
            dx = x - rpar[r, 0]
            dy = y - rpar[r, 1]
            dz = z - rpar[r, 2]
            if dx * dx + dy * dy + dz * dz <= rpar[r, 3] * rpar[r, 3]:
                return True
        else:
            ax = rpar[r, 5]
            if ax == 0.0:
                du, dv, w = y - rpar[r, 0], z - rpar[r, 1], x
            elif ax == 1.0:
                du, dv, w = x - rpar[r, 0], z - rpar[r, 1], y
            else:
                du, dv, w = x - rpar[r, 0], y - rpar[r, 1], z
            if du * du + dv * dv <= rpar[r, 4] * rpar[r, 4] and rpar[r, 2] <= w <= rpar[r, 3]:
                return True
    return False


@numba.njit(cache=True)
def _in_obstacle(x, y, z, spar, sbeh):
    for q in range(sbeh.shape[0]):
        if sbeh[q] == 0:
            dx = x - spar[q, 0]
            dy = y - spar[q, 1]
            dz = z - spar[q, 2]
            if dx * dx + dy * dy + dz * dz <= spar[q, 3] * spar[q, 3]:
                return True
    return False


@numba.njit(cache=True, nogil=True)
def _kernel(
    pos, species, alive, normals, unif, step0, dt, sigma, Ds,
    rtype, rpar,
    ppar, pbeh,
    spar, sbeh, sbridge,
    rate_tot, react_cum, react_prod,
    flow_kind, flow_v, flow_par,
    tpar, tspec, record_every, rec_counts,
    hit_step, hit_surf, crossings,
):
    n = pos.shape[0]
    K = normals.shape[1]
    n_rec = rec_counts.shape[0]
    for i in range(n):
        if not alive[i]:
            continue
        s = species[i]
        x = pos[i, 0]
        y = pos[i, 1]
        z = pos[i, 2]
        for j in range(K):
            g = step0 + j
            # reactions
            if rate_tot[s] > 0.0:
                if unif[i, j, 0] < 1.0 - math.exp(-rate_tot[s] * dt):
                    u = unif[i, j, 1]
                    k = 0
                    while k < react_cum.shape[1] - 1 and not u < react_cum[s, k]:
                        k += 1
                    prod = react_prod[s, k]
                    if prod < 0:
                        alive[i] = False
                        hit_step[i] = g
                        hit_surf[i] = -2
                        break
                    s = prod
                    species[i] = s
            # drift evaluated at the pre-move position
            vx = 0.0
            vy = 0.0
            vz = 0.0
            if flow_kind == 1:
                vx = flow_v[j, 0]
                vy = flow_v[j, 1]
                vz = flow_v[j, 2]
            elif flow_kind == 2:
                r2 = (x - flow_par[2]) ** 2 + (y - flow_par[3]) ** 2
                a2 = flow_par[1] * flow_par[1]
                if r2 < a2:
                    vz = flow_par[0] * (1.0 - r2 / a2)
            absorbed = -1
            ox = x
            oy = y
            oz = z
            for ax in range(3):
                if ax == 0:
                    cand = x + sigma[s] * normals[i, j, 0] + vx * dt
                elif ax == 1:
                    cand = y + sigma[s] * normals[i, j, 1] + vy * dt
                else:
                    cand = z + sigma[s] * normals[i, j, 2] + vz * dt
                blocked = False
                cur = x if ax == 0 else (y if ax == 1 else z)
                pa = y if ax == 0 else x
                pb = y if ax == 2 else z
                for q in range(ppar.shape[0]):
                    # the move along ax passes through patch q
                    c = ppar[q, 1]
                    if ppar[q, 0] != ax or cur == c or (cur - c) * (cand - c) > 0.0:
                        continue
                    if not (ppar[q, 2] <= pa <= ppar[q, 3] and ppar[q, 4] <= pb <= ppar[q, 5]):
                        continue
                    if pbeh[q] == 1:
                        absorbed = q
                        break
                    elif pbeh[q] == 0:
                        blocked = True
                    else:
                        crossings[q] += 1
                if absorbed >= 0:
                    break
                if blocked:
                    continue
                if ax == 0:
                    if _in_regions(cand, y, z, rtype, rpar) and not _in_obstacle(cand, y, z, spar, sbeh):
                        x = cand
                elif ax == 1:
                    if _in_regions(x, cand, z, rtype, rpar) and not _in_obstacle(x, cand, z, spar, sbeh):
                        y = cand
                else:
                    if _in_regions(x, y, cand, rtype, rpar) and not _in_obstacle(x, y, cand, spar, sbeh):
                        z = cand
            if absorbed >= 0:
                alive[i] = False
                hit_step[i] = g
                hit_surf[i] = absorbed
                break
            # absorbing spheres: endpoint test, optionally with a bridge crossing test
            for q in range(sbeh.shape[0]):
                if sbeh[q] != 1:
                    continue
                a = spar[q, 3]
                r_end = math.sqrt((x - spar[q, 0]) ** 2 + (y - spar[q, 1]) ** 2 + (z - spar[q, 2]) ** 2)
                if r_end <= a:
                    absorbed = ppar.shape[0] + q
                    break
                if sbridge[q] and Ds[s] > 0.0:
                    r_start = math.sqrt((ox - spar[q, 0]) ** 2 + (oy - spar[q, 1]) ** 2 + (oz - spar[q, 2]) ** 2)
                    if unif[i, j, 2] < math.exp(-(r_start - a) * (r_end - a) / (Ds[s] * dt)):
                        absorbed = ppar.shape[0] + q
                        break
            if absorbed >= 0:
                alive[i] = False
                hit_step[i] = g
                hit_surf[i] = absorbed
                break
            if (g + 1) % record_every == 0:
                m = (g + 1) // record_every - 1
                if m < n_rec:
                    for q in range(tpar.shape[0]):
                        if tspec[q] == s:
                            if (x - tpar[q, 0]) ** 2 + (y - tpar[q, 1]) ** 2 + (z - tpar[q, 2]) ** 2 <= tpar[q, 3] ** 2:
                                rec_counts[m, q] += 1
        pos[i, 0] = x
        pos[i, 1] = y
        pos[i, 2] = z
    return OK


# Environment compilation -------------------------------------------------------------

@dataclass(frozen=True)
class _Compiled:
    rtype: np.ndarray
    rpar: np.ndarray
    ppar: np.ndarray
    pbeh: np.ndarray
    spar: np.ndarray
    sbeh: np.ndarray
    sbridge: np.ndarray
    Ds: np.ndarray
    rate_tot: np.ndarray
    react_cum: np.ndarray
    react_prod: np.ndarray
    flow_kind: int
    flow_par: np.ndarray
    needs_uniforms: bool


def _compile(env: Environment) -> _Compiled:
    rtype, rpar = [], []
    if env.unbounded:
        # free space is one infinite box, which keeps the kernel branch-free
        rtype.append(0)
        rpar.append(np.array([-np.inf, np.inf] * 3 + [0.0, 0.0]))
    for reg in env.regions:
        q = np.zeros(8)
        if isinstance(reg, Box):
            rtype.append(0)
            q[:6] = [reg.lo[0], reg.hi[0], reg.lo[1], reg.hi[1], reg.lo[2], reg.hi[2]]
        elif isinstance(reg, Ball):
            rtype.append(1)
            q[:4] = [*reg.center, reg.radius]
        elif isinstance(reg, Cylinder):
            rtype.append(2)
            q[:6] = [reg.center[0], reg.center[1], reg.lo, reg.hi, reg.radius, reg.axis]
        else:
            raise DomainError(f"unknown region type {type(reg).__name__}")
        rpar.append(q)
    ppar, pbeh, spar, sbeh, sbridge = [], [], [], [], []
    for surf in env.surfaces:
        if isinstance(surf.patch, RectPatch):
            pa = surf.patch
            ppar.append([pa.axis, pa.coord, pa.lo[0], pa.hi[0], pa.lo[1], pa.hi[1]])
            pbeh.append(int(surf.behavior))
    for surf in env.surfaces:
        if isinstance(surf.patch, SphereShell):
            spar.append([*surf.patch.center, surf.patch.radius])
            sbeh.append(int(surf.behavior))
            sbridge.append(bool(surf.crossing_check))
    S = env.n_species
    rate_tot = np.zeros(S)
    per = [[r for r in env.reactions if r.reactant == s] for s in range(S)]
    width = max([len(p) for p in per] + [1])
    react_cum = np.ones((S, width))
    react_prod = np.full((S, width), -1, dtype=np.int64)
    for s, rs in enumerate(per):
        tot = sum(r.kappa for r in rs)
        rate_tot[s] = tot
        if tot > 0:
            react_cum[s, : len(rs)] = np.cumsum([r.kappa for r in rs]) / tot
            react_prod[s, : len(rs)] = [r.product for r in rs]
    flow = env.flow
    flow_par = np.zeros(4)
    if isinstance(flow, NoFlow):
        kind = 0
    elif isinstance(flow, (UniformConstant, UniformTimeVarying)):
        kind = 1
    elif isinstance(flow, Poiseuille):
        kind = 2
        centre = _duct_axis(env)
        flow_par[:] = [flow.v0, flow.a_c, centre[0], centre[1]]
    else:
        raise DomainError(f"flow type {type(flow).__name__} is not supported by the particle simulator")
    return _Compiled(
        rtype=np.asarray(rtype, dtype=np.int64),
        rpar=np.asarray(rpar, dtype=float).reshape(-1, 8),
        ppar=np.asarray(ppar, dtype=float).reshape(-1, 6),
        pbeh=np.asarray(pbeh, dtype=np.int64),
        spar=np.asarray(spar, dtype=float).reshape(-1, 4),
        sbeh=np.asarray(sbeh, dtype=np.int64),
        sbridge=np.asarray(sbridge, dtype=np.bool_),
        Ds=np.asarray(env.species_D, dtype=float),
        rate_tot=rate_tot,
        react_cum=react_cum,
        react_prod=react_prod,
        flow_kind=kind,
        flow_par=flow_par,
        needs_uniforms=bool(np.any(rate_tot > 0) or any(sbridge)),
    )


def _duct_axis(env: Environment):
    """Poiseuille flow runs along z about the axis of the first z-cylinder, or the origin."""
    for reg in env.regions:
        if isinstance(reg, Cylinder) and reg.axis == 2:
            return reg.center
    return (0.0, 0.0)


def _flow_block(env: Environment, step0: int, k: int, dt: float) -> np.ndarray:
    flow = env.flow
    if isinstance(flow, UniformConstant):
        return np.tile(np.asarray(flow.v, dtype=float), (k, 1))
    if isinstance(flow, UniformTimeVarying):
        return np.array([flow.v((step0 + j) * dt) for j in range(k)], dtype=float).reshape(k, 3)
    return np.zeros((k, 3))


# State and stepping ----------------------------------------------------------------

@dataclass
class MicroState:
    """Live particles, the clock and absorption counters.

    ``t`` is always ``step * dt``.
    """

    positions: np.ndarray
    species: np.ndarray
    dt: float
    step: int = 0
    absorbed: dict | None = None
    degraded: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("time step must be positive")
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.species = np.asarray(self.species, dtype=np.int64).reshape(-1)
        if self.absorbed is None:
            self.absorbed = {}

    @property
    def t(self) -> float:
        return self.step * self.dt

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def _check_inside(env: Environment, pos: np.ndarray):
    if pos.size and not np.all(env.contains(pos)):
        raise GeometryError("particles outside the accessible domain")


def _advance(env, comp, pos, species, k, step0, dt, rng, tpar, tspec, record_every, rec_counts):
    """Run k steps on the given particles; returns (alive, hit_step, hit_surf, crossings)."""
    n = pos.shape[0]
    normals = rng.standard_normal((n, k, 3))
    unif = rng.random((n, k, 3)) if comp.needs_uniforms else np.empty((0, k, 3))
    alive = np.ones(n, dtype=np.bool_)
    hit_step = np.full(n, -1, dtype=np.int64)
    hit_surf = np.full(n, -1, dtype=np.int64)
    crossings = np.zeros(comp.ppar.shape[0], dtype=np.int64)
    sigma = np.sqrt(2.0 * comp.Ds * dt)
    code = _kernel(
        pos, species, alive, normals, unif, step0, dt, sigma, comp.Ds,
        comp.rtype, comp.rpar,
        comp.ppar, comp.pbeh,
        comp.spar, comp.sbeh, comp.sbridge,
        comp.rate_tot, comp.react_cum, comp.react_prod,
        comp.flow_kind, _flow_block(env, step0, k, dt), comp.flow_par,
        tpar, tspec, record_every, rec_counts,
        hit_step, hit_surf, crossings,
    )
    if code != OK:
        raise GeometryError("particle escaped boundary handling")
    return alive, hit_step, hit_surf, crossings


def _surface_ids(env: Environment):
    """Kernel surface index -> index into env.surfaces."""
    rect = [i for i, s in enumerate(env.surfaces) if isinstance(s.patch, RectPatch)]
    sph = [i for i, s in enumerate(env.surfaces) if isinstance(s.patch, SphereShell)]
    return rect + sph


def micro_step(state: MicroState, env: Environment, rng: np.random.Generator) -> MicroState:
    """Advance all particles by one time step."""
    comp = _compile(env)
    pos = state.positions.copy()
    species = state.species.copy()
    empty = np.zeros((0, 0), dtype=np.int64)
    alive, _, hit_surf, _ = _advance(
        env, comp, pos, species, 1, state.step, state.dt, rng,
        np.zeros((0, 4)), np.zeros(0, dtype=np.int64), 1, empty,
    )
    ids = _surface_ids(env)
    absorbed = dict(state.absorbed)
    for k in hit_surf[~alive]:
        if k >= 0:
            absorbed[ids[k]] = absorbed.get(ids[k], 0) + 1
    degraded = state.degraded + int(np.sum(hit_surf == DEGRADED))
    _check_inside(env, pos[alive])
    return replace(state, positions=pos[alive], species=species[alive], step=state.step + 1,
                   absorbed=absorbed, degraded=degraded)


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for realization ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(index,))))


def micro_run(env: Environment, init: Release, dt: float, T_end: float, probes=(), seed: int = 0,
              record_every: int = 1, realization: int = 0) -> RealizationSeries:
    """Simulate one realization and sample every probe each ``record_every`` steps."""
    if not dt > 0 or not T_end > 0:
        raise DomainError("dt and T_end must be positive")
    if record_every < 1:
        raise DomainError("record_every must be at least 1")
    n_steps = int(round(T_end / dt))
    if not math.isclose(n_steps * dt, T_end, rel_tol=1e-9):
        raise DomainError("T_end must be a whole number of steps")
    comp = _compile(env)
    rng = realization_rng(seed, realization)
    pos = init.scheme.place(init.N, rng)
    species = np.full(init.N, init.species, dtype=np.int64)
    _check_inside(env, pos)

    trans = [p for p in probes if isinstance(p, TransparentSphere)]
    tpar = np.array([[*p.center, p.a_rx] for p in trans], dtype=float).reshape(-1, 4)
    tspec = np.array([p.species for p in trans], dtype=np.int64)
    n_rec = n_steps // record_every
    rec_counts = np.zeros((n_rec, len(trans)), dtype=np.int64)
    ids = _surface_ids(env)
    hits = []  # (step, env surface index)

    step = 0
    while step < n_steps and pos.shape[0] > 0:
        k = min(n_steps - step, max(1, BLOCK_BUDGET // (3 * pos.shape[0])))
        alive, hit_step, hit_surf, _ = _advance(
            env, comp, pos, species, k, step, dt, rng, tpar, tspec, record_every, rec_counts,
        )
        for g, q in zip(hit_step[~alive], hit_surf[~alive]):
            if q >= 0:
                hits.append((int(g), ids[q]))
        pos, species = pos[alive], species[alive]
        step += k

    t = (np.arange(1, n_rec + 1) * record_every) * dt
    series, arrivals = {}, {}
    for j, probe in enumerate(probes):
        if isinstance(probe, TransparentSphere):
            series[j] = rec_counts[:, trans.index(probe)].copy()
        elif isinstance(probe, AbsorbingSurface):
            steps = np.sort(np.array([g for g, q in hits if q == probe.surface_index], dtype=np.int64))
            arrivals[j] = (steps + 1) * dt
            rec_steps = np.arange(1, n_rec + 1) * record_every
            series[j] = np.searchsorted(steps + 1, rec_steps, side="right").astype(np.int64)
        else:
            raise DomainError(f"unknown probe type {type(probe).__name__}")
    return RealizationSeries(t=t, series=series, arrival_times=arrivals)


def micro_runs(env, init, dt, T_end, probes=(), seed=0, realizations=1, record_every=1, threads=1):
    """Independent realizations 0..R-1; the result order does not depend on ``threads``."""
    run = lambda r: micro_run(env, init, dt, T_end, probes, seed, record_every, r)
    if threads <= 1:
        return [run(r) for r in range(realizations)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(realizations)))


# Free-space shortcut ------------------------------------------------------------------

def free_sphere_counts(N_tx: int, d: float, a_rx: float, D: float, times, R: int, seed: int = 0) -> np.ndarray:
    """Counts inside a transparent sphere in free space at the given times.

    Without boundaries, flow or reactions the sum of Brownian steps between
    two sampling times is exactly Gaussian, so positions are drawn directly
    at the sampling times. Returns an (R, len(times)) integer array.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise DomainError("times must be positive and non-decreasing")
    gaps = np.sqrt(2.0 * D * np.diff(np.concatenate([[0.0], times])))
    out = np.empty((R, times.size), dtype=np.int64)
    start = np.array([d, 0.0, 0.0])
    for r in range(R):
        rng = realization_rng(seed, r)
        steps = rng.standard_normal((times.size, N_tx, 3)) * gaps[:, None, None]
        path = start + np.cumsum(steps, axis=0)
        out[r] = np.count_nonzero(np.einsum("tnk,tnk->tn", path, path) <= a_rx * a_rx, axis=1)
    return out


# CIR estimation -------------------------------------------------------------------------

@dataclass(frozen=True)
class CirEstimate:
    t: np.ndarray
    h: np.ndarray
    se: np.ndarray
    realizations: int


def estimate_cir(realizations, N_tx: int, probe=0) -> CirEstimate:
    """Pointwise mean and standard error of r(t)/N_tx across realizations."""
    runs = list(realizations)
    if not runs:
        raise DomainError("no realizations")
    t = runs[0].t
    for run in runs[1:]:
        if run.t.shape != t.shape or not np.array_equal(run.t, t):
            raise AlignmentError("realizations do not share a time grid")
    data = np.array([run.series[probe] for run in runs], dtype=float) / N_tx
    R = data.shape[0]
    se = data.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(data.shape[1])
    return CirEstimate(t=t.copy(), h=data.mean(axis=0), se=se, realizations=R)


def sphere_release(d: float, N_tx: int) -> Release:
    return Release(N_tx, PointRelease((d, 0.0, 0.0)))
