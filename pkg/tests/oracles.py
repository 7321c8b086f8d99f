"""Independent reference computations used by the tests.

Each oracle reaches its answer by a different route than the library code:
brute-force sums, direct quadrature, finite differences or plain sampling.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, special


def radial_mass(density, center, r_max, points=None):
    """Integral of ``density(xyz)`` over a ball of radius r_max around center,
    assuming the density is spherically symmetric about center."""
    center = np.asarray(center, dtype=float)

    def shell(r):
        return 4.0 * math.pi * r * r * float(density(center + np.array([r, 0.0, 0.0])))

    value, _ = integrate.quad(shell, 0.0, r_max, limit=400, points=points)
    return value


def central_residual_diffusion(c, D, v, x, t, h, k):
    """Relative residual of dc/dt = D lap c - v . grad c at one point."""
    x = np.asarray(x, dtype=float)
    dcdt = (c(x, t + k) - c(x, t - k)) / (2 * k)
    lap = 0.0
    grad = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        lap += (c(x + e, t) - 2 * c(x, t) + c(x - e, t)) / (h * h)
        grad[i] = (c(x + e, t) - c(x - e, t)) / (2 * h)
    rhs = D * lap - float(np.dot(v, grad))
    return dcdt - rhs, max(abs(dcdt), abs(D * lap), abs(float(np.dot(v, grad))))


def binomial_cdf_bruteforce(N, p):
    """Binomial CDF over 0..N by a running pmf recursion in log space."""
    out = np.empty(N + 1)
    if p == 0:
        out[:] = 1.0
        return out
    if p == 1:
        out[:] = 0.0
        out[N] = 1.0
        return out
    logp, logq = math.log(p), math.log1p(-p)
    acc = 0.0
    for n in range(N + 1):
        lp = math.lgamma(N + 1) - math.lgamma(n + 1) - math.lgamma(N - n + 1) + n * logp + (N - n) * logq
        acc += math.exp(lp)
        out[n] = min(acc, 1.0)
    return out


def poisson_cdf_bruteforce(lam, top):
    out = np.empty(top + 1)
    if lam == 0:
        out[:] = 1.0
        return out
    acc = 0.0
    for n in range(top + 1):
        acc += math.exp(n * math.log(lam) - lam - math.lgamma(n + 1))
        out[n] = min(acc, 1.0)
    return out


def gaussian_cdf_bruteforce(mean, var, top):
    sd = math.sqrt(var)
    return np.array([0.5 * (1.0 + math.erf((n - mean) / (sd * math.sqrt(2.0)))) for n in range(top + 1)])


def rmse_bruteforce(kind, N, h):
    ref = binomial_cdf_bruteforce(N, h)
    if kind == "poisson":
        approx = poisson_cdf_bruteforce(N * h, N)
    else:
        approx = gaussian_cdf_bruteforce(N * h, N * h * (1 - h), N)
    return math.sqrt(float(np.mean((approx - ref) ** 2)))


def bessel_prime_root_bisect(n, k):
    """k-th positive zero of J_n' by bisection on sign changes of a fine grid."""
    f = lambda x: special.jvp(n, x)
    grid = np.linspace(1e-6 if n == 0 else n * 0.5 + 1e-6, 20.0 + 4.0 * k + n, 20000)
    vals = f(grid)
    found = 0
    for i in range(grid.size - 1):
        if vals[i] == 0 or vals[i] * vals[i + 1] < 0:
            found += 1
            if found == k:
                a, b = grid[i], grid[i + 1]
                for _ in range(200):
                    m = 0.5 * (a + b)
                    if f(a) * f(m) <= 0:
                        b = m
                    else:
                        a = m
                return 0.5 * (a + b)
    raise RuntimeError("root not bracketed")


def sphere_occupancy_quadrature(a, D, s, t):
    """Probability that a Gaussian point released at distance s lies in a ball of
    radius a: 2D quadrature over the ball in spherical coordinates."""
    var = 2.0 * D * t

    def integrand(cos_th, r):
        d2 = r * r + s * s - 2.0 * r * s * cos_th
        return 2.0 * math.pi * r * r * math.exp(-d2 / (2.0 * var)) / (2.0 * math.pi * var) ** 1.5

    value, _ = integrate.dblquad(integrand, 0.0, a, -1.0, 1.0, epsabs=1e-13, epsrel=1e-10)
    return value


def chain_occupancy(j, lam_t):
    """Continuous-time symmetric random walk on the integers: P(X_t = j) with
    jump rate lam each way, which is exp(-2 lam t) I_j(2 lam t)."""
    return special.ive(np.abs(j), 2.0 * lam_t)


def mobile_mc(ch, t, tau1, tau2, R, rng):
    """Sample d(tau1), d(tau2) as a Gaussian chain and average the conditional CIR."""
    s1 = math.sqrt(2.0 * ch.D2 * tau1)
    s12 = math.sqrt(2.0 * ch.D2 * (tau2 - tau1))
    d1 = np.array([ch.d0, 0.0, 0.0]) + s1 * rng.standard_normal((R, 3))
    d2 = d1 + s12 * rng.standard_normal((R, 3))
    scale = ch.N_tx * ch.V_rx / (4.0 * math.pi * ch.D1 * t) ** 1.5
    r1 = scale * np.exp(-np.sum(d1 * d1, axis=1) / (4.0 * ch.D1 * t))
    r2 = scale * np.exp(-np.sum(d2 * d2, axis=1) / (4.0 * ch.D1 * t))
    return r1, r2


def argmax_time(f, lo, hi):
    res = optimize.minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12 * hi})
    return res.x
