import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mckit import rxsignal
from mckit.cir import PassiveUca
from mckit.errors import DomainError
from mckit.rxsignal import (
    CountKind,
    CountModel,
    Impulse,
    InverseGaussian,
    IsiChannel,
    Levy,
    Pulse,
    SatDriftModel,
    Segment,
    SnrRegime,
)

from oracles import poisson_cdf_bruteforce, rmse_bruteforce


# Deterministic responses --------------------------------------------------------------

def test_impulse_response():
    h = PassiveUca(200e-9, 1e-11, 5e-22)
    assert rxsignal.deterministic_response(Impulse(2000), h.h, 1e-3) == pytest.approx(2000 * h.h(1e-3))


def test_zero_cir_gives_zero():
    for pattern in (Impulse(10), rxsignal.rect_pulse(10, 1.0)):
        assert rxsignal.deterministic_response(pattern, lambda t: 0.0, 2.0) == 0.0


def test_rect_pulse_constant_cir():
    pulse = rxsignal.rect_pulse(500, 0.2)
    assert pulse.total() == pytest.approx(500)
    assert rxsignal.deterministic_response(pulse, lambda t: 0.3, 0.5) == pytest.approx(150, rel=1e-9)


def test_narrow_pulse_tends_to_impulse():
    h = PassiveUca(200e-9, 1e-11, 5e-22).h
    t = 1e-3
    impulse = rxsignal.deterministic_response(Impulse(2000), h, t)
    values = [rxsignal.deterministic_response(rxsignal.rect_pulse(2000, w), h, t) for w in (1e-4, 1e-5, 1e-6)]
    errs = [abs(v - impulse) / impulse for v in values]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_pulse_is_linear_in_release_rate():
    h = PassiveUca(200e-9, 1e-11, 5e-22).h
    g = lambda s: 1e6 * math.sin(math.pi * s / 1e-4) ** 2
    one = rxsignal.deterministic_response(Pulse(g, 1e-4), h, 8e-4)
    three = rxsignal.deterministic_response(Pulse(lambda s: 3 * g(s), 1e-4), h, 8e-4)
    assert three == pytest.approx(3 * one, rel=1e-9)


# Count statistics -----------------------------------------------------------------------

def test_binomial_pmf_value():
    assert rxsignal.count_pmf(CountModel(CountKind.BINOMIAL, 4, 0.5), 2) == pytest.approx(0.375)
    assert rxsignal.count_pmf(CountModel(CountKind.BINOMIAL, 4, 0.5), 5) == 0.0


def test_poisson_zero_mean():
    assert rxsignal.count_pmf(CountModel(CountKind.POISSON, 100, 0.0), 0) == 1.0


def test_gaussian_peak_value():
    m = CountModel(CountKind.GAUSSIAN, 1000, 0.2)
    assert rxsignal.count_pmf(m, 200) == pytest.approx(1 / math.sqrt(2 * math.pi * 1000 * 0.2 * 0.8))


def test_count_pmf_rejects_fractional_counts():
    with pytest.raises(DomainError):
        rxsignal.count_pmf(CountModel(CountKind.POISSON, 10, 0.1), 1.5)
    with pytest.raises(DomainError):
        CountModel(CountKind.BINOMIAL, 10, 1.5)


@settings(max_examples=40)
@given(N=st.integers(0, 400), h=st.one_of(st.just(0.0), st.floats(1e-12, 1.0)))
def test_pmf_normalization_and_moments(N, h):
    b = CountModel(CountKind.BINOMIAL, N, h)
    n = np.arange(N + 1)
    p = rxsignal.count_pmf(b, n)
    assert np.sum(p) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(n, p) == pytest.approx(N * h, abs=1e-10 * max(1, N))
    var = np.dot(n**2, p) - np.dot(n, p) ** 2
    assert var == pytest.approx(N * h * (1 - h), abs=1e-9 * max(1, N))
    mean = N * h
    top = int(mean + 20 * math.sqrt(mean) + 20)
    q = rxsignal.count_pmf(CountModel(CountKind.POISSON, N, h), np.arange(top + 1))
    assert np.sum(q) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["gaussian", "poisson"])
@pytest.mark.parametrize("N,h", [(100, 0.01), (100, 0.3), (1000, 0.05), (2000, 0.4)])
def test_rmse_matches_bruteforce(kind, N, h):
    assert rxsignal.rmse_vs_binomial(CountKind(kind), N, h) == pytest.approx(rmse_bruteforce(kind, N, h), rel=1e-7)


def test_rmse_self_is_zero():
    assert rxsignal.rmse_vs_binomial(CountKind.BINOMIAL, 500, 0.3) == 0.0


def test_rmse_trends_at_1e3():
    hs = [0.01, 0.05, 0.1, 0.3]
    pois = [rxsignal.rmse_vs_binomial(CountKind.POISSON, 1000, h) for h in hs]
    gaus = [rxsignal.rmse_vs_binomial(CountKind.GAUSSIAN, 1000, h) for h in hs]
    assert all(a < b for a, b in zip(pois, pois[1:]))
    assert all(a > b for a, b in zip(gaus, gaus[1:]))
    by_n = [rxsignal.rmse_vs_binomial(CountKind.GAUSSIAN, n, 0.1) for n in (100, 1000, 10000)]
    assert by_n[0] > by_n[1] > by_n[2]


def test_poisson_limit_gap():
    assert rxsignal.poisson_limit_gap(10_000, 1.0) < 1e-3
    assert rxsignal.poisson_limit_gap(10, 1.0) > rxsignal.poisson_limit_gap(1000, 1.0)
    assert rxsignal.poisson_limit_gap(50, 0.0) == 0.0
    with pytest.raises(DomainError):
        rxsignal.poisson_limit_gap(5, 6.0)


def test_poisson_cdf_backend_agrees_with_bruteforce():
    ref = poisson_cdf_bruteforce(3.7, 40)
    assert rxsignal.count_cdf(CountModel(CountKind.POISSON, 37, 0.1), np.arange(41)) == pytest.approx(ref, abs=1e-14)


# ISI and interference ---------------------------------------------------------------------

def test_isi_all_zero():
    ch = IsiChannel(np.array([[5.0, 3.0], [1.0, 0.5]]), 0.0, T_symb=1.0, dt=0.5)
    out = rxsignal.sample_isi(ch, np.zeros(20), np.random.default_rng(0))
    assert np.all(out == 0)


def test_isi_expected_signal_convolution():
    r_sig = np.array([[5.0, 3.0], [1.0, 0.5], [0.2, 0.1]])
    ch = IsiChannel(r_sig, 0.0, T_symb=1.0, dt=0.5)
    s = np.array([1, 0, 1, 1, 0], dtype=float)
    mean = ch.expected_signal(s)
    for k in range(len(s)):
        for m in range(2):
            ref = sum(r_sig[l, m] * s[k - l] for l in range(3) if k - l >= 0)
            assert mean[k, m] == pytest.approx(ref)


def test_isi_single_tap_mean():
    ch = IsiChannel(np.array([[12.0, 7.0]]), 3.0, T_symb=1.0, dt=0.5)
    out = rxsignal.sample_isi(ch, np.ones(100_000), np.random.default_rng(1))
    assert out.mean(axis=0) == pytest.approx([15.0, 10.0], rel=0.01)


@pytest.mark.parametrize("model", ["poisson", "gaussian"])
def test_isi_chi_square_against_declared_model(model):
    ch = IsiChannel(np.array([[6.0]]), 2.0)
    out = rxsignal.sample_isi(ch, np.ones(50_000), np.random.default_rng(2), model).ravel()
    if model == "poisson":
        edges = np.arange(0, 20)
        observed = np.array([np.sum(out == k) for k in edges[:-1]] + [np.sum(out >= edges[-1])])
        probs = np.append(stats.poisson.pmf(edges[:-1], 8.0), stats.poisson.sf(edges[-2], 8.0))
    else:
        edges = np.linspace(-1, 17, 19)
        cdf = stats.norm.cdf(edges, 8.0, math.sqrt(8.0))
        observed = np.histogram(out, np.concatenate([[-np.inf], edges, [np.inf]]))[0]
        probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    _, p = stats.chisquare(observed, probs * out.size)
    assert p > 1e-3


def test_isi_poisson_variance_equals_mean():
    ch = IsiChannel(np.array([[50.0]]), 0.0)
    out = rxsignal.sample_isi(ch, np.ones(100_000), np.random.default_rng(3)).ravel()
    assert out.var() == pytest.approx(out.mean(), rel=0.02)


def test_isi_components_add_up():
    ch = IsiChannel(np.array([[8.0, 2.0], [1.0, 1.0]]), 4.0, T_symb=1.0, dt=0.5)
    comp = rxsignal.isi_components(ch, np.ones(50_000), np.random.default_rng(4))
    assert comp.diffusion_noise.mean() == pytest.approx(0.0, abs=0.05)
    assert comp.interference_noise.var() == pytest.approx(4.0, rel=0.03)
    assert np.allclose(comp.centred - comp.signal, comp.diffusion_noise + comp.interference_noise)


def test_isi_channel_invariants():
    with pytest.raises(DomainError):
        IsiChannel(np.array([[1.0, 1.0, 1.0]]), 0.0, T_symb=1.0, dt=0.5)
    with pytest.raises(DomainError):
        IsiChannel(np.array([[-1.0]]), 0.0)
    with pytest.raises(DomainError):
        IsiChannel(np.array([[1.0]]), 0.0).expected_signal([2.0])


def test_noise_count():
    rng = np.random.default_rng(5)
    assert np.all(rxsignal.noise_count(0.0, rng, size=100) == 0)
    draws = rxsignal.noise_count(20.0, rng, size=100_000)
    assert draws.mean() == pytest.approx(20.0, rel=0.02)
    assert draws.var() == pytest.approx(20.0, rel=0.02)
    with pytest.raises(DomainError):
        rxsignal.noise_count(-1.0, rng)


def test_noise_subvolume_partition():
    rng = np.random.default_rng(6)
    J, total = 100, 7.0
    summed = rxsignal.noise_count(total / J, rng, size=(40_000, J)).sum(axis=1)
    ks = np.arange(16)
    observed = np.array([np.sum(summed == k) for k in ks] + [np.sum(summed > ks[-1])])
    probs = np.append(stats.poisson.pmf(ks, total), stats.poisson.sf(ks[-1], total))
    _, p = stats.chisquare(observed, probs * summed.size)
    assert p > 1e-3


def test_snr_cases():
    assert rxsignal.snr(9.0, 0.0) == (9.0, SnrRegime.DIFFUSION_LIMITED)
    assert rxsignal.snr(0.0, 5.0).value == 0.0
    assert rxsignal.snr(4.0, 4.0) == (2.0, SnrRegime.MIXED)
    assert rxsignal.snr(0.01, 5.0).regime is SnrRegime.INTERFERENCE_LIMITED
    with pytest.raises(DomainError):
        rxsignal.snr(0.0, 0.0)


# Timing -----------------------------------------------------------------------------------

def test_levy_density_mass():
    m = Levy(1e-6, 1e-10)
    scale = m.d**2 / m.D
    assert rxsignal.delay_cdf(m, 1e6 * scale) > 0.999
    value, _ = integrate.quad(lambda t: rxsignal.delay_pdf(m, t), 0, 50 * scale, limit=400)
    assert value == pytest.approx(rxsignal.delay_cdf(m, 50 * scale), rel=1e-8)


def test_inverse_gaussian_mean_and_density():
    m = InverseGaussian(1e-5, 1e-10, 1e-4)
    draws = m.sample(np.random.default_rng(7), 1_000_000)
    assert draws.mean() == pytest.approx(m.mean, rel=0.01)
    value, _ = integrate.quad(lambda t: rxsignal.delay_pdf(m, t), 0, 2 * m.mean, limit=400)
    assert value == pytest.approx(rxsignal.delay_cdf(m, 2 * m.mean), rel=1e-7)


@pytest.mark.parametrize("model", [Levy(1e-6, 1e-10), InverseGaussian(1e-5, 1e-10, 1e-4)])
def test_delay_density_vanishes_at_origin(model):
    assert rxsignal.delay_pdf(model, 0.0) == 0.0
    assert rxsignal.delay_pdf(model, 1e-12) >= 0.0
    assert rxsignal.delay_pdf(model, 1e-12) < 1e-100


def test_arrival_order_simple_cases():
    m = Levy(1e-6, 1e-10)
    t = 0.05
    assert rxsignal.arrival_order_density(5, [], t, m) == pytest.approx((1 - rxsignal.delay_cdf(m, t)) ** 5)
    assert rxsignal.arrival_order_density(1, [0.01], t, m) == pytest.approx(rxsignal.delay_pdf(m, 0.01))
    with pytest.raises(DomainError):
        rxsignal.arrival_order_density(3, [0.02, 0.01], t, m)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_arrival_order_marginal_is_binomial(n):
    m = Levy(1e-6, 1e-10)
    N, t = 3, 0.02
    F = rxsignal.delay_cdf(m, t)
    if n == 0:
        mass = rxsignal.arrival_order_density(N, [], t, m)
    elif n == 1:
        mass = integrate.quad(lambda a: rxsignal.arrival_order_density(N, [a], t, m), 0, t, epsabs=1e-12)[0]
    elif n == 2:
        mass = integrate.dblquad(lambda b, a: rxsignal.arrival_order_density(N, [a, b], t, m),
                                 0, t, lambda a: a, lambda a: t, epsabs=1e-11)[0]
    else:
        mass = integrate.tplquad(lambda c, b, a: rxsignal.arrival_order_density(N, [a, b, c], t, m),
                                 0, t, lambda a: a, lambda a: t, lambda a, b: b, lambda a, b: t, epsabs=1e-10)[0]
    assert mass == pytest.approx(stats.binom.pmf(n, N, F), abs=2e-6)


# Sample correlation -----------------------------------------------------------------------

def test_pearson_identity_and_degenerate():
    x = np.arange(10.0)
    assert rxsignal.pearson(x, 2 * x + 1) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        rxsignal.pearson(np.ones(5), x[:5])


def test_sample_correlation_same_time():
    sc = rxsignal.SphereScenario(2000, 200e-9, 50e-9, 1e-11)
    assert rxsignal.sample_correlation_mc(sc, 6.7e-4, 6.7e-4, 1000, seed=1) == 1.0
    with pytest.raises(DomainError):
        rxsignal.sample_correlation_mc(sc, 1e-3, 2e-3, 10)


@pytest.mark.slow
def test_sample_correlation_trends():
    d, a = 200e-9, 50e-9
    lags = [5e-6, 20e-6, 60e-6, 150e-6, 400e-6]
    first_below = {}
    for D in (1e-11, 5e-11, 1e-10):
        sc = rxsignal.SphereScenario(2000, d, a, D)
        tp = d * d / (6 * D)
        rho = [rxsignal.sample_correlation_mc(sc, tp, tp + lag, 4000, seed=3) for lag in lags]
        # beyond ~0.1 the estimate is within a few standard errors of zero
        assert all(x > y for x, y in zip(rho, rho[1:]) if x > 0.1)
        first_below[D] = next(lag for lag, r in zip(lags + [math.inf], rho + [0.0]) if abs(r) < 0.2)
    assert first_below[1e-11] >= first_below[5e-11] >= first_below[1e-10]
    assert first_below[1e-11] > first_below[1e-10]


# Saturation and drift fit ------------------------------------------------------------------

TRUE = SatDriftModel(c_t0=2.0e-7, c_inf=8.0e-7, tau_on=35.0, tau_off=35.0, t0=10.0, m_d=1.5e-9)


def test_sat_drift_endpoints():
    assert rxsignal.eval_sat_drift(TRUE, TRUE.t0) == pytest.approx(TRUE.c_t0)
    flat = SatDriftModel(1.0, 3.0, 2.0, 4.0)
    assert rxsignal.eval_sat_drift(flat, 1e4) == pytest.approx(3.0)
    assert rxsignal.eval_sat_drift(flat, 2.0, light_on=False) == pytest.approx(1 + 2 * (1 - math.exp(-0.5)))


def test_sat_drift_noiseless_round_trip():
    t = np.linspace(TRUE.t0, TRUE.t0 + 200, 150)
    y = rxsignal.eval_sat_drift(TRUE, t)
    fit = rxsignal.fit_sat_drift(np.column_stack([t, y]), [Segment(TRUE.t0, TRUE.t0 + 200)])
    truth_sse = float(np.sum((rxsignal.eval_sat_drift(TRUE, t) - y) ** 2))
    assert fit.residual <= truth_sse + 1e-9
    assert math.sqrt(fit.residual / t.size) < 1e-9 * (TRUE.c_inf - TRUE.c_t0)
    for name in ("c_t0", "c_inf", "tau_on", "m_d"):
        assert getattr(fit.model, name) == pytest.approx(getattr(TRUE, name), rel=1e-6)


def test_sat_drift_noisy_round_trip():
    rng = np.random.default_rng(8)
    t = np.linspace(TRUE.t0, TRUE.t0 + 350, 3000)
    clean = rxsignal.eval_sat_drift(TRUE, t)
    y = clean + 0.01 * (clean.max() - clean.min()) * rng.standard_normal(t.size)
    fit = rxsignal.fit_sat_drift(np.column_stack([t, y]), [Segment(TRUE.t0, TRUE.t0 + 350)])
    for name in ("c_t0", "c_inf", "tau_on"):
        assert getattr(fit.model, name) == pytest.approx(getattr(TRUE, name), rel=0.02)


def test_sat_drift_two_segments(tmp_path):
    off = SatDriftModel(c_t0=8.0e-7, c_inf=3.0e-7, tau_on=20.0, tau_off=20.0, t0=100.0, m_d=0.0)
    t1 = np.linspace(0, 100, 60)
    t2 = np.linspace(100, 250, 80)[1:]
    on = SatDriftModel(2e-7, 8e-7, 15.0, 15.0, 0.0, 0.0)
    y = np.concatenate([rxsignal.eval_sat_drift(on, t1), rxsignal.eval_sat_drift(off, t2, light_on=False)])
    path = tmp_path / "trace.csv"
    path.write_text("t_seconds,concentration\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(np.concatenate([t1, t2]), y)))
    data = rxsignal.load_trace_csv(path)
    fit = rxsignal.fit_sat_drift(data, [Segment(0, 100, True), Segment(100.0 + 1e-9, 250, False)])
    assert fit.segments[0].model.tau_on == pytest.approx(15.0, rel=1e-6)
    assert fit.segments[1].model.c_inf == pytest.approx(3e-7, rel=1e-6)


def test_sat_drift_segment_needs_points():
    with pytest.raises(DomainError):
        rxsignal.fit_sat_drift(np.array([[0.0, 1.0], [1.0, 2.0]]))
