import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import logsumexp

from wiener_capacity import bounds_upper, quad, rate, refs
from wiener_capacity.errors import InvalidInput, WeightCollapse
from wiener_capacity.model import ChannelParams, SymbolBlock, make_rng, simulate


def grid_forward(params, y, x, bins=512):
    """Per-step log2 f(y_k | y^{k-1}, x) from a discrete-phase forward
    recursion on a uniform grid with a wrapped-Gaussian transition."""
    h = 2 * np.pi / bins
    grid = (np.arange(bins) + 0.5) * h
    d = np.arange(bins) * h
    wraps = np.arange(-4, 5)[:, None] * 2 * np.pi
    kern = np.exp(-((d[None, :] + wraps) ** 2) / (2 * params.sigma_delta_sq)).sum(axis=0)
    kern_f = np.fft.rfft(kern / kern.sum())
    s2 = params.sigma_w_sq
    log_pred = np.full(bins, -math.log(bins))
    out = np.empty(len(y))
    for k in range(len(y)):
        e = y[k] - x[k] * np.exp(1j * grid)
        ll = -math.log(2 * np.pi * s2) - (e.real ** 2 + e.imag ** 2) / (2 * s2)
        a = log_pred + ll
        lp = logsumexp(a)
        out[k] = lp / math.log(2)
        post = np.exp(a - lp)
        pred = np.fft.irfft(np.fft.rfft(post) * kern_f, n=bins)
        log_pred = np.log(np.maximum(pred, 1e-300))
    return out


def _stream(params, n, seed):
    rng = make_rng(seed, 50)
    b = SymbolBlock(np.abs(rng.standard_normal(n)), rng.uniform(0, 2 * np.pi, n))
    rx = simulate(params, b, seed=seed)
    return b.x, rx.y


@pytest.mark.parametrize("snr_db", [10.0, 20.0])
def test_particle_filter_matches_phase_grid(snr_db):
    p = ChannelParams.from_snr_db(snr_db, 1e-3)
    x, y = _stream(p, 1000, 3)
    pf, collapses = rate.conditional_log2_likelihood(p, y, x, 10_000, seed=4)
    gr = grid_forward(p, y, x)
    assert collapses == 0
    assert abs(pf.mean() - gr.mean()) < 0.05


def test_single_particle_exact_emission():
    p = ChannelParams(1e-2, 0.0)
    cloud = rate.ParticleCloud.concentrated(0.3, 1)
    y, x = 0.8 + 0.5j, 0.9 * np.exp(0.1j)
    lp, new = rate.log_pred_density(cloud, y, x, p, make_rng(0))
    d = y - x * np.exp(0.3j)
    exact = (-math.log(2 * math.pi * 1e-2) - abs(d) ** 2 / 2e-2) / math.log(2)
    assert lp == pytest.approx(exact, abs=1e-12)
    assert new.phases[0] == 0.3


def test_known_phase_awgn_stream_entropy():
    p = ChannelParams(0.05, 0.0)
    n = 100_000
    rng = make_rng(1, 51)
    b = SymbolBlock(np.abs(rng.standard_normal(n)), rng.uniform(0, 2 * np.pi, n))
    rx = simulate(p, b, seed=2, phi0=0.0)
    vals, _ = rate.conditional_log2_likelihood(p, rx.y, b.x, 1, seed=0, phi0=0.0)
    assert vals.mean() == pytest.approx(-math.log2(2 * math.pi * math.e * 0.05), abs=0.02)


def test_weight_collapse_and_reanchor():
    p = ChannelParams(1e-6, 1e-3)
    with pytest.raises(WeightCollapse):
        rate.log_pred_density(rate.ParticleCloud.concentrated(np.pi, 100), 1.0 + 0j,
                              1.0 + 0j, p, make_rng(0))
    # a receiver told the wrong starting phase collapses once, then recovers
    x = np.ones(200, dtype=complex)
    rx = simulate(p, SymbolBlock(np.ones(200), np.zeros(200)), seed=1, phi0=0.0)
    vals, collapses = rate.conditional_log2_likelihood(p, rx.y, x, 5000, seed=2,
                                                       phi0=np.pi)
    assert collapses >= 1
    assert np.all(np.isfinite(vals))


def test_resampling_resets_weights():
    p = ChannelParams(1e-2, 1e-3)
    cloud = rate.ParticleCloud.uniform(2000, make_rng(3))
    assert cloud.ess == pytest.approx(2000)
    _, new = rate.log_pred_density(cloud, 1.0 + 0j, 1.0 + 0j, p, make_rng(4))
    # a sharp emission on a uniform cloud drops ESS below P/2
    assert np.allclose(new.log_weights, -math.log(2000))
    assert 1.0 <= new.ess <= 2000


def test_systematic_resample_counts():
    lw = np.log(np.array([0.5, 0.25, 0.25, 0.0]) + 1e-300)
    idx = rate.systematic_resample(lw, make_rng(5))
    counts = np.bincount(idx, minlength=4)
    np.testing.assert_array_equal(counts, [2, 1, 1, 0])


def test_marginal_emission_needs_amplitudes():
    p = ChannelParams(1e-2, 1e-3)
    with pytest.raises(InvalidInput):
        rate.log_pred_density(rate.ParticleCloud.uniform(10, make_rng(0)), 1 + 0j, None,
                              p, make_rng(0))


def test_marginal_emission_is_phase_average():
    p = ChannelParams(0.03, 1e-3)
    y, R = 0.7 - 0.2j, np.array([0.1, 0.9, 2.0])
    ll, _ = rate._emission_marginal(p, y, R)
    for r_amp, v in zip(R, ll):
        f = lambda t: math.exp(-abs(y - r_amp * np.exp(1j * t)) ** 2 / 0.06) / (2 * math.pi * 0.03)  # noqa: E731
        num, _ = integrate.quad(f, 0, 2 * math.pi, epsabs=1e-13)
        assert v == pytest.approx(math.log(num / (2 * math.pi)), abs=1e-9)


def test_marginal_step_runs():
    p = ChannelParams(1e-2, 1e-3)
    rng = make_rng(0)
    cloud = rate.ParticleCloud.uniform(1000, rng)
    cloud.amplitudes = np.abs(rng.standard_normal(1000))
    lp, new = rate.log_pred_density(cloud, 0.5 + 0.5j, None, p, rng)
    assert math.isfinite(lp) and new.amplitudes.shape == (1000,)


# --- unconditional pass ------------------------------------------------------

def test_gaussian_closed_form_matches_generic_importance_sampling():
    p = ChannelParams.from_snr_db(10, 1e-3)
    law = rate.GaussianInput(p.es)
    r = np.array([[0.1], [0.7], [1.4], [2.5]])
    closed = law.output_log_density(p, r, 10_000, make_rng(0))
    generic = rate.BlockInput.output_log_density(law, p, r, 10_000, make_rng(0))
    np.testing.assert_allclose(generic, closed, atol=0.01)


def test_half_normal_output_density_quadrature_oracle():
    p = ChannelParams.from_snr_db(20, 1e-3)
    law = rate.HalfNormalInput(p.es)
    r = np.array([[0.02], [0.3], [1.0], [2.2]])
    est = law.output_log_density(p, r, 10_000, make_rng(1))
    for (rv,), e in zip(r, est):
        f = lambda R: math.exp(law.log_prior(np.array([[R]]))[0]  # noqa: E731
                               + rate._log_rice_lik(rv, R, p.sigma_w_sq))
        num, _ = integrate.quad(f, 0, 8, points=[rv], limit=400, epsabs=1e-14)
        assert e == pytest.approx(math.log(num), abs=0.01)


def test_m2_output_density_quadrature_oracle(p_mid, dist_m2):
    law = rate.OptimizedInput(p_mid, dist_m2)
    rng = make_rng(2)
    r = np.abs(rng.standard_normal((4, 2))) + 0.2
    est = law.output_log_density(p_mid, r, 10_000, make_rng(3))
    s = p_mid.sigma_w
    x, w = np.polynomial.legendre.leggauss(200)
    for rv, e in zip(r, est):
        lo = np.maximum(rv - 10 * s, 1e-9)
        hi = rv + 10 * s
        n0 = 0.5 * (hi[0] - lo[0]) * (x + 1) + lo[0]
        n1 = 0.5 * (hi[1] - lo[1]) * (x + 1) + lo[1]
        w0 = 0.5 * (hi[0] - lo[0]) * w
        w1 = 0.5 * (hi[1] - lo[1]) * w
        A, B = np.meshgrid(n0, n1, indexing="ij")
        blocks = np.stack([A, B], axis=-1)
        lf = (law.log_prior(blocks) + rate._log_rice_lik(rv[0], A, p_mid.sigma_w_sq)
              + rate._log_rice_lik(rv[1], B, p_mid.sigma_w_sq))
        val = np.sum(np.exp(lf) * w0[:, None] * w1[None, :])
        assert e == pytest.approx(math.log(val), abs=0.02)


# --- estimate_rate -------------------------------------------------------------

def test_preconditions():
    p = ChannelParams.from_snr_db(10, 1e-3)
    with pytest.raises(InvalidInput):
        rate.estimate_rate(p, "gaussian", 99, 1000)
    with pytest.raises(InvalidInput):
        rate.estimate_rate(p, "gaussian", 100, 999)
    with pytest.raises(InvalidInput):
        rate.estimate_rate(p, "uniform", 100, 1000)
    with pytest.raises(InvalidInput):
        rate.estimate_rate(p, "gaussian", 100, 1000, known_phase=True)


def test_determinism():
    p = ChannelParams.from_snr_db(5, 1e-3)
    a = rate.estimate_rate(p, "gamma", 200, 1000, seed=3)
    b = rate.estimate_rate(p, "gamma", 200, 1000, seed=3)
    assert a == b
    assert a.input_label == "gamma" and a.n_uses == 200 and a.n_particles == 1000


@pytest.mark.parametrize("snr_db, label", [(0, "gaussian"), (0, "gamma"), (20, "gaussian")])
def test_data_processing_and_nonnegativity(snr_db, label):
    p = ChannelParams.from_snr_db(snr_db, 1e-3)
    e = rate.estimate_rate(p, label, 1000, 2000, seed=1)
    assert e.std_err >= 0
    assert e.bits_per_use <= refs.c_awgn(p) + 3 * e.std_err
    assert e.bits_per_use >= -3 * e.std_err
    assert not e.unreliable


def test_block_length_rounding(p_mid, dist_m2):
    e = rate.estimate_rate(p_mid, dist_m2, 101, 1000, seed=0)
    assert e.n_uses == 102 and e.input_label == "optimized-m2"


def test_squeeze_m2_at_30db():
    p = ChannelParams.from_snr_db(30, 1e-3)
    d = quad.solve_input_params(p, 2)
    e = rate.estimate_rate(p, d, 1000, 10_000, seed=0)
    assert e.bits_per_use <= bounds_upper.upper_bound_cu_tilde(p) + 2 * e.std_err
    assert e.bits_per_use >= refs.c_lapidoth(p) - 1.5


@pytest.mark.slow
def test_particle_count_convergence():
    p = ChannelParams.from_snr_db(10, 1e-3)
    med = {}
    for P in (1000, 10_000, 100_000):
        med[P] = np.median([rate.estimate_rate(p, "gaussian", 1000, P, seed=s).bits_per_use
                            for s in range(10)])
    assert abs(med[100_000] - med[10_000]) <= 0.05


def test_m3_output_density_quadrature_oracle():
    p = ChannelParams.from_snr_db(10, 1e-3)
    d3 = quad.solve_input_params(p, 3, n_samples=2_000_000, max_rel_se=5e-3)
    law = rate.OptimizedInput(p, d3)
    r = np.array([[0.76, 1.16, 0.23], [0.80, 1.46, 1.00]])
    est = law.output_log_density(p, r, 100_000, make_rng(2))
    x, w = np.polynomial.legendre.leggauss(8)
    s = p.sigma_w

    def nodes(hi, k=12):
        e = np.linspace(0.0, hi, k + 1)
        a, b = e[:-1], e[1:]
        return (0.5 * (b - a)[:, None] * (x + 1) + a[:, None]).ravel(), \
            (0.5 * (b - a)[:, None] * w).ravel()

    for rv, e in zip(r, est):
        ns = [nodes(rv[i] + 9 * s) for i in range(3)]
        grids = np.meshgrid(*(n for n, _ in ns), indexing="ij")
        lf = law.log_prior(np.stack(grids, axis=-1)) + sum(
            rate._log_rice_lik(rv[i], g, p.sigma_w_sq) for i, g in enumerate(grids))
        wt = ns[0][1][:, None, None] * ns[1][1][None, :, None] * ns[2][1][None, None, :]
        assert e == pytest.approx(math.log(np.sum(np.exp(lf) * wt)), abs=0.01)


def test_m3_not_worse_than_m2_at_10db():
    p = ChannelParams.from_snr_db(10, 1e-3)
    e2 = rate.estimate_rate(p, quad.solve_input_params(p, 2), 1000, 10_000, seed=0)
    e3 = rate.estimate_rate(p, quad.solve_input_params(p, 3), 1000, 10_000, seed=0)
    assert e3.bits_per_use >= e2.bits_per_use - 2 * math.hypot(e2.std_err, e3.std_err)
