import math

import numpy as np
import pytest
from scipy import stats

from wiener_capacity.errors import InvalidInput
from wiener_capacity.model import (ChannelParams, SymbolBlock, make_rng, simulate,
                                   snr_db)


def test_params_validation():
    for bad in [(0.0, 1e-3), (-1.0, 1e-3), (1e-3, -1e-9), (float("nan"), 1e-3)]:
        with pytest.raises(InvalidInput):
            ChannelParams(*bad)
    with pytest.raises(InvalidInput):
        ChannelParams(1e-3, 1e-3, es=0.0)
    with pytest.raises(InvalidInput):
        ChannelParams(1e-3, float("inf"))


@pytest.mark.parametrize("sw2, expected", [(0.5, 0.0), (5e-3, 20.0), (5e-6, 50.0)])
def test_snr_db(sw2, expected):
    assert snr_db(ChannelParams(sw2, 1e-3)) == pytest.approx(expected, abs=1e-9)


def test_from_snr_db_roundtrip():
    p = ChannelParams.from_snr_db(17.5, 1e-3, es=2.0)
    assert p.snr() == pytest.approx(10 ** 1.75)
    assert snr_db(p) == pytest.approx(17.5)


def test_from_linewidth():
    p = ChannelParams.from_linewidth(100e3, 1e-9, 1e-3)
    assert p.sigma_delta_sq == pytest.approx(4 * math.pi * 1e-4)


def test_symbol_block_wraps_and_validates():
    b = SymbolBlock([1.0, 2.0], [-0.5, 7.0])
    assert np.all((b.phases >= 0) & (b.phases < 2 * np.pi))
    np.testing.assert_allclose(b.x, [np.exp(-0.5j), 2 * np.exp(7j)])
    with pytest.raises(InvalidInput):
        SymbolBlock([-1.0], [0.0])
    with pytest.raises(InvalidInput):
        simulate(ChannelParams(1e-2, 1e-3), SymbolBlock([], []), seed=0)


def test_noise_free_identity():
    p = ChannelParams(1e-300, 0.0)
    rx = simulate(p, SymbolBlock([1.0], [0.0]), seed=3, phi0=0.0)
    assert rx.amplitudes[0] == pytest.approx(1.0, abs=1e-12)
    assert min(rx.phases[0], 2 * np.pi - rx.phases[0]) < 1e-12


def test_zero_innovation_constant_phase():
    p = ChannelParams(1e-2, 0.0)
    rx = simulate(p, SymbolBlock(np.ones(50), np.zeros(50)), seed=9, phi0=1.25)
    assert np.all(rx.phase_path == 1.25)


def test_increment_variance():
    p = ChannelParams(5e-3, 1e-3)
    n = 100_000
    rx = simulate(p, SymbolBlock(np.ones(n), np.zeros(n)), seed=1, phi0=0.0)
    d = rx.increments
    v = d.var(ddof=1)
    se = 1e-3 * math.sqrt(2.0 / (d.size - 1))
    assert abs(v - 1e-3) < 3 * se


def test_polar_cartesian_consistency():
    rng = make_rng(5)
    n = 10_000
    b = SymbolBlock(rng.rayleigh(size=n), rng.uniform(0, 2 * np.pi, n))
    rx = simulate(ChannelParams(0.05, 1e-2), b, seed=2)
    np.testing.assert_allclose(np.abs(rx.y), rx.amplitudes, rtol=1e-10)
    dphase = np.angle(np.exp(1j * (np.angle(rx.y) - rx.phases)))
    assert np.max(np.abs(dphase)) < 1e-10
    # recorded noise components reproduce r and the angle offset
    np.testing.assert_allclose(
        np.hypot(b.amplitudes + rx.inphase_noise, rx.quadrature_noise), rx.amplitudes,
        rtol=1e-12)
    resid = rx.phases - b.phases - rx.phase_path - np.arctan2(
        rx.quadrature_noise, b.amplitudes + rx.inphase_noise)
    assert np.max(np.abs(np.angle(np.exp(1j * resid)))) < 1e-9


def test_output_phase_uniform():
    rng = make_rng(11)
    n = 100_000
    b = SymbolBlock(np.abs(rng.standard_normal(n)), rng.uniform(0, 2 * np.pi, n))
    rx = simulate(ChannelParams(5e-3, 1e-3), b, seed=4)
    assert stats.kstest(rx.phases / (2 * np.pi), "uniform").pvalue > 0.01


def test_determinism():
    b = SymbolBlock(np.ones(100), np.zeros(100))
    p = ChannelParams(1e-2, 1e-3)
    a1, a2 = simulate(p, b, seed=7), simulate(p, b, seed=7)
    for f in ("amplitudes", "phases", "phase_path", "inphase_noise", "quadrature_noise"):
        assert np.array_equal(getattr(a1, f), getattr(a2, f))
    assert not np.array_equal(simulate(p, b, seed=8).amplitudes, a1.amplitudes)


def test_nonfinite_phi0_rejected():
    with pytest.raises(InvalidInput):
        simulate(ChannelParams(1e-2, 1e-3), SymbolBlock([1.0], [0.0]), 0, phi0=float("nan"))
