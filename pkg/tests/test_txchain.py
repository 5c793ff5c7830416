import numpy as np
import pytest
from numpy.testing import assert_allclose

from engines.channel import ChannelMatrix, gen_rayleigh
from engines.errors import DegenerateChannelError, IdleAntennaError, InvalidParameterError
from engines.txchain import (OFDMConfig, PAConfig, add_cyclic_prefix, am_am, bussgang_lambda,
                             bussgang_moments, distortion_extract, ibo_per_antenna, mrt_precoder,
                             ofdm_demodulate, ofdm_modulate, pa_apply, pa_curve, qpsk_symbols,
                             scale_to_ibo, transmit, tx_distortion_power)

SOFT = PAConfig('soft_limiter', (1.0,))
RAPP = PAConfig('rapp', (1.0,), 2.0)


def test_soft_limiter_lambda_reference_values():
    assert bussgang_lambda(1.0, SOFT) == pytest.approx(0.771523, abs=1e-6)
    assert tx_distortion_power(1.0, 1.0, SOFT) == pytest.approx(0.036872, abs=1e-6)
    assert bussgang_lambda(np.inf, SOFT) == 1.0


def test_lambda_increases_with_backoff():
    g = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    for pa in (SOFT, RAPP):
        lam = bussgang_lambda(g, pa)
        assert np.all(np.diff(lam) > 0)
        assert np.all((lam > 0) & (lam < 1))


def test_distortion_power_scales_with_antenna_power():
    d1 = tx_distortion_power(2.0, 1.0, RAPP)
    d3 = tx_distortion_power(2.0, 3.0, RAPP)
    assert d3 == pytest.approx(3 * d1)


@pytest.mark.slow
@pytest.mark.parametrize('pa', [SOFT, RAPP], ids=['soft_limiter', 'rapp'])
@pytest.mark.parametrize('gamma', [0.5, 1.0, 2.0, 4.0])
def test_lambda_matches_monte_carlo(pa, gamma):
    rng = np.random.default_rng(2024)
    cross = power = 0.0
    for _ in range(4):
        x = (rng.standard_normal(1_000_000) + 1j * rng.standard_normal(1_000_000)) / np.sqrt(2)
        a = np.abs(x)
        y = am_am(a, gamma, pa) * np.exp(1j * np.angle(x))
        cross += np.sum((y * x.conj()).real)
        power += np.sum(a ** 2)
    assert cross / power == pytest.approx(bussgang_lambda(gamma, pa), rel=1e-3)


def test_bussgang_moments_reject_nonpositive_ibo():
    with pytest.raises(InvalidParameterError):
        bussgang_moments(0.0, SOFT)


def test_soft_limiter_clips_amplitude_keeps_phase():
    pa = PAConfig('soft_limiter', (1.0, 4.0))
    y = np.array([[0.5 + 0.5j, 3.0j], [1.0, -3.0]])
    out = pa_apply(y, pa)
    assert_allclose(out[0], [0.5 + 0.5j, 1.0j])
    assert_allclose(out[1], [1.0, -2.0])


def test_rapp_curve_shape():
    curve = pa_curve(RAPP, n_points=11, max_ratio_db=10)
    a, b = curve['input_amplitude'], curve['output_amplitude']
    assert b[0] == 0.0
    assert np.all(np.diff(b) > 0)
    assert np.all(b <= np.sqrt(1.0) + 1e-12)
    assert am_am(1.0, 1.0, RAPP) == pytest.approx(2 ** (-1 / 4))
    assert am_am(1e-3, 1.0, RAPP) == pytest.approx(1e-3, rel=1e-9)


def test_mrt_precoder_unit_rows(rayleigh16):
    W = mrt_precoder(rayleigh16).W
    assert_allclose(np.linalg.norm(W, axis=1), 1.0)
    assert_allclose(np.sum(W * rayleigh16.H, axis=1).imag, 0.0, atol=1e-12)


def test_mrt_rejects_zero_subcarrier():
    H = np.ones((3, 4), dtype=complex)
    H[1] = 0
    with pytest.raises(DegenerateChannelError):
        mrt_precoder(ChannelMatrix(H, 1.0, {}))


def test_ofdm_modulation_is_invertible(ofdm, gaussian_rng):
    x = gaussian_rng.standard_normal((3, 12, 4)) + 1j * gaussian_rng.standard_normal((3, 12, 4))
    y = ofdm_modulate(x, ofdm)
    assert y.shape == (3, 4, 64)
    assert_allclose(ofdm_demodulate(y, ofdm), x, atol=1e-12)


def test_cyclic_prefix_copies_tail():
    y = np.arange(8.0).reshape(1, 8)
    out = add_cyclic_prefix(y, 3)
    assert out.shape == (1, 11)
    assert_allclose(out[0, :3], [5.0, 6.0, 7.0])


def test_ofdm_config_validation():
    with pytest.raises(InvalidParameterError):
        OFDMConfig(N=8, N_U=12)
    with pytest.raises(InvalidParameterError):
        OFDMConfig(N=64, N_U=2, subcarrier_map=(1, 1))


def test_scale_to_ibo_hits_target(rayleigh16, soft_limiter16, ofdm):
    W = mrt_precoder(rayleigh16)
    power = scale_to_ibo(W, soft_limiter16, ofdm, 2.0)
    symbols = qpsk_symbols(20, 12, power, np.random.default_rng(0))
    frame = transmit(W, symbols, soft_limiter16, ofdm)
    assert frame.gamma_avg == pytest.approx(2.0, rel=1e-9)
    lo, hi = frame.ibo_spread_db()
    assert lo <= 10 * np.log10(2.0) <= hi


def test_distortion_is_uncorrelated_with_input():
    cfg = OFDMConfig(N=256, N_U=128)
    pa = PAConfig.uniform('soft_limiter', 1.0, 4)
    H = gen_rayleigh(1.0, 128, 4, seed=9)
    W = mrt_precoder(H)
    power = scale_to_ibo(W, pa, cfg, 2.0)
    frame = transmit(W, qpsk_symbols(50, 128, power, np.random.default_rng(1)), pa, cfg)
    corr = np.mean(frame.d_hat * frame.y.conj(), axis=(0, 2))
    ref = np.mean(np.abs(frame.y) ** 2, axis=(0, 2))
    assert np.all(np.abs(corr) / ref < 0.02)


def test_idle_antenna_is_excluded(ofdm):
    H = gen_rayleigh(1.0, 12, 4, seed=2).H
    H[:, 2] = 0
    pa = PAConfig.uniform('soft_limiter', 1.0, 4)
    W = mrt_precoder(H)
    frame = transmit(W, qpsk_symbols(5, 12, 1.0, np.random.default_rng(0)), pa, ofdm)
    assert frame.idle.tolist() == [False, False, True, False]
    assert np.isinf(frame.gamma_k[2])
    assert np.all(np.isfinite(frame.ibo_spread_db()))
    with pytest.raises(IdleAntennaError):
        ibo_per_antenna(frame.p_k, pa)


def test_scale_to_ibo_worked_example(rayleigh16, ofdm):
    pa = PAConfig.uniform('soft_limiter', 2e-3, 16)
    power = scale_to_ibo(mrt_precoder(rayleigh16), pa, ofdm, 2.0)
    assert power == pytest.approx(32e-3 / (2 * 12), rel=1e-12)
    assert power == pytest.approx(1.333e-3, abs=1e-6)


def test_rapp_with_large_smoothness_approaches_soft_limiter(gaussian_rng):
    y = (gaussian_rng.standard_normal((1, 200_000)) + 1j * gaussian_rng.standard_normal((1, 200_000))) / np.sqrt(2)
    rapp = pa_apply(y, PAConfig('rapp', (1.0,), 100.0))
    soft = pa_apply(y, SOFT)
    assert np.mean(np.abs(rapp - soft) ** 2) < 1e-3


def test_distortion_extract_accepts_scalar_gain():
    y = np.arange(6.0).reshape(2, 3) + 1j
    y_hat = 0.5 * y + 0.1
    np.testing.assert_array_equal(distortion_extract(y, y_hat, 0.5), distortion_extract(y, y_hat, [0.5, 0.5]))
    assert_allclose(distortion_extract(y, y_hat, 0.5), np.full((2, 3), 0.1))


@pytest.mark.slow
@pytest.mark.parametrize('gamma', [1.0, 2.0, 4.0])
def test_distortion_power_matches_monte_carlo(gamma):
    rng = np.random.default_rng(77)
    lam = bussgang_lambda(gamma, SOFT)
    total = count = 0.0
    for _ in range(4):
        x = (rng.standard_normal((2, 500_000)) + 1j * rng.standard_normal((2, 500_000))) / np.sqrt(2)
        y_hat = am_am(np.abs(x), gamma, SOFT) * np.exp(1j * np.angle(x))
        d = distortion_extract(x, y_hat, lam)
        total += np.sum(np.abs(d) ** 2)
        count += d.size
    assert total / count == pytest.approx(tx_distortion_power(gamma, 1.0, SOFT), rel=0.03)
