import numpy as np
import pytest
from numpy.testing import assert_allclose

from engines.channel import ClusterParams, gen_clustered, gen_los, gen_rayleigh, planar_array
from engines.errors import NotMeasurableError
from engines.rxmetrics import (RxDecomposition, inband_fraction, receive_decompose, sdr_measured,
                               sdr_theory_correlated, sdr_theory_uncorrelated, sdr_theory_victim,
                               sndr_and_rate, to_db)
from engines.simulation import simulate_link
from engines.txchain import OFDMConfig, PAConfig, mrt_precoder, qpsk_symbols, scale_to_ibo, transmit

GAMMA_3DB = 10 ** 0.3
# Twelve QPSK tones are too few for Gaussian-like distortion; array-level
# acceptance runs use 120 tones with at least 4x oversampling.
WIDEBAND = OFDMConfig(N=512, N_U=120)


def test_theory_reference_values():
    assert to_db(sdr_theory_correlated(1.0)) == pytest.approx(13.84, abs=0.01)
    assert to_db(sdr_theory_victim(GAMMA_3DB)) == pytest.approx(19.22, abs=0.1)
    assert to_db(sdr_theory_victim(10 ** 0.6)) == pytest.approx(29.45, abs=0.15)


def test_uncorrelated_theory_has_array_gain():
    g = np.array([0.5, 1.0, 2.0])
    assert_allclose(sdr_theory_uncorrelated(g, 64), 64 * sdr_theory_correlated(g))
    assert sdr_theory_victim(np.inf) == np.inf


def test_rapp_theory_differs_from_soft_limiter():
    rapp = PAConfig('rapp', (1.0,), 2.0)
    assert sdr_theory_victim(4.0, rapp) != pytest.approx(sdr_theory_victim(4.0))
    assert sdr_theory_victim(8.0, rapp) > sdr_theory_victim(4.0, rapp)


def test_sdr_measured_sentinel_for_linear_link():
    dec = RxDecomposition(np.ones(12), np.zeros(12))
    assert sdr_measured(dec) == np.inf


def test_sndr_and_rate():
    sndr, rate = sndr_and_rate(10.0, 1.0, 1.0, 1e6)
    assert sndr == pytest.approx(5.0)
    assert rate == pytest.approx(1e6 * np.log2(6.0))


def test_inband_fraction_needs_oversampling(rayleigh16, soft_limiter16):
    cfg = OFDMConfig(N=12, N_U=12, subcarrier_map=tuple(range(-6, 6)))
    W = mrt_precoder(rayleigh16)
    frame = transmit(W, qpsk_symbols(4, 12, scale_to_ibo(W, soft_limiter16, cfg, 2.0),
                                     np.random.default_rng(0)), soft_limiter16, cfg)
    with pytest.raises(NotMeasurableError):
        inband_fraction(frame, cfg)
    dec = receive_decompose(frame, rayleigh16, cfg)
    assert np.isnan(dec.inband_distortion_fraction)


def _rayleigh_sdr_db(K, gamma, seeds, cfg, n_symbols=100):
    pa = PAConfig.uniform('soft_limiter', 1.0, K)
    S = D = 0.0
    for s in seeds:
        link = simulate_link(gen_rayleigh(1.0, cfg.N_U, K, seed=s), pa, cfg, gamma, n_symbols, seed=1000 + s)
        S += link.S
        D += link.D
    return float(to_db(S / D))


@pytest.mark.slow
def test_rayleigh_scheduled_sdr_matches_uncorrelated_theory(ofdm):
    measured = _rayleigh_sdr_db(16, GAMMA_3DB, range(8), ofdm)
    assert measured == pytest.approx(to_db(sdr_theory_uncorrelated(GAMMA_3DB, 16)), abs=0.7)


@pytest.mark.slow
def test_rayleigh_array_gain_slope():
    sdr = [_rayleigh_sdr_db(K, GAMMA_3DB, range(8), WIDEBAND) for K in (8, 16, 32)]
    assert sdr[0] < sdr[1] < sdr[2]
    assert (sdr[2] - sdr[0]) / 2 == pytest.approx(3.0, abs=0.5)


@pytest.mark.slow
def test_los_sdr_is_independent_of_array_size():
    cfg = WIDEBAND
    theory = to_db(sdr_theory_correlated(GAMMA_3DB))
    results = []
    for rows, cols in ((2, 2), (4, 4), (8, 8)):
        geom = planar_array(rows, cols)
        pa = PAConfig.uniform('soft_limiter', 1.0, geom.K)
        link = simulate_link(gen_los(1.0, 0.3, 0.5, geom, cfg.N_U), pa, cfg, GAMMA_3DB, 200, seed=5)
        results.append(link.sdr_db)
    assert max(results) - min(results) < 0.5
    for r in results:
        assert r == pytest.approx(theory, abs=0.5)


@pytest.mark.slow
def test_los_sdr_on_twelve_tones_sits_above_gaussian_theory(ofdm):
    theory = to_db(sdr_theory_correlated(GAMMA_3DB))
    results = []
    for rows, cols in ((2, 2), (4, 4), (8, 8)):
        geom = planar_array(rows, cols)
        pa = PAConfig.uniform('soft_limiter', 1.0, geom.K)
        link = simulate_link(gen_los(1.0, 0.3, 0.5, geom, ofdm.N_U), pa, ofdm, GAMMA_3DB, 200, seed=5)
        results.append(link.sdr_db)
    assert max(results) - min(results) < 0.1
    assert all(theory + 1.0 < r < theory + 3.0 for r in results)


@pytest.mark.slow
@pytest.mark.parametrize('gamma_db', [3.0, 6.0])
def test_inband_fraction_near_two_thirds(gamma_db):
    cfg = OFDMConfig(N=600, N_U=120)
    pa = PAConfig.uniform('soft_limiter', 1.0, 16)
    link = simulate_link(gen_rayleigh(1.0, cfg.N_U, 16, seed=4), pa, cfg, 10 ** (gamma_db / 10), 100, seed=8)
    assert link.inband_fraction == pytest.approx(2 / 3, abs=0.07)


@pytest.mark.slow
def test_shadowed_channels_can_fall_below_los_bound(ofdm):
    geom = planar_array(4, 4)
    pa = PAConfig.uniform('soft_limiter', 1.0, geom.K)
    params = ClusterParams(rician_k=100.0, shadow_sigma_db=8.0, los_azimuth=0.2, los_elevation=0.4)
    gaps = []
    for s in range(100):
        link = simulate_link(gen_clustered(1.0, params, geom, 12, 360e3, seed=s), pa, ofdm,
                             GAMMA_3DB, 100, seed=s)
        gaps.append(link.sdr_db - to_db(sdr_theory_correlated(link.gamma_avg)))
    assert min(gaps) <= -1.0
