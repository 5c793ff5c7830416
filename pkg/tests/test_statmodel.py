import numpy as np
import pytest
from numpy.testing import assert_allclose

from engines.errors import FitFailureError, InsufficientDataError, InvalidParameterError
from engines.rxmetrics import sdr_theory_victim
from engines.statmodel import (GEVParams, SDRMap, decorrelation_distance, gev_cdf, gev_fit_mle,
                               gev_logpdf, gev_ppf, gev_record, gev_sample, ks_test, params_cdf,
                               spatial_autocorrelation, synthesize_sdr_map, truncated_gev_mean,
                               truncated_gev_sample, victim_sdr_sample)

VICTIM_GEV = GEVParams(0.881, 0.4586, -0.0438)


def test_ppf_inverts_cdf():
    x = np.linspace(-0.5, 2.5, 13)
    q = gev_cdf(x, 0.881, 0.4586, -0.0438)
    assert_allclose(gev_ppf(q, 0.881, 0.4586, -0.0438), x, atol=1e-9)


def test_gumbel_limit_is_continuous():
    x = np.linspace(-1, 3, 9)
    assert_allclose(gev_logpdf(x, 0.0, 1.0, 1e-9), gev_logpdf(x, 0.0, 1.0, 1e-4), atol=1e-3)


@pytest.mark.slow
def test_fit_recovers_parameters_within_three_standard_errors():
    samples = gev_sample(VICTIM_GEV, 100_000, seed=31)
    fit = gev_fit_mle(samples)
    for name in ('mu', 'sigma', 'xi'):
        assert abs(getattr(fit, name) - getattr(VICTIM_GEV, name)) < 3 * fit.se[name]
    held_out = gev_sample(VICTIM_GEV, 100_000, seed=32)
    _, p = ks_test(held_out, params_cdf(fit), downsample_stride=10)
    assert p > 0.01


def test_fit_rejects_degenerate_samples():
    with pytest.raises(FitFailureError):
        gev_fit_mle(np.full(500, 0.9))
    with pytest.raises(InsufficientDataError):
        gev_fit_mle(np.arange(50.0))
    with pytest.raises(InvalidParameterError):
        gev_fit_mle(np.r_[np.arange(200.0), np.inf])


def test_fit_is_location_scale_equivariant():
    samples = gev_sample(VICTIM_GEV, 5000, seed=3)
    a = gev_fit_mle(samples)
    b = gev_fit_mle(10.0 + 2.0 * samples)
    assert b.mu == pytest.approx(10.0 + 2.0 * a.mu, rel=1e-4)
    assert b.sigma == pytest.approx(2.0 * a.sigma, rel=1e-4)
    assert b.xi == pytest.approx(a.xi, abs=1e-4)


def test_truncated_samples_are_positive_and_match_mean():
    heavy = GEVParams(0.3, 0.5, 0.1)
    x = truncated_gev_sample(heavy, 200_000, seed=5)
    assert np.all(x >= 0)
    assert np.mean(x) == pytest.approx(truncated_gev_mean(heavy), rel=0.01)


def test_victim_sample_scales_theory():
    one = victim_sdr_sample(2.0, VICTIM_GEV, seed=1)
    assert isinstance(one, float) and one > 0
    many = victim_sdr_sample(2.0, VICTIM_GEV, seed=1, size=50_000)
    assert np.median(many) / sdr_theory_victim(2.0) == pytest.approx(
        float(gev_ppf(0.5, 0.881, 0.4586, -0.0438)), rel=0.02)


def test_ks_needs_enough_samples():
    with pytest.raises(InsufficientDataError):
        ks_test(np.arange(100.0), params_cdf(VICTIM_GEV), downsample_stride=10)


def test_gev_record_schema():
    rec = gev_record(GEVParams(0.9, 0.4, -0.05, -10.0, 1000, {'mu': 0.01, 'sigma': 0.01, 'xi': 0.01}),
                     (0.02, 0.5))
    assert sorted(rec) == ['ks_p', 'ks_stat', 'loglik', 'mu', 'n', 'se', 'sigma', 'xi']
    assert rec['ks_p'] == 0.5


@pytest.mark.slow
def test_decorrelation_distance_of_synthetic_map():
    acfs = [spatial_autocorrelation(synthesize_sdr_map((128, 128), 4.0, 20.0, 15.0, 3.0, seed=s), 20).acf
            for s in range(10)]
    result = decorrelation_distance(np.mean(acfs, axis=0), 4.0)
    assert result.decorrelated
    assert result.distance_m == pytest.approx(20.0, abs=4.0)


def test_decorrelation_sentinels():
    never = decorrelation_distance(np.array([1.0, 0.9, 0.8, 0.7]), 4.0)
    assert not never.decorrelated and never.distance_m == np.inf
    fast = decorrelation_distance(np.array([1.0, 0.1, 0.0]), 4.0)
    assert fast.decorrelated and fast.below_resolution
    assert fast.distance_m == pytest.approx(4.0 * (1 - np.exp(-1)) / 0.9)


def test_autocorrelation_of_masked_map():
    sdr_map = synthesize_sdr_map((16, 16), 4.0, 8.0, 10.0, 2.0, seed=0)
    sdr_map.values[3, 5] = np.nan
    acf = spatial_autocorrelation(SDRMap(sdr_map.values, 4.0))
    assert acf.acf[0] == pytest.approx(1.0)
    assert np.all(acf.n_pairs > 0)


def test_autocorrelation_needs_a_grid():
    with pytest.raises(InsufficientDataError):
        spatial_autocorrelation(SDRMap(np.ones((4, 4)), 4.0))
    with pytest.raises(InsufficientDataError):
        spatial_autocorrelation(SDRMap(np.ones((10, 10)), 4.0))


def test_victim_sample_with_vanishing_scale_is_pure_theory():
    point = GEVParams(1.0, 1e-12, 0.0)
    out = victim_sdr_sample(10 ** 0.3, point, seed=3, size=1000)
    assert_allclose(out, sdr_theory_victim(10 ** 0.3), rtol=1e-9)


@pytest.mark.slow
def test_ks_is_calibrated_under_the_null():
    cdf = params_cdf(VICTIM_GEV)
    p = np.array([ks_test(gev_sample(VICTIM_GEV, 10_000, seed=900 + t), cdf)[1] for t in range(100)])
    assert np.sum(p > 0.01) >= 95
    assert 0.35 <= np.mean(p > 0.5) <= 0.65
