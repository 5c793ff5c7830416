import numpy as np
import pytest

from engines.allocation import (AllocationConfig, allocate_ibo, fixed_ibo_baseline, ibo_histogram,
                                oracle_ibo, rate_ratio_report)
from engines.channel import gen_rayleigh
from engines.errors import InvalidParameterError
from engines.mlpredict import CNNArch, forward, feature_matrix, init_model
from engines.txchain import PAConfig

CANDIDATES = tuple(float(z) for z in range(1, 10))


def _config(ofdm, predictor='oracle_simulation', sigma=1.0, K=16, model=None, n_symbols=4):
    pa = PAConfig.uniform('soft_limiter', 1.0, K)
    return AllocationConfig(CANDIDATES, sigma, predictor, pa, ofdm, n_symbols, 3, model)


def test_oracle_never_loses_to_fixed_baseline(ofdm):
    cfg = _config(ofdm)
    oracle, fixed = [], []
    for ue in range(100):
        H = gen_rayleigh(1.0, ofdm.N_U, 16, seed=500 + ue)
        oracle.append(oracle_ibo(H, cfg, seed=ue))
        fixed.append(fixed_ibo_baseline(H, 6.0, cfg.sigma_interf, cfg, seed=ue))
    report = rate_ratio_report(oracle, fixed)
    assert report['min'] >= 1 - 1e-9
    assert report['share_below_one'] == 0.0
    assert np.median(report['ratios']) >= 0.98


def test_self_comparison_gives_unit_ratios(ofdm):
    cfg = _config(ofdm, predictor='theory_rayleigh')
    results = {ue: allocate_ibo(gen_rayleigh(1.0, ofdm.N_U, 16, seed=ue), cfg) for ue in range(5)}
    report = rate_ratio_report(results, results)
    np.testing.assert_allclose(report['ratios'], 1.0)
    assert report['median'] == 1.0 and report['p90'] == 1.0
    with pytest.raises(InvalidParameterError):
        rate_ratio_report(results, {k: results[k] for k in range(3)})
    with pytest.raises(InvalidParameterError):
        rate_ratio_report([], [])


def test_theory_choice_moves_up_as_interference_drops(ofdm):
    H = gen_rayleigh(1.0, ofdm.N_U, 8, seed=21)
    chosen = []
    for sigma in (100.0, 0.1, 1e-7):
        cfg = _config(ofdm, predictor='theory_rayleigh', sigma=sigma, K=8)
        res = allocate_ibo(H, cfg, evaluate=False)
        assert len(res.candidates) == len(CANDIDATES)
        chosen.append(res.chosen_ibo_db)
    assert chosen == sorted(chosen)
    assert chosen[0] == 1.0 and chosen[-1] == 9.0


def test_chosen_candidate_maximises_predicted_sndr(ofdm):
    H = gen_rayleigh(1.0, ofdm.N_U, 16, seed=2)
    res = allocate_ibo(H, _config(ofdm, sigma=0.5))
    best = max(c['sndr'] for c in res.candidates)
    assert res.chosen['sndr'] == best
    assert res.achieved_sndr == pytest.approx(best, rel=1e-9)
    assert res.achieved_rate > 0


def test_cnn_predictor_uses_model_output(ofdm):
    model = init_model(CNNArch(4, ((1, 2), (1, 2)), (4,)), seed=0)
    model.params[-1]['b'][:] = 15.0
    cfg = _config(ofdm, predictor='cnn_model', K=4, model=model)
    H = gen_rayleigh(1.0, ofdm.N_U, 4, seed=8)
    res = allocate_ibo(H, cfg, evaluate=False)
    for row in res.candidates:
        expected = forward(model, feature_matrix(H, 10 ** (row['ibo_db'] / 10)).F)
        assert row['sdr_db'] == pytest.approx(expected, abs=1e-9)
    assert res.meta['predictor'] == 'cnn_model'


def test_config_validation(ofdm):
    pa = PAConfig.uniform('soft_limiter', 1.0, 4)
    with pytest.raises(InvalidParameterError):
        AllocationConfig((), 1.0, 'theory_rayleigh', pa, ofdm)
    with pytest.raises(InvalidParameterError):
        AllocationConfig((6.0,), 1.0, 'theory_rayleigh', pa, ofdm)
    with pytest.raises(InvalidParameterError):
        AllocationConfig((1.0, 1.0), 1.0, 'theory_rayleigh', pa, ofdm)
    with pytest.raises(InvalidParameterError):
        AllocationConfig(CANDIDATES, 0.0, 'theory_rayleigh', pa, ofdm)
    with pytest.raises(InvalidParameterError):
        AllocationConfig(CANDIDATES, 1.0, 'lookup', pa, ofdm)
    with pytest.raises(InvalidParameterError):
        AllocationConfig(CANDIDATES, 1.0, 'cnn_model', pa, ofdm)


def test_histogram_sums_to_one(ofdm):
    cfg = _config(ofdm, predictor='theory_rayleigh', sigma=1.0, K=8)
    results = [allocate_ibo(gen_rayleigh(1.0, ofdm.N_U, 8, seed=s), cfg, evaluate=False) for s in range(6)]
    hist = ibo_histogram(results, CANDIDATES)
    assert sorted(hist) == list(CANDIDATES)
    assert sum(hist.values()) == pytest.approx(1.0)


def test_fixed_baseline_scores_a_single_ibo(ofdm):
    cfg = _config(ofdm, predictor='theory_rayleigh', K=8)
    H = gen_rayleigh(1.0, ofdm.N_U, 8, seed=31)
    res = fixed_ibo_baseline(H, 6.0, 0.5, cfg, seed=1)
    assert [c['ibo_db'] for c in res.candidates] == [6.0]
    assert res.chosen_ibo_db == 6.0
    assert res.achieved_rate > 0


def test_chosen_ibo_distribution_shifts_up_with_less_interference(ofdm):
    betas = 10 ** np.random.default_rng(4).uniform(-4.0, 3.0, 200)
    channels = [gen_rayleigh(b, ofdm.N_U, 16, seed=700 + i) for i, b in enumerate(betas)]
    means = []
    for sigma in (10.0, 1e-2, 1e-5):
        cfg = _config(ofdm, predictor='theory_rayleigh', sigma=sigma)
        hist = ibo_histogram([allocate_ibo(H, cfg, evaluate=False) for H in channels], CANDIDATES)
        assert sum(hist.values()) == pytest.approx(1.0)
        means.append(sum(z * share for z, share in hist.items()))
    assert means[0] <= means[1] <= means[2]
    assert means[0] < means[2]
