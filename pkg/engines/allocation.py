"""
MIMO-PA Navigator: IBO Allocation Engine
Distortion-aware choice of the average IBO for one scheduled UE:
  1. feature matrix per candidate IBO
  2. SDR per candidate from the predictor (CNN, Rayleigh theory or simulation)
  3. received wanted power from array gain, Bussgang gain and transmit power
  4. distortion estimate D = S / SDR
  5. candidate with the highest S / (D + sigma_interf), ties to the larger IBO
The achieved rate is always measured by simulating the chosen IBO.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from engines import mlpredict
from engines.errors import AllocationError, InvalidParameterError, NavigatorError
from engines.rxmetrics import (from_db, s_rx_theory, sdr_theory_uncorrelated,
                               sndr_and_rate, to_db)
from engines.simulation import simulate_link
from engines.txchain import bussgang_lambda

log = logging.getLogger(__name__)

PREDICTORS = ('cnn_model', 'oracle_simulation', 'theory_rayleigh')
DEFAULT_CANDIDATES_DB = tuple(float(z) for z in range(1, 10))
BASELINE_IBO_DB = 6.0


@dataclass(frozen=True)
class AllocationConfig:
    ibo_candidates_db: tuple
    sigma_interf: float
    predictor: str
    pa: object
    ofdm: object
    n_symbols: int = 100
    seed: int = 0
    model: object = None

    min_candidates = 2

    def __post_init__(self):
        object.__setattr__(self, 'ibo_candidates_db', tuple(float(z) for z in self.ibo_candidates_db))
        if len(self.ibo_candidates_db) < self.min_candidates:
            raise InvalidParameterError(f"at least {self.min_candidates} IBO candidates are required, "
                                        f"got {len(self.ibo_candidates_db)}")
        if len(set(self.ibo_candidates_db)) != len(self.ibo_candidates_db):
            raise InvalidParameterError("IBO candidates must be unique")
        if not self.sigma_interf > 0:
            raise InvalidParameterError(f"sigma_interf must be > 0, got {self.sigma_interf}")
        if self.predictor not in PREDICTORS:
            raise InvalidParameterError(f"unknown predictor '{self.predictor}', expected one of {PREDICTORS}")
        if self.predictor == 'cnn_model' and self.model is None:
            raise InvalidParameterError("cnn_model predictor needs a trained model")

    def with_candidates(self, candidates_db):
        return AllocationConfig(tuple(candidates_db), self.sigma_interf, self.predictor, self.pa,
                                self.ofdm, self.n_symbols, self.seed, self.model)


class _FixedIBOConfig(AllocationConfig):
    """One-candidate config behind fixed_ibo_baseline."""
    min_candidates = 1


@dataclass
class AllocationResult:
    chosen_ibo_db: float
    candidates: list
    achieved_sndr: float = float('nan')
    achieved_rate: float = float('nan')
    meta: dict = field(default_factory=dict)

    @property
    def chosen(self):
        return next(c for c in self.candidates if c['ibo_db'] == self.chosen_ibo_db)


def _predict(H, gamma, cfg, seed):
    """(sdr_linear, s_rx) for one candidate; s_rx is None unless measured."""
    if cfg.predictor == 'cnn_model':
        F = mlpredict.feature_matrix(H, gamma).F
        return float(from_db(mlpredict.forward(cfg.model, F))), None
    if cfg.predictor == 'theory_rayleigh':
        return sdr_theory_uncorrelated(gamma, H.K, cfg.pa), None
    link = simulate_link(H, cfg.pa, cfg.ofdm, gamma, cfg.n_symbols, seed)
    return link.sdr, link.S


def allocate_ibo(H, cfg, seed=None, evaluate=True):
    seed = cfg.seed if seed is None else seed
    beta_hat = float(np.mean(np.abs(H.H) ** 2))
    p_total_max = float(np.sum(cfg.pa.p_max_array))
    rows = []
    for z_db in cfg.ibo_candidates_db:
        gamma = 10 ** (z_db / 10)
        try:
            sdr, s_measured = _predict(H, gamma, cfg, seed)
        except NavigatorError as e:
            raise AllocationError(f"predictor '{cfg.predictor}' failed at IBO {z_db} dB: {e}", z_db) from e
        if np.isnan(sdr) or sdr <= 0:
            raise AllocationError(f"predictor returned SDR {sdr} at IBO {z_db} dB", z_db)
        if s_measured is None:
            lam = bussgang_lambda(gamma, cfg.pa)
            s_rx = s_rx_theory(H.K, beta_hat, lam, p_total_max / gamma)
        else:
            s_rx = s_measured
        d_hat = s_rx / sdr
        sndr = s_rx / (d_hat + cfg.sigma_interf)
        rows.append({'ibo_db': z_db, 'sdr_db': float(to_db(sdr)), 's_rx': float(s_rx),
                     'd_hat': float(d_hat), 'sndr': float(sndr)})
    best = max(rows, key=lambda r: (r['sndr'], r['ibo_db']))
    result = AllocationResult(best['ibo_db'], rows, meta={'predictor': cfg.predictor})
    if evaluate:
        evaluate_rate(H, result, cfg, seed)
    return result


def evaluate_rate(H, result, cfg, seed=None):
    """Measure SNDR and rate of the chosen IBO by simulation."""
    seed = cfg.seed if seed is None else seed
    link = simulate_link(H, cfg.pa, cfg.ofdm, 10 ** (result.chosen_ibo_db / 10), cfg.n_symbols, seed)
    result.achieved_sndr, result.achieved_rate = sndr_and_rate(link.S, link.D, cfg.sigma_interf,
                                                               cfg.ofdm.bandwidth)
    return result


def fixed_ibo_baseline(H, ibo_db, sigma_interf, cfg, seed=None):
    """Single-candidate allocation at a fixed IBO, scored with cfg's predictor."""
    base = _FixedIBOConfig((ibo_db,), sigma_interf, cfg.predictor, cfg.pa, cfg.ofdm,
                           cfg.n_symbols, cfg.seed, cfg.model)
    return allocate_ibo(H, base, seed)


def oracle_ibo(H, cfg, seed=None):
    oracle = AllocationConfig(cfg.ibo_candidates_db, cfg.sigma_interf, 'oracle_simulation', cfg.pa,
                              cfg.ofdm, cfg.n_symbols, cfg.seed)
    return allocate_ibo(H, oracle, seed)


def _rate(r):
    return r.achieved_rate if isinstance(r, AllocationResult) else float(r)


def rate_ratio_report(results_a, results_b):
    """Per-UE rate ratio a/b with its empirical CDF, median and 90th percentile."""
    if isinstance(results_a, dict) or isinstance(results_b, dict):
        if not (isinstance(results_a, dict) and isinstance(results_b, dict)) or set(results_a) != set(results_b):
            raise InvalidParameterError("rate comparison needs the same UE set on both sides")
        keys = sorted(results_a)
        a = [results_a[k] for k in keys]
        b = [results_b[k] for k in keys]
    else:
        if len(results_a) != len(results_b):
            raise InvalidParameterError(f"rate comparison over {len(results_a)} vs {len(results_b)} UEs")
        keys, a, b = list(range(len(results_a))), list(results_a), list(results_b)
    if not keys:
        raise InvalidParameterError("rate comparison over an empty UE set")
    ratios = np.array([_rate(x) / _rate(y) for x, y in zip(a, b)])
    ordered = np.sort(ratios)
    return {
        'ue_ids': keys,
        'ratios': ratios,
        'cdf_ratio': ordered,
        'cdf_prob': np.arange(1, len(ordered) + 1) / len(ordered),
        'median': float(np.median(ratios)),
        'p90': float(np.percentile(ratios, 90)),
        'min': float(ordered[0]),
        'share_below_one': float(np.mean(ratios < 1)),
    }


def ibo_histogram(results, candidates_db):
    """Share of UEs assigned each candidate IBO."""
    chosen = np.array([r.chosen_ibo_db for r in results])
    return {float(z): float(np.mean(chosen == z)) for z in candidates_db}
