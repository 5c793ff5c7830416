"""
MIMO-PA Navigator: Victim SDR Statistics Engine
GEV model of the victim SDR relative to its theoretical value, truncated
sampling, spatial autocorrelation of SDR maps and KS validation.

GEV convention: F(x) = exp(-(1 + xi z)^(-1/xi)), z = (x - mu) / sigma, so
xi < 0 has a finite upper end point. The Gumbel branch is used for |xi| < 1e-6.
"""
import logging
from dataclasses import dataclass, field

import numdifftools as nd
import numpy as np
from scipy import integrate, optimize, stats

from engines.errors import (FitFailureError, InsufficientDataError,
                            InvalidParameterError, NumericError)
from engines.runtime import as_rng
from engines.rxmetrics import sdr_theory_victim

log = logging.getLogger(__name__)

GUMBEL_XI = 1e-6
EULER_GAMMA = 0.5772156649015329
MIN_FIT_SAMPLES = 100
MIN_KS_SAMPLES = 30
MIN_MAP_SIDE = 8
MAX_REDRAW_ROUNDS = 1000


@dataclass
class GEVParams:
    mu: float
    sigma: float
    xi: float
    loglik: float = float('nan')
    n: int = 0
    se: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameterError(f"GEV scale must be > 0, got {self.sigma}")


# ══════════════════════════════════════════════════════════════
# Distribution
# ══════════════════════════════════════════════════════════════

def gev_logpdf(x, mu, sigma, xi):
    z = (np.asarray(x, dtype=float) - mu) / sigma
    if abs(xi) < GUMBEL_XI:
        return -np.log(sigma) - z - np.exp(-z)
    t = 1 + xi * z
    out = np.full(z.shape, -np.inf)
    ok = t > 0
    lt = np.log(t[ok])
    out[ok] = -np.log(sigma) - (1 + 1 / xi) * lt - np.exp(-lt / xi)
    return out


def gev_cdf(x, mu, sigma, xi):
    z = (np.asarray(x, dtype=float) - mu) / sigma
    if abs(xi) < GUMBEL_XI:
        return np.exp(-np.exp(-z))
    t = 1 + xi * z
    out = np.full(z.shape, 0.0 if xi > 0 else 1.0)
    ok = t > 0
    out[ok] = np.exp(-t[ok] ** (-1 / xi))
    return out


def gev_ppf(q, mu, sigma, xi):
    q = np.asarray(q, dtype=float)
    y = -np.log(q)
    if abs(xi) < GUMBEL_XI:
        return mu - sigma * np.log(y)
    return mu + sigma * np.expm1(-xi * np.log(y)) / xi


def gev_sample(params, size, seed):
    u = as_rng(seed).uniform(size=size)
    return params.mu + params.sigma * gev_ppf(u, 0.0, 1.0, params.xi)


def params_cdf(params):
    return lambda x: gev_cdf(x, params.mu, params.sigma, params.xi)


# ══════════════════════════════════════════════════════════════
# Fitting
# ══════════════════════════════════════════════════════════════

def _negloglik(theta, z):
    mu, log_sigma, xi = theta
    ll = gev_logpdf(z, mu, np.exp(log_sigma), xi)
    total = ll.sum()
    return -total if np.isfinite(total) else np.inf


def gev_fit_mle(samples):
    """Maximum-likelihood GEV fit by Nelder-Mead on standardised data.

    Standardising by sample mean and std makes the fit translation and scale
    equivariant; the simplex starts from the Gumbel moment estimate. Standard
    errors come from the numerical Hessian of the negative log-likelihood.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("GEV samples must be finite")
    if x.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"GEV fit needs >= {MIN_FIT_SAMPLES} samples, got {x.size}")
    m, s = x.mean(), x.std()
    if not s > 0:
        raise FitFailureError("GEV fit on zero-variance samples", {'n': int(x.size), 'value': float(m)})
    z = (x - m) / s

    scale0 = np.sqrt(6) / np.pi
    start = np.array([-EULER_GAMMA * scale0, np.log(scale0), 0.0])
    opts = {'xatol': 1e-8, 'fatol': 1e-7, 'maxiter': 20000, 'maxfev': 40000}
    res = optimize.minimize(_negloglik, start, args=(z,), method='Nelder-Mead', options=opts)
    # restart once from the optimum to shake off a collapsed simplex
    res = optimize.minimize(_negloglik, res.x, args=(z,), method='Nelder-Mead', options=opts)
    if not (res.success and np.isfinite(res.fun)):
        raise FitFailureError(f"GEV likelihood search failed: {res.message}",
                              {'nit': int(res.nit), 'fun': float(res.fun)})
    mu_z, log_sig_z, xi = res.x
    mu, sigma = m + s * mu_z, s * np.exp(log_sig_z)
    loglik = -res.fun - x.size * np.log(s)
    params = GEVParams(float(mu), float(sigma), float(xi), float(loglik), int(x.size))
    params.se = _standard_errors(params, x)
    log.info(f"[GEV] fit n={x.size} mu={mu:.4f} sigma={sigma:.4f} xi={xi:.4f}")
    return params


def _standard_errors(params, x):
    def nll(theta):
        mu, sigma, xi = theta
        if sigma <= 0:
            return np.inf
        return -gev_logpdf(x, mu, sigma, xi).sum()

    try:
        hess = nd.Hessian(nll)(np.array([params.mu, params.sigma, params.xi]))
        cov = np.linalg.inv(hess)
        var = np.diag(cov)
    except (np.linalg.LinAlgError, ValueError) as e:
        log.warning(f"[GEV] information matrix not invertible: {e}")
        return {'mu': float('nan'), 'sigma': float('nan'), 'xi': float('nan')}
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        log.warning("[GEV] information matrix not positive definite, standard errors unavailable")
        return {'mu': float('nan'), 'sigma': float('nan'), 'xi': float('nan')}
    se = np.sqrt(var)
    return {'mu': float(se[0]), 'sigma': float(se[1]), 'xi': float(se[2])}


# ══════════════════════════════════════════════════════════════
# Victim SDR sampling
# ══════════════════════════════════════════════════════════════

def truncated_gev_sample(params, size, seed):
    """GEV draws with negative values redrawn until none remain."""
    rng = as_rng(seed)
    out = gev_sample(params, size, rng)
    bad = out < 0
    rounds = 0
    while np.any(bad):
        rounds += 1
        if rounds > MAX_REDRAW_ROUNDS:
            raise NumericError("GEV truncation redraw did not terminate",
                               {'mu': params.mu, 'sigma': params.sigma, 'xi': params.xi})
        out[bad] = gev_sample(params, int(bad.sum()), rng)
        bad = out < 0
    return out


def victim_sdr_sample(gamma, params, pa=None, seed=None, size=None):
    """Theoretical victim SDR (linear) times a truncated-GEV factor."""
    if not gamma > 0:
        raise InvalidParameterError(f"IBO must be > 0, got {gamma}")
    base = sdr_theory_victim(gamma, pa)
    factor = truncated_gev_sample(params, 1 if size is None else size, seed)
    out = base * factor
    return float(out[0]) if size is None else out


def truncated_gev_mean(params):
    """E[X | X > 0] for X ~ GEV(params), by quadrature in probability space."""
    q0 = float(gev_cdf(0.0, params.mu, params.sigma, params.xi))
    if q0 >= 1:
        raise NumericError("GEV has no mass above zero", {'mu': params.mu, 'xi': params.xi})
    val, err = integrate.quad(lambda q: float(gev_ppf(q, params.mu, params.sigma, params.xi)),
                              q0, 1.0, limit=200, epsrel=1e-10)
    return val / (1 - q0)


# ══════════════════════════════════════════════════════════════
# Spatial statistics
# ══════════════════════════════════════════════════════════════

@dataclass
class SDRMap:
    values: np.ndarray
    resolution: float
    mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidParameterError(f"SDR map must be 2-D, got shape {self.values.shape}")
        if not self.resolution > 0:
            raise InvalidParameterError(f"map resolution must be > 0, got {self.resolution}")
        if self.mask is None:
            self.mask = np.isfinite(self.values)
        self.mask = np.asarray(self.mask, dtype=bool) & np.isfinite(self.values)


@dataclass
class AutoCorrelation:
    lags: np.ndarray
    acf: np.ndarray
    n_pairs: np.ndarray


@dataclass
class DecorrelationResult:
    distance_m: float
    decorrelated: bool
    below_resolution: bool = False


def _axis_acf(v, ok, max_lag, axis):
    acf = np.zeros(max_lag + 1)
    pairs = np.zeros(max_lag + 1, dtype=int)
    for lag in range(max_lag + 1):
        if axis == 1:
            a, b = v[:, :v.shape[1] - lag], v[:, lag:]
            ma, mb = ok[:, :ok.shape[1] - lag], ok[:, lag:]
        else:
            a, b = v[:v.shape[0] - lag, :], v[lag:, :]
            ma, mb = ok[:ok.shape[0] - lag, :], ok[lag:, :]
        both = ma & mb
        pairs[lag] = both.sum()
        acf[lag] = (a[both] * b[both]).mean() if pairs[lag] else np.nan
    return acf, pairs


def spatial_autocorrelation(sdr_map, max_lag=None):
    """Normalised autocovariance of the mean-removed map along rows and columns."""
    ok = sdr_map.mask
    rows, cols = sdr_map.values.shape
    if min(rows, cols) < MIN_MAP_SIDE or ok.sum() < MIN_MAP_SIDE ** 2:
        raise InsufficientDataError(f"autocorrelation needs an {MIN_MAP_SIDE}x{MIN_MAP_SIDE} valid grid, "
                                    f"got {rows}x{cols} with {int(ok.sum())} valid cells")
    v = np.where(ok, sdr_map.values - sdr_map.values[ok].mean(), 0.0)
    var = np.mean(v[ok] ** 2)
    if not var > 0:
        raise InsufficientDataError("SDR map has zero variance, autocorrelation undefined")
    max_lag = max_lag or min(rows, cols) // 2
    acf_r, n_r = _axis_acf(v, ok, max_lag, axis=1)
    acf_c, n_c = _axis_acf(v, ok, max_lag, axis=0)
    acf = np.nanmean(np.vstack([acf_r, acf_c]), axis=0) / var
    return AutoCorrelation(np.arange(max_lag + 1), acf, n_r + n_c)


def decorrelation_distance(acf, resolution):
    """Lag at which the ACF first drops to 1/e, linearly interpolated, in metres."""
    values = np.asarray(getattr(acf, 'acf', acf), dtype=float)
    target = np.exp(-1)
    below = np.flatnonzero(values <= target)
    if below.size == 0:
        log.info("[ACF] autocorrelation never reaches 1/e")
        return DecorrelationResult(float('inf'), False)
    i = int(below[0])
    if i == 0:
        return DecorrelationResult(0.0, True, True)
    a, b = values[i - 1], values[i]
    lag = (i - 1) + (a - target) / (a - b)
    return DecorrelationResult(float(lag * resolution), True, i == 1)


def synthesize_sdr_map(shape, resolution, corr_length, mean_db, std_db, seed):
    """Gaussian SDR map (dB) with covariance std^2 exp(-|dx|/L) exp(-|dy|/L).

    The kernel is separable, so the field is A Z B^T with A, B the Cholesky
    factors of the per-axis exponential correlation matrices.
    """
    rows, cols = shape
    if corr_length <= 0:
        raise InvalidParameterError(f"correlation length must be > 0, got {corr_length}")

    def chol(n):
        d = resolution * np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        return np.linalg.cholesky(np.exp(-d / corr_length) + 1e-12 * np.eye(n))

    z = as_rng(seed).standard_normal((rows, cols))
    field_db = chol(rows) @ z @ chol(cols).T
    return SDRMap(mean_db + std_db * field_db, resolution)


# ══════════════════════════════════════════════════════════════
# Goodness of fit
# ══════════════════════════════════════════════════════════════

def decimate(samples, stride):
    if stride < 1:
        raise InvalidParameterError(f"stride must be >= 1, got {stride}")
    return np.asarray(samples).ravel()[::int(stride)]


def ks_test(samples, cdf, downsample_stride=1):
    x = decimate(samples, downsample_stride)
    if x.size < MIN_KS_SAMPLES:
        raise InsufficientDataError(f"KS test needs >= {MIN_KS_SAMPLES} samples after decimation, got {x.size}")
    res = stats.kstest(x, cdf, method='asymp')
    return float(res.statistic), float(res.pvalue)


def gev_record(params, ks=None):
    rec = {'mu': params.mu, 'sigma': params.sigma, 'xi': params.xi,
           'loglik': params.loglik, 'n': params.n,
           'ks_stat': None, 'ks_p': None}
    if ks is not None:
        rec['ks_stat'], rec['ks_p'] = ks
    rec['se'] = dict(params.se)
    return rec
