"""
MIMO-PA Navigator: Transmit Chain Engine
MRT precoding, OFDM modulation, per-antenna power and IBO accounting,
memoryless PA models and the Bussgang split of the PA output.

Array shapes:
  W        N_U x K            precoder, unit norm per subcarrier
  symbols  S x N_U            S OFDM symbols
  y        S x K x N          time samples, CP excluded
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

from engines.channel import ChannelMatrix
from engines.errors import (DegenerateChannelError, IdleAntennaError,
                            InvalidParameterError, NumericError)

log = logging.getLogger(__name__)

PA_KINDS = ('soft_limiter', 'rapp')
QUAD_EPSREL = 1e-8


# ══════════════════════════════════════════════════════════════
# Configuration types
# ══════════════════════════════════════════════════════════════

def default_subcarrier_map(n_used):
    """Contiguous block around DC with DC itself left empty."""
    lower = n_used // 2
    upper = n_used - lower
    return tuple(range(-lower, 0)) + tuple(range(1, upper + 1))


@dataclass(frozen=True)
class OFDMConfig:
    N: int = 64
    N_U: int = 12
    N_CP: int = 16
    subcarrier_spacing: float = 360e3
    subcarrier_map: tuple = None

    def __post_init__(self):
        if self.subcarrier_map is None:
            object.__setattr__(self, 'subcarrier_map', default_subcarrier_map(self.N_U))
        else:
            object.__setattr__(self, 'subcarrier_map', tuple(int(i) for i in self.subcarrier_map))
        if not 1 <= self.N_U <= self.N:
            raise InvalidParameterError(f"need 1 <= N_U <= N, got N_U={self.N_U}, N={self.N}")
        if self.N_CP < 0:
            raise InvalidParameterError(f"N_CP must be >= 0, got {self.N_CP}")
        if self.subcarrier_spacing <= 0:
            raise InvalidParameterError("subcarrier spacing must be > 0")
        m = self.subcarrier_map
        if len(m) != self.N_U or len(set(m)) != len(m):
            raise InvalidParameterError(f"subcarrier map must list {self.N_U} unique indices")
        if min(m) < -self.N // 2 or max(m) > self.N // 2 - 1:
            raise InvalidParameterError(f"subcarrier indices must lie in [-N/2, N/2-1] for N={self.N}")

    @property
    def bins(self):
        return np.mod(np.asarray(self.subcarrier_map), self.N)

    @property
    def bandwidth(self):
        return self.N_U * self.subcarrier_spacing

    @property
    def oversampling(self):
        return self.N / self.N_U


@dataclass(frozen=True)
class PAConfig:
    kind: str
    p_max: tuple
    smoothness: float = 2.0

    def __post_init__(self):
        if self.kind not in PA_KINDS:
            raise InvalidParameterError(f"unknown PA kind '{self.kind}', expected one of {PA_KINDS}")
        object.__setattr__(self, 'p_max', tuple(float(p) for p in np.atleast_1d(self.p_max)))
        if not self.p_max or min(self.p_max) <= 0:
            raise InvalidParameterError("p_max entries must be > 0")
        if not self.smoothness > 0:
            raise InvalidParameterError(f"smoothness must be > 0, got {self.smoothness}")

    @classmethod
    def uniform(cls, kind, p_max_w, K, smoothness=2.0):
        return cls(kind, (float(p_max_w),) * K, smoothness)

    @property
    def K(self):
        return len(self.p_max)

    @property
    def p_max_array(self):
        return np.asarray(self.p_max)


@dataclass
class Precoder:
    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)


@dataclass
class TxFrame:
    y: np.ndarray
    y_hat: np.ndarray
    d_hat: np.ndarray
    lam: np.ndarray
    p_k: np.ndarray
    gamma_k: np.ndarray
    gamma_avg: float
    W: np.ndarray
    symbols: np.ndarray
    cfg: OFDMConfig
    pa: PAConfig
    idle: np.ndarray = field(default=None)

    @property
    def n_symbols(self):
        return self.y.shape[0]

    @cached_property
    def distortion_spectrum(self):
        """Normalised DFT of d_hat over all N bins, shape S x K x N."""
        return np.fft.fft(self.d_hat, axis=-1) / self.cfg.N

    def ibo_spread_db(self):
        """(min, max) per-antenna IBO in dB over active antennas."""
        g = self.gamma_k[~self.idle]
        return 10 * np.log10(g.min()), 10 * np.log10(g.max())


# ══════════════════════════════════════════════════════════════
# Precoding and OFDM
# ══════════════════════════════════════════════════════════════

def mrt_precoder(H):
    H = H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise DegenerateChannelError(f"channel is zero on subcarriers {np.flatnonzero(norms == 0).tolist()}")
    return Precoder(H.conj() / norms[:, None])


def precode(W, symbols):
    W = W.W if isinstance(W, Precoder) else np.asarray(W)
    s = np.asarray(symbols)
    if s.shape[-1] != W.shape[0]:
        raise InvalidParameterError(f"{s.shape[-1]} symbols for a precoder with {W.shape[0]} subcarriers")
    return s[..., :, None] * W


def ofdm_modulate(x, cfg):
    x = np.asarray(x)
    if x.shape[-2] != cfg.N_U:
        raise InvalidParameterError(f"x has {x.shape[-2]} subcarrier rows, config uses {cfg.N_U}")
    spec = np.zeros(x.shape[:-2] + (x.shape[-1], cfg.N), dtype=complex)
    spec[..., cfg.bins] = np.swapaxes(x, -1, -2)
    return cfg.N * np.fft.ifft(spec, axis=-1)


def ofdm_demodulate(y, cfg):
    """Inverse of ofdm_modulate at the used bins, shape (..., N_U, K)."""
    spec = np.fft.fft(np.asarray(y), axis=-1) / cfg.N
    return np.swapaxes(spec[..., cfg.bins], -1, -2)


def add_cyclic_prefix(y, n_cp):
    if n_cp == 0:
        return np.asarray(y)
    return np.concatenate([y[..., -n_cp:], y], axis=-1)


def qpsk_symbols(n_symbols, n_used, power, rng):
    bits = rng.integers(0, 2, size=(n_symbols, n_used, 2))
    return np.sqrt(power / 2) * ((2 * bits[..., 0] - 1) + 1j * (2 * bits[..., 1] - 1))


# ══════════════════════════════════════════════════════════════
# Power accounting
# ══════════════════════════════════════════════════════════════

def per_antenna_power(W, symbol_power):
    W = W.W if isinstance(W, Precoder) else np.asarray(W)
    if not symbol_power > 0:
        raise InvalidParameterError(f"symbol power must be > 0, got {symbol_power}")
    return np.sum(np.abs(W) ** 2, axis=0) * symbol_power


def ibo_per_antenna(p, pa):
    p = np.asarray(p, dtype=float)
    idle = p <= 0
    if np.any(idle):
        raise IdleAntennaError(f"antennas {np.flatnonzero(idle).tolist()} carry no power", np.flatnonzero(idle))
    return pa.p_max_array / p


def ibo_average(p, pa):
    return float(np.sum(pa.p_max_array) / np.sum(p))


def scale_to_ibo(W, pa, cfg, target_gamma):
    """Symbol power putting the average IBO at target_gamma."""
    W = W.W if isinstance(W, Precoder) else np.asarray(W)
    if not target_gamma > 0:
        raise InvalidParameterError(f"target IBO must be > 0, got {target_gamma}")
    if W.shape[0] != cfg.N_U:
        raise InvalidParameterError(f"precoder has {W.shape[0]} rows, config uses {cfg.N_U}")
    return float(np.sum(pa.p_max_array) / (target_gamma * np.sum(np.abs(W) ** 2)))


# ══════════════════════════════════════════════════════════════
# PA models
# ══════════════════════════════════════════════════════════════

def am_am(amplitude, p_max, pa):
    """Output amplitude for input amplitude under the PA's AM-AM curve."""
    a = np.asarray(amplitude, dtype=float)
    if pa.kind == 'soft_limiter':
        return np.minimum(a, np.sqrt(p_max))
    p = pa.smoothness
    return a / (1 + (a ** 2 / p_max) ** p) ** (1 / (2 * p))


def pa_apply(y, pa):
    y = np.asarray(y, dtype=complex)
    p_max = pa.p_max_array[:, None]
    if y.shape[-2] != pa.K:
        raise InvalidParameterError(f"signal has {y.shape[-2]} antennas, PA config has {pa.K}")
    power = np.abs(y) ** 2
    if pa.kind == 'soft_limiter':
        clipped = power > p_max
        scale = np.ones_like(power)
        np.divide(np.sqrt(p_max), np.sqrt(power), out=scale, where=clipped)
        return y * scale
    p = pa.smoothness
    return y / (1 + (power / p_max) ** p) ** (1 / (2 * p))


def pa_curve(pa, antenna=0, n_points=101, max_ratio_db=10.0):
    """Input/output amplitude table up to max_ratio_db above saturation."""
    p_max = pa.p_max[antenna]
    a_in = np.linspace(0.0, np.sqrt(p_max * 10 ** (max_ratio_db / 10)), n_points)
    return {'input_amplitude': a_in, 'output_amplitude': am_am(a_in, p_max, pa)}


# ══════════════════════════════════════════════════════════════
# Bussgang decomposition
# ══════════════════════════════════════════════════════════════

def _quad(fn, what, gamma):
    out = integrate.quad(fn, 0.0, np.inf, epsrel=QUAD_EPSREL, epsabs=0.0, limit=200, full_output=1)
    if len(out) > 3:
        raise NumericError(f"{what} quadrature did not converge at gamma={gamma:g}",
                           {'gamma': float(gamma), 'estimate': float(out[0]),
                            'abserr': float(out[1]), 'message': out[3]})
    return out[0]


def _soft_limiter_lambda(g):
    with np.errstate(invalid='ignore', over='ignore'):
        lam = 1 - np.exp(-g) + 0.5 * np.sqrt(np.pi * g) * special.erfcx(np.sqrt(g)) * np.exp(-g)
    return np.where(np.isinf(g), 1.0, lam)


def bussgang_moments(gamma, pa):
    """(lambda, E|A|^2 / p) at per-antenna IBO gamma, for unit input power.

    The input envelope is Rayleigh with unit mean square, so the saturation
    power equals gamma. Infinite or NaN gamma (idle antenna) gives (1, 1).
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g <= 0):
        raise InvalidParameterError("IBO must be > 0")
    lam = np.ones_like(g)
    out_power = np.ones_like(g)
    finite = np.isfinite(g)
    if pa.kind == 'soft_limiter':
        lam[finite] = _soft_limiter_lambda(g[finite])
        out_power[finite] = 1 - np.exp(-g[finite])
    else:
        model = PAConfig('rapp', (1.0,), pa.smoothness)

        def cross(r, gi):
            return am_am(r, gi, model) * r * 2 * r * np.exp(-r * r)

        def power(r, gi):
            return am_am(r, gi, model) ** 2 * 2 * r * np.exp(-r * r)

        for i in np.flatnonzero(finite):
            gi = g[i]
            lam[i] = _quad(lambda r: cross(r, gi), 'Bussgang gain', gi)
            out_power[i] = _quad(lambda r: power(r, gi), 'output power', gi)
    return lam, out_power


def bussgang_lambda(gamma_k, pa):
    lam, _ = bussgang_moments(gamma_k, pa)
    return lam if np.ndim(gamma_k) else float(lam[0])


def distortion_extract(y, y_hat, lambda_k):
    lam = np.atleast_1d(np.asarray(lambda_k, dtype=float))
    y, y_hat = np.asarray(y), np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise InvalidParameterError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    return y_hat - lam[:, None] * y


def tx_distortion_power(gamma_k, p_k, pa):
    lam, out_power = bussgang_moments(gamma_k, pa)
    d = np.maximum(out_power - lam ** 2, 0.0) * np.asarray(p_k, dtype=float)
    return d if np.ndim(gamma_k) else float(d[0])


# ══════════════════════════════════════════════════════════════
# Frame
# ══════════════════════════════════════════════════════════════

def transmit(W, symbols, pa, cfg):
    """Precode, modulate and amplify S OFDM symbols; Bussgang-split the output."""
    W = W.W if isinstance(W, Precoder) else np.asarray(W, dtype=complex)
    symbols = np.atleast_2d(np.asarray(symbols, dtype=complex))
    if W.shape[1] != pa.K:
        raise InvalidParameterError(f"precoder drives {W.shape[1]} antennas, PA config has {pa.K}")
    symbol_power = float(np.mean(np.abs(symbols) ** 2))
    p_k = per_antenna_power(W, symbol_power)
    idle = p_k <= 0
    if np.any(idle):
        log.info(f"[TX] antennas {np.flatnonzero(idle).tolist()} idle, excluded from IBO report")
    gamma_k = np.full(pa.K, np.inf)
    gamma_k[~idle] = ibo_per_antenna(p_k[~idle], PAConfig(pa.kind, pa.p_max_array[~idle], pa.smoothness))
    lam = bussgang_lambda(gamma_k, pa)
    y = ofdm_modulate(precode(W, symbols), cfg)
    y_hat = pa_apply(y, pa)
    d_hat = distortion_extract(y, y_hat, lam)
    return TxFrame(y=y, y_hat=y_hat, d_hat=d_hat, lam=lam, p_k=p_k, gamma_k=gamma_k,
                   gamma_avg=ibo_average(p_k, pa), W=W, symbols=symbols, cfg=cfg, pa=pa,
                   idle=idle)
