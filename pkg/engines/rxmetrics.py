"""
MIMO-PA Navigator: Receiver Metrics Engine
Wanted/distortion split at a receiving UE, measured and theoretical SDR,
in-band distortion share, SNDR and Shannon rate.
"""
import logging
from dataclasses import dataclass

import numpy as np

from engines.errors import InvalidParameterError, NotMeasurableError
from engines.txchain import PAConfig, bussgang_moments

log = logging.getLogger(__name__)

# Share of the third-order intermodulation power that lands on the used band
# when the used band is a contiguous block.
INBAND_SHARE = 2 / 3

SOFT_LIMITER = PAConfig('soft_limiter', (1.0,))


def to_db(x):
    with np.errstate(divide='ignore'):
        return 10 * np.log10(x)


def from_db(x_db):
    return 10 ** (np.asarray(x_db, dtype=float) / 10)


@dataclass
class RxDecomposition:
    S_n: np.ndarray
    D_n: np.ndarray
    noise_power: float = 0.0
    inband_distortion_fraction: float = float('nan')

    def __post_init__(self):
        self.S_n = np.asarray(self.S_n, dtype=float)
        self.D_n = np.asarray(self.D_n, dtype=float)
        if self.S_n.shape != self.D_n.shape:
            raise InvalidParameterError("S_n and D_n must have the same length")
        if np.any(self.S_n < 0) or np.any(self.D_n < 0) or self.noise_power < 0:
            raise InvalidParameterError("powers must be non-negative")

    @property
    def S(self):
        return float(self.S_n.sum())

    @property
    def D(self):
        return float(self.D_n.sum())


# ══════════════════════════════════════════════════════════════
# Measurement
# ══════════════════════════════════════════════════════════════

def receive_decompose(frame, H_tilde, cfg, noise_power=0.0):
    """Per-subcarrier wanted and distortion power seen through H_tilde.

    H_tilde is the scheduled UE's own channel or any victim channel; the
    expectation over data is the average over the frame's OFDM symbols.
    """
    Ht = getattr(H_tilde, 'H', H_tilde)
    Ht = np.asarray(Ht, dtype=complex)
    if Ht.shape != frame.W.shape:
        raise InvalidParameterError(f"receive channel {Ht.shape} does not match precoder {frame.W.shape}")
    d = frame.distortion_spectrum[..., cfg.bins]                      # S x K x N_U
    rx_d = np.einsum('skn,nk->sn', d, Ht)
    D_n = np.mean(np.abs(rx_d) ** 2, axis=0)
    g = np.sum(frame.lam * Ht * frame.W, axis=1)                      # N_U
    S_n = np.mean(np.abs(frame.symbols * g) ** 2, axis=0)
    frac = inband_fraction(frame, cfg) if cfg.N > cfg.N_U else float('nan')
    return RxDecomposition(S_n, D_n, float(noise_power), frac)


def sdr_measured(dec):
    if dec.D == 0:
        log.info("[RX] zero received distortion, link is effectively linear")
        return float('inf')
    return dec.S / dec.D


def inband_fraction(frame, cfg):
    """Share of PA distortion power falling on the used subcarriers.

    Averaged over antennas that distort; NaN when none does (linear PA).
    """
    if cfg.N <= cfg.N_U:
        raise NotMeasurableError(f"in-band share needs oversampling, N={cfg.N} N_U={cfg.N_U}")
    power = np.mean(np.abs(frame.distortion_spectrum) ** 2, axis=0)     # K x N
    total = power.sum(axis=-1)
    active = total > 0
    if not np.any(active):
        return float('nan')
    used = power[:, cfg.bins].sum(axis=-1)
    return float(np.mean(used[active] / total[active]))


# ══════════════════════════════════════════════════════════════
# Theory
# ══════════════════════════════════════════════════════════════

def _theory(gamma, pa):
    lam, out_power = bussgang_moments(gamma, pa or SOFT_LIMITER)
    dist = np.maximum(out_power - lam ** 2, 0.0)
    with np.errstate(divide='ignore'):
        ratio = np.where(dist > 0, lam ** 2 / np.where(dist > 0, INBAND_SHARE * dist, 1.0), np.inf)
    return ratio if np.ndim(gamma) else float(ratio[0])


def sdr_theory_uncorrelated(gamma, K, pa=None):
    """SDR at a scheduled UE when distortion adds up incoherently (i.i.d. Rayleigh)."""
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    return K * _theory(gamma, pa)


def sdr_theory_correlated(gamma, pa=None):
    """SDR at a scheduled UE when distortion is beamformed with the signal (LoS)."""
    return _theory(gamma, pa)


def sdr_theory_victim(gamma, pa=None):
    return _theory(gamma, pa)


def s_rx_theory(K, mean_gain, lam, total_power):
    if K < 1 or mean_gain <= 0 or total_power < 0:
        raise InvalidParameterError("s_rx_theory needs K >= 1, positive gain and non-negative power")
    return K * mean_gain * lam ** 2 * total_power


def sndr_and_rate(S, D, interference_noise_power, bandwidth_hz):
    if S < 0 or D < 0 or interference_noise_power < 0:
        raise InvalidParameterError("powers must be non-negative")
    denom = D + interference_noise_power
    sndr = float('inf') if denom == 0 else S / denom
    return sndr, bandwidth_hz * float(np.log2(1 + sndr))
