"""
MIMO-PA Navigator: Link Simulation Engine
One scheduled UE served by MRT at a target average IBO: transmit, amplify,
then decompose at the scheduled UE and at any number of victim receivers.

The QPSK stream is drawn at unit power and then scaled, so for one seed the
same data is sent at every IBO and every array size.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from engines import rxmetrics, txchain
from engines.channel import DEFAULT_PATHLOSS, ClusterParams, channel_for_position
from engines.runtime import as_rng

log = logging.getLogger(__name__)


@dataclass
class LinkResult:
    gamma_target: float
    gamma_avg: float
    sdr: float
    S: float
    D: float
    total_power: float
    ibo_min_db: float
    ibo_max_db: float
    inband_fraction: float
    victim_sdr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    victim_S: np.ndarray = field(default_factory=lambda: np.zeros(0))
    victim_D: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def sdr_db(self):
        return float(rxmetrics.to_db(self.sdr))


def simulate_link(channel, pa, cfg, gamma, n_symbols, seed, victims=()):
    """Measured SDR of `channel` (scheduled) and of each victim channel."""
    W = txchain.mrt_precoder(channel)
    power = txchain.scale_to_ibo(W, pa, cfg, gamma)
    unit = txchain.qpsk_symbols(n_symbols, cfg.N_U, 1.0, as_rng(seed))
    frame = txchain.transmit(W, np.sqrt(power) * unit, pa, cfg)
    dec = rxmetrics.receive_decompose(frame, channel, cfg)
    lo, hi = frame.ibo_spread_db()
    result = LinkResult(gamma_target=float(gamma), gamma_avg=frame.gamma_avg,
                        sdr=rxmetrics.sdr_measured(dec), S=dec.S, D=dec.D,
                        total_power=float(frame.p_k.sum()), ibo_min_db=float(lo),
                        ibo_max_db=float(hi), inband_fraction=dec.inband_distortion_fraction)
    if len(victims):
        vd = [rxmetrics.receive_decompose(frame, v, cfg) for v in victims]
        result.victim_S = np.array([d.S for d in vd])
        result.victim_D = np.array([d.D for d in vd])
        result.victim_sdr = np.array([rxmetrics.sdr_measured(d) for d in vd])
    return result


def measure_sdr(channel, pa, cfg, gamma, n_symbols, seed):
    return simulate_link(channel, pa, cfg, gamma, n_symbols, seed).sdr


def sweep_ibo(channel, pa, cfg, gammas, n_symbols, seed):
    """simulate_link at each IBO with the same data stream."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2 ** 63))
    return [simulate_link(channel, pa, cfg, g, n_symbols, seed) for g in gammas]


@dataclass(frozen=True)
class LinkSetup:
    """Everything but the UE position needed to draw and simulate a link."""
    geometry: object
    ofdm: txchain.OFDMConfig
    pa: txchain.PAConfig
    n_symbols: int = 100
    cluster: ClusterParams = field(default_factory=ClusterParams)
    pathloss: tuple = DEFAULT_PATHLOSS


def ue_channel(setup, scenario, ue, model, seed):
    return channel_for_position(model, scenario.positions[ue], scenario.bs_position,
                                setup.geometry, setup.ofdm.N_U, setup.ofdm.subcarrier_spacing,
                                seed, cluster=setup.cluster, pathloss=setup.pathloss)
