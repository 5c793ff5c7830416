"""
MIMO-PA Navigator: Channel Engine
Frequency-domain channel matrices (N_U x K) for one single-antenna UE:
i.i.d. Rayleigh, line-of-sight planar array and a synthetic clustered
multipath model with a Rician ray and per-antenna shadowing.

Array convention: boresight is +x, the array lies in the y-z plane. A
direction at off-boresight angle theta and azimuth psi has in-plane direction
cosines (sin theta cos psi, sin theta sin psi), and antenna k sees the phase
pi * (l_k * u_y + r_k * u_z).
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from engines.errors import InvalidParameterError
from engines.runtime import as_rng

log = logging.getLogger(__name__)

CHANNEL_MODELS = ('rayleigh', 'los', 'clustered')

# (exponent, gain at 1 m in dB): free space at 3.6 GHz
DEFAULT_PATHLOSS = (2.0, -43.6)


# ══════════════════════════════════════════════════════════════
# Types
# ══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ArrayGeometry:
    rows: int
    cols: int
    l: tuple
    r: tuple

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError(f"array needs at least one row and column, got {self.rows}x{self.cols}")
        if len(self.l) != self.K or len(self.r) != self.K:
            raise InvalidParameterError(f"offset lists must have K={self.K} entries")
        if min(self.l) < 0 or min(self.r) < 0:
            raise InvalidParameterError("antenna offsets must be non-negative")
        if self.l[0] != 0 or self.r[0] != 0:
            raise InvalidParameterError("element 0 must sit at the origin")

    @property
    def K(self):
        return self.rows * self.cols

    @property
    def offsets(self):
        return np.asarray(self.l, dtype=float), np.asarray(self.r, dtype=float)


def planar_array(rows, cols, pitch=1.0):
    """Uniform planar array, element k = row * cols + col.

    Offsets are in the units of the phase formula, so pitch 1 gives a phase
    step of pi per element at grazing incidence (half-wavelength spacing).
    """
    if pitch <= 0:
        raise InvalidParameterError(f"pitch must be > 0, got {pitch}")
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    return ArrayGeometry(rows=rows, cols=cols,
                         l=tuple(float(c * pitch) for c in cc),
                         r=tuple(float(r * pitch) for r in rr))


@dataclass
class ChannelMatrix:
    H: np.ndarray
    beta: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.ndim != 2:
            raise InvalidParameterError(f"channel must be N_U x K, got shape {self.H.shape}")
        if not np.all(np.isfinite(self.H)):
            raise InvalidParameterError("channel has non-finite entries")
        if not self.beta > 0:
            raise InvalidParameterError(f"beta must be > 0, got {self.beta}")

    @property
    def n_u(self):
        return self.H.shape[0]

    @property
    def K(self):
        return self.H.shape[1]

    def scaled(self, c):
        return ChannelMatrix(self.H * c, self.beta * abs(c) ** 2, dict(self.meta))


@dataclass
class UEScenario:
    positions: np.ndarray
    bs_position: np.ndarray
    grid_resolution: float

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.bs_position = np.asarray(self.bs_position, dtype=float)
        if self.positions.shape[1] != 3 or self.bs_position.shape != (3,):
            raise InvalidParameterError("positions must be 3-D coordinates")
        if not self.grid_resolution > 0:
            raise InvalidParameterError(f"grid resolution must be > 0, got {self.grid_resolution}")
        if len(np.unique(self.positions, axis=0)) != len(self.positions):
            raise InvalidParameterError("UE positions must be unique")

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True)
class ClusterParams:
    num_clusters: int = 8
    rays_per_cluster: int = 10
    delay_spread: float = 300e-9
    angular_spread: float = 0.2
    rician_k: float = 0.0
    shadow_sigma_db: float = 0.0
    los_azimuth: float = 0.0
    los_elevation: float = 0.0

    def __post_init__(self):
        for name in ('delay_spread', 'angular_spread', 'shadow_sigma_db',
                     'los_azimuth', 'los_elevation'):
            if not np.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"cluster parameter {name} must be finite")
        if np.isnan(self.rician_k) or self.rician_k < 0:
            raise InvalidParameterError(f"rician_k must be >= 0, got {self.rician_k}")
        if self.num_clusters < 1 or self.rays_per_cluster < 1:
            raise InvalidParameterError("cluster and ray counts must be >= 1")
        if self.delay_spread < 0 or self.angular_spread < 0 or self.shadow_sigma_db < 0:
            raise InvalidParameterError("spreads must be >= 0")


# ══════════════════════════════════════════════════════════════
# Generators
# ══════════════════════════════════════════════════════════════

def _check_beta(beta):
    if not (np.isfinite(beta) and beta > 0):
        raise InvalidParameterError(f"beta must be a positive finite number, got {beta}")


def _array_phase(geometry, u_y, u_z):
    """Phases (..., K) for direction cosines of shape (...)."""
    l, r = geometry.offsets
    u_y = np.asarray(u_y, dtype=float)[..., None]
    u_z = np.asarray(u_z, dtype=float)[..., None]
    return np.pi * (l * u_y + r * u_z)


def gen_rayleigh(beta, n_u, K, seed):
    _check_beta(beta)
    if n_u < 1 or K < 1:
        raise InvalidParameterError(f"n_u and K must be >= 1, got {n_u}, {K}")
    rng = as_rng(seed)
    H = np.sqrt(beta / 2) * (rng.standard_normal((n_u, K)) + 1j * rng.standard_normal((n_u, K)))
    return ChannelMatrix(H, float(beta), {'model': 'rayleigh'})


def gen_los(beta, azimuth, elevation, geometry, n_u):
    """Frequency-flat planar-wave channel; `elevation` is the off-boresight angle."""
    _check_beta(beta)
    if n_u < 1:
        raise InvalidParameterError(f"n_u must be >= 1, got {n_u}")
    phase = _array_phase(geometry, np.sin(elevation) * np.cos(azimuth),
                         np.sin(elevation) * np.sin(azimuth))
    row = np.sqrt(beta) * np.exp(1j * phase)
    H = np.tile(row, (n_u, 1))
    return ChannelMatrix(H, float(beta), {'model': 'los', 'azimuth': float(azimuth),
                                          'elevation': float(elevation)})


def _ray_directions(rng, n_clusters, n_rays, spread):
    """Unit vectors (C, R, 3) in the front half-space around random cluster centres."""
    cos_t = rng.uniform(0.0, 1.0, n_clusters)
    psi = rng.uniform(-np.pi, np.pi, n_clusters)
    sin_t = np.sqrt(1.0 - cos_t ** 2)
    centres = np.stack([cos_t, sin_t * np.cos(psi), sin_t * np.sin(psi)], axis=-1)
    rays = centres[:, None, :] + spread * rng.standard_normal((n_clusters, n_rays, 3))
    norm = np.linalg.norm(rays, axis=-1, keepdims=True)
    rays = rays / np.where(norm > 0, norm, 1.0)
    rays[..., 0] = np.abs(rays[..., 0])
    return rays


def gen_clustered(beta, params, geometry, n_u, subcarrier_spacing, seed):
    """Clustered multipath stand-in for a ray-traced channel.

    Cluster delays are exponential with mean delay_spread and cluster powers
    follow exp(-tau/delay_spread). Rays carry unit-modulus random phases. The
    scattered part and the deterministic ray toward (los_azimuth,
    los_elevation) have unit mean power each and are mixed by rician_k. Each
    antenna then gets a log-normal gain normalised to unit mean power, so
    E|h|^2 = beta.
    """
    _check_beta(beta)
    if not isinstance(params, ClusterParams):
        raise InvalidParameterError("params must be a ClusterParams")
    if n_u < 1:
        raise InvalidParameterError(f"n_u must be >= 1, got {n_u}")
    if not (np.isfinite(subcarrier_spacing) and subcarrier_spacing > 0):
        raise InvalidParameterError(f"subcarrier spacing must be > 0, got {subcarrier_spacing}")
    rng = as_rng(seed)
    C, R = params.num_clusters, params.rays_per_cluster

    # ── scattered part ──
    if params.delay_spread > 0:
        tau = rng.exponential(params.delay_spread, C)
        power = np.exp(-tau / params.delay_spread)
    else:
        tau = np.zeros(C)
        power = np.ones(C)
    power = power / power.sum()
    rays = _ray_directions(rng, C, R, params.angular_spread)
    ray_phase = rng.uniform(-np.pi, np.pi, (C, R))
    gains = np.sqrt(power[:, None] / R) * np.exp(1j * ray_phase)
    steer = np.exp(1j * _array_phase(geometry, rays[..., 1], rays[..., 2]))   # (C, R, K)
    per_cluster = np.einsum('cr,crk->ck', gains, steer)
    freqs = np.arange(n_u) * subcarrier_spacing
    delay = np.exp(-2j * np.pi * np.outer(freqs, tau))                         # (N_U, C)
    scattered = delay @ per_cluster

    # ── deterministic ray ──
    th, ps = params.los_elevation, params.los_azimuth
    los_row = np.exp(1j * _array_phase(geometry, np.sin(th) * np.cos(ps), np.sin(th) * np.sin(ps)))
    los = np.tile(los_row, (n_u, 1))
    if np.isinf(params.rician_k):
        H = los
    else:
        kr = params.rician_k
        H = np.sqrt(kr / (kr + 1)) * los + np.sqrt(1 / (kr + 1)) * scattered

    # ── per-antenna shadowing ──
    if params.shadow_sigma_db > 0:
        s = params.shadow_sigma_db * np.log(10) / 10
        z = rng.standard_normal(geometry.K)
        amp = 10 ** (params.shadow_sigma_db * z / 20) / np.exp(s ** 2 / 4)
        H = H * amp

    return ChannelMatrix(np.sqrt(beta) * H, float(beta), {'model': 'clustered'})


def pathloss_beta(distance_m, exponent, ref_gain_db):
    if not distance_m > 0:
        raise InvalidParameterError(f"distance must be > 0, got {distance_m}")
    return 10 ** (ref_gain_db / 10) * distance_m ** (-exponent)


# ══════════════════════════════════════════════════════════════
# Scenario placement
# ══════════════════════════════════════════════════════════════

def grid_scenario(n_x, n_y, resolution, bs_position=(0.0, 0.0, 10.0), ue_height=1.5,
                  x_offset=10.0):
    """UEs on an n_x by n_y grid in front of the array (x > 0), centred on y = 0."""
    if n_x < 1 or n_y < 1:
        raise InvalidParameterError(f"grid needs at least one cell, got {n_x}x{n_y}")
    xs = x_offset + resolution * np.arange(n_x)
    ys = resolution * (np.arange(n_y) - (n_y - 1) / 2)
    gx, gy = np.meshgrid(xs, ys, indexing='ij')
    pos = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(ue_height))], axis=-1)
    return UEScenario(pos, np.asarray(bs_position, dtype=float), float(resolution))


def ue_angles(position, bs_position):
    """(azimuth psi, off-boresight theta, distance) of a UE seen from the array."""
    v = np.asarray(position, dtype=float) - np.asarray(bs_position, dtype=float)
    dist = float(np.linalg.norm(v))
    if dist == 0:
        raise InvalidParameterError("UE and base station coincide")
    theta = float(np.arccos(np.clip(v[0] / dist, -1.0, 1.0)))
    psi = float(np.arctan2(v[2], v[1]))
    return psi, theta, dist


def channel_for_position(model, position, bs_position, geometry, n_u, subcarrier_spacing,
                         seed, cluster=None, pathloss=DEFAULT_PATHLOSS):
    """Draw the channel of a UE at `position` under the named model."""
    if model not in CHANNEL_MODELS:
        raise InvalidParameterError(f"unknown channel model '{model}', expected one of {CHANNEL_MODELS}")
    psi, theta, dist = ue_angles(position, bs_position)
    beta = pathloss_beta(dist, *pathloss)
    if model == 'rayleigh':
        ch = gen_rayleigh(beta, n_u, geometry.K, seed)
    elif model == 'los':
        ch = gen_los(beta, psi, theta, geometry, n_u)
    else:
        params = replace(cluster or ClusterParams(), los_azimuth=psi, los_elevation=theta)
        ch = gen_clustered(beta, params, geometry, n_u, subcarrier_spacing, seed)
    ch.meta['position'] = tuple(float(c) for c in position)
    return ch
