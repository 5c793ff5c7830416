"""
MIMO-PA Navigator: Config Loader
Reads the experiment TOML, overlays it on DEFAULT_CONFIG, applies MPAN_*
environment and CLI overrides, and builds the engine objects each command
needs. All labels and numbers come from the file; nothing is scenario-specific.
"""
import copy
import hashlib
import json
import logging
import math
import os
import re
import tomllib

from engines.allocation import (BASELINE_IBO_DB, DEFAULT_CANDIDATES_DB, PREDICTORS,
                                AllocationConfig)
from engines.channel import CHANNEL_MODELS, ClusterParams, grid_scenario, planar_array
from engines.errors import ConfigError, NavigatorError
from engines.mlpredict import CNNArch, TrainConfig
from engines.simulation import LinkSetup
from engines.txchain import PA_KINDS, OFDMConfig, PAConfig

log = logging.getLogger(__name__)

ENV_PREFIX = 'MPAN_'
REQUIRED = (('experiment', 'seed'),)
# Keys that do not change results and stay out of the config hash.
UNHASHED = (('experiment', 'output_dir'), ('experiment', 'threads'))


def _default_config():
    """Desk-scale defaults: 16-antenna array, 200 UEs, 12 used tones."""
    return {
        'experiment': {'seed': None, 'threads': 1, 'output_dir': 'out', 'n_symbols': 100},
        'array': {'rows': 4, 'cols': 4, 'pitch': 1.0},
        'ofdm': {'N': 64, 'N_U': 12, 'N_CP': 16, 'subcarrier_spacing': 360e3},
        'pa': {'kind': 'soft_limiter', 'p_max_w': 2e-3, 'smoothness': 2.0},
        'channel': {
            'model': 'clustered', 'pathloss_exponent': 2.0, 'pathloss_ref_db': -43.6,
            'cluster': {'num_clusters': 8, 'rays_per_cluster': 10, 'delay_spread': 300e-9,
                        'angular_spread': 0.2, 'rician_k': 0.0, 'shadow_sigma_db': 0.0},
        },
        'scenario': {'n_x': 20, 'n_y': 10, 'resolution': 4.0, 'bs_position': [0.0, 0.0, 10.0],
                     'ue_height': 1.5, 'x_offset': 10.0},
        'sdr': {'ibo_db': [0.0, 3.0, 6.0], 'scheduled_ue': 0, 'victims': True},
        'gev': {'downsample_stride': 5, 'holdout_fraction': 0.5},
        'autocorr': {'corr_length': 20.0, 'resolution': 4.0, 'size': 64,
                     'mean_db': 0.0, 'std_db': 1.0, 'max_lag': 0},
        'dataset': {'train_ibo_db': [-3.0, 0.0, 3.0, 6.0], 'test_ibo_db': [-1.0, 2.0, 5.0],
                    'val_fraction': 0.2},
        'cnn': {'stages': [[2, 8], [2, 16]], 'dense': [128]},
        'train': {'epochs': 25, 'batch_size': 32, 'learning_rate': 1e-3, 'shards': 1},
        'prune': {'sparsity': 0.4, 'fine_tune_epochs': 5},
        'allocation': {'ibo_candidates_db': list(DEFAULT_CANDIDATES_DB),
                       'sigma_interf_dbm': -64.0, 'predictor': 'cnn_model',
                       'baseline_ibo_db': BASELINE_IBO_DB, 'n_ues': 0},
    }


DEFAULT_CONFIG = _default_config()


# ══════════════════════════════════════════════════════════════
# Parsing and merging
# ══════════════════════════════════════════════════════════════

def _line_of(text, section, key):
    """Line number of `key = ...` inside `[section]`, or None."""
    table = '.'.join(filter(None, (section, key)))
    current = ''
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r'^\[+\s*([^\]]+?)\s*\]+$', line)
        if m:
            current = m.group(1)
            if current == table:
                return i
            continue
        if current == section and re.match(rf'^"?{re.escape(key)}"?\s*=', line):
            return i
    return None


def _type_ok(default, value):
    if default is None:
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    return isinstance(value, type(default))


def _merge(base, update, text, path=()):
    for key, value in update.items():
        dotted = '.'.join(path + (key,))
        section = '.'.join(path)
        if key not in base:
            raise ConfigError("unknown config key", dotted, _line_of(text, section, key))
        default = base[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a table", dotted, _line_of(text, section, key))
            _merge(default, value, text, path + (key,))
            continue
        if not _type_ok(default, value):
            raise ConfigError(f"expected {type(default).__name__ if default is not None else 'int'}, "
                              f"got {type(value).__name__}", dotted, _line_of(text, section, key))
        base[key] = float(value) if isinstance(default, float) else value


def parse_config_text(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r'line (\d+)', str(e))
        raise ConfigError(f"invalid TOML: {e}", line=int(m.group(1)) if m else None) from e
    cfg = _default_config()
    _merge(cfg, raw, text)
    return cfg


def _env_int(env, name):
    value = env.get(ENV_PREFIX + name)
    if value is None or value == '':
        return None
    try:
        return int(value, 0)
    except ValueError as e:
        raise ConfigError(f"{ENV_PREFIX}{name} must be an integer, got '{value}'", ENV_PREFIX + name) from e


def load_config(path=None, seed=None, threads=None, output_dir=None, env=None):
    """Resolved config: CLI argument > MPAN_* environment > file > default."""
    env = os.environ if env is None else env
    path = path or env.get(ENV_PREFIX + 'CONFIG')
    if path:
        try:
            with open(path, encoding='utf-8') as f:
                cfg = parse_config_text(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        log.info(f"[CONFIG] loaded {path}")
    else:
        cfg = _default_config()
    exp = cfg['experiment']
    for key, cli, env_name in (('seed', seed, 'SEED'), ('threads', threads, 'THREADS')):
        env_value = _env_int(env, env_name)
        if cli is not None:
            exp[key] = int(cli)
        elif env_value is not None:
            exp[key] = env_value
    if output_dir is not None:
        exp['output_dir'] = output_dir
    elif env.get(ENV_PREFIX + 'OUT'):
        exp['output_dir'] = env[ENV_PREFIX + 'OUT']
    validate_config(cfg)
    return cfg


# ══════════════════════════════════════════════════════════════
# Validation
# ══════════════════════════════════════════════════════════════

def _check(cond, message, field):
    if not cond:
        raise ConfigError(message, field)


def validate_config(cfg):
    """Cross-field checks, then build every engine object once so that a bad
    value fails here rather than halfway through a run."""
    for section, key in REQUIRED:
        _check(cfg[section][key] is not None, "missing required field", f"{section}.{key}")
    exp = cfg['experiment']
    _check(0 <= exp['seed'] < 2 ** 64, "seed must be an unsigned 64-bit integer", 'experiment.seed')
    _check(exp['threads'] >= 1, "threads must be >= 1", 'experiment.threads')
    _check(exp['n_symbols'] >= 1, "n_symbols must be >= 1", 'experiment.n_symbols')
    _check(cfg['pa']['kind'] in PA_KINDS, f"pa.kind must be one of {PA_KINDS}", 'pa.kind')
    _check(cfg['channel']['model'] in CHANNEL_MODELS,
           f"channel.model must be one of {CHANNEL_MODELS}", 'channel.model')
    _check(len(cfg['scenario']['bs_position']) == 3, "bs_position needs 3 coordinates",
           'scenario.bs_position')
    _check(0 <= cfg['sdr']['scheduled_ue'] < cfg['scenario']['n_x'] * cfg['scenario']['n_y'],
           "scheduled_ue outside the UE grid", 'sdr.scheduled_ue')
    _check(len(cfg['sdr']['ibo_db']) >= 1, "at least one IBO", 'sdr.ibo_db')
    _check(cfg['gev']['downsample_stride'] >= 1, "stride must be >= 1", 'gev.downsample_stride')
    _check(0 < cfg['gev']['holdout_fraction'] < 1, "holdout fraction must lie in (0, 1)",
           'gev.holdout_fraction')
    _check(cfg['autocorr']['size'] >= 8, "synthetic map needs at least 8 cells per side", 'autocorr.size')
    _check(0 <= cfg['dataset']['val_fraction'] < 1, "val_fraction must lie in [0, 1)",
           'dataset.val_fraction')
    _check(0 <= cfg['prune']['sparsity'] < 1, "sparsity must lie in [0, 1)", 'prune.sparsity')
    alloc = cfg['allocation']
    _check(len(alloc['ibo_candidates_db']) >= 2, "at least two IBO candidates required",
           'allocation.ibo_candidates_db')
    _check(alloc['predictor'] in PREDICTORS, f"predictor must be one of {PREDICTORS}",
           'allocation.predictor')
    _check(math.isfinite(alloc['sigma_interf_dbm']), "sigma_interf_dbm must be finite",
           'allocation.sigma_interf_dbm')
    for section, build in (('array', build_geometry), ('ofdm', build_ofdm), ('pa', build_pa),
                           ('channel.cluster', build_cluster), ('scenario', build_scenario),
                           ('cnn', build_arch), ('train', build_train_config)):
        try:
            build(cfg)
        except NavigatorError as e:
            raise ConfigError(str(e), section) from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed section: {e}", section) from e
    return cfg


def config_hash(cfg):
    """SHA-256 of the canonical JSON of every result-relevant field."""
    hashed = copy.deepcopy(cfg)
    for section, key in UNHASHED:
        hashed[section].pop(key, None)
    text = json.dumps(hashed, sort_keys=True, separators=(',', ':'), allow_nan=True)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


# ══════════════════════════════════════════════════════════════
# Builders
# ══════════════════════════════════════════════════════════════

def build_geometry(cfg):
    a = cfg['array']
    return planar_array(a['rows'], a['cols'], a['pitch'])


def build_ofdm(cfg):
    o = cfg['ofdm']
    return OFDMConfig(N=o['N'], N_U=o['N_U'], N_CP=o['N_CP'], subcarrier_spacing=o['subcarrier_spacing'])


def build_pa(cfg, K=None):
    p = cfg['pa']
    K = K or build_geometry(cfg).K
    return PAConfig.uniform(p['kind'], p['p_max_w'], K, p['smoothness'])


def build_cluster(cfg):
    return ClusterParams(**cfg['channel']['cluster'])


def build_scenario(cfg):
    s = cfg['scenario']
    return grid_scenario(s['n_x'], s['n_y'], s['resolution'], tuple(s['bs_position']),
                         s['ue_height'], s['x_offset'])


def build_setup(cfg):
    geometry = build_geometry(cfg)
    ch = cfg['channel']
    return LinkSetup(geometry, build_ofdm(cfg), build_pa(cfg, geometry.K),
                     cfg['experiment']['n_symbols'], build_cluster(cfg),
                     (ch['pathloss_exponent'], ch['pathloss_ref_db']))


def build_arch(cfg):
    c = cfg['cnn']
    return CNNArch(build_geometry(cfg).K, tuple(tuple(s) for s in c['stages']), tuple(c['dense']))


def build_train_config(cfg, epochs=None):
    t = cfg['train']
    return TrainConfig(epochs=t['epochs'] if epochs is None else epochs, batch_size=t['batch_size'],
                       learning_rate=t['learning_rate'], seed=cfg['experiment']['seed'],
                       shards=t['shards'])


def sigma_interf_w(dbm):
    return 1e-3 * 10 ** (dbm / 10)


def build_allocation(cfg, model=None, predictor=None, sigma_interf_dbm=None):
    a = cfg['allocation']
    setup = build_setup(cfg)
    dbm = a['sigma_interf_dbm'] if sigma_interf_dbm is None else sigma_interf_dbm
    return AllocationConfig(tuple(a['ibo_candidates_db']), sigma_interf_w(dbm),
                            predictor or a['predictor'], setup.pa, setup.ofdm, setup.n_symbols,
                            cfg['experiment']['seed'], model)
