"""
MIMO-PA Navigator: SDR Regression Engine
Feature matrices from channel correlation, dataset construction, a VGG-style
numpy CNN regressor trained with MAPE and Adam, gradient checking and
magnitude pruning.

Tensor layout is NHWC; conv kernels are stored (F, C, 3, 3). Every layer is
a pure function of (input, parameters) returning a cache for backprop.
"""
import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from engines.channel import ChannelMatrix
from engines.errors import (DegenerateChannelError, InvalidParameterError,
                            NavigatorError, PruningError, TrainingFailureError)
from engines.runtime import derive_seed, parallel_map, rng_for
from engines.rxmetrics import to_db
from engines.simulation import simulate_link, ue_channel

log = logging.getLogger(__name__)

LABEL_GUARD_DB = 1.0
MAX_GRADCHECK_PARAMS = 5000
SPLITS = ('train', 'val', 'test')


# ══════════════════════════════════════════════════════════════
# Feature matrix
# ══════════════════════════════════════════════════════════════

@dataclass
class FeatureMatrix:
    F: np.ndarray
    gamma_used: float


def feature_matrix(H, gamma_avg):
    """|sum_n h_n h_n^H| / (N_U * gamma * beta_hat), beta_hat the mean |h|^2."""
    if not gamma_avg > 0:
        raise InvalidParameterError(f"IBO must be > 0, got {gamma_avg}")
    Hm = H.H if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    beta_hat = np.mean(np.abs(Hm) ** 2)
    if beta_hat == 0:
        raise DegenerateChannelError("feature matrix of an all-zero channel")
    R = Hm.T @ Hm.conj()
    F = np.abs(R) / (Hm.shape[0] * gamma_avg * beta_hat)
    return FeatureMatrix(0.5 * (F + F.T), float(gamma_avg))


# ══════════════════════════════════════════════════════════════
# Architecture and model
# ══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class CNNArch:
    input_size: int
    stages: tuple = ((2, 8), (2, 16))
    dense: tuple = (128,)

    def __post_init__(self):
        object.__setattr__(self, 'stages', tuple((int(n), int(f)) for n, f in self.stages))
        object.__setattr__(self, 'dense', tuple(int(w) for w in self.dense))
        if self.input_size < 1:
            raise InvalidParameterError(f"input size must be >= 1, got {self.input_size}")
        if any(n < 1 or f < 1 for n, f in self.stages) or any(w < 1 for w in self.dense):
            raise InvalidParameterError("layer counts and widths must be >= 1")
        if self.pooled_size < 1:
            raise InvalidParameterError(f"{len(self.stages)} pooling stages leave no spatial extent "
                                        f"for input size {self.input_size}")

    @property
    def pooled_size(self):
        size = self.input_size
        for _ in self.stages:
            size //= 2
        return size

    def layers(self):
        """Layer plan: dicts with kind and, for parametric layers, shapes."""
        plan, c_in = [], 1
        for n_layers, filters in self.stages:
            for _ in range(n_layers):
                plan.append({'kind': 'conv', 'c_in': c_in, 'c_out': filters})
                c_in = filters
            plan.append({'kind': 'pool'})
        n_in = self.pooled_size ** 2 * c_in
        for width in self.dense:
            plan.append({'kind': 'dense', 'n_in': n_in, 'n_out': width, 'relu': True})
            n_in = width
        plan.append({'kind': 'dense', 'n_in': n_in, 'n_out': 1, 'relu': False})
        return plan

    def to_dict(self):
        return {'input_size': self.input_size, 'stages': [list(s) for s in self.stages],
                'dense': list(self.dense)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d['input_size']), tuple(tuple(s) for s in d['stages']), tuple(d['dense']))


@dataclass
class CNNModel:
    arch: CNNArch
    params: list
    masks: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = param_shapes(self.arch)
        if len(shapes) != len(self.params):
            raise InvalidParameterError(f"arch needs {len(shapes)} weight layers, got {len(self.params)}")
        for i, ((ws, bs), p) in enumerate(zip(shapes, self.params)):
            if p['W'].shape != ws or p['b'].shape != bs:
                raise InvalidParameterError(f"layer {i} weights {p['W'].shape}/{p['b'].shape}, "
                                            f"arch expects {ws}/{bs}")
        if self.masks is None:
            self.masks = [{'W': np.ones(ws, dtype=bool), 'b': np.ones(bs, dtype=bool)} for ws, bs in shapes]

    @property
    def n_params(self):
        return sum(p['W'].size + p['b'].size for p in self.params)

    def copy(self):
        return copy.deepcopy(self)


def param_shapes(arch):
    shapes = []
    for layer in arch.layers():
        if layer['kind'] == 'conv':
            shapes.append(((layer['c_out'], layer['c_in'], 3, 3), (layer['c_out'],)))
        elif layer['kind'] == 'dense':
            shapes.append(((layer['n_in'], layer['n_out']), (layer['n_out'],)))
    return shapes


def init_model(arch, seed):
    """He-uniform weights by fan-in, zero biases."""
    rng = rng_for(seed, 'cnn-init')
    params = []
    for ws, bs in param_shapes(arch):
        fan_in = int(np.prod(ws[1:])) if len(ws) == 4 else ws[0]
        limit = np.sqrt(6.0 / fan_in)
        params.append({'W': rng.uniform(-limit, limit, ws), 'b': np.zeros(bs)})
    return CNNModel(arch, params, meta={'seed': int(seed), 'epochs': 0,
                                        'train_loss': [], 'val_loss': []})


# ══════════════════════════════════════════════════════════════
# Layers
# ══════════════════════════════════════════════════════════════

def _conv_forward(x, W, b):
    B, H, Wd, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(B * H * Wd, C * 9)
    out = cols @ W.reshape(W.shape[0], -1).T + b
    return out.reshape(B, H, Wd, -1), cols


def _conv_backward(dout, W, cols, x_shape):
    B, H, Wd, C = x_shape
    F = W.shape[0]
    d2 = dout.reshape(-1, F)
    dW = (d2.T @ cols).reshape(W.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ W.reshape(F, -1)).reshape(B, H, Wd, C, 3, 3)
    dxp = np.zeros((B, H + 2, Wd + 2, C))
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + H, j:j + Wd, :] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1, :], dW, db


def _pool_forward(x):
    B, H, Wd, C = x.shape
    h2, w2 = H // 2, Wd // 2
    blocks = (x[:, :2 * h2, :2 * w2, :].reshape(B, h2, 2, w2, 2, C)
              .transpose(0, 1, 3, 5, 2, 4).reshape(B, h2, w2, C, 4))
    idx = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape):
    B, H, Wd, C = x_shape
    h2, w2 = H // 2, Wd // 2
    dblocks = np.zeros((B, h2, w2, C, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :2 * h2, :2 * w2, :] = (dblocks.reshape(B, h2, w2, C, 2, 2)
                                  .transpose(0, 1, 4, 2, 5, 3).reshape(B, 2 * h2, 2 * w2, C))
    return dx


def _effective(model):
    return [{'W': p['W'] * m['W'], 'b': p['b'] * m['b']} for p, m in zip(model.params, model.masks)]


def _forward_cached(model, X):
    X = np.asarray(X, dtype=float)
    k = model.arch.input_size
    if X.shape[-2:] != (k, k):
        raise InvalidParameterError(f"feature matrix {X.shape[-2:]} does not match arch input {k}x{k}")
    x = X.reshape(-1, k, k, 1)
    params = _effective(model)
    caches, pi = [], 0
    flat_shape = None
    for layer in model.arch.layers():
        if layer['kind'] == 'conv':
            p = params[pi]
            z, cols = _conv_forward(x, p['W'], p['b'])
            caches.append(('conv', pi, cols, x.shape, z > 0))
            x = np.maximum(z, 0.0)
            pi += 1
        elif layer['kind'] == 'pool':
            out, idx = _pool_forward(x)
            caches.append(('pool', idx, x.shape))
            x = out
        else:
            if flat_shape is None:
                flat_shape = x.shape
                x = x.reshape(x.shape[0], -1)
                caches.append(('flatten', flat_shape))
            p = params[pi]
            z = x @ p['W'] + p['b']
            caches.append(('dense', pi, x, z > 0 if layer['relu'] else None))
            x = np.maximum(z, 0.0) if layer['relu'] else z
            pi += 1
    return x[:, 0], caches, params


def forward(model, F):
    """Predicted SDR in dB for one K x K matrix (scalar) or a batch (vector)."""
    X = np.asarray(F, dtype=float)
    pred, _, _ = _forward_cached(model, X)
    return float(pred[0]) if X.ndim == 2 else pred


def _backward(dpred, caches, params):
    grads = [None] * len(params)
    dx = dpred[:, None]
    for cache in reversed(caches):
        kind = cache[0]
        if kind == 'dense':
            _, pi, x_in, relu = cache
            if relu is not None:
                dx = dx * relu
            grads[pi] = {'W': x_in.T @ dx, 'b': dx.sum(axis=0)}
            dx = dx @ params[pi]['W'].T
        elif kind == 'flatten':
            dx = dx.reshape(cache[1])
        elif kind == 'pool':
            dx = _pool_backward(dx, cache[1], cache[2])
        else:
            _, pi, cols, x_shape, relu = cache
            dx, dW, db = _conv_backward(dx * relu, params[pi]['W'], cols, x_shape)
            grads[pi] = {'W': dW, 'b': db}
    return grads


# ══════════════════════════════════════════════════════════════
# Loss
# ══════════════════════════════════════════════════════════════

def mape_loss(pred_db, label_db):
    pred, label = np.asarray(pred_db, dtype=float), np.asarray(label_db, dtype=float)
    if np.any(np.abs(label) < LABEL_GUARD_DB):
        raise InvalidParameterError(f"labels must satisfy |label| >= {LABEL_GUARD_DB} dB")
    return float(np.mean(np.abs(pred - label) / np.abs(label)))


def loss_and_gradients(model, X, y):
    """MAPE over the batch and its gradient for every weight layer (masked)."""
    y = np.asarray(y, dtype=float)
    pred, caches, params = _forward_cached(model, X)
    loss = mape_loss(pred, y)
    dpred = np.sign(pred - y) / np.abs(y) / y.size
    grads = _backward(dpred, caches, params)
    for g, m in zip(grads, model.masks):
        g['W'] *= m['W']
        g['b'] *= m['b']
    return loss, grads


def _loss_and_signature(model, X, y):
    """MAPE and the activation pattern (ReLU masks, pool winners) of one pass."""
    pred, caches, _ = _forward_cached(model, X)
    parts = []
    for c in caches:
        if c[0] == 'conv':
            parts.append(c[4].ravel())
        elif c[0] == 'pool':
            parts.append(c[1].ravel())
        elif c[0] == 'dense' and c[3] is not None:
            parts.append(c[3].ravel())
    return mape_loss(pred, y), (np.concatenate(parts) if parts else np.zeros(0))


# ══════════════════════════════════════════════════════════════
# Dataset
# ══════════════════════════════════════════════════════════════

@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    gammas_db: np.ndarray
    ue_ids: np.ndarray
    splits: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        self.gammas_db = np.asarray(self.gammas_db, dtype=float)
        self.ue_ids = np.asarray(self.ue_ids, dtype=int)
        self.splits = np.asarray(self.splits, dtype='<U5')
        n = len(self.labels)
        if not (len(self.features) == len(self.gammas_db) == len(self.ue_ids) == len(self.splits) == n):
            raise InvalidParameterError("dataset columns have different lengths")
        if not np.all(np.isfinite(self.labels)):
            raise InvalidParameterError("dataset labels must be finite")
        unknown = set(np.unique(self.splits)) - set(SPLITS)
        if unknown:
            raise InvalidParameterError(f"unknown split tags {sorted(unknown)}")

    def __len__(self):
        return len(self.labels)

    def subset(self, split):
        keep = self.splits == split
        return Dataset(self.features[keep], self.labels[keep], self.gammas_db[keep],
                       self.ue_ids[keep], self.splits[keep])

    def with_split(self, split):
        return replace(self, splits=np.full(len(self), split))


def merge_datasets(*parts):
    return Dataset(np.concatenate([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.gammas_db for p in parts]),
                   np.concatenate([p.ue_ids for p in parts]),
                   np.concatenate([p.splits for p in parts]))


def _dataset_ue(task):
    """Records of one UE: a list of (F, label_db, gamma_db, ue_id)."""
    setup, scenario, ue, gammas_db, model_name, seed = task
    try:
        channel = ue_channel(setup, scenario, ue, model_name, derive_seed(seed, 'channel', ue))
    except NavigatorError as e:
        log.warning(f"[DATASET] UE {ue}: channel failed ({e}), skipped")
        return []
    records = []
    sym_seed = derive_seed(seed, 'symbols', ue)
    for g_db in gammas_db:
        gamma = 10 ** (g_db / 10)
        try:
            link = simulate_link(channel, setup.pa, setup.ofdm, gamma, setup.n_symbols, sym_seed)
            label = float(to_db(link.sdr))
            if not np.isfinite(label) or abs(label) < LABEL_GUARD_DB:
                log.warning(f"[DATASET] UE {ue} IBO {g_db} dB: label {label} dB rejected")
                continue
            records.append((feature_matrix(channel, link.gamma_avg).F, label, float(g_db), ue))
        except NavigatorError as e:
            log.warning(f"[DATASET] UE {ue} IBO {g_db} dB: {e}, skipped")
    return records


def build_dataset(scenario, ibo_list_db, channel_model, seed, setup, threads=1,
                  split=None, val_fraction=0.2):
    """Feature/label records for every UE position and IBO.

    With split=None records are tagged train/val at random (val_fraction);
    otherwise every record gets the given tag, e.g. 'test' for held-out IBOs.
    """
    if len(scenario) == 0 or len(ibo_list_db) == 0:
        raise InvalidParameterError("dataset needs at least one UE and one IBO")
    if split is not None and split not in SPLITS:
        raise InvalidParameterError(f"unknown split '{split}'")
    tasks = [(setup, scenario, ue, tuple(ibo_list_db), channel_model, seed) for ue in range(len(scenario))]
    records = [r for chunk in parallel_map(_dataset_ue, tasks, threads) for r in chunk]
    if not records:
        raise InvalidParameterError("every dataset record failed")
    F, labels, g, ue = zip(*records)
    n = len(records)
    if split is None:
        order = rng_for(seed, 'split').permutation(n)
        tags = np.full(n, 'train', dtype='<U5')
        tags[order[:int(round(val_fraction * n))]] = 'val'
    else:
        tags = np.full(n, split, dtype='<U5')
    log.info(f"[DATASET] {n} records from {len(scenario)} UEs x {len(ibo_list_db)} IBOs")
    return Dataset(np.stack(F), np.array(labels), np.array(g), np.array(ue), tags)


# ══════════════════════════════════════════════════════════════
# Training
# ══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shards: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.shards < 1:
            raise InvalidParameterError("epochs >= 0, batch_size >= 1 and shards >= 1 required")
        if not (self.learning_rate > 0 and self.epsilon > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidParameterError("invalid optimiser settings")


def _batch_gradients(model, X, y, shards, pool):
    """Loss and gradient of one batch; shards are reduced in a fixed order."""
    if shards <= 1 or len(y) < 2 * shards:
        return loss_and_gradients(model, X, y)
    bounds = np.array_split(np.arange(len(y)), shards)
    parts = list(pool.map(lambda idx: loss_and_gradients(model, X[idx], y[idx]), bounds))
    loss = 0.0
    grads = [{'W': np.zeros_like(p['W']), 'b': np.zeros_like(p['b'])} for p in model.params]
    for idx, (l, g) in zip(bounds, parts):
        w = len(idx) / len(y)
        loss += w * l
        for acc, gi in zip(grads, g):
            acc['W'] += w * gi['W']
            acc['b'] += w * gi['b']
    return loss, grads


def _fit(model, train_set, val_set, cfg):
    X, y = train_set.features, train_set.labels
    if len(y) == 0:
        raise InvalidParameterError("training split is empty")
    state = [{k: (np.zeros_like(p[k]), np.zeros_like(p[k])) for k in ('W', 'b')} for p in model.params]
    rng = rng_for(cfg.seed, 'shuffle', model.meta.get('epochs', 0))
    step = 0
    pool = ThreadPoolExecutor(max_workers=cfg.shards) if cfg.shards > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(y))
            total = 0.0
            for start in range(0, len(y), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = _batch_gradients(model, X[idx], y[idx], cfg.shards, pool)
                if not np.isfinite(loss):
                    raise TrainingFailureError(f"training diverged at epoch {epoch}", epoch, {'loss': loss})
                total += loss * len(idx)
                step += 1
                for p, g, s, m in zip(model.params, grads, state, model.masks):
                    for k in ('W', 'b'):
                        m1, m2 = s[k]
                        m1 *= cfg.beta1
                        m1 += (1 - cfg.beta1) * g[k]
                        m2 *= cfg.beta2
                        m2 += (1 - cfg.beta2) * g[k] ** 2
                        m_hat = m1 / (1 - cfg.beta1 ** step)
                        v_hat = m2 / (1 - cfg.beta2 ** step)
                        p[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
                        p[k] *= m[k]
            train_loss = total / len(y)
            val_loss = mape_loss(forward(model, val_set.features), val_set.labels) if len(val_set) else float('nan')
            if not np.all(np.isfinite([p['W'].sum() for p in model.params])):
                raise TrainingFailureError(f"non-finite weights at epoch {epoch}", epoch)
            model.meta['epochs'] = model.meta.get('epochs', 0) + 1
            model.meta.setdefault('train_loss', []).append(float(train_loss))
            model.meta.setdefault('val_loss', []).append(float(val_loss))
            log.info(f"[TRAIN] epoch {model.meta['epochs']} train MAPE {100 * train_loss:.2f}% "
                     f"val MAPE {100 * val_loss:.2f}%")
    finally:
        if pool is not None:
            pool.shutdown()
    return model


def train(dataset, arch, cfg, model=None):
    """Adam on MAPE over the train split; the val split is only scored.

    A fresh model has its output bias set to the mean training label before
    the first update. Passing `model` continues training it in place of a
    fresh initialisation.
    """
    train_set, val_set = dataset.subset('train'), dataset.subset('val')
    if len(train_set) == 0:
        raise InvalidParameterError("training split is empty")
    if model is None:
        model = init_model(arch, cfg.seed)
        if cfg.epochs == 0:
            return model
        model.params[-1]['b'][:] = train_set.labels.mean()
    elif model.arch != arch:
        raise InvalidParameterError("model architecture differs from the requested one")
    return _fit(model, train_set, val_set, cfg)


def fine_tune(model, dataset, cfg):
    """Continue training a (pruned) model; pruned weights stay at zero."""
    return _fit(model.copy(), dataset.subset('train'), dataset.subset('val'), cfg)


def evaluate(model, testset):
    """(MAPE as a fraction, RMSE dB, MAE dB) over a dataset."""
    if len(testset) == 0:
        raise InvalidParameterError("evaluation set is empty")
    pred = forward(model, testset.features)
    err = pred - testset.labels
    return (mape_loss(pred, testset.labels),
            float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err))))


# ══════════════════════════════════════════════════════════════
# Gradient check
# ══════════════════════════════════════════════════════════════

def backward_gradcheck(model, sample, epsilon=1e-5):
    """Largest relative error between backprop and central differences.

    Parameters whose perturbation flips a ReLU or pool winner are retried at
    a smaller step and skipped if the flip persists.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidParameterError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    if model.n_params > MAX_GRADCHECK_PARAMS:
        raise InvalidParameterError(f"gradient check limited to {MAX_GRADCHECK_PARAMS} parameters, "
                                    f"model has {model.n_params}")
    F, label = sample
    X = np.asarray(F, dtype=float)[None]
    pred = forward(model, X)[0]
    label = float(label)
    if abs(pred - label) < 1e-3 * max(1.0, abs(label)):
        label = pred + 1.0 if abs(pred + 1.0) >= LABEL_GUARD_DB else pred - 1.0
    y = np.array([label])
    _, grads = loss_and_gradients(model, X, y)
    _, base_sig = _loss_and_signature(model, X, y)
    work = model.copy()
    worst = 0.0
    for li, p in enumerate(work.params):
        for key in ('W', 'b'):
            arr, mask = p[key], work.masks[li][key]
            for i in np.ndindex(arr.shape):
                if not mask[i]:
                    continue
                analytic = grads[li][key][i]
                numeric = None
                eps = epsilon
                orig = arr[i]
                while eps >= epsilon * 1e-3:
                    arr[i] = orig + eps
                    lp, sp = _loss_and_signature(work, X, y)
                    arr[i] = orig - eps
                    lm, sm = _loss_and_signature(work, X, y)
                    arr[i] = orig
                    if np.array_equal(sp, base_sig) and np.array_equal(sm, base_sig):
                        numeric = (lp - lm) / (2 * eps)
                        break
                    eps /= 10
                if numeric is None:
                    continue
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
                worst = max(worst, rel)
    return worst


# ══════════════════════════════════════════════════════════════
# Pruning
# ══════════════════════════════════════════════════════════════

def prune_magnitude(model, sparsity_fraction):
    """Zero the smallest conv filters (L1) and dense weights per layer."""
    if not 0 <= sparsity_fraction < 1:
        raise InvalidParameterError(f"sparsity must lie in [0, 1), got {sparsity_fraction}")
    pruned = model.copy()
    if sparsity_fraction == 0:
        return pruned
    for li, (p, m) in enumerate(zip(pruned.params, pruned.masks)):
        W = p['W'] * m['W']
        if W.ndim == 4:
            n_filters = W.shape[0]
            n_cut = int(round(sparsity_fraction * n_filters))
            if n_cut >= n_filters:
                raise PruningError(f"sparsity {sparsity_fraction} removes all {n_filters} filters of layer {li}")
            order = np.argsort(np.abs(W).reshape(n_filters, -1).sum(axis=1), kind='stable')
            cut = order[:n_cut]
            m['W'][cut] = False
            m['b'][cut] = False
        else:
            n_cut = int(round(sparsity_fraction * W.size))
            order = np.argsort(np.abs(W).ravel(), kind='stable')
            flat = m['W'].reshape(-1)
            flat[order[:n_cut]] = False
        p['W'] *= m['W']
        p['b'] *= m['b']
    rep = parameter_report(pruned)
    log.info(f"[PRUNE] sparsity {sparsity_fraction:.2f}: {rep['nonzero']}/{rep['total']} parameters kept")
    pruned.meta['sparsity'] = float(sparsity_fraction)
    return pruned


def _layer_positions(arch):
    """Output positions per weight layer: H*W for convs, 1 for dense layers."""
    size, positions = arch.input_size, []
    for layer in arch.layers():
        if layer['kind'] == 'conv':
            positions.append(size * size)
        elif layer['kind'] == 'pool':
            size //= 2
        else:
            positions.append(1)
    return positions


def parameter_report(model):
    """Total and surviving parameter and multiply-accumulate counts, overall and per weight layer."""
    layers = []
    for li, (p, m, pos) in enumerate(zip(model.params, model.masks, _layer_positions(model.arch))):
        total = p['W'].size + p['b'].size
        kept = int(m['W'].sum() + m['b'].sum())
        kind = 'conv' if p['W'].ndim == 4 else 'dense'
        layers.append({'layer': li, 'kind': kind, 'total': int(total), 'nonzero': kept,
                       'macs': int(p['W'].size * pos), 'macs_nonzero': int(m['W'].sum() * pos)})
    total = sum(l['total'] for l in layers)
    kept = sum(l['nonzero'] for l in layers)
    return {'total': total, 'nonzero': kept, 'fraction': kept / total,
            'macs': sum(l['macs'] for l in layers), 'macs_nonzero': sum(l['macs_nonzero'] for l in layers),
            'layers': layers}
