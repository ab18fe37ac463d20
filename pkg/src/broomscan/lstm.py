"""Stacked LSTM binary classifier trained with BPTT and Adam.

Parameters live in one flat float64 vector; named views index into it.
Layout, in order:

* per LSTM layer: input kernel ``W`` (d, 4h), recurrent kernel ``U``
  (h, 4h), bias ``b`` (4h). Gate blocks along the 4h axis are input,
  forget, cell candidate, output.
* per optional dense hidden layer (ReLU): kernel (in, units), bias (units).
* sigmoid head: kernel (last,), bias (1,).

Kernels are stored input-major, so a "column" is the incoming weight
vector of one unit; the max-norm constraint acts on those columns.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError, InvariantError
from .features import N_FEATURES

PROB_CLIP = 1e-12
REFERENCE_PARAM_COUNT = 42689
_CKPT_MAGIC = b"BSCK"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = N_FEATURES
    hidden: tuple = (64, 32)
    dense: tuple = ()
    dropout: float = 0.2
    l2: float = 1e-3
    maxnorm: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "dense", tuple(int(u) for u in self.dense))
        if self.input_dim < 1 or not self.hidden or min(self.hidden) < 1:
            raise DataError("input_dim and every hidden size must be >= 1")
        if self.dense and min(self.dense) < 1:
            raise DataError("dense layer sizes must be >= 1")
        if not 0 <= self.dropout < 1:
            raise DataError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.l2 < 0:
            raise DataError("l2 must be >= 0")
        if not self.maxnorm > 0:
            raise DataError("maxnorm must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    split: tuple = (0.65, 0.15, 0.20)

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise DataError("learning_rate must be >= 0")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise DataError(f"split fractions must be three non-negative values summing to 1: {self.split}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        for e in range(len(self)):
            yield e + 1, self.train_loss[e], self.train_acc[e], self.val_loss[e], self.val_acc[e]


def _layer_shapes(config: ModelConfig):
    shapes = []
    d = config.input_dim
    for h in config.hidden:
        shapes += [(d, 4 * h), (h, 4 * h), (4 * h,)]
        d = h
    for u in config.dense:
        shapes += [(d, u), (u,)]
        d = u
    shapes += [(d,), (1,)]
    return shapes


def param_count(config: ModelConfig) -> int:
    """Trainable parameter count: each LSTM layer contributes 4h(d + h + 1),
    each dense layer in*units + units, and the head last + 1."""
    total = 0
    d = config.input_dim
    for h in config.hidden:
        total += 4 * h * (d + h + 1)
        d = h
    for u in config.dense:
        total += d * u + u
        d = u
    return total + d + 1


def layouts_matching(target: int, input_dim: int = N_FEATURES, sizes=(8, 16, 32, 64, 128)) -> list:
    """Two-LSTM layouts, optionally with one dense hidden layer, whose
    parameter count equals ``target``."""
    hits = []
    for h1 in sizes:
        for h2 in sizes:
            for dense in [()] + [(u,) for u in sizes]:
                cfg = ModelConfig(input_dim, (h1, h2), dense)
                if param_count(cfg) == target:
                    hits.append(cfg)
    return hits


class ModelParams:
    """Flat parameter (or gradient) vector with named views."""

    def __init__(self, config: ModelConfig, flat: np.ndarray | None = None):
        self.config = config
        shapes = _layer_shapes(config)
        n = sum(int(np.prod(s)) for s in shapes)
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise DataError(f"parameter vector must have {n} values, got {flat.shape}")
        self.flat = flat
        views = []
        pos = 0
        for s in shapes:
            size = int(np.prod(s))
            views.append(flat[pos : pos + size].reshape(s))
            pos += size
        nl = len(config.hidden)
        self.lstm = [tuple(views[3 * i : 3 * i + 3]) for i in range(nl)]
        rest = views[3 * nl :]
        self.dense = [tuple(rest[2 * i : 2 * i + 2]) for i in range(len(config.dense))]
        self.head_w, self.head_b = rest[-2], rest[-1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.flat.copy())

    def kernels(self):
        """Every weight matrix/vector that takes L2 (biases excluded)."""
        out = []
        for W, U, _ in self.lstm:
            out += [W, U]
        out += [W for W, _ in self.dense]
        out.append(self.head_w)
        return out

    def constrained_kernels(self):
        return [m for W, U, _ in self.lstm for m in (W, U)]

    def __len__(self):
        return self.flat.size


def init_params(config: ModelConfig, rng) -> ModelParams:
    """Glorot-uniform kernels, zero biases, forget-gate biases at 1."""
    p = ModelParams(config)

    def glorot(a):
        fan_in = a.shape[0]
        fan_out = a.shape[1] if a.ndim == 2 else 1
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        a[...] = rng.uniform(-lim, lim, size=a.shape)

    for W, U, b in p.lstm:
        glorot(W)
        glorot(U)
        h = U.shape[0]
        b[h : 2 * h] = 1.0
    for W, _ in p.dense:
        glorot(W)
    glorot(p.head_w)
    return p


def apply_maxnorm(params: ModelParams, c: float) -> ModelParams:
    """Rescale, in place, every LSTM kernel column whose norm exceeds ``c``."""
    if not c > 0:
        raise DataError("max-norm cap must be positive")
    for K in params.constrained_kernels():
        norms = np.sqrt(np.sum(K * K, axis=0))
        over = norms > c
        if over.any():
            K[:, over] *= c / norms[over]
    return params


def l2_penalty(params: ModelParams, l2_lambda: float) -> float:
    return l2_lambda * sum(float(np.sum(K * K)) for K in params.kernels())


def loss(prob: float, label: int, params: ModelParams | None = None, l2_lambda: float = 0.0) -> float:
    """Binary cross-entropy of one prediction plus the L2 penalty."""
    p = min(max(float(prob), PROB_CLIP), 1.0 - PROB_CLIP)
    bce = -(label * math.log(p) + (1 - label) * math.log(1.0 - p))
    return bce + (l2_penalty(params, l2_lambda) if params is not None and l2_lambda else 0.0)


def batch_loss(probs, labels, params=None, l2_lambda: float = 0.0) -> float:
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    y = np.asarray(labels, dtype=np.float64)
    bce = float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))
    return bce + (l2_penalty(params, l2_lambda) if params is not None and l2_lambda else 0.0)


def sample_dropout_masks(config: ModelConfig, batch: int, steps: int, rng):
    """Inverted-dropout masks: one (B, T, h) per lower LSTM layer and a
    (B, h) mask on the top layer's last output."""
    rate = config.dropout
    masks = []
    for i, h in enumerate(config.hidden):
        shape = (batch, h) if i == len(config.hidden) - 1 else (batch, steps, h)
        if rate == 0:
            masks.append(np.ones(shape))
        else:
            masks.append((rng.random(shape) >= rate) / (1.0 - rate))
    return masks


_probes = {}


def _fingerprint(params: ModelParams):
    """Cheap identity of the current parameter values (detects stale caches)."""
    n = params.flat.size
    probe = _probes.get(n)
    if probe is None:
        probe = _probes[n] = np.random.default_rng(n).uniform(0.5, 1.5, n)
    return id(params.flat), float(params.flat @ probe)


class ForwardCache:
    __slots__ = ("X", "layer_inputs", "steps", "masks", "dense_in", "dense_pre", "top", "probs", "params_id")

    def __init__(self):
        self.layer_inputs, self.steps, self.dense_in, self.dense_pre = [], [], [], []


def _as_batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] < 1:
        raise DataError(f"input must be (batch, steps, features), got {X.shape}")
    return X


def forward_batch(params: ModelParams, X, train: bool = False, rng=None, masks=None):
    """Run a batch of equal-length sequences. Returns ``(probs, cache)``.

    In train mode dropout masks are drawn from ``rng`` unless ``masks`` is
    given, in which case they are replayed as-is.
    """
    cfg = params.config
    X = _as_batch(X)
    B, T, d = X.shape
    if d != cfg.input_dim:
        raise DataError(f"feature dimension {d} does not match model input_dim {cfg.input_dim}")
    if train and masks is None:
        if cfg.dropout > 0 and rng is None:
            raise DataError("train-mode forward with dropout needs an rng or explicit masks")
        masks = sample_dropout_masks(cfg, B, T, rng)
    cache = ForwardCache()
    cache.X = X
    cache.masks = masks if train else None
    cache.params_id = _fingerprint(params)
    inp = X
    n_layers = len(params.lstm)
    top = None
    for li, (W, U, b) in enumerate(params.lstm):
        n = U.shape[0]
        xw = (inp.reshape(B * T, -1) @ W + b).reshape(B, T, -1)
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        H = np.empty((B, T, n))
        steps = []
        for t in range(T):
            z = xw[:, t] + h @ U
            gates, c_new, tanh_c, h_new = kernels.lstm_gates_forward(z, c)
            steps.append((h, c, gates, tanh_c))
            h, c = h_new, c_new
            H[:, t] = h
        cache.layer_inputs.append(inp)
        cache.steps.append(steps)
        if li < n_layers - 1:
            inp = H * masks[li] if train else H
        else:
            top = H[:, -1]
            if train:
                top = top * masks[li]
    a = top
    for W, bias in params.dense:
        cache.dense_in.append(a)
        pre = a @ W + bias
        cache.dense_pre.append(pre)
        a = np.maximum(pre, 0.0)
    cache.top = a
    logits = a @ params.head_w + params.head_b[0]
    probs = kernels.sigmoid(logits)
    cache.probs = probs
    return probs, cache


def forward(params: ModelParams, sample, mode: str = "infer", rng=None, masks=None):
    """Probability that ``sample`` (SequenceSample or (T, d) array) is infected.

    Returns ``(probability, cache)``.
    """
    if mode not in ("train", "infer"):
        raise DataError(f"mode must be 'train' or 'infer', got {mode!r}")
    X = sample.matrix if hasattr(sample, "matrix") else sample
    probs, cache = forward_batch(params, np.asarray(X)[None], mode == "train", rng, masks)
    return float(probs[0]), cache


def backward(params: ModelParams, cache: ForwardCache, labels, l2_lambda: float | None = None) -> ModelParams:
    """Gradient of :func:`batch_loss` (mean BCE plus L2) with respect to every
    parameter, replaying the cached dropout masks."""
    if cache.params_id != _fingerprint(params):
        raise InvariantError("stale forward cache: parameters changed since the forward pass")
    cfg = params.config
    lam = cfg.l2 if l2_lambda is None else l2_lambda
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    B = cache.X.shape[0]
    if y.size != B:
        raise DataError(f"{y.size} labels for a batch of {B}")
    grad = ModelParams(cfg)
    train = cache.masks is not None

    dlogit = (cache.probs - y) / B
    grad.head_w[...] = cache.top.T @ dlogit
    grad.head_b[0] = dlogit.sum()
    da = np.outer(dlogit, params.head_w)
    for i in range(len(params.dense) - 1, -1, -1):
        W, _ = params.dense[i]
        dpre = da * (cache.dense_pre[i] > 0)
        gW, gb = grad.dense[i]
        gW[...] = cache.dense_in[i].T @ dpre
        gb[...] = dpre.sum(axis=0)
        da = dpre @ W.T

    n_layers = len(params.lstm)
    top_mask = cache.masks[-1] if train else 1.0
    T = cache.X.shape[1]
    n_top = params.lstm[-1][1].shape[0]
    dH = np.zeros((B, T, n_top))
    dH[:, -1] = da * top_mask
    for li in range(n_layers - 1, -1, -1):
        W, U, _ = params.lstm[li]
        gW, gU, gb = grad.lstm[li]
        n = U.shape[0]
        steps = cache.steps[li]
        dZ = np.empty((B, T, 4 * n))
        dh_next = np.zeros((B, n))
        dc_next = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            h_prev, c_prev, gates, tanh_c = steps[t]
            dz, dc_next = kernels.lstm_gates_backward(dH[:, t] + dh_next, dc_next, gates, c_prev, tanh_c)
            gU += h_prev.T @ dz
            dh_next = dz @ U.T
            dZ[:, t] = dz
        inp = cache.layer_inputs[li]
        gW[...] = inp.reshape(B * T, -1).T @ dZ.reshape(B * T, -1)
        gb[...] = dZ.sum(axis=(0, 1))
        if li > 0:
            dH = (dZ.reshape(B * T, -1) @ W.T).reshape(B, T, -1)
            if train:
                dH = dH * cache.masks[li - 1]
    if lam:
        for g, K in zip(grad.kernels(), params.kernels()):
            g += 2.0 * lam * K
    return grad


def _length_groups(samples, order=None):
    """Indices grouped by sequence length, preserving the given order."""
    order = range(len(samples)) if order is None else order
    groups = {}
    for i in order:
        groups.setdefault(samples[i].length, []).append(i)
    return groups


def predict_proba(params: ModelParams, samples) -> np.ndarray:
    samples = list(samples)
    out = np.empty(len(samples))
    for idx in _length_groups(samples).values():
        X = np.stack([samples[i].matrix for i in idx])
        probs, _ = forward_batch(params, X)
        out[idx] = probs
    return out


def predict(params: ModelParams, samples, threshold: float = 0.5):
    """``(labels, probs)``: infected (1) iff probability > threshold."""
    probs = predict_proba(params, samples)
    return (probs > threshold).astype(np.int64), probs


def evaluate_split(params: ModelParams, samples):
    """Mean loss (with L2) and accuracy; NaN for an empty split."""
    if not samples:
        return float("nan"), float("nan")
    labels = np.array([s.y for s in samples])
    preds, probs = predict(params, samples)
    return batch_loss(probs, labels, params, params.config.l2), float(np.mean(preds == labels))


def _batches(samples, order, batch_size):
    batches = []
    for idx in _length_groups(samples, order).values():
        for start in range(0, len(idx), batch_size):
            batches.append(idx[start : start + batch_size])
    # interleave buckets by first appearance in the shuffled order
    pos = {i: k for k, i in enumerate(order)}
    batches.sort(key=lambda b: pos[b[0]])
    return batches


def train(dataset, model_config: ModelConfig = ModelConfig(), train_config: TrainConfig = TrainConfig(),
          val_set=None, callback=None):
    """Mini-batch Adam with max-norm after every update.

    Returns ``(params, history)``. Training loss and accuracy are running
    means over the epoch's mini-batches (dropout active, parameters moving);
    validation metrics are evaluated in inference mode after the epoch.
    Fully deterministic for a given ``train_config.seed``.
    """
    samples = list(dataset)
    if not samples:
        raise DataError("training set is empty")
    labels = {s.y for s in samples}
    if len(labels) < 2:
        raise DataError("training split holds a single class")
    val_set = list(val_set or [])
    init_rng, shuffle_rng, drop_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(train_config.seed).spawn(3)
    )
    params = init_params(model_config, init_rng)
    apply_maxnorm(params, model_config.maxnorm)
    m = np.zeros_like(params.flat)
    v = np.zeros_like(params.flat)
    b1, b2, eps, lr = train_config.beta1, train_config.beta2, train_config.eps, train_config.learning_rate
    step = 0
    history = TrainHistory()
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(len(samples))
        loss_sum = 0.0
        correct = 0
        for idx in _batches(samples, order, train_config.batch_size):
            X = np.stack([samples[i].matrix for i in idx])
            y = np.array([samples[i].y for i in idx], dtype=np.float64)
            probs, cache = forward_batch(params, X, train=True, rng=drop_rng)
            loss_sum += batch_loss(probs, y, params, model_config.l2) * len(idx)
            correct += int(np.sum((probs > 0.5) == (y > 0.5)))
            g = backward(params, cache, y).flat
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**step)
            vhat = v / (1 - b2**step)
            params.flat -= lr * mhat / (np.sqrt(vhat) + eps)
            apply_maxnorm(params, model_config.maxnorm)
        vl, va = evaluate_split(params, val_set)
        history.train_loss.append(loss_sum / len(samples))
        history.train_acc.append(correct / len(samples))
        history.val_loss.append(vl)
        history.val_acc.append(va)
        if callback is not None:
            callback(epoch, history)
    return params, history


def gradient_check(input_dim: int = 5, hidden=(8,), seq_len: int = 3, batch: int = 4, eps: float = 1e-5,
                   seed: int = 0, dropout: float = 0.2, l2: float = 1e-3, dense=()) -> dict:
    """Compare analytic gradients with central differences on a random model.

    Dropout masks are drawn once and replayed for every evaluation. Returns
    a dict with the maximum relative error and the parameter count.
    """
    cfg = ModelConfig(input_dim, tuple(hidden), tuple(dense), dropout, l2, 3.0)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng)
    params.flat += rng.normal(0.0, 0.1, size=params.flat.shape)
    X = rng.normal(0.0, 1.0, size=(batch, seq_len, input_dim))
    y = (np.arange(batch) % 2).astype(np.float64)
    masks = sample_dropout_masks(cfg, batch, seq_len, rng)

    def objective(p):
        probs, _ = forward_batch(p, X, train=True, masks=masks)
        return batch_loss(probs, y, p, l2)

    _, cache = forward_batch(params, X, train=True, masks=masks)
    analytic = backward(params, cache, y).flat
    numeric = np.empty_like(analytic)
    probe = params.copy()
    for i in range(probe.flat.size):
        orig = probe.flat[i]
        probe.flat[i] = orig + eps
        up = objective(probe)
        probe.flat[i] = orig - eps
        down = objective(probe)
        probe.flat[i] = orig
        numeric[i] = (up - down) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    return {
        "max_rel_error": float(rel.max()),
        "worst_index": worst,
        "n_params": int(analytic.size),
        "analytic": analytic,
        "numeric": numeric,
    }


def save_checkpoint(params: ModelParams, path, seed: int | None = None, epoch: int | None = None,
                    extra: dict | None = None) -> None:
    """Write ``BSCK`` + uint32 header length + JSON header + float64 payload (little-endian)."""
    header = {
        "format": "broomscan-lstm",
        "version": 1,
        "config": asdict(params.config),
        "seed": seed,
        "epoch": epoch,
        "n_params": len(params),
        "layout": [list(s) for s in _layer_shapes(params.config)],
    }
    if extra:
        header.update(extra)
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<I", len(hb)))
    buf.write(hb)
    buf.write(params.flat.astype("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(params, header)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    cfg = ModelConfig(**header["config"])
    flat = np.frombuffer(data[8 + hlen :], dtype="<f8").astype(np.float64)
    if flat.size != header["n_params"]:
        raise DataError(f"{path}: payload holds {flat.size} values, header declares {header['n_params']}")
    return ModelParams(cfg, flat), header
