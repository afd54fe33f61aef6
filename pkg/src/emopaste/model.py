"""Attention-pooled frame classifier with analytic gradients and Adam training.

Frames go through a small affine encoder, multi-head distance-softmax
attention pooling turns the variable-length sequence into a fixed vector,
and two affine layers produce class logits. Batches are processed
item-by-item (no padding); gradients are derived by hand and checked
against finite differences in the tests.
"""

import copy
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .batcher import materialize_batch, plan_epoch
from .copypaste import EmotionLabel, Scheme
from .evaluate import EvalReport, weighted_f1
from .features import FeatureMatrix

_SEED_BOUND = 2**63
_SHARPNESS_FLOOR = 1e-6
_CHECKPOINT_MAGIC = b"EMOPCKPT"
_CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class AttentionParams:
    """Per-head centers and sharpness for distance-based attention."""

    mu: np.ndarray  # (n_heads, d_enc)
    s: np.ndarray  # (n_heads,), all positive

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.mu.ndim != 2 or self.s.ndim != 1 or self.mu.shape[0] != self.s.shape[0]:
            raise ValueError(f"inconsistent attention shapes {self.mu.shape} vs {self.s.shape}")
        if not np.all(np.isfinite(self.mu)) or not np.all(np.isfinite(self.s)):
            raise ValueError("attention parameters must be finite")
        if np.any(self.s <= 0):
            raise ValueError("sharpness values must be positive")

    @property
    def n_heads(self) -> int:
        return self.mu.shape[0]


@dataclass(eq=False)
class ModelParams:
    enc_w: list  # affine chain, ReLU between layers, linear output
    enc_b: list
    attention: AttentionParams
    head_w: np.ndarray  # (n_heads * d_enc, head_width)
    head_b: np.ndarray
    out_w: np.ndarray  # (head_width, n_classes)
    out_b: np.ndarray
    labels: tuple  # class order fixes the logit order

    def __post_init__(self):
        if len(self.enc_w) != len(self.enc_b) or not self.enc_w:
            raise ValueError("encoder weight and bias lists must match and be non-empty")
        d_enc = self.enc_w[-1].shape[1]
        if self.attention.mu.shape[1] != d_enc:
            raise ValueError("attention centers do not match encoder output width")
        if self.head_w.shape[0] != self.attention.n_heads * d_enc:
            raise ValueError("head layer does not match pooled embedding size")
        if self.head_w.shape[1] != self.out_w.shape[0]:
            raise ValueError("classifier layers do not chain")
        if self.out_w.shape[1] != len(self.labels):
            raise ValueError("output width does not match label count")

    @property
    def input_dim(self) -> int:
        return self.enc_w[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.out_w.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int = 1
    batch_size: int = 128
    scheme: Scheme = Scheme.NONE
    aug_fraction: float = 0.8
    crop_seconds: float = 4.0
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    input_dim: int = 23
    encoder_hidden: tuple = (64,)
    d_enc: int = 32
    n_heads: int = 32
    head_width: int = 64

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.n_heads < 1:
            raise ValueError("counts must be positive")
        if self.learning_rate <= 0 or self.crop_seconds <= 0 or self.adam_epsilon <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.aug_fraction <= 1.0:
            raise ValueError(f"aug_fraction must lie in [0, 1], got {self.aug_fraction}")


def init_params(config: TrainConfig, labels, rng) -> ModelParams:
    """Fan-in-scaled uniform affine init, mu ~ 0.1-sigma Gaussian, s = 1."""
    labels = tuple(labels)
    dims = [config.input_dim, *config.encoder_hidden, config.d_enc]

    def affine(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return w, b

    enc_w, enc_b = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w, b = affine(d_in, d_out)
        enc_w.append(w)
        enc_b.append(b)
    mu = 0.1 * rng.standard_normal((config.n_heads, config.d_enc))
    s = np.ones(config.n_heads)
    head_w, head_b = affine(config.n_heads * config.d_enc, config.head_width)
    out_w, out_b = affine(config.head_width, len(labels))
    return ModelParams(enc_w, enc_b, AttentionParams(mu, s), head_w, head_b, out_w, out_b, labels)


def iter_params(params: ModelParams):
    """(name, array) pairs in the fixed declaration order used everywhere."""
    for i, (w, b) in enumerate(zip(params.enc_w, params.enc_b)):
        yield f"enc_w{i}", w
        yield f"enc_b{i}", b
    yield "mu", params.attention.mu
    yield "s", params.attention.s
    yield "head_w", params.head_w
    yield "head_b", params.head_b
    yield "out_w", params.out_w
    yield "out_b", params.out_b


def _as_values(feats) -> np.ndarray:
    values = feats.values if isinstance(feats, FeatureMatrix) else np.asarray(feats, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D frame matrix, got shape {values.shape}")
    return values


def _encoder_forward(frames, params):
    """Returns layer inputs and pre-activations; the last layer is linear."""
    inputs = [frames]
    pres = []
    last = len(params.enc_w) - 1
    for i, (w, b) in enumerate(zip(params.enc_w, params.enc_b)):
        pre = inputs[i] @ w + b
        pres.append(pre)
        if i < last:
            inputs.append(np.maximum(pre, 0.0))
    return inputs, pres


def encode_frames(values, params: ModelParams) -> np.ndarray:
    values = _as_values(values)
    if values.shape[1] != params.input_dim:
        raise ValueError(f"frame width {values.shape[1]} does not match encoder input {params.input_dim}")
    _, pres = _encoder_forward(values, params)
    return pres[-1]


def attention_weights(X, att: AttentionParams) -> np.ndarray:
    """Per-head softmax over frames of -s_h * ||x_t - mu_h||, max-subtracted."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected at least one frame row, got shape {X.shape}")
    if X.shape[1] != att.mu.shape[1]:
        raise ValueError(f"frame width {X.shape[1]} does not match centers {att.mu.shape[1]}")
    diff = X[None, :, :] - att.mu[:, None, :]  # (H, T, D)
    dist = np.sqrt(np.einsum("htd,htd->ht", diff, diff))
    scores = -att.s[:, None] * dist
    scores -= scores.max(axis=1, keepdims=True)
    expd = np.exp(scores)
    return expd / expd.sum(axis=1, keepdims=True)


def attention_pool(X, W) -> np.ndarray:
    """Per-head weighted average over frames: e_h = sum_t w_ht x_t."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or W.shape[1] != X.shape[0]:
        raise ValueError(f"shape mismatch: weights {W.shape} vs frames {X.shape}")
    sums = W.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("attention weight rows must sum to 1")
    return W @ X


def forward(feats, params: ModelParams) -> np.ndarray:
    """Class logits for one utterance's feature matrix."""
    Z = encode_frames(feats, params)
    W = attention_weights(Z, params.attention)
    E = attention_pool(Z, W)
    hidden = np.maximum(E.ravel() @ params.head_w + params.head_b, 0.0)
    return hidden @ params.out_w + params.out_b


def predict_label(feats, params: ModelParams) -> EmotionLabel:
    logits = forward(feats, params)
    return params.labels[int(np.argmax(logits))]


def _label_index(label, params: ModelParams) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    name = label.name if isinstance(label, EmotionLabel) else str(label)
    for i, lab in enumerate(params.labels):
        if lab.name == name:
            return i
    raise ValueError(f"label {name!r} is not in the model's label set")


def loss_and_grad(batch, params: ModelParams):
    """Mean cross-entropy over the batch plus gradients for every parameter.

    Returns (loss, grads) where grads maps each iter_params name to an array
    of the same shape. The distance gradient at ||x - mu|| = 0 uses
    subgradient 0. Frames of all items share the stacked encoder matmuls;
    attention runs item-by-item.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be non-empty")
    values = [_as_values(feats) for feats, _ in batch]
    targets = np.array([_label_index(label, params) for _, label in batch])
    for v in values:
        if v.shape[1] != params.input_dim:
            raise ValueError(f"frame width {v.shape[1]} does not match encoder input {params.input_dim}")

    n_items = len(batch)
    lengths = [v.shape[0] for v in values]
    offsets = np.concatenate(([0], np.cumsum(lengths)))
    frames = np.concatenate(values, axis=0)

    inputs, pres = _encoder_forward(frames, params)
    Z_all = pres[-1]
    mu, s = params.attention.mu, params.attention.s
    n_heads, d_enc = mu.shape

    # Forward attention, keeping per-item state for the backward pass.
    per_item = []
    pooled = np.empty((n_items, n_heads * d_enc))
    for i in range(n_items):
        Z = Z_all[offsets[i] : offsets[i + 1]]
        diff = Z[None, :, :] - mu[:, None, :]
        dist = np.sqrt(np.einsum("htd,htd->ht", diff, diff))
        scores = -s[:, None] * dist
        scores -= scores.max(axis=1, keepdims=True)
        expd = np.exp(scores)
        weights = expd / expd.sum(axis=1, keepdims=True)
        pooled[i] = (weights @ Z).ravel()
        per_item.append((Z, diff, dist, weights))

    pre_hidden = pooled @ params.head_w + params.head_b
    hidden = np.maximum(pre_hidden, 0.0)
    logits = hidden @ params.out_w + params.out_b

    row_max = logits.max(axis=1, keepdims=True)
    logsumexp = row_max[:, 0] + np.log(np.exp(logits - row_max).sum(axis=1))
    loss = float(np.mean(logsumexp - logits[np.arange(n_items), targets]))

    # Classifier backward.
    probs = np.exp(logits - logsumexp[:, None])
    dlogits = probs.copy()
    dlogits[np.arange(n_items), targets] -= 1.0
    dlogits /= n_items
    grads = {
        "out_w": hidden.T @ dlogits,
        "out_b": dlogits.sum(axis=0),
    }
    dhidden = dlogits @ params.out_w.T
    dpre_hidden = dhidden * (pre_hidden > 0)
    grads["head_w"] = pooled.T @ dpre_hidden
    grads["head_b"] = dpre_hidden.sum(axis=0)
    dpooled = dpre_hidden @ params.head_w.T

    # Attention backward, item-by-item.
    dZ_all = np.zeros_like(Z_all)
    dmu = np.zeros_like(mu)
    ds = np.zeros_like(s)
    for i in range(n_items):
        Z, diff, dist, weights = per_item[i]
        dE = dpooled[i].reshape(n_heads, d_enc)
        dweights = dE @ Z.T
        dZ = weights.T @ dE
        dscores = weights * (dweights - (weights * dweights).sum(axis=1, keepdims=True))
        ddist = -s[:, None] * dscores
        ds -= (dist * dscores).sum(axis=1)
        inv = np.where(dist > 0, 1.0 / np.where(dist > 0, dist, 1.0), 0.0)
        coef = ddist * inv
        dZ += np.einsum("ht,htd->td", coef, diff)
        dmu -= np.einsum("ht,htd->hd", coef, diff)
        dZ_all[offsets[i] : offsets[i + 1]] = dZ
    grads["mu"] = dmu
    grads["s"] = ds

    # Encoder backward through the shared stack.
    g = dZ_all
    last = len(params.enc_w) - 1
    for i in range(last, -1, -1):
        dpre = g if i == last else g * (pres[i] > 0)
        grads[f"enc_w{i}"] = inputs[i].T @ dpre
        grads[f"enc_b{i}"] = dpre.sum(axis=0)
        g = dpre @ params.enc_w[i].T
    return loss, grads


@dataclass(eq=False)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: ModelParams, grads: dict, state: AdamState, config: TrainConfig) -> None:
    """One in-place Adam update; sharpness is clamped positive afterwards."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    for name, arr in iter_params(params):
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(arr)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        arr -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    np.maximum(params.attention.s, _SHARPNESS_FLOOR, out=params.attention.s)


def _derive_labels(utterances) -> tuple:
    by_name = {}
    for utt in utterances:
        by_name.setdefault(utt.label.name, utt.label)
    return tuple(by_name[name] for name in sorted(by_name))


def score_utterances(utts, features: dict, params: ModelParams) -> EvalReport:
    """Weighted-F1 report for full-length (uncropped) utterances."""
    refs = []
    hyps = []
    for utt in utts:
        if utt.id not in features:
            raise KeyError(f"no features stored for utterance {utt.id!r}")
        refs.append(utt.label)
        hyps.append(predict_label(features[utt.id], params))
    return weighted_f1(refs, hyps)


def train(train_utts, dev_utts, features: dict, config: TrainConfig):
    """Epoch loop with dev-set model selection.

    Returns (best_params, history) where history is the per-epoch dev
    weighted F1 and best_params is the snapshot from the argmax epoch
    (earliest on ties). All randomness descends from config.seed.
    """
    train_utts = list(train_utts)
    dev_utts = list(dev_utts)
    if not train_utts or not dev_utts:
        raise ValueError("both train and dev splits must be non-empty")

    labels = _derive_labels(train_utts + dev_utts)
    children = np.random.SeedSequence(config.seed).spawn(config.epochs + 1)
    params = init_params(config, labels, np.random.default_rng(children[0]))
    if config.epochs == 0:
        return params, []

    state = AdamState()
    history = []
    best_f1 = -1.0
    best_params = copy.deepcopy(params)
    for epoch in range(config.epochs):
        epoch_seed = int(np.random.default_rng(children[epoch + 1]).integers(_SEED_BOUND))
        plan = plan_epoch(
            train_utts,
            batch_size=config.batch_size,
            scheme=config.scheme,
            aug_fraction=config.aug_fraction,
            seed=epoch_seed,
        )
        for batch_index, batch in enumerate(plan.batches):
            examples = materialize_batch(batch, features, crop_seconds=config.crop_seconds)
            loss, grads = loss_and_grad(examples, params)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss {loss} at epoch {epoch}, batch {batch_index}")
            adam_step(params, grads, state, config)
        dev_f1 = score_utterances(dev_utts, features, params).weighted_f1
        history.append(dev_f1)
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = copy.deepcopy(params)
    return best_params, history


REFERENCE_HEADS = 32
REFERENCE_EMBED_DIM = 128
REFERENCE_FC_WIDTH = 400
REFERENCE_MEL_BANDS = 23


def validate_table1_shapes(input_frames: int, n_classes: int = 4):
    """Stage-by-stage output sizes of the reference convolutional recipe.

    Returns (stage_name, size) pairs where 2-D sizes are (time, freq)
    tuples. Stride-2 stages halve both axes with ceiling division; the
    frequency axis walks 23 -> 12 -> 6 -> 3.
    """
    if input_frames < 1:
        raise ValueError(f"input_frames must be positive, got {input_frames}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    t, f = input_frames, REFERENCE_MEL_BANDS
    stages = [("conv_7x7_16", (t, f)), ("res_stage_16", (t, f))]
    for name in ("res_stage_32", "res_stage_64", "res_stage_128"):
        t = -(-t // 2)
        f = -(-f // 2)
        stages.append((name, (t, f)))
    stages.append(("avg_pool_1x3", t))
    stages.append(("attention_heads", (REFERENCE_HEADS, REFERENCE_EMBED_DIM)))
    stages.append(("fc_hidden", REFERENCE_FC_WIDTH))
    stages.append(("fc_out", n_classes))
    return stages


def format_stage_table(stages) -> str:
    lines = []
    for name, size in stages:
        text = f"{size[0]}x{size[1]}" if isinstance(size, tuple) else str(size)
        lines.append(f"{name:<18} {text}")
    return "\n".join(lines) + "\n"


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic, version, label set, shape table, float64 data."""
    arrays = list(iter_params(params))
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", _CHECKPOINT_VERSION))
        fh.write(struct.pack("<H", len(params.labels)))
        for lab in params.labels:
            name = lab.name.encode("utf-8")
            fh.write(struct.pack("<BH", int(lab.is_neutral), len(name)))
            fh.write(name)
        fh.write(struct.pack("<H", len(arrays)))
        for name, arr in arrays:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    pos = len(_CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (version,) = take("<I")
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (n_labels,) = take("<H")
    labels = []
    for _ in range(n_labels):
        is_neutral, name_len = take("<BH")
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        labels.append(EmotionLabel(name=name, is_neutral=bool(is_neutral)))
    (n_arrays,) = take("<H")
    shapes = []
    for _ in range(n_arrays):
        (name_len,) = take("<H")
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        dims = take(f"<{ndim}I")
        shapes.append((name, dims))
    arrays = {}
    for name, dims in shapes:
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(dims).copy()
        pos += count * 8
        arrays[name] = arr
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")

    enc_w, enc_b = [], []
    for i in range(sum(1 for name in arrays if name.startswith("enc_w"))):
        enc_w.append(arrays[f"enc_w{i}"])
        enc_b.append(arrays[f"enc_b{i}"])
    return ModelParams(
        enc_w=enc_w,
        enc_b=enc_b,
        attention=AttentionParams(arrays["mu"], arrays["s"]),
        head_w=arrays["head_w"],
        head_b=arrays["head_b"],
        out_w=arrays["out_w"],
        out_b=arrays["out_b"],
        labels=tuple(labels),
    )
