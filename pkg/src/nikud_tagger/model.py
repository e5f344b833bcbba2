"""Three-head character tagger: context encoder -> 2 x BiLSTM -> dense -> heads.

Pure numpy with a hand-written reverse pass. Internally every sequence tensor
is time-major ``(L, B, ...)``; the public surface is batch-major.

Parameter naming (also the checkpoint order)::

    embedding                       (V, E)
    rnn{1,2}_{fwd,bwd}_Wx           (D_in, 4H)   gate order i, f, g, o
    rnn{1,2}_{fwd,bwd}_Wh           (H, 4H)
    rnn{1,2}_{fwd,bwd}_b            (4H,)
    dense_W, dense_b                (2H, H), (H,)
    head_{nikud,dagesh,sin}_W, _b   (H, K), (K,)   K = 12, 2, 3
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from .hebrew import HEAD_SIZES, MASK_ID

HEADS = ("nikud", "dagesh", "sin")
MODES = ("train", "eval")


class ShapeMismatch(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    hidden_size: int = 784
    embedding_dim: int = 128
    dropout: float = 0.1
    max_length: int = 1024
    epochs: int = 10
    seed: int = 0
    optimizer: str = "adam"
    encoder_frozen: bool = True
    activation: str = "tanh"
    dtype: str = "float64"
    patience: int = 5
    log_every: int = 100
    divergence_factor: float = 100.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        errors = []
        for name in ("learning_rate", "batch_size", "hidden_size", "embedding_dim",
                     "max_length", "epochs", "patience", "log_every", "divergence_factor"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append(f"{name}: expected a number, got {value!r}")
            elif value <= 0:
                errors.append(f"{name}: must be positive, got {value!r}")
        for name in ("batch_size", "hidden_size", "embedding_dim", "max_length",
                     "epochs", "patience", "log_every", "seed"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                errors.append(f"{name}: expected an integer, got {value!r}")
        if not isinstance(self.dropout, (int, float)) or not 0 <= self.dropout < 1:
            errors.append(f"dropout: must be in [0, 1), got {self.dropout!r}")
        if self.optimizer not in ("adam", "sgd"):
            errors.append(f"optimizer: must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.activation not in ("tanh", "identity"):
            errors.append(f"activation: must be 'tanh' or 'identity', got {self.activation!r}")
        if self.dtype not in ("float64", "float32"):
            errors.append(f"dtype: must be 'float64' or 'float32', got {self.dtype!r}")
        if not isinstance(self.encoder_frozen, bool):
            errors.append(f"encoder_frozen: expected a boolean, got {self.encoder_frozen!r}")
        if errors:
            raise ConfigError("; ".join(errors))

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "") -> "TrainingConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("; ".join(f"{prefix}{k}: unknown field" for k in unknown))
        try:
            return cls(**data)
        except ConfigError as e:
            if prefix:
                raise ConfigError("; ".join(prefix + part for part in str(e).split("; "))) from None
            raise

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def shape_digest(self) -> str:
        """Digest of the fields that determine parameter shapes and semantics."""
        keys = ("hidden_size", "embedding_dim", "activation", "dtype", "encoder_frozen")
        payload = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


class ContextEncoder(Protocol):
    """Anything that turns token ids ``(B, L)`` into vectors ``(B, L, E)``."""

    def __call__(self, token_ids: np.ndarray) -> np.ndarray: ...


@dataclass
class ModelParams:
    weights: dict[str, np.ndarray]
    config: TrainingConfig

    @property
    def hidden_size(self) -> int:
        return self.weights["dense_b"].shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weights["embedding"].shape[0]

    @property
    def encoder_frozen(self) -> bool:
        return self.config.encoder_frozen

    def trainable(self) -> list[str]:
        return [k for k in self.weights if not (k == "embedding" and self.encoder_frozen)]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.weights.items()}, self.config)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.weights.values())

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.weights.values())


class HeadLogits(NamedTuple):
    nikud: np.ndarray
    dagesh: np.ndarray
    sin: np.ndarray


class LossResult(NamedTuple):
    total: float
    per_head: tuple[float, float, float]


def param_shapes(vocab_size: int, embedding_dim: int, hidden_size: int) -> dict[str, tuple[int, ...]]:
    E, H = embedding_dim, hidden_size
    shapes: dict[str, tuple[int, ...]] = {"embedding": (vocab_size, E)}
    for layer, d_in in (("rnn1", E), ("rnn2", 2 * H)):
        for direction in ("fwd", "bwd"):
            p = f"{layer}_{direction}"
            shapes[f"{p}_Wx"] = (d_in, 4 * H)
            shapes[f"{p}_Wh"] = (H, 4 * H)
            shapes[f"{p}_b"] = (4 * H,)
    shapes["dense_W"] = (2 * H, H)
    shapes["dense_b"] = (H,)
    for head, k in zip(HEADS, HEAD_SIZES):
        shapes[f"head_{head}_W"] = (H, k)
        shapes[f"head_{head}_b"] = (k,)
    return shapes


def init(config: TrainingConfig, vocab, seed: int | None = None) -> ModelParams:
    """Seeded init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, forget bias 1.

    The embedding is a lookup (one-hot input, fan-in 1), so it draws from U(-1, 1).
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    H = config.hidden_size
    weights = {}
    for name, shape in param_shapes(len(vocab), config.embedding_dim, H).items():
        if len(shape) == 1:
            w = np.zeros(shape, dtype=dtype)
            if name.startswith("rnn"):
                w[H:2 * H] = 1.0
        else:
            fan_in = 1 if name == "embedding" else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=shape).astype(dtype)
        weights[name] = w
    return ModelParams(weights, config)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _lstm_forward(x, Wx, Wh, b, reverse):
    """x: (L, B, D) -> h: (L, B, H) plus cache."""
    L, B, _ = x.shape
    H = Wh.shape[0]
    xw = x @ Wx + b
    gates = np.empty((L, B, 4 * H), dtype=x.dtype)
    c_all = np.empty((L, B, H), dtype=x.dtype)
    tc_all = np.empty((L, B, H), dtype=x.dtype)
    h_all = np.empty((L, B, H), dtype=x.dtype)
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        a = xw[t] + h @ Wh
        g = gates[t]
        g[:, :2 * H] = _sigmoid(a[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        g[:, 3 * H:] = _sigmoid(a[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
        tc = np.tanh(c)
        h = g[:, 3 * H:] * tc
        c_all[t], tc_all[t], h_all[t] = c, tc, h
    return h_all, (x, gates, c_all, tc_all, h_all, reverse)


def _lstm_backward(dh_all, cache, Wx, Wh):
    x, gates, c_all, tc_all, h_all, reverse = cache
    L, B, D = x.shape
    H = Wh.shape[0]
    da_all = np.empty_like(gates)
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H), dtype=x.dtype)
    dc_next = np.zeros((B, H), dtype=x.dtype)
    zeros = np.zeros((B, H), dtype=x.dtype)
    steps = range(L) if reverse else range(L - 1, -1, -1)
    prev = 1 if reverse else -1  # offset of the previously processed step
    for t in steps:
        tp = t + prev
        has_prev = 0 <= tp < L
        h_prev = h_all[tp] if has_prev else zeros
        c_prev = c_all[tp] if has_prev else zeros
        g = gates[t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = tc_all[t]
        dh = dh_all[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :H] = dc * gg * i * (1.0 - i)
        da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
        da[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dWh += h_prev.T @ da
        dh_next = da @ Wh.T
    flat = da_all.reshape(L * B, 4 * H)
    dWx = x.reshape(L * B, D).T @ flat
    db = flat.sum(axis=0)
    dx = da_all @ Wx.T
    return dx, dWx, dWh, db


def _bilstm_forward(x, w, layer):
    hf, cf = _lstm_forward(x, w[f"{layer}_fwd_Wx"], w[f"{layer}_fwd_Wh"], w[f"{layer}_fwd_b"], False)
    hb, cb = _lstm_forward(x, w[f"{layer}_bwd_Wx"], w[f"{layer}_bwd_Wh"], w[f"{layer}_bwd_b"], True)
    return np.concatenate([hf, hb], axis=-1), (cf, cb)


def _bilstm_backward(dout, cache, w, layer, grads):
    cf, cb = cache
    H = w[f"{layer}_fwd_Wh"].shape[0]
    dx = None
    for direction, c, d in (("fwd", cf, dout[..., :H]), ("bwd", cb, dout[..., H:])):
        p = f"{layer}_{direction}"
        dxi, grads[f"{p}_Wx"], grads[f"{p}_Wh"], grads[f"{p}_b"] = _lstm_backward(d, c, w[f"{p}_Wx"], w[f"{p}_Wh"])
        dx = dxi if dx is None else dx + dxi
    return dx


def _dropout_mask(shape, p, rng, dtype):
    if p <= 0 or rng is None:
        return None
    return (rng.random(shape) >= p).astype(dtype) / (1.0 - p)


def _check_batch(params: ModelParams, token_ids: np.ndarray) -> np.ndarray:
    token_ids = np.asarray(token_ids)
    if token_ids.ndim != 2:
        raise ShapeMismatch(f"token_ids must be (B, L), got shape {token_ids.shape}")
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= params.vocab_size):
        raise ShapeMismatch(f"token ids must lie in [0, {params.vocab_size})")
    return token_ids


def _forward(params, token_ids, mode, rng, encoder):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    w = params.weights
    token_ids = _check_batch(params, token_ids)
    dtype = w["dense_W"].dtype
    if encoder is not None:
        x = np.asarray(encoder(token_ids), dtype=dtype)
        if x.shape[:2] != token_ids.shape or x.shape[2] != w["rnn1_fwd_Wx"].shape[0]:
            raise ShapeMismatch(f"encoder returned {x.shape}")
    else:
        x = w["embedding"][token_ids]
    x = np.ascontiguousarray(x.transpose(1, 0, 2))  # (L, B, E)

    p = params.config.dropout if mode == "train" else 0.0
    h1, c1 = _bilstm_forward(x, w, "rnn1")
    m1 = _dropout_mask(h1.shape, p, rng, dtype)
    h1d = h1 * m1 if m1 is not None else h1
    h2, c2 = _bilstm_forward(h1d, w, "rnn2")
    m2 = _dropout_mask(h2.shape, p, rng, dtype)
    h2d = h2 * m2 if m2 is not None else h2
    z = h2d @ w["dense_W"] + w["dense_b"]
    if params.config.activation == "tanh":
        z = np.tanh(z)
    logits = [z @ w[f"head_{k}_W"] + w[f"head_{k}_b"] for k in HEADS]
    cache = (token_ids, x, c1, m1, h1d, c2, m2, h2d, z, encoder is not None)
    return HeadLogits(*(lg.transpose(1, 0, 2) for lg in logits)), cache


def forward(params: ModelParams, token_ids: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None,
            encoder: ContextEncoder | None = None) -> HeadLogits:
    """Logits for every position of a ``(B, L)`` batch.

    Dropout is active only in ``train`` mode and only when ``rng`` is given.
    """
    return _forward(params, token_ids, mode, rng, encoder)[0]


def _log_softmax(x):
    m = x.max(axis=-1, keepdims=True)
    s = x - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _head_loss(logits, labels):
    """Masked mean cross-entropy and its gradient wrt the logits."""
    mask = labels != MASK_ID
    n = int(mask.sum())
    grad = np.zeros_like(logits)
    if n == 0:
        return 0.0, grad
    logp = _log_softmax(logits[mask])
    picked = labels[mask]
    loss = -logp[np.arange(n), picked].sum() / n
    g = np.exp(logp)
    g[np.arange(n), picked] -= 1.0
    grad[mask] = g / n
    return float(loss), grad


def _split_labels(labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    if labels.ndim != 3 or labels.shape[1] != 3:
        raise ShapeMismatch(f"labels must be (B, 3, L), got {labels.shape}")
    return labels[:, 0], labels[:, 1], labels[:, 2]


def loss(logits: HeadLogits, labels: np.ndarray) -> LossResult:
    """Sum over heads of the masked mean cross-entropy; ``labels`` is ``(B, 3, L)``."""
    per_head = tuple(_head_loss(lg, lab)[0] for lg, lab in zip(logits, _split_labels(labels)))
    return LossResult(float(sum(per_head)), per_head)


def backward(params: ModelParams, token_ids: np.ndarray, labels: np.ndarray,
             mode: str = "eval", rng: np.random.Generator | None = None,
             encoder: ContextEncoder | None = None) -> tuple[LossResult, dict[str, np.ndarray]]:
    """Loss and exact gradients for every parameter (zeros for a frozen encoder)."""
    logits, cache = _forward(params, token_ids, mode, rng, encoder)
    w = params.weights
    token_ids, x, c1, m1, h1d, c2, m2, h2d, z, external = cache
    label_parts = _split_labels(labels)
    if label_parts[0].shape != token_ids.shape:
        raise ShapeMismatch(f"labels {np.shape(labels)} do not match tokens {token_ids.shape}")

    grads: dict[str, np.ndarray] = {}
    per_head = []
    dz = np.zeros_like(z)
    for k, lg, lab in zip(HEADS, logits, label_parts):
        value, dlg = _head_loss(lg, lab)
        per_head.append(value)
        dlg = dlg.transpose(1, 0, 2)  # (L, B, K)
        K = dlg.shape[-1]
        grads[f"head_{k}_W"] = z.reshape(-1, z.shape[-1]).T @ dlg.reshape(-1, K)
        grads[f"head_{k}_b"] = dlg.reshape(-1, K).sum(axis=0)
        dz += dlg @ w[f"head_{k}_W"].T

    du = dz * (1.0 - z * z) if params.config.activation == "tanh" else dz
    H = z.shape[-1]
    grads["dense_W"] = h2d.reshape(-1, h2d.shape[-1]).T @ du.reshape(-1, H)
    grads["dense_b"] = du.reshape(-1, H).sum(axis=0)
    dh2 = du @ w["dense_W"].T
    if m2 is not None:
        dh2 = dh2 * m2
    dh1 = _bilstm_backward(dh2, c2, w, "rnn2", grads)
    if m1 is not None:
        dh1 = dh1 * m1
    dx = _bilstm_backward(dh1, c1, w, "rnn1", grads)

    demb = np.zeros_like(w["embedding"])
    if not params.encoder_frozen and not external:
        np.add.at(demb, token_ids.T, dx)
    grads["embedding"] = demb

    per_head = tuple(per_head)
    ordered = {k: grads[k] for k in w}
    return LossResult(float(sum(per_head)), per_head), ordered


def _loss_only(params, token_ids, labels, mode, seed):
    rng = np.random.default_rng(seed) if seed is not None else None
    logits, _ = _forward(params, token_ids, mode, rng, None)
    return loss(logits, labels).total


# (offset in units of eps, weight); derivative = sum(weight * loss) / eps
_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}


def grad_check(params: ModelParams, token_ids: np.ndarray, labels: np.ndarray,
               eps: float = 1e-5, max_entries: int | None = None, seed: int = 0,
               dropout_seed: int | None = None,
               analytic: dict[str, np.ndarray] | None = None,
               order: int = 2) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Error per parameter array is ``|a - n| / max(|a| + |n|, 1e-12)`` (2-norms
    over the checked entries); the maximum over arrays is returned. Frozen
    parameters are skipped. ``max_entries`` samples that many entries per array.
    With ``dropout_seed`` the check runs in train mode under a fixed dropout mask.
    ``order=4`` switches to the five-point central stencil.
    """
    if params.weights["dense_W"].dtype != np.float64:
        raise TypeError("grad_check needs float64 parameters")
    if order not in _STENCILS:
        raise ValueError(f"order must be one of {sorted(_STENCILS)}")
    stencil = _STENCILS[order]
    mode = "train" if dropout_seed is not None else "eval"
    if analytic is None:
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        _, analytic = backward(params, token_ids, labels, mode, rng)
    work = params.copy()
    pick = np.random.default_rng(seed)
    worst = 0.0
    for name in params.trainable():
        w = work.weights[name]
        flat = w.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = pick.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            total = 0.0
            for step, coef in stencil:
                flat[i] = old + step * eps
                total += coef * _loss_only(work, token_ids, labels, mode, dropout_seed)
            flat[i] = old
            numeric[j] = total / eps
        a = analytic[name].reshape(-1)[idx]
        err = np.linalg.norm(a - numeric) / max(np.linalg.norm(a) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(err))
    return worst


def predict_argmax(logits: HeadLogits, allowed: Sequence[np.ndarray]) -> np.ndarray:
    """Argmax per head after setting disallowed classes to -inf.

    ``allowed[k]`` is a boolean array broadcastable to ``logits[k]``. Returns
    ``(B, 3, L)`` class ids.
    """
    out = []
    for lg, ok in zip(logits, allowed):
        masked = np.where(ok, lg, -np.inf)
        out.append(masked.argmax(axis=-1))
    return np.stack(out, axis=1)


def collate(packs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack packs into ``(token_ids (B, L), labels (B, 3, L), attention (B, L))``."""
    return (
        np.stack([p.token_ids for p in packs]),
        np.stack([p.labels for p in packs]),
        np.stack([p.attention_mask for p in packs]),
    )

