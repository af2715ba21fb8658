"""Single-layer LSTM sequence classifier for fatigue windows.

The network unrolls a standard gated cell over the columns of a (4, L)
feature matrix from zero state and scores the final hidden state with a
logistic head. Gate weights act on the concatenation ``[x; h]``; the
compiled kernels see them stacked in the order input, forget, output,
candidate.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from . import kernels
from .errors import InputError
from .losses import binary_cross_entropy
from .sequence import FeatureWindow, SequenceDataset, N_FEATURES
from .tensor import glorot_uniform

log = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
CHECKPOINT_FORMAT = "fatigue-seq-lstm"
CHECKPOINT_VERSION = 1
_PREDICT_CHUNK = 512


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class LstmModel:
    hidden_size: int = 32
    input_size: int = N_FEATURES
    params: dict = field(default_factory=dict)
    window_len: Optional[int] = None
    skip: Optional[int] = None

    @classmethod
    def init(cls, hidden_size: int = 32, seed: int = 0, forget_bias: float = 1.0, **meta) -> "LstmModel":
        rng = np.random.default_rng(seed)
        H, D = hidden_size, N_FEATURES
        params = {}
        for g in GATES:
            params[f"W_{g}"] = glorot_uniform((H, D + H), D + H, H, rng)
        for g in GATES:
            params[f"b_{g}"] = np.full(H, forget_bias if g == "f" else 0.0)
        params["w_head"] = glorot_uniform((H,), H, 1, rng)
        params["b_head"] = np.zeros(1)
        return cls(hidden_size, D, params, **meta)

    @classmethod
    def zeros(cls, hidden_size: int = 32) -> "LstmModel":
        m = cls.init(hidden_size, forget_bias=0.0)
        for v in m.params.values():
            v[...] = 0.0
        return m

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        W = np.concatenate([self.params[f"W_{g}"] for g in GATES])
        b = np.concatenate([self.params[f"b_{g}"] for g in GATES])
        return W, b

    def copy(self) -> "LstmModel":
        return LstmModel(self.hidden_size, self.input_size,
                         {k: v.copy() for k, v in self.params.items()}, self.window_len, self.skip)

    def check(self):
        H, D = self.hidden_size, self.input_size
        expected = {**{f"W_{g}": (H, D + H) for g in GATES}, **{f"b_{g}": (H,) for g in GATES},
                    "w_head": (H,), "b_head": (1,)}
        for name, shape in expected.items():
            if name not in self.params or self.params[name].shape != shape:
                got = self.params[name].shape if name in self.params else None
                raise InputError(f"parameter {name} should be {shape}, got {got}")


# --------------------------------------------------------------------------
# Single cell, kept separate from the batched kernels for inspection and
# gradient checking.


def lstm_cell_step(x, h, c, model: LstmModel):
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    H = model.hidden_size
    if x.shape != (model.input_size,) or h.shape != (H,) or c.shape != (H,):
        raise InputError(f"cell expects x ({model.input_size},), h and c ({H},); got {x.shape}, {h.shape}, {c.shape}")
    W, b = model.stacked()
    z = W @ np.concatenate([x, h]) + b
    i, f, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, (x, h, c, i, f, o, g, c_new)


def lstm_cell_forward(x, h, c, model: LstmModel):
    """One step: returns (h', c')."""
    h_new, c_new, _ = lstm_cell_step(x, h, c, model)
    return h_new, c_new


def lstm_cell_backward(cache, dh_new, dc_new, model: LstmModel):
    """Gradients of one step given upstream (dh', dc').

    Returns ``(dx, dh, dc, grads)`` where ``grads`` maps gate parameter
    names to arrays.
    """
    x, h, c, i, f, o, g, c_new = cache
    D = x.shape[0]
    tc = np.tanh(c_new)
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    dz = {"i": dc * g * i * (1 - i), "f": dc * c * f * (1 - f),
          "o": dh_new * tc * o * (1 - o), "g": dc * i * (1 - g * g)}
    inp = np.concatenate([x, h])
    grads = {}
    d_inp = np.zeros(inp.shape)
    for gate in GATES:
        grads[f"W_{gate}"] = np.outer(dz[gate], inp)
        grads[f"b_{gate}"] = dz[gate]
        d_inp += model.params[f"W_{gate}"].T @ dz[gate]
    return d_inp[:D], d_inp[D:], dc * f, grads


# --------------------------------------------------------------------------
# Sequences


def _as_batch(X):
    """(S, 4, L) matrices -> (S, L, 4) kernel layout."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != N_FEATURES:
        raise InputError(f"feature matrices must be (4, L), got batch shape {X.shape}")
    if X.shape[2] == 0:
        raise InputError("feature matrix has no columns")
    return np.ascontiguousarray(X.transpose(0, 2, 1))


def sequence_logits(X, model: LstmModel) -> np.ndarray:
    Xb = _as_batch(X)
    W, b = model.stacked()
    out = np.empty(Xb.shape[0])
    for lo in range(0, Xb.shape[0], _PREDICT_CHUNK):
        _, _, hs = kernels.lstm_forward(Xb[lo:lo + _PREDICT_CHUNK], W, b)
        out[lo:lo + _PREDICT_CHUNK] = hs[:, -1] @ model.params["w_head"] + model.params["b_head"][0]
    return out


def predict_proba(X, model: LstmModel) -> np.ndarray:
    return sigmoid(sequence_logits(X, model))


def sequence_forward(matrix, model: LstmModel) -> float:
    """Fatigue probability of one (4, L) feature matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"expected a (4, L) matrix, got shape {m.shape}")
    return float(predict_proba(m[None], model)[0])


def loss_and_grads(model: LstmModel, X, y, sample_weight=None):
    """Mean (optionally weighted) cross-entropy over a batch and its gradients."""
    Xb = _as_batch(X)
    y = np.asarray(y, dtype=np.float64)
    B = Xb.shape[0]
    sw = np.ones(B) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    W, b = model.stacked()
    gates, cs, hs = kernels.lstm_forward(Xb, W, b)
    h_last = hs[:, -1]
    p = sigmoid(h_last @ model.params["w_head"] + model.params["b_head"][0])
    loss = float(np.sum(sw * binary_cross_entropy(p, y)) / B)
    dlogit = sw * (p - y) / B
    grads = {"w_head": h_last.T @ dlogit, "b_head": np.array([dlogit.sum()])}
    dh_last = np.outer(dlogit, model.params["w_head"])
    dW, db, _ = kernels.lstm_backward(Xb, W, gates, cs, hs, dh_last)
    H = model.hidden_size
    for n, g in enumerate(GATES):
        grads[f"W_{g}"] = dW[n * H:(n + 1) * H]
        grads[f"b_{g}"] = db[n * H:(n + 1) * H]
    return loss, grads


# --------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    clip_norm: float = 5.0
    momentum: float = 0.9
    val_fraction: float = 0.2
    hidden_size: int = 32
    class_weighting: bool = True

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0 or self.clip_norm <= 0:
            raise InputError("learning rate, batch size, epochs and clip norm must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise InputError("val_fraction must lie in (0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError("momentum must lie in [0, 1)")


def class_weights(y) -> np.ndarray:
    """Inverse class frequency per sample, normalised to mean 1."""
    y = np.asarray(y)
    n = len(y)
    n_pos = np.count_nonzero(y == 1)
    w_pos, w_neg = n / (2.0 * n_pos), n / (2.0 * (n - n_pos))
    return np.where(y == 1, w_pos, w_neg)


def split_dataset(ds: SequenceDataset, val_fraction: float, seed: int = 0):
    """Hold out whole streams when there are several, else the chronological tail.

    Overlapping windows from one stream would otherwise leak between the two
    sides of the split.
    """
    groups = np.unique(ds.groups)
    if len(groups) >= 2:
        rng = np.random.default_rng(seed)
        n_val = max(1, int(round(val_fraction * len(groups))))
        n_val = min(n_val, len(groups) - 1)
        val_groups = rng.permutation(groups)[:n_val]
        is_val = np.isin(ds.groups, val_groups)
    else:
        order = np.argsort(ds.starts, kind="stable")
        n_val = max(1, int(round(val_fraction * len(ds))))
        is_val = np.zeros(len(ds), dtype=bool)
        is_val[order[len(ds) - n_val:]] = True
        # drop training windows overlapping the held-out span
        first_val = ds.starts[is_val].min()
        overlap = ~is_val & (ds.starts + ds.window_len > first_val)
        return ds.subset(~is_val & ~overlap), ds.subset(is_val)
    return ds.subset(~is_val), ds.subset(is_val)


def train(dataset: SequenceDataset, config: TrainConfig = TrainConfig(), model: LstmModel | None = None,
          val: SequenceDataset | None = None):
    """Mini-batch SGD with momentum on mean binary cross-entropy.

    Returns ``(model, history)``; history holds one dict per epoch with the
    mean training loss (and validation loss/accuracy when ``val`` is given).
    """
    if len(dataset) == 0:
        raise InputError("cannot train on an empty dataset")
    if len(np.unique(dataset.y)) < 2:
        raise InputError("training data must contain both fatigue and normal samples")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = LstmModel.init(config.hidden_size, seed=int(rng.integers(2**31)),
                               window_len=dataset.window_len, skip=dataset.skip)
    else:
        model = model.copy()
        rng.integers(2**31)
    model.check()
    sw_all = class_weights(dataset.y) if config.class_weighting else np.ones(len(dataset))
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total, seen = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = loss_and_grads(model, dataset.X[idx], dataset.y[idx], sw_all[idx])
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            scale = config.clip_norm / norm if norm > config.clip_norm else 1.0
            for k, g in grads.items():
                velocity[k] = config.momentum * velocity[k] + scale * g
                model.params[k] -= config.learning_rate * velocity[k]
            total += loss * len(idx)
            seen += len(idx)
        rec = {"epoch": epoch + 1, "train_loss": total / seen}
        if val is not None and len(val):
            ev = evaluate(model, val)
            rec["val_loss"] = ev["mean_loss"]
            rec["val_accuracy"] = ev["accuracy"]
        history.append(rec)
        log.info("epoch %d: %s", epoch + 1, rec)
    return model, history


def evaluate(model, dataset: SequenceDataset, threshold: float = 0.5) -> dict:
    """Accuracy at a fixed decision threshold, per-class counts and mean loss.

    ``model`` is an ``LstmModel`` or any callable mapping (S, 4, L) to
    probabilities.
    """
    if len(dataset) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    p = predict_proba(dataset.X, model) if isinstance(model, LstmModel) else np.asarray(model(dataset.X), float)
    pred = (p >= threshold).astype(np.int64)
    y = dataset.y
    return {
        "accuracy": float(np.mean(pred == y)),
        "n": int(len(y)),
        "true_positive": int(np.sum((pred == 1) & (y == 1))),
        "true_negative": int(np.sum((pred == 0) & (y == 0))),
        "false_positive": int(np.sum((pred == 1) & (y == 0))),
        "false_negative": int(np.sum((pred == 0) & (y == 1))),
        "mean_loss": float(np.mean(binary_cross_entropy(p, y))),
    }


def stream_infer(model: LstmModel, vectors: Iterable, window_len: int | None = None,
                 skip: int | None = None) -> Iterator[Optional[float]]:
    """Yield one value per incoming feature vector.

    ``None`` marks warm-up frames before the window first fills; afterwards
    each value is the fatigue probability of the current window.
    """
    window_len = window_len if window_len is not None else model.window_len
    skip = skip if skip is not None else (model.skip or 0)
    if window_len is None:
        raise InputError("window length not given and not stored in the model")
    win = FeatureWindow(window_len)
    for v in vectors:
        win.push(v)
        yield sequence_forward(win.as_matrix(skip), model) if win.is_full else None


# --------------------------------------------------------------------------
# Checkpoints: JSON text; floats are written with repr() so values round-trip
# bit-exactly.


def save_checkpoint(model: LstmModel, path, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "hyperparameters": {"input_size": model.input_size, "hidden_size": model.hidden_size,
                            "window_len": model.window_len, "skip": model.skip,
                            "gate_order": list(GATES), **(extra or {})},
        "parameters": [{"name": k, "shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
                       for k, v in sorted(model.params.items())],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> LstmModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    hp = doc["hyperparameters"]
    params = {p["name"]: np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in doc["parameters"]}
    model = LstmModel(hp["hidden_size"], hp["input_size"], params, hp.get("window_len"), hp.get("skip"))
    model.check()
    return model


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
