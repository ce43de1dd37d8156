"""Small feed-forward network (4-8-16-2) trained by mini-batch gradient descent.

The net maps the 4-dim tracking error to a raw throttle/steering pair.
Hidden activations are tanh, the output is linear. Everything is plain
numpy with hand-written backprop; training is deterministic per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LAYER_SIZES",
    "MlpModel",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "init_model",
    "forward",
    "train",
    "grad_check",
    "save_model",
    "load_model",
]

LAYER_SIZES = (4, 8, 16, 2)
FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class MlpModel:
    weights: list[np.ndarray]  # shapes (8,4), (16,8), (2,16)
    biases: list[np.ndarray]  # shapes (8,), (16,), (2,)

    def __post_init__(self) -> None:
        expected = list(zip(LAYER_SIZES[1:], LAYER_SIZES[:-1]))
        shapes = [w.shape for w in self.weights]
        if shapes != expected:
            raise ValueError(f"weight shapes {shapes} do not match layers {LAYER_SIZES}")
        for b, n in zip(self.biases, LAYER_SIZES[1:]):
            if b.shape != (n,):
                raise ValueError(f"bias shape {b.shape} does not match layer width {n}")
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 500
    batch: int = 64
    seed: int = 0
    val_split: float = 0.1


@dataclass
class TrainReport:
    epochs: int
    final_train_mse: float
    final_val_mse: float
    loss_history: list[float] = field(default_factory=list)


def init_model(seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Raw (pre-clamp) command for a single error vector or an (n, 4) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    a = np.tanh(a @ model.weights[0].T + model.biases[0])
    a = np.tanh(a @ model.weights[1].T + model.biases[1])
    out = a @ model.weights[2].T + model.biases[2]
    return out[0] if single else out


def _forward_cached(model: MlpModel, x: np.ndarray):
    z1 = x @ model.weights[0].T + model.biases[0]
    a1 = np.tanh(z1)
    z2 = a1 @ model.weights[1].T + model.biases[1]
    a2 = np.tanh(z2)
    out = a2 @ model.weights[2].T + model.biases[2]
    return out, (x, a1, a2)


def _backward(model: MlpModel, cache, d_out: np.ndarray):
    """Gradients of the loss given d(loss)/d(output), batch-summed."""
    x, a1, a2 = cache
    gw = [None, None, None]
    gb = [None, None, None]
    gw[2] = d_out.T @ a2
    gb[2] = d_out.sum(axis=0)
    da2 = (d_out @ model.weights[2]) * (1.0 - a2 * a2)
    gw[1] = da2.T @ a1
    gb[1] = da2.sum(axis=0)
    da1 = (da2 @ model.weights[1]) * (1.0 - a1 * a1)
    gw[0] = da1.T @ x
    gb[0] = da1.sum(axis=0)
    return gw, gb


def _mse(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    err = forward(model, x) - y
    return float(np.mean(err * err))


def train(
    model: MlpModel,
    dataset: tuple[np.ndarray, np.ndarray],
    config: TrainConfig | None = None,
) -> tuple[MlpModel, TrainReport]:
    """Mini-batch gradient descent on MSE.

    `dataset` is (E, U) with E of shape (4, n) and U of shape (2, n),
    column-per-sample. The validation split is held out up front with the
    config seed; shuffling per epoch is deterministic for the same seed.
    """
    cfg = config or TrainConfig()
    E, U = dataset
    E = np.asarray(E, dtype=float)
    U = np.asarray(U, dtype=float)
    if E.ndim != 2 or E.shape[0] != LAYER_SIZES[0] or U.shape != (LAYER_SIZES[-1], E.shape[1]):
        raise ValueError(f"expected E (4, n) and U (2, n), got {E.shape} and {U.shape}")
    n = E.shape[1]
    if n < 100:
        raise ValueError(f"need at least 100 samples to train, got {n}")
    if not 0.0 < cfg.val_split < 1.0:
        raise ValueError(f"val_split must lie in (0, 1), got {cfg.val_split}")

    x = E.T.copy()
    y = U.T.copy()
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(n * cfg.val_split)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_val, y_val = x[val_idx], y[val_idx]
    x_tr, y_tr = x[train_idx], y[train_idx]
    n_tr = len(train_idx)

    m = model.copy()
    history: list[float] = []
    out_dim = LAYER_SIZES[-1]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_tr)
        for start in range(0, n_tr, cfg.batch):
            idx = perm[start:start + cfg.batch]
            xb, yb = x_tr[idx], y_tr[idx]
            out, cache = _forward_cached(m, xb)
            diff = out - yb
            # d/d(out) of mean squared error over the batch
            d_out = diff * (2.0 / (len(idx) * out_dim))
            gw, gb = _backward(m, cache, d_out)
            for i in range(3):
                m.weights[i] -= cfg.lr * gw[i]
                m.biases[i] -= cfg.lr * gb[i]
        epoch_loss = _mse(m, x_tr, y_tr)
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
        history.append(epoch_loss)

    report = TrainReport(
        epochs=cfg.epochs,
        final_train_mse=history[-1] if history else _mse(m, x_tr, y_tr),
        final_val_mse=_mse(m, x_val, y_val),
        loss_history=history,
    )
    return m, report


def grad_check(model: MlpModel, sample: tuple[np.ndarray, np.ndarray],
               h: float = 1e-5) -> float:
    """Max relative error of backprop vs central finite differences."""
    x = np.asarray(sample[0], dtype=float).reshape(1, LAYER_SIZES[0])
    y = np.asarray(sample[1], dtype=float).reshape(1, LAYER_SIZES[-1])

    out, cache = _forward_cached(model, x)
    d_out = (out - y) * (2.0 / LAYER_SIZES[-1])
    gw, gb = _backward(model, cache, d_out)
    analytic = np.concatenate([g.ravel() for g in gw + gb])

    m = model.copy()
    params = m.weights + m.biases
    numeric = np.empty_like(analytic)
    pos = 0
    for arr in params:
        flat = arr.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = _mse(m, x, y)
            flat[i] = keep - h
            f_minus = _mse(m, x, y)
            flat[i] = keep
            numeric[pos] = (f_plus - f_minus) / (2.0 * h)
            pos += 1
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def save_model(model: MlpModel, path: str) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "layers": list(LAYER_SIZES),
        "activation": "tanh",
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"model file {path!r} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"model format version mismatch: file has {version!r}, "
            f"this build reads {FORMAT_VERSION}"
        )
    if tuple(doc.get("layers", ())) != LAYER_SIZES:
        raise ValueError(f"unsupported layer sizes {doc.get('layers')}, expected {list(LAYER_SIZES)}")
    if doc.get("activation") != "tanh":
        raise ValueError(f"unsupported activation {doc.get('activation')!r}")
    try:
        weights = [np.array(w, dtype=float) for w in doc["weights"]]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"model file {path!r} has malformed parameters: {exc}") from exc
    return MlpModel(weights, biases)
