"""Training losses and evaluation metrics.

Losses come in pairs: ``name(...)`` returns the scalar and ``name_grad(...)``
its gradient with respect to the prediction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

N_LANDMARK_COORDS = 136
PROB_EPS = 1e-12
# outer eye corners of the 68-point scheme
LEFT_EYE_CORNER = 36
RIGHT_EYE_CORNER = 45


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InputError("loss weights must be nonnegative")


def _landmarks(v, name):
    a = np.asarray(v, dtype=np.float64).ravel()
    if a.shape[0] != N_LANDMARK_COORDS:
        raise InputError(f"{name} must hold {N_LANDMARK_COORDS} coordinates, got {a.shape[0]}")
    return a


def _pose(v, name):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise InputError(f"{name} must be (pitch, yaw, roll), got shape {a.shape}")
    if np.any(np.abs(a) >= 90.0):
        raise InputError(f"{name} angles must lie in (-90, 90) degrees, got {a.tolist()}")
    return a


def landmark_loss(pred, truth) -> float:
    """Sum of squared differences over the 136 landmark coordinates."""
    d = _landmarks(pred, "pred") - _landmarks(truth, "truth")
    return float(d @ d)


def landmark_loss_grad(pred, truth) -> np.ndarray:
    return 2.0 * (_landmarks(pred, "pred") - _landmarks(truth, "truth"))


def pose_loss(pred, truth) -> float:
    d = _pose(pred, "pred") - _pose(truth, "truth")
    return float(d @ d)


def pose_loss_grad(pred, truth) -> np.ndarray:
    return 2.0 * (_pose(pred, "pred") - _pose(truth, "truth"))


def total_loss(l_landmark: float, l_pose: float, weights: LossWeights = LossWeights()) -> float:
    return 0.5 * weights.alpha * l_landmark + 0.5 * weights.beta * l_pose


def total_loss_grad(weights: LossWeights = LossWeights()) -> tuple[float, float]:
    """Partial derivatives with respect to (landmark loss, pose loss)."""
    return 0.5 * weights.alpha, 0.5 * weights.beta


def _label(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InputError("labels must be 0 or 1")
    return y


def binary_cross_entropy(p, y):
    """-(y ln p + (1 - y) ln(1 - p)) with p clamped to [eps, 1 - eps].

    Works elementwise on arrays; scalars in, float out.
    """
    y = _label(y)
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return out if out.ndim else float(out)


def binary_cross_entropy_grad(p, y):
    """Derivative with respect to p; zero where clamping is active."""
    y = _label(y)
    p = np.asarray(p, dtype=np.float64)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    out = np.where(inside, -y / pc + (1.0 - y) / (1.0 - pc), 0.0)
    return out if out.ndim else float(out)


def normalized_mean_error(preds, truths, left_corner: int = LEFT_EYE_CORNER,
                          right_corner: int = RIGHT_EYE_CORNER) -> float:
    """Mean point error per sample divided by the true interocular distance.

    ``preds`` and ``truths`` are ``(n_samples, 68, 2)`` (a single ``(68, 2)``
    sample or flat 136-vectors are also accepted). The normalizing distance
    is taken between the ground-truth eye-corner landmarks.
    """
    p = np.asarray(preds, dtype=np.float64).reshape(-1, 68, 2)
    y = np.asarray(truths, dtype=np.float64).reshape(-1, 68, 2)
    if p.shape != y.shape:
        raise InputError(f"prediction/truth shapes differ: {p.shape} vs {y.shape}")
    iod = np.linalg.norm(y[:, left_corner] - y[:, right_corner], axis=1)
    if np.any(iod == 0.0):
        raise InputError("interocular distance is zero for at least one sample")
    per_sample = np.linalg.norm(p - y, axis=2).mean(axis=1) / iod
    return float(per_sample.mean())


def mean_absolute_error(preds, truths):
    """(1/N) sum |f_i - y_i|; for (N, 3) inputs returns one value per axis."""
    f = np.asarray(preds, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    if f.shape != y.shape:
        raise InputError(f"prediction/truth shapes differ: {f.shape} vs {y.shape}")
    if f.ndim == 0 or f.shape[0] == 0:
        raise InputError("mean_absolute_error needs at least one sample")
    out = np.abs(f - y).mean(axis=0)
    return out if out.ndim else float(out)


def perclos(eye_states, window_len: int | None = None) -> float:
    """Fraction of closed frames (state 0) in the last ``window_len`` frames."""
    s = np.asarray(eye_states)
    if window_len is None:
        window_len = s.shape[0]
    if window_len < 1 or s.shape[0] < window_len:
        raise InputError(f"need a window of at least one frame within {s.shape[0]} states, got {window_len}")
    w = s[s.shape[0] - window_len:]
    return float(np.count_nonzero(w == 0)) / window_len
