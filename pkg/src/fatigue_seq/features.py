"""Per-frame fatigue features from 68-point landmarks and head pose.

Index layout is the usual 68-point scheme: left-eye contour 36-41,
right-eye contour 42-47, inner lip contour 60-67. Eye contours run
corner, upper lid, upper lid, corner, lower lid, lower lid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InputError

EYE_INDICES = {"left": np.arange(36, 42), "right": np.arange(42, 48)}
INNER_MOUTH_PAIRS = ((61, 67), (62, 66), (63, 65))
MOUTH_CORNERS = (60, 64)

EAR_THRESHOLD = 0.2
EYE_EXPANSION = 0.25
PITCH_SCALE = 90.0


class FatigueFeatureVector(NamedTuple):
    l_eye: float
    r_eye: float
    mouth: float
    pitch_norm: float


@dataclass
class LandmarkFrame:
    timestamp: float
    points: np.ndarray
    pitch: float = 0.0
    yaw: float = 0.0
    roll: float = 0.0
    label: Optional[int] = None
    features: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.points is not None:
            self.points = np.asarray(self.points, dtype=np.float64)
            if self.points.shape != (68, 2):
                raise InputError(f"a frame needs 68 (x, y) points, got shape {self.points.shape}")
        for name in ("pitch", "yaw", "roll"):
            if not -90.0 < getattr(self, name) < 90.0:
                raise InputError(f"{name} must lie in (-90, 90) degrees")

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.pitch, self.yaw, self.roll)


def eye_region(frame: LandmarkFrame, side: str = "left", expansion: float = EYE_EXPANSION):
    """Bounding box ``(x0, y0, x1, y1)`` of one eye, grown by ``expansion``
    times its width/height on every side and clipped at the image origin."""
    if expansion < 0:
        raise InputError("expansion must be nonnegative")
    pts = frame.points[EYE_INDICES[side]]
    if np.all(pts == pts[0]):
        raise InputError(f"{side} eye contour is degenerate (all points identical)")
    (x0, y0), (x1, y1) = pts.min(axis=0), pts.max(axis=0)
    dx, dy = expansion * (x1 - x0), expansion * (y1 - y0)
    return (max(0.0, x0 - dx), max(0.0, y0 - dy), x1 + dx, y1 + dy)


def eye_aspect_ratio(contour) -> float:
    p = np.asarray(contour, dtype=np.float64)
    width = np.linalg.norm(p[0] - p[3])
    if width == 0.0:
        raise InputError("eye contour has zero horizontal width")
    return float((np.linalg.norm(p[1] - p[5]) + np.linalg.norm(p[2] - p[4])) / (2.0 * width))


def eye_state(frame: LandmarkFrame, side: str = "left", threshold: float = EAR_THRESHOLD) -> int:
    """1 if the eye is open (aspect ratio >= threshold), else 0."""
    return int(eye_aspect_ratio(frame.points[EYE_INDICES[side]]) >= threshold)


def mouth_opening_degree(frame: LandmarkFrame) -> float:
    """Largest inner-lip gap over the inner-lip corner-to-corner width."""
    p = frame.points
    width = np.linalg.norm(p[MOUTH_CORNERS[0]] - p[MOUTH_CORNERS[1]])
    if width == 0.0:
        raise InputError("inner mouth contour has zero width")
    height = max(np.linalg.norm(p[a] - p[b]) for a, b in INNER_MOUTH_PAIRS)
    return float(height / width)


def build_feature_vector(frame: LandmarkFrame, threshold: float = EAR_THRESHOLD) -> FatigueFeatureVector:
    return FatigueFeatureVector(
        float(eye_state(frame, "left", threshold)),
        float(eye_state(frame, "right", threshold)),
        mouth_opening_degree(frame),
        frame.pitch / PITCH_SCALE,
    )


def extract_features(points, pitch, threshold: float = EAR_THRESHOLD) -> np.ndarray:
    """Vectorised ``build_feature_vector`` over a stream.

    points: (T, 68, 2); pitch: (T,) degrees. Returns (T, 4).
    """
    pts = np.asarray(points, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    if pts.ndim != 3 or pts.shape[1:] != (68, 2) or pitch.shape != pts.shape[:1]:
        raise InputError(f"expected (T, 68, 2) points and (T,) pitch, got {pts.shape} and {pitch.shape}")
    out = np.empty((pts.shape[0], 4))
    for col, side in enumerate(("left", "right")):
        e = pts[:, EYE_INDICES[side]]
        width = np.linalg.norm(e[:, 0] - e[:, 3], axis=1)
        if np.any(width == 0.0):
            raise InputError(f"{side} eye contour has zero horizontal width")
        ear = (np.linalg.norm(e[:, 1] - e[:, 5], axis=1) + np.linalg.norm(e[:, 2] - e[:, 4], axis=1)) / (2.0 * width)
        out[:, col] = ear >= threshold
    width = np.linalg.norm(pts[:, MOUTH_CORNERS[0]] - pts[:, MOUTH_CORNERS[1]], axis=1)
    if np.any(width == 0.0):
        raise InputError("inner mouth contour has zero width")
    gaps = np.stack([np.linalg.norm(pts[:, a] - pts[:, b], axis=1) for a, b in INNER_MOUTH_PAIRS])
    out[:, 2] = gaps.max(axis=0) / width
    out[:, 3] = pitch / PITCH_SCALE
    return out
