"""Sliding feature windows and the sequence datasets built from them.

A window holds the last ``N`` per-frame feature vectors. Once full, every
push drops the oldest vector from the front and appends the new one at the
back, so the stored sequence advances one frame at a time without
recomputing anything. Skip sampling keeps every ``(k + 1)``-th vector.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, StateError

log = logging.getLogger(__name__)

N_FEATURES = 4
FEATURE_ROWS = ("l_eye", "r_eye", "mouth", "pitch_norm")
LABEL_THRESHOLD = 0.8
DEFAULT_STRIDE = 30


def retained_length(window_len: int, skip: int) -> int:
    return math.ceil(window_len / (skip + 1))


class FeatureWindow:
    """Fixed-capacity FIFO of feature vectors, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InputError("window capacity must be at least 1")
        self.capacity = capacity
        self._q: deque = deque()

    def push(self, v) -> "FeatureWindow":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (N_FEATURES,):
            raise InputError(f"feature vectors have {N_FEATURES} components, got shape {v.shape}")
        if len(self._q) == self.capacity:
            self._q.popleft()
        self._q.append(v)
        return self

    def __len__(self):
        return len(self._q)

    def __iter__(self):
        return iter(self._q)

    @property
    def is_full(self) -> bool:
        return len(self._q) == self.capacity

    def contents(self) -> list[np.ndarray]:
        return list(self._q)

    def as_matrix(self, skip: int = 0) -> np.ndarray:
        if not self.is_full:
            raise StateError(f"window holds {len(self._q)} of {self.capacity} frames")
        return np.stack(skip_sample(self.contents(), skip), axis=1)


def skip_sample(vectors: Sequence, skip: int) -> list:
    """Keep indices 0, k+1, 2(k+1), ... of the window."""
    if skip < 0:
        raise InputError("skip must be nonnegative")
    return list(vectors[::skip + 1])


def label_window(frame_labels, threshold: float = LABEL_THRESHOLD) -> int:
    """1 (fatigue) when strictly more than ``threshold`` of the frames are fatigue."""
    lab = np.asarray(frame_labels)
    if lab.size == 0:
        raise InputError("cannot label an empty window")
    return int(np.count_nonzero(lab == 1) / lab.size > threshold)


@dataclass
class SequenceSample:
    matrix: np.ndarray  # (4, L)
    label: int
    window_len: int
    skip: int
    start: int = 0
    group: int = 0


@dataclass
class SequenceDataset:
    """Stacked samples: ``X`` is (S, 4, L), ``y`` (S,), ``groups`` (S,)."""

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    window_len: int
    skip: int
    stride: int = DEFAULT_STRIDE
    fps: float = 30.0
    starts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.starts is None:
            self.starts = np.zeros(len(self.y), dtype=np.int64)

    def __len__(self):
        return len(self.y)

    @property
    def seq_len(self) -> int:
        return retained_length(self.window_len, self.skip)

    @classmethod
    def from_samples(cls, samples: Sequence[SequenceSample], window_len: int, skip: int,
                     stride: int = DEFAULT_STRIDE, fps: float = 30.0) -> "SequenceDataset":
        L = retained_length(window_len, skip)
        if samples:
            X = np.stack([s.matrix for s in samples])
        else:
            X = np.zeros((0, N_FEATURES, L))
        return cls(X, np.array([s.label for s in samples], dtype=np.int64),
                   np.array([s.group for s in samples], dtype=np.int64),
                   window_len, skip, stride, fps,
                   np.array([s.start for s in samples], dtype=np.int64))

    def samples(self) -> list[SequenceSample]:
        return [SequenceSample(x, int(l), self.window_len, self.skip, int(s), int(g))
                for x, l, s, g in zip(self.X, self.y, self.starts, self.groups)]

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.X[idx], self.y[idx], self.groups[idx], self.window_len,
                               self.skip, self.stride, self.fps, self.starts[idx])

    @classmethod
    def concat(cls, parts: Iterable["SequenceDataset"]) -> "SequenceDataset":
        parts = list(parts)
        first = parts[0]
        return cls(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                   np.concatenate([p.groups for p in parts]), first.window_len, first.skip,
                   first.stride, first.fps, np.concatenate([p.starts for p in parts]))

    def class_counts(self) -> tuple[int, int]:
        """(fatigue, normal)."""
        n_f = int(np.count_nonzero(self.y == 1))
        return n_f, len(self.y) - n_f


def slide_dataset(features, labels, window_len: int, skip: int = 0, stride: int = DEFAULT_STRIDE,
                  group: int = 0, threshold: float = LABEL_THRESHOLD) -> list[SequenceSample]:
    """Cut a (T, 4) feature stream into labelled, skip-sampled windows.

    Window starts are 0, stride, 2*stride, ... while the window fits.
    """
    if stride < 1 or window_len < 1:
        raise InputError("stride and window length must be positive")
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if feats.ndim != 2 or feats.shape[1] != N_FEATURES or labels.shape != feats.shape[:1]:
        raise InputError(f"expected (T, 4) features and (T,) labels, got {feats.shape} and {labels.shape}")
    T = feats.shape[0]
    if T < window_len:
        log.warning("stream of %d frames is shorter than the %d-frame window; no samples", T, window_len)
        return []
    out = []
    for start in range(0, T - window_len + 1, stride):
        win = feats[start:start + window_len:skip + 1]
        out.append(SequenceSample(np.ascontiguousarray(win.T), label_window(labels[start:start + window_len], threshold),
                                  window_len, skip, start, group))
    return out


# --------------------------------------------------------------------------
# CSV dataset files: one "# key=value,..." metadata line, a header row, then
# one row per sample: group, start, label and the 4xL matrix row-major.


def write_dataset_csv(path, ds: SequenceDataset) -> None:
    L = ds.seq_len
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# N={ds.window_len},k={ds.skip},stride={ds.stride},fps={ds.fps!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "start", "label"] + [f"{r}_{j}" for r in FEATURE_ROWS for j in range(L)])
        for x, lab, start, g in zip(ds.X, ds.y, ds.starts, ds.groups):
            w.writerow([int(g), int(start), int(lab)] + [repr(float(v)) for v in x.ravel()])


def read_dataset_csv(path) -> SequenceDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        meta_line = fh.readline()
        if not meta_line.startswith("#"):
            raise InputError(f"{path}: missing '# N=...,k=...' metadata line")
        meta = dict(kv.split("=", 1) for kv in meta_line[1:].strip().split(","))
        try:
            N, k, stride, fps = int(meta["N"]), int(meta["k"]), int(meta["stride"]), float(meta["fps"])
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: bad metadata line {meta_line.strip()!r}") from exc
        reader = csv.reader(fh)
        header = next(reader, None)
        L = retained_length(N, k)
        if header is None or len(header) != 3 + N_FEATURES * L:
            raise InputError(f"{path}: header does not match a 4x{L} matrix")
        rows = [r for r in reader if r]
    if rows:
        arr = np.array(rows, dtype=np.float64)
        X = arr[:, 3:].reshape(-1, N_FEATURES, L)
        return SequenceDataset(X, arr[:, 2].astype(np.int64), arr[:, 0].astype(np.int64), N, k, stride, fps,
                               arr[:, 1].astype(np.int64))
    return SequenceDataset(np.zeros((0, N_FEATURES, L)), np.zeros(0, np.int64), np.zeros(0, np.int64),
                           N, k, stride, fps)
