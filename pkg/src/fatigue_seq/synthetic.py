"""Synthetic driver-monitoring streams with per-frame fatigue labels.

A scenario alternates normal driving with fatigue episodes. Fatigue
episodes are runs of yawns, long eye closures and nodding bursts separated
by short alert gaps; normal stretches carry blinks and distractors
(talking, smiling, isolated head dips). Frames are rendered by deforming
one canonical 68-point face whose outer eye corners sit 100 px apart, so
every feature threshold can be reasoned about from the geometry.

Frames covered by a fatigue event are labelled 1, all others 0.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .features import extract_features
from .sequence import DEFAULT_STRIDE, SequenceDataset, slide_dataset

FATIGUE_KINDS = ("long_closure", "yawn", "nod", "blink_burst")
DISTRACTOR_KINDS = ("talk", "smile")

# eye half-height giving an aspect ratio of 0.3 on a 30 px wide eye
EYE_HALF_HEIGHT = 4.5
INNER_MOUTH_WIDTH = 40.0
ALERT_MOUTH_GAP = 2.0  # opening degree 0.05
TALK_GAP = 6.0  # peak talking degree 0.2, well clear of 0.3 under jitter
FACE_CENTER = (200.0, 240.0)


def _template() -> np.ndarray:
    """Neutral face with closed-ish mouth; eye lids and lips are set per frame."""
    p = np.zeros((68, 2))
    theta = np.pi * (1.0 - np.arange(17) / 16.0)
    p[0:17, 0] = 200 + 95 * np.cos(theta)
    p[0:17, 1] = 200 + 130 * np.sin(theta)
    p[17:22] = np.column_stack([np.linspace(135, 185, 5), [185, 178, 175, 176, 180]])
    p[22:27] = np.column_stack([np.linspace(215, 265, 5), [180, 176, 175, 178, 185]])
    p[27:31] = np.column_stack([np.full(4, 200.0), np.linspace(200, 240, 4)])
    p[31:36] = np.column_stack([np.linspace(185, 215, 5), [250, 253, 255, 253, 250]])
    for base, x0 in ((36, 150.0), (42, 220.0)):
        p[base:base + 6, 0] = x0 + np.array([0, 10, 20, 30, 20, 10])
        p[base:base + 6, 1] = 200.0
    p[48:60] = [(175, 290), (185, 282), (193, 279), (200, 280), (207, 279), (215, 282),
                (225, 290), (215, 300), (207, 303), (200, 304), (193, 303), (185, 300)]
    p[60:68, 0] = [180, 190, 200, 210, 220, 210, 200, 190]
    p[60:68, 1] = 290.0
    return p


TEMPLATE = _template()
_UPPER_LID = np.array([37, 38, 43, 44])
_LOWER_LID = np.array([40, 41, 46, 47])
_INNER_UPPER = np.array([61, 62, 63])
_INNER_LOWER = np.array([65, 66, 67])
_OUTER_LOWER = np.array([55, 56, 57, 58, 59])
_CHIN = np.arange(4, 13)


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 600.0
    fps: float = 30.0
    fatigue_prior: float = 0.37
    seed: int = 0
    episode_duration: tuple = (10.0, 30.0)
    fatigue_gap: tuple = (0.1, 0.6)
    fatigue_mix: tuple = (0.25, 0.25, 0.25, 0.25)  # long_closure, yawn, nod, blink_burst
    blink_rate_alert: float = 15.0  # per minute
    blink_rate_fatigued: float = 28.0
    blink_duration: tuple = (0.1, 0.4)
    closure_duration: tuple = (1.0, 3.0)
    yawn_duration: tuple = (3.0, 5.0)
    yawn_peak: tuple = (0.7, 0.95)
    nod_amplitude: tuple = (20.0, 30.0)
    nod_period: tuple = (0.8, 1.6)
    nod_cycles: int = 3
    burst_duration: tuple = (3.0, 5.0)
    burst_interval: tuple = (0.25, 0.45)  # blink onset to onset
    burst_blink_duration: tuple = (0.07, 0.14)
    distractor_rate: float = 3.0  # per minute of normal driving
    talk_duration: tuple = (1.5, 6.0)
    talk_frequency: tuple = (3.0, 5.0)
    smile_duration: tuple = (1.0, 4.0)
    dip_rate: float = 1.0  # isolated head dips per minute
    dip_amplitude: tuple = (6.0, 14.0)
    jitter: float = 0.5

    def __post_init__(self):
        if self.fps < 1:
            raise InputError("fps must be at least 1")
        if self.duration <= 0:
            raise InputError("duration must be positive")
        if not 0.0 <= self.fatigue_prior < 1.0:
            raise InputError("fatigue_prior must lie in [0, 1)")
        if self.yawn_duration[0] > self.yawn_duration[1]:
            raise InputError("yawn_duration range is reversed")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))


@dataclass
class Event:
    kind: str
    start: float
    duration: float
    fatigue: bool = False
    params: dict = field(default_factory=dict)

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class EventTimeline:
    events: list
    labels: np.ndarray
    duration: float
    fps: float

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


def _u(rng, lo_hi):
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def _fatigue_event(rng, cfg: ScenarioConfig, start: float) -> Event:
    mix = np.asarray(cfg.fatigue_mix, dtype=np.float64)
    kind = FATIGUE_KINDS[rng.choice(len(FATIGUE_KINDS), p=mix / mix.sum())]
    if kind == "long_closure":
        return Event(kind, start, _u(rng, cfg.closure_duration), True)
    if kind == "yawn":
        return Event(kind, start, _u(rng, cfg.yawn_duration), True, {"peak": _u(rng, cfg.yawn_peak)})
    if kind == "blink_burst":
        # rapid short blinks: a higher blink rate is itself a fatigue cue
        total = _u(rng, cfg.burst_duration)
        blinks, t = [], 0.0
        while True:
            dur = _u(rng, cfg.burst_blink_duration)
            if t + dur > total:
                break
            blinks.append((t, dur))
            t += _u(rng, cfg.burst_interval)
        return Event(kind, start, total, True, {"blinks": blinks})
    period = _u(rng, cfg.nod_period)
    return Event(kind, start, cfg.nod_cycles * period, True,
                 {"amplitude": _u(rng, cfg.nod_amplitude), "period": period, "cycles": cfg.nod_cycles})


def _distractor(rng, cfg: ScenarioConfig, start: float) -> Event:
    if rng.random() < 0.5:
        return Event("talk", start, _u(rng, cfg.talk_duration), False,
                     {"frequency": _u(rng, cfg.talk_frequency)})
    return Event("smile", start, _u(rng, cfg.smile_duration), False)


def generate_timeline(cfg: ScenarioConfig) -> EventTimeline:
    """Seed-deterministic event schedule and per-frame label track."""
    rng = np.random.default_rng(cfg.seed)
    D = cfg.duration
    segments = []  # (is_fatigue, start, end)
    mean_ep = 0.5 * (cfg.episode_duration[0] + cfg.episode_duration[1])
    t = 0.0
    while t < D:
        if cfg.fatigue_prior == 0:
            segments.append((False, t, D))
            break
        normal = mean_ep * (1.0 - cfg.fatigue_prior) / cfg.fatigue_prior * rng.uniform(0.5, 1.5)
        segments.append((False, t, min(t + normal, D)))
        t += normal
        if t >= D:
            break
        ep = _u(rng, cfg.episode_duration)
        segments.append((True, t, min(t + ep, D)))
        t += ep

    events: list[Event] = []
    for is_fatigue, s0, s1 in segments:
        if is_fatigue:
            cur = s0
            while True:
                ev = _fatigue_event(rng, cfg, cur)
                if ev.end > s1:
                    break
                events.append(ev)
                cur = ev.end + _u(rng, cfg.fatigue_gap)
        else:
            cur = s0 + rng.exponential(60.0 / cfg.distractor_rate)
            while True:
                ev = _distractor(rng, cfg, cur)
                if ev.end > s1:
                    break
                events.append(ev)
                cur = ev.end + rng.exponential(60.0 / cfg.distractor_rate)
            cur = s0 + rng.exponential(60.0 / cfg.dip_rate)
            while True:
                period = rng.uniform(1.0, 2.0)
                if cur + period > s1:
                    break
                events.append(Event("nod", cur, period, False,
                                    {"amplitude": _u(rng, cfg.dip_amplitude), "period": period, "cycles": 1}))
                cur += period + rng.exponential(60.0 / cfg.dip_rate)

    # blinks outside fatigue events, faster inside fatigue episodes
    busy = sorted((e.start, e.end) for e in events if e.fatigue)
    t = 0.0
    while True:
        in_episode = any(a <= t < b for f, a, b in segments if f)
        rate = cfg.blink_rate_fatigued if in_episode else cfg.blink_rate_alert
        t += rng.exponential(60.0 / rate)
        dur = _u(rng, cfg.blink_duration)
        if t + dur > D:
            break
        if not any(a < t + dur and t < b for a, b in busy):
            events.append(Event("blink", t, dur, False))
            t += dur

    events.sort(key=lambda e: (e.start, e.kind))
    n = cfg.n_frames
    times = np.arange(n) / cfg.fps
    labels = np.zeros(n, dtype=np.int64)
    for e in events:
        if e.fatigue:
            labels[(times >= e.start) & (times < e.end)] = 1
    return EventTimeline(events, labels, D, cfg.fps)


@dataclass
class RenderedStream:
    t: np.ndarray
    points: np.ndarray  # (T, 68, 2)
    pitch: np.ndarray
    yaw: np.ndarray
    roll: np.ndarray
    labels: np.ndarray
    features: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)


def render_frames(timeline: EventTimeline, cfg: ScenarioConfig) -> RenderedStream:
    """Landmarks and head pose for every frame of a timeline."""
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(timeline.labels)
    t = np.arange(n) / cfg.fps
    eye_open = np.ones(n)
    gap = np.full(n, ALERT_MOUTH_GAP)
    smile = np.zeros(n)
    base_pitch = rng.uniform(-3.0, 3.0)
    phase = rng.uniform(0, 2 * np.pi, size=5)
    pitch = base_pitch + 2.0 * np.sin(2 * np.pi * t / 8.0 + phase[0])
    yaw = 4.0 * np.sin(2 * np.pi * t / 11.0 + phase[1])
    roll = 3.0 * np.sin(2 * np.pi * t / 13.0 + phase[2])
    drift = np.column_stack([6.0 * np.sin(2 * np.pi * t / 17.0 + phase[3]),
                             4.0 * np.sin(2 * np.pi * t / 19.0 + phase[4])])

    for e in timeline.events:
        idx = np.nonzero((t >= e.start) & (t < e.end))[0]
        if idx.size == 0:
            continue
        u = (t[idx] - e.start) / e.duration
        if e.kind == "blink":
            eye_open[idx] = np.minimum(eye_open[idx], np.abs(1.0 - 2.0 * u))
        elif e.kind == "blink_burst":
            for off, dur in e.params["blinks"]:
                sub = np.nonzero((t >= e.start + off) & (t < e.start + off + dur))[0]
                v = (t[sub] - e.start - off) / dur
                eye_open[sub] = np.minimum(eye_open[sub], np.abs(1.0 - 2.0 * v))
        elif e.kind == "long_closure":
            eye_open[idx] = 0.0
        elif e.kind == "yawn":
            # quick trapezoid: 15% ramps, held at the peak in between
            ramp = np.clip(np.minimum(u, 1.0 - u) / 0.15, 0.0, 1.0)
            target = ALERT_MOUTH_GAP + (e.params["peak"] * INNER_MOUTH_WIDTH - ALERT_MOUTH_GAP) * ramp
            gap[idx] = np.maximum(gap[idx], target)
        elif e.kind == "nod":
            ph = 2 * np.pi * (t[idx] - e.start) / e.params["period"]
            pitch[idx] -= e.params["amplitude"] * 0.5 * (1.0 - np.cos(ph))
        elif e.kind == "talk":
            osc = np.abs(np.sin(np.pi * e.params["frequency"] * (t[idx] - e.start)))
            gap[idx] = np.maximum(gap[idx], ALERT_MOUTH_GAP + TALK_GAP * osc)
        elif e.kind == "smile":
            smile[idx] = np.maximum(smile[idx], np.sin(np.pi * u))

    pts = np.broadcast_to(TEMPLATE, (n, 68, 2)).copy()
    h = EYE_HALF_HEIGHT * eye_open
    pts[:, _UPPER_LID, 1] -= h[:, None]
    pts[:, _LOWER_LID, 1] += h[:, None]
    pts[:, _INNER_UPPER, 1] -= 0.5 * gap[:, None]
    pts[:, _INNER_LOWER, 1] += 0.5 * gap[:, None]
    drop = np.maximum(gap - ALERT_MOUTH_GAP, 0.0)
    pts[:, _OUTER_LOWER, 1] += drop[:, None]
    pts[:, _CHIN, 1] += 0.8 * drop[:, None]
    # smiling stretches the mouth sideways about its centre and lifts the corners
    for idx, scale in ((np.arange(48, 60), 6.0 / 25.0), (np.arange(60, 68), 6.0 / 20.0)):
        pts[:, idx, 0] += scale * smile[:, None] * (pts[:, idx, 0] - 200.0)
    pts[:, [48, 54, 60, 64], 1] -= 3.0 * smile[:, None]

    c = np.deg2rad(roll)
    cx, cy = FACE_CENTER
    x, y = pts[..., 0] - cx, pts[..., 1] - cy
    cos, sin = np.cos(c)[:, None], np.sin(c)[:, None]
    pts[..., 0] = cx + cos * x - sin * y + drift[:, 0:1]
    pts[..., 1] = cy + sin * x + cos * y + drift[:, 1:2] - 1.5 * pitch[:, None]
    pts += rng.normal(0.0, cfg.jitter, size=pts.shape)
    return RenderedStream(t, pts, pitch, yaw, roll, timeline.labels.copy())


def generate_stream(cfg: ScenarioConfig) -> tuple[EventTimeline, RenderedStream]:
    tl = generate_timeline(cfg)
    stream = render_frames(tl, cfg)
    stream.features = extract_features(stream.points, stream.pitch)
    return tl, stream


def generate_dataset(cfg: ScenarioConfig, window_len: int, skip: int = 0, stride: int = DEFAULT_STRIDE,
                     group: int = 0) -> tuple[SequenceDataset, RenderedStream]:
    """Render one scenario and cut it into labelled sequence samples."""
    if cfg.n_frames < window_len:
        raise InputError(f"{cfg.n_frames} frames cannot fill a {window_len}-frame window")
    _, stream = generate_stream(cfg)
    samples = slide_dataset(stream.features, stream.labels, window_len, skip, stride, group)
    return SequenceDataset.from_samples(samples, window_len, skip, stride, cfg.fps), stream


def generate_corpus(cfg: ScenarioConfig, n_scenarios: int, window_len: int, skip: int = 0,
                    stride: int = DEFAULT_STRIDE, workers: int = 1) -> SequenceDataset:
    """Several scenarios with seeds ``cfg.seed + i``, one group per scenario."""
    def one(i):
        return generate_dataset(replace(cfg, seed=cfg.seed + i), window_len, skip, stride, group=i)[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(n_scenarios)))
    else:
        parts = [one(i) for i in range(n_scenarios)]
    return SequenceDataset.concat(parts)


# --------------------------------------------------------------------------
# JSONL stream files


def write_stream_jsonl(path, stream: RenderedStream, decimals: int = 3, include_points: bool = True,
                       include_features: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(stream)):
            rec = {"t": round(float(stream.t[i]), 6)}
            if include_points:
                rec["points"] = [[round(float(x), decimals), round(float(y), decimals)]
                                 for x, y in stream.points[i]]
            rec["pitch"] = round(float(stream.pitch[i]), decimals)
            rec["yaw"] = round(float(stream.yaw[i]), decimals)
            rec["roll"] = round(float(stream.roll[i]), decimals)
            if include_features and stream.features is not None:
                rec["features"] = [float(v) for v in stream.features[i]]
            rec["label"] = int(stream.labels[i])
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_stream_jsonl(path) -> RenderedStream:
    """Parse a stream file; features are computed from points when absent."""
    t, pts, pose, feats, labels = [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: not valid JSON") from exc
            if "t" not in rec:
                raise InputError(f"{path}:{lineno}: record lacks 't'")
            t.append(float(rec["t"]))
            pose.append((rec.get("pitch", 0.0), rec.get("yaw", 0.0), rec.get("roll", 0.0)))
            pts.append(rec.get("points"))
            feats.append(rec.get("features"))
            labels.append(rec.get("label", 0))
    t_arr = np.asarray(t)
    if np.any(np.diff(t_arr) <= 0):
        raise InputError(f"{path}: timestamps are not strictly increasing")
    pose_arr = np.asarray(pose, dtype=np.float64).reshape(-1, 3)
    have_pts = bool(pts) and all(p is not None for p in pts)
    points = np.asarray(pts, dtype=np.float64) if have_pts else np.zeros((len(t), 0, 2))
    if have_pts and points.shape[1:] != (68, 2):
        raise InputError(f"{path}: points must be 68 [x, y] pairs")
    stream = RenderedStream(t_arr, points, pose_arr[:, 0], pose_arr[:, 1], pose_arr[:, 2],
                            np.asarray(labels, dtype=np.int64))
    if all(f is not None for f in feats) and feats:
        stream.features = np.asarray(feats, dtype=np.float64)
    elif have_pts:
        stream.features = extract_features(points, stream.pitch)
    elif t:
        raise InputError(f"{path}: records carry neither points nor features")
    else:
        stream.features = np.zeros((0, 4))
    return stream


def class_ratio(ds: SequenceDataset) -> float:
    """fatigue / normal sample count."""
    n_f, n_n = ds.class_counts()
    return n_f / n_n if n_n else float("inf")


def summarize(ds: SequenceDataset) -> dict:
    n_f, n_n = ds.class_counts()
    return {"samples": len(ds), "fatigue": n_f, "normal": n_n, "fatigue_to_normal": class_ratio(ds)}


def yawn_durations(timeline: EventTimeline) -> Sequence[float]:
    return [e.duration for e in timeline.of_kind("yawn")]
