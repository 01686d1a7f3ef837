"""Trace <-> discrete frame conversion.

Each frame pairs a direction-change code with a speed code, both quantized
to 16 levels and one-hot encoded for the model. Direction codes measure the
turn between consecutive displacements (so they are rotation-invariant);
absolute geometry is carried as side metadata (origin, initial heading and
speed) so decoded frames can be rendered back into a trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .traceio import Trace

TAU = 2.0 * np.pi
# Cleaned traces encode to at most 97 frames (99 points); generated
# sequences may run to the sampler's 100-step cap, so the type admits 100.
MAX_FRAMES = 100


@dataclass(frozen=True)
class QuantizerConfig:
    """Quantization grid: level count and the speed ceiling v_max."""

    n_levels: int = 16
    v_max: float = 1.0

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError("n_levels must be >= 2")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")

    def to_json(self) -> str:
        return json.dumps({"n_levels": self.n_levels, "v_max": self.v_max})

    @classmethod
    def from_json(cls, text: str) -> "QuantizerConfig":
        obj = json.loads(text)
        return cls(n_levels=int(obj["n_levels"]), v_max=float(obj["v_max"]))


def calibrate(traces, n_levels=16, percentile=99.0) -> QuantizerConfig:
    """Set v_max to a high percentile of observed displacement speeds.

    The percentile (default 99th) keeps the top bin meaningful in the
    presence of outlier displacements such as bridged pen-up jumps.
    """
    speeds = []
    for trace in traces:
        pts = _merged_points(trace)
        if pts.shape[0] < 2:
            continue
        disp = np.diff(pts[:, :2], axis=0)
        dt = np.diff(pts[:, 2])
        speeds.append(np.linalg.norm(disp, axis=1) / dt)
    if not speeds:
        raise ValueError("no displacements to calibrate from")
    all_speeds = np.concatenate(speeds)
    v_max = float(np.percentile(all_speeds, percentile))
    if v_max <= 0:
        raise ValueError("calibrated v_max is not positive")
    return QuantizerConfig(n_levels=n_levels, v_max=v_max)


@dataclass(frozen=True)
class FrameSequence:
    """Quantized model view of one trace: per-step (dir, speed) code pairs."""

    letter: str
    dir_codes: np.ndarray  # (T,) ints in [0, n_levels)
    speed_codes: np.ndarray  # (T,) ints in [0, n_levels)
    initial_heading: float  # radians in [0, 2*pi)
    initial_speed: float  # units/s of the first displacement
    origin: tuple  # (x, y) first point
    sample_rate_hz: float = 100.0
    n_levels: int = 16

    def __post_init__(self):
        d = np.asarray(self.dir_codes, dtype=np.int64)
        s = np.asarray(self.speed_codes, dtype=np.int64)
        if d.ndim != 1 or s.shape != d.shape:
            raise ValueError("dir_codes and speed_codes must be equal-length vectors")
        if not 1 <= d.size <= MAX_FRAMES:
            raise ValueError(f"frame count must be in [1, {MAX_FRAMES}], got {d.size}")
        for name, codes in (("dir", d), ("speed", s)):
            if codes.min() < 0 or codes.max() >= self.n_levels:
                raise ValueError(f"{name} codes out of range [0, {self.n_levels})")
        if not 0.0 <= self.initial_heading < TAU:
            raise ValueError("initial_heading must lie in [0, 2*pi)")
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "dir_codes", d)
        object.__setattr__(self, "speed_codes", s)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def T(self) -> int:
        return self.dir_codes.size

    @property
    def frames(self) -> list:
        return list(zip(self.dir_codes.tolist(), self.speed_codes.tolist()))


def direction_change_code(p0, p1, p2, n_levels=16) -> int:
    """Turn between displacements p0->p1 and p1->p2, quantized to n_levels.

    The angle difference is normalized to [0, 2*pi) and rounded to the
    nearest bin center (multiples of 2*pi/n_levels), wrapping modulo
    n_levels. Zero-length displacements are degenerate points that must be
    merged upstream.
    """
    p0 = np.asarray(p0, dtype=np.float64)[:2]
    p1 = np.asarray(p1, dtype=np.float64)[:2]
    p2 = np.asarray(p2, dtype=np.float64)[:2]
    v1 = p1 - p0
    v2 = p2 - p1
    if not np.any(v1) or not np.any(v2):
        raise ValueError("zero-length displacement: merge duplicate points first")
    dtheta = (np.arctan2(v2[1], v2[0]) - np.arctan2(v1[1], v1[0])) % TAU
    width = TAU / n_levels
    return int(np.floor(dtheta / width + 0.5)) % n_levels


def speed_code(p_prev, p_next, dt, cfg: QuantizerConfig) -> int:
    """Displacement speed |p_next - p_prev| / dt on the [0, v_max] grid."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p_prev = np.asarray(p_prev, dtype=np.float64)[:2]
    p_next = np.asarray(p_next, dtype=np.float64)[:2]
    v = float(np.linalg.norm(p_next - p_prev)) / dt
    clamped = min(max(v, 0.0), cfg.v_max)
    return min(int(clamped / cfg.v_max * cfg.n_levels), cfg.n_levels - 1)


def _merged_points(trace: Trace) -> np.ndarray:
    """Trace points with consecutive duplicates (zero displacement) dropped."""
    pts = trace.points
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[1:] = np.any(pts[1:, :2] != pts[:-1, :2], axis=1)
    return pts[keep]


def encode(trace: Trace, cfg: QuantizerConfig) -> FrameSequence:
    """Quantize a cleaned trace into T = n_points - 2 frames.

    Frame i pairs the turn at point i+1 with the speed of the displacement
    that the turn produces (points i+1 -> i+2).
    """
    pts = _merged_points(trace)
    if pts.shape[0] < 3:
        raise ValueError("fewer than 3 distinct points after merging duplicates")
    xy = pts[:, :2]
    t = pts[:, 2]
    disp = np.diff(xy, axis=0)
    seg_dt = np.diff(t)
    angles = np.arctan2(disp[:, 1], disp[:, 0])
    width = TAU / cfg.n_levels
    dtheta = (angles[1:] - angles[:-1]) % TAU
    dir_codes = np.floor(dtheta / width + 0.5).astype(np.int64) % cfg.n_levels
    speeds = np.linalg.norm(disp[1:], axis=1) / seg_dt[1:]
    clamped = np.clip(speeds, 0.0, cfg.v_max)
    speed_codes = np.minimum(
        (clamped / cfg.v_max * cfg.n_levels).astype(np.int64), cfg.n_levels - 1
    )
    return FrameSequence(
        letter=trace.letter,
        dir_codes=dir_codes,
        speed_codes=speed_codes,
        initial_heading=float(angles[0] % TAU),
        initial_speed=float(np.linalg.norm(disp[0]) / seg_dt[0]),
        origin=(float(xy[0, 0]), float(xy[0, 1])),
        sample_rate_hz=trace.sample_rate_hz,
        n_levels=cfg.n_levels,
    )


def decode(fs: FrameSequence, cfg: QuantizerConfig, writer_id="decoded") -> Trace:
    """Reconstruct a trajectory by integrating bin-center turns and speeds.

    Headings accumulate from initial_heading; speeds use bin centers
    (code + 0.5) * v_max / n_levels; points step from origin at uniform
    1/sample_rate intervals. Deterministic, and re-encoding the result
    reproduces the code sequence exactly.
    """
    width = TAU / cfg.n_levels
    deltas = fs.dir_codes.astype(np.float64) * width
    headings = fs.initial_heading + np.cumsum(deltas)
    speeds = (fs.speed_codes.astype(np.float64) + 0.5) * cfg.v_max / cfg.n_levels
    dt = 1.0 / fs.sample_rate_hz

    xy = np.empty((fs.T + 2, 2), dtype=np.float64)
    xy[0] = fs.origin
    xy[1] = xy[0] + fs.initial_speed * dt * np.array(
        [np.cos(fs.initial_heading), np.sin(fs.initial_heading)]
    )
    steps = (speeds * dt)[:, None] * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    xy[2:] = xy[1] + np.cumsum(steps, axis=0)
    t = np.arange(fs.T + 2) * dt
    return Trace(
        writer_id=writer_id,
        letter=fs.letter,
        points=np.column_stack([xy, t]),
        sample_rate_hz=fs.sample_rate_hz,
    )


def frames_to_onehot(fs: FrameSequence) -> np.ndarray:
    """(T, 2*n_levels) one-hot matrix: dir block then speed block per row."""
    n = fs.n_levels
    out = np.zeros((fs.T, 2 * n), dtype=np.float64)
    rows = np.arange(fs.T)
    out[rows, fs.dir_codes] = 1.0
    out[rows, n + fs.speed_codes] = 1.0
    return out


def codes_to_onehot(dir_codes, speed_codes, n_levels=16) -> np.ndarray:
    """One-hot frames from raw code arrays (same layout as frames_to_onehot)."""
    d = np.asarray(dir_codes, dtype=np.int64)
    s = np.asarray(speed_codes, dtype=np.int64)
    out = np.zeros((d.size, 2 * n_levels), dtype=np.float64)
    rows = np.arange(d.size)
    out[rows, d] = 1.0
    out[rows, n_levels + s] = 1.0
    return out
