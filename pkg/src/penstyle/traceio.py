"""Pen-trace data model: ingestion, cleaning, writer splits, synthetic traces.

A trace is a timed pen trajectory for one uppercase letter by one writer.
The on-disk format is line-delimited JSON, one trace per line:

    {"writer_id": "w012", "letter": "X", "sample_rate_hz": 100,
     "points": [[x, y, t], ...]}

Optional keys: "split" (train/val/transfer) and "meta" (style annotations,
e.g. {"rotation": "clockwise"}). Coordinates are arbitrary units, t in
seconds. All values are immutable after construction, so traces and corpora
are safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
SPLITS = ("train", "val", "transfer")
ROTATIONS = ("clockwise", "anticlockwise")

# Cleaning bounds: traces longer than one second or more than 99 samples
# are removed outright; strokes shorter than 5% of a trace's path length
# are treated as false starts / stray marks and dropped.
MAX_DURATION_S = 1.0
MAX_POINTS = 99
MIN_STROKE_FRACTION = 0.05
STROKE_JUMP_FACTOR = 4.0


class TraceFormatError(ValueError):
    """A trace line or file could not be parsed into a valid Trace."""


@dataclass(frozen=True)
class Trace:
    """One pen trajectory: (x, y, t) rows with writer and letter labels."""

    writer_id: str
    letter: str
    points: np.ndarray  # (n, 3) float64 columns x, y, t
    sample_rate_hz: float = 100.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise TraceFormatError("points must be an (n, 3) array of x, y, t")
        if pts.shape[0] < 3:
            raise TraceFormatError("trace needs at least 3 points")
        if not np.isfinite(pts).all():
            raise TraceFormatError("points contain non-finite values")
        if np.any(np.diff(pts[:, 2]) <= 0.0):
            raise TraceFormatError("timestamps must be strictly increasing")
        if self.letter not in LETTERS:
            raise TraceFormatError(f"letter must be A-Z, got {self.letter!r}")
        if not self.sample_rate_hz > 0:
            raise TraceFormatError("sample_rate_hz must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def duration_s(self) -> float:
        return float(self.points[-1, 2] - self.points[0, 2])

    def to_json_line(self, split=None) -> str:
        obj = {
            "writer_id": self.writer_id,
            "letter": self.letter,
            "sample_rate_hz": self.sample_rate_hz,
            "points": [[float(x), float(y), float(t)] for x, y, t in self.points],
        }
        if split is not None:
            obj["split"] = split
        if self.meta:
            obj["meta"] = self.meta
        return json.dumps(obj)


@dataclass(frozen=True)
class Corpus:
    """An immutable set of traces, each tagged train / val / transfer.

    Invariants: one trace per (writer, letter) within a split, and no
    transfer writer ever appears in train or val.
    """

    traces: tuple = ()
    splits: tuple = ()

    def __post_init__(self):
        traces = tuple(self.traces)
        splits = tuple(self.splits)
        if len(traces) != len(splits):
            raise ValueError("traces and splits must be parallel")
        seen = set()
        for trace, split in zip(traces, splits):
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r}")
            key = (split, trace.writer_id, trace.letter)
            if key in seen:
                raise ValueError(
                    f"duplicate ({trace.writer_id}, {trace.letter}) in split {split}"
                )
            seen.add(key)
        transfer = {t.writer_id for t, s in zip(traces, splits) if s == "transfer"}
        fitted = {t.writer_id for t, s in zip(traces, splits) if s != "transfer"}
        overlap = transfer & fitted
        if overlap:
            raise ValueError(f"transfer writers leak into train/val: {sorted(overlap)}")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "splits", splits)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(zip(self.traces, self.splits))

    def subset(self, split) -> list:
        """Traces belonging to one split, in corpus order."""
        return [t for t, s in zip(self.traces, self.splits) if s == split]

    def writers(self, split=None) -> list:
        if split is None:
            ids = {t.writer_id for t in self.traces}
        else:
            ids = {t.writer_id for t in self.subset(split)}
        return sorted(ids)

    def by_key(self, split=None) -> dict:
        """Map (writer_id, letter) -> Trace, optionally restricted to a split."""
        out = {}
        for trace, s in zip(self.traces, self.splits):
            if split is None or s == split:
                out[(trace.writer_id, trace.letter)] = trace
        return out


def _parse_line(line: str) -> tuple:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise TraceFormatError("line is not a JSON object")
    try:
        trace = Trace(
            writer_id=str(obj["writer_id"]),
            letter=str(obj["letter"]),
            points=np.asarray(obj["points"], dtype=np.float64),
            sample_rate_hz=float(obj.get("sample_rate_hz", 100.0)),
            meta=dict(obj.get("meta", {})),
        )
    except KeyError as exc:
        raise TraceFormatError(f"missing field {exc.args[0]!r}") from None
    split = obj.get("split", "train")
    if split not in SPLITS:
        raise TraceFormatError(f"unknown split {split!r}")
    return trace, split


def load_corpus(path) -> tuple:
    """Read a line-delimited trace file.

    Returns (corpus, diagnostics): every parseable, invariant-satisfying
    line becomes a trace; rejected lines are reported as
    "line N: reason" strings. A missing file raises FileNotFoundError.
    """
    traces, splits, diagnostics = [], [], []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                trace, split = _parse_line(line)
            except (TraceFormatError, ValueError, TypeError) as exc:
                diagnostics.append(f"line {lineno}: {exc}")
                continue
            key = (split, trace.writer_id, trace.letter)
            if key in seen:
                diagnostics.append(
                    f"line {lineno}: duplicate ({trace.writer_id}, {trace.letter}) "
                    f"in split {split}"
                )
                continue
            seen.add(key)
            traces.append(trace)
            splits.append(split)
    return Corpus(tuple(traces), tuple(splits)), diagnostics


def save_corpus(corpus: Corpus, path, include_split=True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace, split in corpus:
            fh.write(trace.to_json_line(split if include_split else None))
            fh.write("\n")


def _stroke_boundaries(xy: np.ndarray) -> list:
    """Indices where a new stroke starts (pen teleports between samples)."""
    steps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    positive = steps[steps > 0]
    if positive.size < 2:
        return [0]
    threshold = STROKE_JUMP_FACTOR * float(np.median(positive))
    starts = [0]
    for i, step in enumerate(steps):
        if step > threshold:
            starts.append(i + 1)
    return starts


def _drop_short_strokes(trace: Trace):
    """Remove strokes shorter than MIN_STROKE_FRACTION of total path length.

    Returns a new Trace, or None when too little survives to form one.
    Removal only ever increases the remaining strokes' length fractions,
    so the rule is idempotent.
    """
    xy = trace.points[:, :2]
    starts = _stroke_boundaries(xy)
    if len(starts) == 1:
        return trace
    bounds = starts + [trace.n_points]
    segments = [(bounds[i], bounds[i + 1]) for i in range(len(starts))]
    lengths = []
    for a, b in segments:
        seg = xy[a:b]
        lengths.append(float(np.linalg.norm(np.diff(seg, axis=0), axis=1).sum()))
    total = sum(lengths)
    if total <= 0:
        return None
    keep = [seg for seg, ln in zip(segments, lengths) if ln >= MIN_STROKE_FRACTION * total]
    if len(keep) == len(segments):
        return trace
    if not keep:
        return None
    rows = np.concatenate([trace.points[a:b] for a, b in keep], axis=0)
    if rows.shape[0] < 3:
        return None
    try:
        return replace(trace, points=rows)
    except TraceFormatError:
        return None


def clean(corpus: Corpus) -> Corpus:
    """Drop stray strokes, then remove over-long traces.

    Traces are kept only when duration <= 1.0 s and sample count <= 99
    (strict removal above either bound). Idempotent.
    """
    traces, splits = [], []
    for trace, split in corpus:
        trace = _drop_short_strokes(trace)
        if trace is None:
            continue
        if trace.duration_s > MAX_DURATION_S or trace.n_points > MAX_POINTS:
            continue
        traces.append(trace)
        splits.append(split)
    return Corpus(tuple(traces), tuple(splits))


def split_writers(corpus: Corpus, n_transfer: int, seed: int, val_fraction=0.1) -> Corpus:
    """Assign whole writers to transfer / val / train, deterministically.

    Exactly n_transfer writers go to transfer; of the rest, about
    val_fraction (at least one writer, when possible) go to val.
    """
    writers = corpus.writers()
    if n_transfer < 0:
        raise ValueError("n_transfer must be non-negative")
    if n_transfer >= len(writers):
        raise ValueError(
            f"n_transfer={n_transfer} but corpus has only {len(writers)} writers"
        )
    rng = np.random.default_rng(seed)
    order = [writers[i] for i in rng.permutation(len(writers))]
    transfer = set(order[:n_transfer])
    rest = order[n_transfer:]
    n_val = int(round(val_fraction * len(rest)))
    if val_fraction > 0 and n_val == 0 and len(rest) > 1:
        n_val = 1
    val = set(rest[:n_val])
    assignment = {}
    for w in writers:
        if w in transfer:
            assignment[w] = "transfer"
        elif w in val:
            assignment[w] = "val"
        else:
            assignment[w] = "train"
    return Corpus(corpus.traces, tuple(assignment[t.writer_id] for t in corpus.traces))


# --- synthetic traces ------------------------------------------------------


@dataclass(frozen=True)
class SynthStyleSpec:
    """Style factors for one synthetic letter drawing."""

    letter: str
    rotation: str = "anticlockwise"
    tempo: float = 1.0
    jitter: float = 0.0
    start_corner: int = 0
    flourish: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.letter not in LETTERS:
            raise ValueError(f"letter must be A-Z, got {self.letter!r}")
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}")
        if not self.tempo > 0:
            raise ValueError("tempo must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.start_corner not in (0, 1, 2, 3):
            raise ValueError("start_corner must be 0..3")


def _arc(cx, cy, r, a0_deg, a1_deg, n=72) -> np.ndarray:
    ang = np.radians(np.linspace(a0_deg, a1_deg, n))
    return np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)


# Hand-drawn "straight" strokes bow to the left of travel. Per-step
# curvature stays below the 22.5-degree code bin, but coordinate jitter
# dithers the quantizer, so the bow direction (and with it traversal
# orientation) shows up in the direction-code statistics.
BOW_SAGITTA = 0.12


def _bowed(p0, p1, n=48) -> np.ndarray:
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    chord = p1 - p0
    normal = np.array([-chord[1], chord[0]])
    norm = np.linalg.norm(normal)
    if norm > 0:
        normal /= norm
    u = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + u * chord + (BOW_SAGITTA * np.sin(np.pi * u)) * normal


def _polyline(*pts, bow=True) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if not bow or pts.shape[0] < 2:
        return pts
    pieces = [_bowed(pts[i], pts[i + 1]) for i in range(pts.shape[0] - 1)]
    return np.concatenate([pieces[0]] + [p[1:] for p in pieces[1:]], axis=0)


@dataclass(frozen=True)
class LetterTemplate:
    strokes: tuple  # tuple of (k, 2) anchor polylines, drawn in order
    base_duration_s: float
    closed: bool = False  # single-loop templates admit rotated entry points


# Anchor geometry lives in the unit box. Multi-stroke gaps become ordinary
# displacements downstream (no pen state is modelled).
TEMPLATES = {
    "X": LetterTemplate(
        strokes=(
            _polyline((0.08, 0.92), (0.92, 0.08)),
            _polyline((0.92, 0.92), (0.08, 0.08)),
        ),
        base_duration_s=0.62,
    ),
    "C": LetterTemplate(
        strokes=(_arc(0.55, 0.5, 0.42, 55.0, 305.0),),
        base_duration_s=0.50,
    ),
    "A": LetterTemplate(
        strokes=(
            _polyline((0.05, 0.05), (0.5, 0.95), (0.95, 0.05)),
            _polyline((0.25, 0.42), (0.75, 0.42)),
        ),
        base_duration_s=0.66,
    ),
    "S": LetterTemplate(
        strokes=(
            np.concatenate(
                [
                    _arc(0.5, 0.73, 0.23, 40.0, 270.0),
                    _arc(0.5, 0.27, 0.23, 90.0, -140.0)[1:],
                ]
            ),
        ),
        base_duration_s=0.56,
    ),
    "O": LetterTemplate(
        strokes=(_arc(0.5, 0.5, 0.44, 90.0, 450.0),),
        base_duration_s=0.52,
        closed=True,
    ),
    "H": LetterTemplate(
        strokes=(
            _polyline((0.1, 0.95), (0.1, 0.05)),
            _polyline((0.9, 0.95), (0.9, 0.05)),
            _polyline((0.1, 0.5), (0.9, 0.5)),
        ),
        base_duration_s=0.70,
    ),
}

FLOURISH_EXTRA_S = 0.08


# Pen speed follows a bell profile within each stroke: the pen starts
# slowly, peaks mid-stroke, and decelerates into the stroke end. Besides
# looking like real pen kinematics, this makes stroke endings locally
# recognizable in the speed codes.
SPEED_PROFILE_DEPTH = 0.62


def _ease(fractions: np.ndarray) -> np.ndarray:
    """Time fraction -> arc-length fraction with a bell speed profile.

    Antisymmetric about 0.5, so reversed traversals sample the same points.
    """
    a = SPEED_PROFILE_DEPTH
    return fractions - a * np.sin(2.0 * np.pi * fractions) / (2.0 * np.pi)


def _resample_polyline(points: np.ndarray, n: int) -> np.ndarray:
    """n points along a polyline, spaced by the bell speed profile."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        return np.repeat(points[:1], n, axis=0)
    want = _ease(np.linspace(0.0, 1.0, n)) * cum[-1]
    x = np.interp(want, cum, points[:, 0])
    y = np.interp(want, cum, points[:, 1])
    return np.stack([x, y], axis=1)


def _entry_variant(template: LetterTemplate, corner: int) -> list:
    """One of four deterministic entry points: rotate the stroke order, or
    (for closed loops) start the loop a quarter-turn later."""
    strokes = [np.asarray(s) for s in template.strokes]
    if template.closed and len(strokes) == 1:
        loop = strokes[0]
        if corner:
            body = loop[:-1]  # last anchor repeats the first
            offset = (corner * len(body)) // 4
            loop = np.concatenate([body[offset:], body[:offset], body[offset : offset + 1]])
        return [loop]
    k = corner % len(strokes)
    return strokes[k:] + strokes[:k]


def _flourish_hook(start: np.ndarray) -> np.ndarray:
    """Small cursive curl leading into a stroke's first point."""
    hook = _arc(start[0] + 0.09, start[1] + 0.04, 0.1, 200.0, 430.0, n=24)
    shift = start - hook[-1]
    return hook + shift


# Pen-up transits between strokes are sampled in real time like the rest
# of the trajectory (no pen state is modelled), moving faster than the
# within-stroke pace.
AIR_SPEED_FACTOR = 2.5


def _segments(strokes) -> list:
    """Alternate (polyline, is_air) segments: strokes plus transit hops."""
    out = []
    for i, stroke in enumerate(strokes):
        if i > 0:
            gap = np.vstack([strokes[i - 1][-1], stroke[0]])
            if np.linalg.norm(gap[1] - gap[0]) > 1e-9:
                out.append((gap, True))
        out.append((stroke, False))
    return out


def synth_trace(spec: SynthStyleSpec, writer_id="synth") -> Trace:
    """Deterministic synthetic drawing of one letter in the given style.

    Rotation reverses traversal orientation; tempo scales point density
    (tempo 2 gives about half the time steps of tempo 1); jitter adds
    seeded Gaussian noise to coordinates. Trace invariants hold for any
    jitter >= 0; shapes stay recognizable below about 0.05.
    """
    template = TEMPLATES.get(spec.letter)
    if template is None:
        raise ValueError(f"no stroke template registered for letter {spec.letter!r}")
    strokes = _entry_variant(template, spec.start_corner)
    duration = template.base_duration_s
    if spec.flourish:
        strokes[0] = np.concatenate([_flourish_hook(strokes[0][0]), strokes[0]])
        duration += FLOURISH_EXTRA_S
    duration /= spec.tempo

    rate = 100.0
    segments = _segments(strokes)
    n = max(int(round(duration * rate)), len(segments) + 2, 3)

    # Sample counts follow time shares: distance over pace, with transits
    # moving AIR_SPEED_FACTOR faster than stroke drawing.
    lengths = [float(np.linalg.norm(np.diff(s, axis=0), axis=1).sum()) for s, _ in segments]
    weights = [ln / (AIR_SPEED_FACTOR if air else 1.0) for ln, (_, air) in zip(lengths, segments)]
    total = sum(weights)
    # Segments share boundary points, so n points need n + len - 1 samples.
    budget = n + len(segments) - 1
    counts = [max(2, int(round(budget * w / total))) for w in weights]
    counts[int(np.argmax(weights))] += budget - sum(counts)
    counts = [max(2, c) for c in counts]

    pieces = []
    for (poly, air), c in zip(segments, counts):
        if air:
            frac = np.linspace(0.0, 1.0, c)[:, None]
            sampled = poly[0] + frac * (poly[1] - poly[0])
        else:
            sampled = _resample_polyline(poly, c)
        pieces.append(sampled if not pieces else sampled[1:])
    xy = np.concatenate(pieces, axis=0)
    if spec.rotation == "clockwise":
        xy = xy[::-1]

    rng = np.random.default_rng(spec.seed)
    xy = xy + rng.normal(0.0, 1.0, size=xy.shape) * spec.jitter
    t = np.arange(xy.shape[0]) / rate
    meta = {
        "rotation": spec.rotation,
        "tempo": spec.tempo,
        "start_corner": spec.start_corner,
        "flourish": spec.flourish,
    }
    return Trace(
        writer_id=writer_id,
        letter=spec.letter,
        points=np.column_stack([xy, t]),
        sample_rate_hz=rate,
        meta=meta,
    )
