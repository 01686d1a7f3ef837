"""Style-space analysis: latent extraction, PCA projection, cluster score.

PCA runs power iteration with deflation on the latent covariance (the
components this artifact needs are only the top two). Cluster separation
fits k-means with deterministic farthest-point seeding and reports the
best label-to-cluster agreement over assignments, so it is invariant to
label naming.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import codec, model

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


@dataclass(frozen=True)
class LatentTable:
    """One style vector per (writer, letter) row, with optional labels."""

    writer_ids: tuple
    letters: tuple
    labels: tuple  # optional style annotations (None when absent)
    matrix: np.ndarray  # (N, d_bias)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.writer_ids):
            raise ValueError("matrix rows must match writer_ids")
        if not (len(self.writer_ids) == len(self.letters) == len(self.labels)):
            raise ValueError("column lengths differ")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __len__(self) -> int:
        return len(self.writer_ids)


@dataclass(frozen=True)
class Projection2D:
    u: np.ndarray
    v: np.ndarray
    explained: tuple  # variance ratios of the two components, non-increasing

    def __post_init__(self):
        ev = (float(self.explained[0]), float(self.explained[1]))
        if not (0.0 <= ev[1] <= ev[0] <= 1.0 + 1e-12):
            raise ValueError(f"explained-variance ratios invalid: {ev}")
        object.__setattr__(self, "explained", ev)


def extract_latents(checkpoint, corpus, letter_filter=None, split=None,
                    label_key="rotation") -> LatentTable:
    """Encode every matching trace into a style-vector table.

    Labels come from each trace's meta[label_key] when present. Rows are
    ordered by (writer, letter) for determinism.
    """
    params = checkpoint.params
    if not isinstance(params, model.AutoencoderParams):
        raise ValueError("latent extraction needs an autoencoder checkpoint")
    rows = []
    for trace, s in corpus:
        if split is not None and s != split:
            continue
        if letter_filter is not None and trace.letter not in letter_filter:
            continue
        rows.append((trace.writer_id, trace.letter, trace))
    if not rows:
        raise ValueError("no traces match the latent selection")
    rows.sort(key=lambda r: (r[0], r[1]))
    vectors, labels = [], []
    for _, _, trace in rows:
        fs = codec.encode(trace, checkpoint.quantizer)
        vectors.append(model.encode_style(params, fs).values)
        labels.append(trace.meta.get(label_key))
    return LatentTable(
        writer_ids=tuple(r[0] for r in rows),
        letters=tuple(r[1] for r in rows),
        labels=tuple(labels),
        matrix=np.vstack(vectors),
    )


def _power_iteration(cov, rng) -> tuple:
    v = rng.normal(size=cov.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        lam = float(w @ cov @ w)
        if np.linalg.norm(cov @ w - lam * w) < POWER_TOL:
            v = w
            break
        v = w
    return lam, v


def _fix_sign(vec) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec)))
    return -vec if vec[idx] < 0 else vec


def pca_project(table) -> Projection2D:
    """Top-2 principal components of the latent rows.

    Accepts a LatentTable or a plain (N, d) matrix. Requires at least 3
    rows and nonzero variance.
    """
    matrix = table.matrix if isinstance(table, LatentTable) else np.asarray(table, float)
    n = matrix.shape[0]
    if n < 3:
        raise ValueError("need at least 3 rows for a 2-D projection")
    centered = matrix - matrix.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    total = float(np.trace(cov))
    if total <= 0.0:
        raise ValueError("latent variance is zero (rank-0 data)")
    rng = np.random.default_rng(0)  # fixed seed: projection stays deterministic
    lam1, c1 = _power_iteration(cov, rng)
    deflated = cov - lam1 * np.outer(c1, c1)
    lam2, c2 = _power_iteration(deflated, rng)
    # Deflation residue can leave c2 leaning into c1 (exactly so for rank-1
    # data, where the deflated matrix vanishes): re-orthogonalize.
    c2 = c2 - (c2 @ c1) * c1
    norm2 = np.linalg.norm(c2)
    if norm2 < 1e-9:
        alt = np.zeros_like(c1)
        alt[int(np.argmin(np.abs(c1)))] = 1.0
        c2 = alt - (alt @ c1) * c1
        norm2 = np.linalg.norm(c2)
    c2 /= norm2
    lam2 = float(c2 @ deflated @ c2)
    c1 = _fix_sign(c1)
    c2 = _fix_sign(c2)
    lam1 = max(lam1, 0.0)
    lam2 = max(min(lam2, lam1), 0.0)
    return Projection2D(
        u=centered @ c1, v=centered @ c2, explained=(lam1 / total, lam2 / total)
    )


def _kmeans(points, k, n_iter=100) -> np.ndarray:
    """Lloyd's algorithm with farthest-point initial centers."""
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(np.argmax(np.linalg.norm(points - points.mean(axis=0), axis=1)))]
    for i in range(1, k):
        dists = np.min(
            np.linalg.norm(points[:, None, :] - centers[None, :i, :], axis=2), axis=1
        )
        centers[i] = points[int(np.argmax(dists))]
    assign = np.full(points.shape[0], -1, dtype=np.int64)
    for _iter in range(n_iter):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_assign = np.argmin(dists, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            member = points[assign == j]
            if member.shape[0]:
                centers[j] = member.mean(axis=0)
    return assign


def separation_score(projection: Projection2D, labels, k=2) -> float:
    """Best agreement between k-means clusters and the given labels.

    Maximized over injective label-to-cluster assignments, so swapping
    label names never changes the score.
    """
    labels = [str(lb) for lb in labels]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("need at least 2 label classes")
    points = np.stack([projection.u, projection.v], axis=1)
    if len(labels) != points.shape[0]:
        raise ValueError("labels must match projection rows")
    assign = _kmeans(points, k)
    y = np.array([classes.index(lb) for lb in labels])
    best = 0.0
    for perm in permutations(range(len(classes)), min(k, len(classes))):
        mapped = np.full(k, -1)
        for cluster, cls in enumerate(perm):
            mapped[cluster] = cls
        acc = float(np.mean(mapped[assign] == y))
        best = max(best, acc)
    return best


def latent_csv(table: LatentTable, projection: Projection2D) -> str:
    lines = ["writer_id,letter,label,u,v"]
    for w, letter, label, u, v in zip(
        table.writer_ids, table.letters, table.labels, projection.u, projection.v
    ):
        lines.append(f"{w},{letter},{'' if label is None else label},{u!r},{v!r}")
    return "\n".join(lines) + "\n"
