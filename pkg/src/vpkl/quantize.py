"""Discrete unit quantiser: k-means codebook over mel frames, per-frame encoding,
run-length collapse. Stands in for a large pretrained unit extractor at desk scale;
the mining algorithm downstream only sees unit sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vpkl.frontend import MelSpectrogram

KMEANS_MAX_ITER = 100


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, dim)
    seed: int

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise ValueError("codebook needs at least 2 centroids")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("codebook centroids contain non-finite values")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass
class UnitSequence:
    units: np.ndarray  # int32 unit ids
    collapsed: bool = False
    utterance_id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        self.units = np.asarray(self.units, dtype=np.int32)
        if self.units.ndim != 1:
            raise ValueError("unit sequence must be 1-D")

    def __len__(self) -> int:
        return self.units.shape[0]


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at zero against roundoff."""
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++: first centroid uniform, the rest D^2-weighted."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    best_d2 = _squared_distances(points, centroids[:1])[:, 0]
    for c in range(1, k):
        total = best_d2.sum()
        if total <= 0.0:
            raise ValueError(
                f"cannot place {k} distinct centroids: fewer than {k} distinct frames"
            )
        probs = best_d2 / total
        nxt = int(rng.choice(n, p=probs))
        centroids[c] = points[nxt]
        best_d2 = np.minimum(best_d2, _squared_distances(points, centroids[c : c + 1])[:, 0])
    return centroids


def train_codebook(frames: np.ndarray, k: int, seed: int,
                   max_iter: int = KMEANS_MAX_ITER) -> Codebook:
    """Lloyd iterations to an assignment fixpoint (or max_iter), seeded and deterministic.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid (lowest point index on ties), one empty cluster at a time in
    ascending cluster order.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
    if k < 2:
        raise ValueError(f"codebook size must be >= 2, got {k}")
    if frames.shape[0] < k:
        raise ValueError(f"{frames.shape[0]} frames < codebook size {k}")
    if np.unique(frames, axis=0).shape[0] < k:
        raise ValueError(f"cannot place {k} distinct centroids: fewer than {k} distinct frames")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(frames, k, rng)
    prev_assign = None
    prev_distortion = np.inf
    for _ in range(max_iter):
        d2 = _squared_distances(frames, centroids)
        assign = np.argmin(d2, axis=1)
        distortion = float(d2[np.arange(frames.shape[0]), assign].mean())
        assert distortion <= prev_distortion + 1e-9 * max(1.0, prev_distortion), (
            "k-means distortion increased"
        )
        prev_distortion = distortion
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign

        counts = np.bincount(assign, minlength=k)
        point_d2 = d2[np.arange(frames.shape[0]), assign].copy()
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(point_d2))
            centroids[c] = frames[far]
            assign[far] = c
            counts[c] = 1
            point_d2[far] = 0.0
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, frames)
        counts = np.bincount(assign, minlength=k)
        centroids = sums / counts[:, None]
    return Codebook(centroids=centroids, seed=seed)


def encode_units(m: MelSpectrogram, cb: Codebook) -> UnitSequence:
    """Map each valid frame to its nearest centroid (ties: lowest centroid index)."""
    if m.n_mels != cb.centroids.shape[1]:
        raise ValueError(
            f"frame dim {m.n_mels} != centroid dim {cb.centroids.shape[1]}"
        )
    valid = m.valid()
    if valid.shape[0] == 0:
        return UnitSequence(units=np.empty(0, dtype=np.int32), collapsed=False)
    d2 = _squared_distances(valid, cb.centroids)
    return UnitSequence(units=np.argmin(d2, axis=1).astype(np.int32), collapsed=False)


def collapse_runs(u: UnitSequence) -> UnitSequence:
    """Replace maximal runs of equal unit ids with a single id."""
    if u.collapsed:
        raise ValueError("unit sequence already collapsed")
    units = u.units
    if units.shape[0] == 0:
        return UnitSequence(units=units.copy(), collapsed=True, utterance_id=u.utterance_id)
    keep = np.empty(units.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = units[1:] != units[:-1]
    return UnitSequence(units=units[keep], collapsed=True, utterance_id=u.utterance_id)
