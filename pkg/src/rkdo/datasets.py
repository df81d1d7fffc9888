"""Seeded synthetic point clouds and their paired "augmented" views."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .rng import substream


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Points in ambient space with class labels and an optional view pairing.

    ``pair_map[i]`` is the index of the other view of point ``i``; it must be a
    fixed-point-free involution.
    """

    points: np.ndarray
    labels: np.ndarray
    pair_map: np.ndarray | None = None
    seed: int = 0
    name: str = "points"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if pts.ndim != 2 or labels.shape != (pts.shape[0],):
            raise ValueError("points must be (n, D) and labels (n,)")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        if self.pair_map is not None:
            pm = np.asarray(self.pair_map, dtype=np.int64)
            idx = np.arange(pts.shape[0])
            if pm.shape != idx.shape or np.any(pm == idx) or np.any(pm[pm] != idx):
                raise ValueError("pair_map must be a fixed-point-free involution")
            object.__setattr__(self, "pair_map", pm)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1

    def to_csv(self):
        """CSV text with columns ``x1..xD,label,pair`` (pair is -1 if absent)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        D = self.points.shape[1]
        w.writerow([f"x{j + 1}" for j in range(D)] + ["label", "pair"])
        pm = self.pair_map if self.pair_map is not None else np.full(self.n, -1)
        for row, lab, pr in zip(self.points, self.labels, pm):
            w.writerow([f"{x:.17g}" for x in row] + [int(lab), int(pr)])
        return buf.getvalue()

    def content_hash(self):
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    @classmethod
    def from_csv(cls, text, name="points", seed=0):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        D = len(header) - 2
        pts = np.array([[float(v) for v in r[:D]] for r in body]).reshape(-1, D)
        labels = np.array([int(r[D]) for r in body], dtype=np.int64)
        pairs = np.array([int(r[D + 1]) for r in body], dtype=np.int64)
        pm = None if np.all(pairs == -1) else pairs
        return cls(pts, labels, pm, seed=seed, name=name)


def simplex_centers(k, D, separation):
    """``k`` centers with all pairwise distances equal to ``separation``.

    Uses a regular simplex when ``D >= k - 1``; otherwise the centers sit on a
    regular polygon in the first two coordinates with adjacent spacing
    ``separation``.
    """
    if D >= k - 1:
        V = np.eye(k) - 1.0 / k
        # Orthonormal basis of the centred vertices' span.
        U, _, _ = np.linalg.svd(V, full_matrices=False)
        C = V @ U[:, : k - 1]
        C *= separation / np.sqrt(2.0)
        out = np.zeros((k, D))
        out[:, : k - 1] = C
        return out
    if D < 2:
        raise ValueError(f"cannot place {k} equidistant centers in {D} dimension(s)")
    angles = 2 * np.pi * np.arange(k) / k
    radius = separation / (2 * np.sin(np.pi / k))
    out = np.zeros((k, D))
    out[:, 0] = radius * np.cos(angles)
    out[:, 1] = radius * np.sin(angles)
    return out


def make_blobs(k=3, n_per=20, D=2, sigma=1.0, seed=42, separation=10.0):
    """Isotropic Gaussian clusters around equidistant centers."""
    if k < 2 or n_per < 2:
        raise ValueError("need k >= 2 clusters and n_per >= 2 points each")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = substream(seed, "dataset")
    centers = simplex_centers(k, D, separation)
    labels = np.repeat(np.arange(k), n_per)
    points = centers[labels] + sigma * rng.standard_normal((k * n_per, D))
    return PointDataset(points, labels, seed=seed, name="blobs")


def make_rings(k=2, n_per=100, noise=0.05, seed=42, radii=None):
    """Concentric circles in 2-D; ring ``j`` has radius ``radii[j]``."""
    if radii is None:
        radii = 1.0 + 2.0 * np.arange(k)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (k,):
        raise ValueError("need one radius per ring")
    rng = substream(seed, "dataset")
    labels = np.repeat(np.arange(k), n_per)
    theta = rng.uniform(0.0, 2 * np.pi, size=k * n_per)
    r = radii[labels]
    points = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    points += noise * rng.standard_normal(points.shape)
    return PointDataset(points, labels, seed=seed, name="rings")


def make_moons(n_per=50, noise=0.1, seed=42):
    """Two interleaving half circles."""
    rng = substream(seed, "dataset")
    t = np.linspace(0.0, np.pi, n_per)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([upper, lower])
    points += noise * rng.standard_normal(points.shape)
    labels = np.repeat([0, 1], n_per)
    return PointDataset(points, labels, seed=seed, name="moons")


def augment_pairs(ds, jitter_sigma, seed):
    """Two jittered views of every point, interleaved as ``(2i, 2i + 1)``."""
    if jitter_sigma < 0:
        raise ValueError("jitter_sigma must be non-negative")
    rng = substream(seed, "jitter")
    base = np.repeat(ds.points, 2, axis=0)
    points = base + jitter_sigma * rng.standard_normal(base.shape)
    labels = np.repeat(ds.labels, 2)
    idx = np.arange(2 * ds.n)
    pair_map = idx ^ 1
    return PointDataset(points, labels, pair_map, seed=seed, name=ds.name)
