"""Geometry and statistics for scoring where offspring land.

Hull-based metrics are 2-D only. ``mahalanobis_ood_fraction`` is the
dimension-free fallback.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .distributions import GaussianModel, fit_gaussian

HULL_TOL = 1e-9
# dominant-region radius used by the fusion experiments: 3 * sqrt(0.2)
DEFAULT_DOMINANT_RADIUS = 3.0 * np.sqrt(0.2)


@dataclass(frozen=True)
class Hull2D:
    """Convex hull vertices in counter-clockwise order.

    One vertex means a point hull, two a segment hull.
    """

    vertices: np.ndarray

    @property
    def kind(self) -> str:
        return {1: "point", 2: "segment"}.get(len(self.vertices), "polygon")

    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> Hull2D:
    """Andrew's monotone chain. Collinear points are dropped from the boundary."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("hull needs at least one point")
    pts = np.unique(pts, axis=0)  # sorted by x then y
    if pts.shape[0] <= 2:
        return Hull2D(pts)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] == 2 and np.array_equal(hull[0], hull[1]):
        hull = hull[:1]
    return Hull2D(hull)


def _segment_distance(a, b, p):
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(p))
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def point_in_hull(h: Hull2D, p, tol: float = HULL_TOL):
    """Inclusive containment test; accepts one point or an (n, 2) batch.

    A point within ``tol`` of the boundary counts as inside.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    q = p.reshape(-1, 2)
    v = h.vertices
    if len(v) == 1:
        inside = np.linalg.norm(q - v[0], axis=1) <= tol
    elif len(v) == 2:
        inside = _segment_distance(v[0], v[1], q) <= tol
    else:
        inside = np.ones(len(q), dtype=bool)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            edge = b - a
            cross = edge[0] * (q[:, 1] - a[1]) - edge[1] * (q[:, 0] - a[0])
            # signed distance to the edge line, positive on the interior side
            inside &= cross / np.hypot(edge[0], edge[1]) >= -tol
    return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class LeapReport:
    n_offspring: int
    n_outside_both_hulls: int
    leap_fraction: float
    n_in_dominant_region: int
    dominant_fraction: float
    dominant_center: tuple
    dominant_radius: float

    def as_dict(self) -> dict:
        return asdict(self)


def _as_2d(points, what) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{what} must be an (n, 2) array; hull analysis is 2-D only")
    return arr


def leap_report(
    offspring,
    parents_a,
    parents_b,
    dominant_center=(2.0, 2.0),
    dominant_radius: float = DEFAULT_DOMINANT_RADIUS,
) -> LeapReport:
    """Count offspring outside both parent hulls, and those near the fusion point."""
    off = _as_2d(offspring, "offspring")
    ha = convex_hull_2d(_as_2d(parents_a, "parents_a"))
    hb = convex_hull_2d(_as_2d(parents_b, "parents_b"))
    outside = ~point_in_hull(ha, off) & ~point_in_hull(hb, off)
    center = np.asarray(dominant_center, dtype=float)
    near = np.linalg.norm(off - center, axis=1) <= dominant_radius
    n = len(off)
    return LeapReport(
        n_offspring=n,
        n_outside_both_hulls=int(outside.sum()),
        leap_fraction=float(outside.sum() / n) if n else 0.0,
        n_in_dominant_region=int(near.sum()),
        dominant_fraction=float(near.sum() / n) if n else 0.0,
        dominant_center=tuple(float(c) for c in center),
        dominant_radius=float(dominant_radius),
    )


def transfer_fraction(offspring, task_labels, hull_a: Hull2D, hull_b: Hull2D, task_a=0, task_b=1) -> tuple[float, float]:
    """Fraction of task-A offspring inside hull B, and of task-B offspring inside hull A.

    A task with no offspring scores 0.
    """
    off = _as_2d(offspring, "offspring")
    labels = np.asarray(task_labels)
    a = off[labels == task_a]
    b = off[labels == task_b]
    fa = float(point_in_hull(hull_b, a).mean()) if len(a) else 0.0
    fb = float(point_in_hull(hull_a, b).mean()) if len(b) else 0.0
    return fa, fb


def mean_nn_distance(offspring, reference) -> float:
    off = np.atleast_2d(np.asarray(offspring, dtype=float))
    ref = np.atleast_2d(np.asarray(reference, dtype=float))
    if off.size == 0 or ref.size == 0:
        raise ValueError("both point sets must be non-empty")
    dist, _ = cKDTree(ref).query(off, k=1)
    return float(np.mean(dist))


def cloud_diameter(points) -> float:
    """Largest pairwise distance, computed over hull vertices."""
    pts = np.asarray(points, dtype=float)
    v = convex_hull_2d(pts).vertices if pts.shape[1] == 2 else pts
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def mahalanobis_ood_fraction(offspring, parent_sets: Sequence, threshold: float = 3.0) -> float:
    """Fraction of offspring farther than ``threshold`` (Mahalanobis) from every fitted parent Gaussian."""
    off = np.atleast_2d(np.asarray(offspring, dtype=float))
    models: list[GaussianModel] = [fit_gaussian(p) for p in parent_sets]
    outside = np.ones(len(off), dtype=bool)
    for m in models:
        z = np.linalg.solve(m.chol, (off - m.mean).T)
        outside &= np.sqrt((z * z).sum(axis=0)) > threshold
    return float(outside.mean()) if len(off) else 0.0
