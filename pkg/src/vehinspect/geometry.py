"""Polygon helpers shared by the damage model and the mask metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

Point = tuple[float, float]


def polygon_area(points: Sequence[Point]) -> float:
    """Unsigned shoelace area."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a: Point, b: Point, p: Point) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def is_simple_polygon(points: Sequence[Point]) -> bool:
    """True if no two non-adjacent edges touch and no edge is degenerate.

    O(n^2) pairwise test; damage polygons are small.
    """
    n = len(points)
    if n < 3:
        return False
    edges = [(tuple(points[i]), tuple(points[(i + 1) % n])) for i in range(n)]
    if any(a == b for a, b in edges):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share a vertex; they may only overlap if collinear and folding back
                a, b = edges[i]
                c, d = edges[j]
                shared = b if j == i + 1 else a
                other_i = a if j == i + 1 else b
                other_j = d if j == i + 1 else c
                if _orient(other_i, shared, other_j) == 0:
                    # collinear neighbours: invalid only if they point back over each other
                    v1 = (other_i[0] - shared[0], other_i[1] - shared[1])
                    v2 = (other_j[0] - shared[0], other_j[1] - shared[1])
                    if v1[0] * v2[0] + v1[1] * v2[1] > 0:
                        return False
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def rasterize_polygon(points: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Even-odd fill of a normalized polygon, sampled at pixel centers.

    Returns a (height, width) bool array. Pixel (r, c) has center
    ((c + 0.5) / width, (r + 0.5) / height) in normalized coordinates.
    """
    pts = np.asarray(points, dtype=float)
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    px = xs[None, :]
    py = ys[:, None]
    inside = np.zeros((height, width), dtype=bool)
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            continue
        straddles = (ay > py) != (by > py)
        x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= straddles & (px < x_cross)
    return inside


def polygon_bbox(points: Sequence[Point]) -> tuple[float, float, float, float]:
    pts = np.asarray(points, dtype=float)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return float(x0), float(y0), float(x1 - x0), float(y1 - y0)
