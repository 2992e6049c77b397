"""Planar helpers for oriented rectangles and line segments."""

from __future__ import annotations

import math

Point = tuple[float, float]


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def rect_corners(cx: float, cy: float, heading: float, length: float, width: float) -> list[Point]:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    return [
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
        for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    ]


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    u = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    u = min(1.0, max(0.0, u))
    return math.hypot(p[0] - ax - u * dx, p[1] - ay - u * dy)


def _edges(poly):
    n = len(poly)
    return [(poly[i], poly[(i + 1) % n]) for i in range(n)]


def _axes(poly):
    if len(poly) == 2:
        pairs = [(poly[0], poly[1])]
    else:
        pairs = _edges(poly)
    for a, b in pairs:
        ex, ey = b[0] - a[0], b[1] - a[1]
        n = math.hypot(ex, ey)
        if n > 0:
            yield -ey / n, ex / n


def _project(poly, ax, ay):
    vals = [px * ax + py * ay for px, py in poly]
    return min(vals), max(vals)


def penetration(p: list[Point], q: list[Point]) -> float:
    """Separating-axis overlap depth of two convex shapes (<= 0 if apart).

    A two-point shape is treated as a segment.
    """
    depth = math.inf
    for ax, ay in list(_axes(p)) + list(_axes(q)):
        lo1, hi1 = _project(p, ax, ay)
        lo2, hi2 = _project(q, ax, ay)
        # distance needed to push the shapes apart along this axis; unlike the
        # interval intersection length it stays positive for a degenerate
        # (segment-normal) projection lying inside the other interval
        overlap = min(hi1 - lo2, hi2 - lo1)
        if overlap <= 0:
            return overlap
        depth = min(depth, overlap)
    return depth


def segment_polygon_signed_distance(a: Point, b: Point, poly: list[Point]) -> float:
    """Euclidean gap between a segment and a convex polygon; minus the
    penetration depth when they intersect."""
    depth = penetration(poly, [a, b])
    if depth > 0:
        return -depth
    d = min(point_segment_distance(v, a, b) for v in poly)
    for e0, e1 in _edges(poly):
        d = min(d, point_segment_distance(a, e0, e1), point_segment_distance(b, e0, e1))
    return d
