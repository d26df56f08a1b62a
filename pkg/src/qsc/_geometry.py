"""Planar geometry helpers: polylines, crossings, Moebius charts."""

from __future__ import annotations

import numpy as np


def polyline_length(pts):
    return float(sum(abs(pts[i + 1] - pts[i]) for i in range(len(pts) - 1)))


def point_segment_distance(p, a, b):
    """Distance from complex point p to segment [a, b]."""
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0.0:
        return abs(p - a)
    t = ((p - a) * np.conj(ab)).real / denom
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def polyline_clearance(pts, obstacles):
    """Minimum distance from a polyline to a set of points."""
    best = np.inf
    for i in range(len(pts) - 1):
        for z in obstacles:
            best = min(best, point_segment_distance(z, pts[i], pts[i + 1]))
    return float(best)


def segment_crossing(a0, a1, b0, b1, eps=1e-12):
    """Transversal interior crossing of segments [a0,a1] and [b0,b1].

    Returns (t, s, point) with crossing parameters in (0, 1), or None.
    """
    d1 = a1 - a0
    d2 = b1 - b0
    denom = (d1 * np.conj(d2)).imag  # cross product d1 x d2
    scale = max(abs(d1), abs(d2), 1e-300)
    if abs(denom) < eps * scale * scale:
        return None
    w = b0 - a0
    t = (w * np.conj(d2)).imag / denom
    s = (w * np.conj(d1)).imag / denom
    if eps < t < 1 - eps and eps < s < 1 - eps:
        return t, s, a0 + t * d1
    return None


def crossing_sign(d1, d2):
    """+1 if d2 points counterclockwise from d1 (positive frame), else -1."""
    return 1 if (np.conj(d1) * d2).imag > 0 else -1


def subdivide(pts, max_len):
    """Insert points so no segment exceeds max_len."""
    out = [pts[0]]
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        k = max(1, int(np.ceil(abs(b - a) / max_len)))
        for j in range(1, k + 1):
            out.append(a + (b - a) * j / k)
    return out


class Mobius:
    """Moebius map m(x) = (a x + b) / (c x + d)."""

    def __init__(self, a, b, c, d):
        self.abcd = (complex(a), complex(b), complex(c), complex(d))

    @staticmethod
    def identity():
        return Mobius(1, 0, 0, 1)

    def __call__(self, x):
        a, b, c, d = self.abcd
        if x is None:  # the point at infinity
            if c == 0:
                return None
            return a / c
        den = c * x + d
        if den == 0:
            return None
        return (a * x + b) / den

    def inverse(self):
        a, b, c, d = self.abcd
        return Mobius(d, -b, -c, a)

    def is_identity(self):
        a, b, c, d = self.abcd
        return a == d and b == 0 and c == 0 and a != 0

    def map_polyline(self, pts, max_len=0.05):
        """Map a polyline pointwise after subdividing (Moebius bends lines)."""
        fine = subdivide([complex(p) for p in pts], max_len * _scale(pts))
        return [self(p) for p in fine]


def _scale(pts):
    arr = np.asarray([complex(p) for p in pts])
    return max(1.0, float(np.abs(arr - arr.mean()).max()))
