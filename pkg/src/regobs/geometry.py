"""Rectangular-domain geometry shared by the basis, sensor and region code."""

from __future__ import annotations

import math
from dataclasses import dataclass

EDGES = ("bottom", "top", "left", "right")


@dataclass(frozen=True)
class Domain:
    """Open rectangle (alpha1, beta1) x (alpha2, beta2)."""

    alpha1: float = 0.0
    beta1: float = 1.0
    alpha2: float = 0.0
    beta2: float = 1.0

    def __post_init__(self):
        if not (self.beta1 > self.alpha1 and self.beta2 > self.alpha2):
            raise ValueError("domain requires beta1 > alpha1 and beta2 > alpha2")

    @property
    def length1(self) -> float:
        return self.beta1 - self.alpha1

    @property
    def length2(self) -> float:
        return self.beta2 - self.alpha2

    def contains(self, point, closed: bool = True) -> bool:
        x, y = point
        if closed:
            return (self.alpha1 <= x <= self.beta1) and (self.alpha2 <= y <= self.beta2)
        return (self.alpha1 < x < self.beta1) and (self.alpha2 < y < self.beta2)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [lo1, hi1] x [lo2, hi2]."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self):
        if not (self.hi1 > self.lo1 and self.hi2 > self.lo2):
            raise ValueError("rect requires hi > lo on both axes")

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lo1 + self.hi1), 0.5 * (self.lo2 + self.hi2))

    @property
    def half_widths(self) -> tuple[float, float]:
        return (0.5 * (self.hi1 - self.lo1), 0.5 * (self.hi2 - self.lo2))

    def inside(self, domain: Domain) -> bool:
        """True when the closed rectangle sits inside the closed domain."""
        return (
            domain.alpha1 <= self.lo1
            and self.hi1 <= domain.beta1
            and domain.alpha2 <= self.lo2
            and self.hi2 <= domain.beta2
        )


def edge_segment(domain: Domain, edge: str, lo: float, hi: float):
    """Endpoints of a boundary segment lying on the named edge of the domain."""
    if edge not in EDGES:
        raise ValueError(f"unknown edge {edge!r}; expected one of {EDGES}")
    if not hi > lo:
        raise ValueError("segment requires to > from")
    if edge in ("bottom", "top"):
        if lo < domain.alpha1 or hi > domain.beta1:
            raise ValueError("segment endpoints outside edge extent")
        y = domain.alpha2 if edge == "bottom" else domain.beta2
        return (lo, y), (hi, y)
    if lo < domain.alpha2 or hi > domain.beta2:
        raise ValueError("segment endpoints outside edge extent")
    x = domain.alpha1 if edge == "left" else domain.beta1
    return (x, lo), (x, hi)


def segment_distance(point, a, b) -> float:
    """Euclidean distance from a point to the segment [a, b]."""
    px, py = point
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))
