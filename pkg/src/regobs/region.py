"""Target-region geometry, trace restriction, region-restricted error norms,
and exponential decay-rate fitting.

The exact fractional trace norm is out of scope; the default metric is the
quadrature L2 norm of the restricted field, with a modal Sobolev surrogate
(weights sqrt(1 + |lambda_m|) on indicator-projected coefficients) as an
option.  On a fixed truncation all these norms are equivalent, so decay-rate
and convergence statements do not depend on the choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import EDGES, Domain, Rect, edge_segment, segment_distance
from .spectral import ModeSet, eval_matrix, eigenvalues

NORM_WEIGHTS = ("l2", "sobolev_half")
VALUE_FLOOR = 1e-30


@dataclass(frozen=True)
class BoundarySegment:
    """Segment of one domain edge, parametrized by the in-edge coordinate."""

    edge: str
    lo: float
    hi: float
    n_quad: int = 64

    def __post_init__(self):
        if self.edge not in EDGES:
            raise ValueError(f"unknown edge {self.edge!r}")
        if not self.hi > self.lo:
            raise ValueError("segment requires to > from")
        if self.n_quad < 1:
            raise ValueError("n_quad must be >= 1")


@dataclass(frozen=True)
class InternalRectangle:
    rect: Rect
    n_quad: int = 64

    def __post_init__(self):
        if self.n_quad < 1:
            raise ValueError("n_quad must be >= 1")


RegionSpec = BoundarySegment | InternalRectangle


@dataclass(frozen=True)
class CollarRegion:
    """Internal collar of a boundary segment: points of the domain within
    distance `radius` of the segment.  Quadrature uses tensor nodes over the
    bounding box, filtered by membership."""

    gamma: BoundarySegment
    radius: float
    domain: Domain
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def contains(self, point) -> bool:
        if not self.domain.contains(point, closed=False):
            return False
        a, b = edge_segment(self.domain, self.gamma.edge, self.gamma.lo, self.gamma.hi)
        return segment_distance(point, a, b) < self.radius


def _gauss_nodes(lo: float, hi: float, n: int):
    x, w = leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def region_quadrature(region, domain: Domain):
    """Quadrature nodes (K, 2) and weights (K,) of a region.

    BoundarySegment: 1-d Gauss-Legendre along the edge; InternalRectangle:
    tensor nodes; CollarRegion: its precomputed filtered tensor rule.
    """
    if isinstance(region, CollarRegion):
        return region.points, region.weights
    if isinstance(region, BoundarySegment):
        a, b = edge_segment(domain, region.edge, region.lo, region.hi)
        s, w = _gauss_nodes(0.0, 1.0, region.n_quad)
        pts = np.outer(1.0 - s, a) + np.outer(s, b)
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        return pts, w * length
    if isinstance(region, InternalRectangle):
        rect = region.rect
        if not rect.inside(domain):
            raise ValueError("internal rectangle outside domain")
        xs, wx = _gauss_nodes(rect.lo1, rect.hi1, region.n_quad)
        ys, wy = _gauss_nodes(rect.lo2, rect.hi2, region.n_quad)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()]), np.outer(wx, wy).ravel()
    raise TypeError(f"unsupported region {type(region).__name__}")


def build_collar(gamma: BoundarySegment, radius: float, domain: Domain, n_quad: int = 64) -> CollarRegion:
    """Collar of a boundary segment; radius may exceed the domain size, in
    which case the collar degenerates to (a superset of) the whole domain."""
    if radius <= 0:
        raise ValueError("collar radius must be > 0")
    a, b = edge_segment(domain, gamma.edge, gamma.lo, gamma.hi)
    lo1 = max(domain.alpha1, min(a[0], b[0]) - radius)
    hi1 = min(domain.beta1, max(a[0], b[0]) + radius)
    lo2 = max(domain.alpha2, min(a[1], b[1]) - radius)
    hi2 = min(domain.beta2, max(a[1], b[1]) + radius)
    xs, wx = _gauss_nodes(lo1, hi1, n_quad)
    ys, wy = _gauss_nodes(lo2, hi2, n_quad)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    w = np.outer(wx, wy).ravel()
    dist = np.array([segment_distance(p, a, b) for p in pts])
    member = dist < radius
    return CollarRegion(gamma=gamma, radius=radius, domain=domain,
                        points=pts[member], weights=w[member])


def restrict_trace(coeffs: np.ndarray, domain: Domain, modes: ModeSet, region) -> np.ndarray:
    """Eigenfunction expansion evaluated at the region quadrature nodes."""
    pts, _ = region_quadrature(region, domain)
    if pts.shape[0] == 0:
        return np.zeros(0)
    return eval_matrix(domain, modes, pts) @ np.asarray(coeffs, dtype=float)


def _norm_operators(domain: Domain, modes: ModeSet, region, weight: str):
    pts, w = region_quadrature(region, domain)
    phi = eval_matrix(domain, modes, pts) if pts.shape[0] else np.zeros((0, len(modes)))
    if weight == "l2":
        return phi, w, None
    if weight == "sobolev_half":
        sob = np.sqrt(1.0 + np.abs(eigenvalues(modes, domain)))
        return phi, w, sob
    raise ValueError(f"unknown norm weight {weight!r}; expected one of {NORM_WEIGHTS}")


def error_norm_series(err_coeffs: np.ndarray, domain: Domain, modes: ModeSet, region, weight: str = "l2") -> np.ndarray:
    """Region-restricted norm of each row of err_coeffs (T, n_modes)."""
    err = np.atleast_2d(np.asarray(err_coeffs, dtype=float))
    phi, w, sob = _norm_operators(domain, modes, region, weight)
    vals = err @ phi.T
    if sob is None:
        return np.sqrt(np.maximum((vals**2) @ w, 0.0))
    projected = (vals * w) @ phi  # indicator-projected modal coefficients
    return np.sqrt(np.maximum((projected**2) @ sob, 0.0))


def gamma_error_norm(x: np.ndarray, x_hat: np.ndarray, domain: Domain, modes: ModeSet, region, weight: str = "l2") -> float:
    """Region-restricted norm of the estimation error x_hat - x."""
    err = np.asarray(x_hat, dtype=float) - np.asarray(x, dtype=float)
    return float(error_norm_series(err[None, :], domain, modes, region, weight)[0])


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit value(t) ~ m_fit * exp(-alpha_fit * t) on a window."""

    m_fit: float
    alpha_fit: float
    t_lo: float
    t_hi: float
    residual: float
    n_floored: int


def fit_decay(times, values, window=None) -> DecayFit:
    """Least-squares line on (t, log value); alpha_fit = -slope.

    Non-positive values are floored at 1e-30 and counted in n_floored; fewer
    than 3 points in the window is a fit error.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values must have matching shape")
    if window is not None:
        t_lo, t_hi = window
        mask = (t >= t_lo) & (t <= t_hi)
        t, v = t[mask], v[mask]
    if t.size < 3:
        raise ValueError("decay fit needs at least 3 samples in the window")
    n_floored = int(np.sum(v < VALUE_FLOOR))
    v = np.maximum(v, VALUE_FLOOR)
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    resid = float(np.sqrt(np.mean((logv - (slope * t + intercept)) ** 2)))
    return DecayFit(
        m_fit=float(np.exp(intercept)),
        alpha_fit=float(-slope),
        t_lo=float(t[0]),
        t_hi=float(t[-1]),
        residual=resid,
        n_floored=n_floored,
    )
