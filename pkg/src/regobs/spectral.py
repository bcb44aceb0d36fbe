"""Dirichlet sine eigenbasis, modal assembly of the coupled exchange system,
and exact propagation of the resulting linear time-invariant dynamics.

The spatial operator is the Laplacian on a rectangle with homogeneous
Dirichlet conditions.  Both fields of the exchange system are expanded in the
same product-sine basis, so every block operator becomes a dense (here
diagonal or scalar-multiple) matrix over one shared mode ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .geometry import Domain


class ModeIndex(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True)
class ModeSet:
    """Ordered, duplicate-free collection of mode indices.

    The canonical construction is ``ModeSet.square(n)``: row-major (i, j)
    ordering with 1 <= i, j <= n, which fixes the column ordering of every
    modal matrix in the toolkit.
    """

    modes: tuple[ModeIndex, ...]

    def __post_init__(self):
        if not self.modes:
            raise ValueError("mode set must be nonempty")
        seen = set()
        for m in self.modes:
            if m.i < 1 or m.j < 1:
                raise ValueError(f"mode indices must be >= 1, got {m}")
            if m in seen:
                raise ValueError(f"duplicate mode {m}")
            seen.add(m)

    @classmethod
    def square(cls, n: int) -> "ModeSet":
        if n < 1:
            raise ValueError("truncation bound must be >= 1")
        return cls(tuple(ModeIndex(i, j) for i in range(1, n + 1) for j in range(1, n + 1)))

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def position(self, mode: ModeIndex) -> int:
        return self.modes.index(ModeIndex(*mode))

    @property
    def max_i(self) -> int:
        return max(m.i for m in self.modes)

    @property
    def max_j(self) -> int:
        return max(m.j for m in self.modes)


def eigenvalue(mode: ModeIndex, domain: Domain) -> float:
    """Laplacian eigenvalue -pi^2 (i^2/L1^2 + j^2/L2^2) of the product-sine mode."""
    i, j = mode
    if i < 1 or j < 1:
        raise ValueError("mode indices must be >= 1")
    return -((i / domain.length1) ** 2 + (j / domain.length2) ** 2) * math.pi**2


def eigenvalues(modes: ModeSet, domain: Domain) -> np.ndarray:
    return np.array([eigenvalue(m, domain) for m in modes], dtype=float)


def eigenfunction_eval(mode: ModeIndex, domain: Domain, point) -> float:
    """L2-normalized product-sine eigenfunction evaluated at one point.

    The point must lie in the closed rectangle; values on the boundary are 0.
    """
    if not domain.contains(point, closed=True):
        raise ValueError(f"point {point} outside domain")
    i, j = mode
    x, y = point
    c = 2.0 / math.sqrt(domain.length1 * domain.length2)
    return (
        c
        * math.sin(i * math.pi * (x - domain.alpha1) / domain.length1)
        * math.sin(j * math.pi * (y - domain.alpha2) / domain.length2)
    )


def eval_matrix(domain: Domain, modes: ModeSet, points: np.ndarray) -> np.ndarray:
    """Evaluation matrix Phi with Phi[k, m] = phi_m(points[k]), vectorized.

    points: array of shape (K, 2) inside the closed rectangle.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError("points must have shape (K, 2)")
    xs = (pts[:, 0] - domain.alpha1) / domain.length1
    ys = (pts[:, 1] - domain.alpha2) / domain.length2
    if xs.min() < -1e-12 or xs.max() > 1 + 1e-12 or ys.min() < -1e-12 or ys.max() > 1 + 1e-12:
        raise ValueError("evaluation point outside domain")
    ii = np.array([m.i for m in modes], dtype=float)
    jj = np.array([m.j for m in modes], dtype=float)
    c = 2.0 / math.sqrt(domain.length1 * domain.length2)
    return c * np.sin(np.pi * np.outer(xs, ii)) * np.sin(np.pi * np.outer(ys, jj))


@dataclass(frozen=True)
class Coefficients:
    """Physical coefficients of the two-field exchange system.

    alpha_diff, gamma_diff: diffusion coefficients of field 1 and field 2;
    beta_couple: symmetric exchange coupling.
    """

    alpha_diff: float = 1.0
    gamma_diff: float = 0.1
    beta_couple: float = 1.0

    def __post_init__(self):
        if self.alpha_diff <= 0 or self.gamma_diff <= 0:
            raise ValueError("diffusion coefficients must be positive")


@dataclass(eq=False)
class ModalModel:
    """Truncated two-field system in modal coordinates.

    Block structure of the coupled dynamics d/dt [x1; x2]:

        [A11 A12]   with A11 = diag(alpha*lam + beta), A22 = diag(gamma*lam + beta)
        [A21 A22]        A12 = A21 = -beta * I

    B1, B2 map p actuator inputs into each field (zero columns by default).
    """

    domain: Domain
    coefficients: Coefficients
    mode_set: ModeSet
    eigenvalues: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.mode_set)

    @property
    def n_inputs(self) -> int:
        return self.B1.shape[1]

    def stacked_a(self) -> np.ndarray:
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    def stacked_b(self) -> np.ndarray:
        return np.vstack([self.B1, self.B2])

    def partition(self, measured_field: int = 1):
        """Blocks (A_mm, A_mw, A_wm, A_ww, B_m, B_w) for the chosen measured field."""
        if measured_field == 1:
            return self.A11, self.A12, self.A21, self.A22, self.B1, self.B2
        if measured_field == 2:
            return self.A22, self.A21, self.A12, self.A11, self.B2, self.B1
        raise ValueError("measured_field must be 1 or 2")


def assemble_exchange_model(
    coefficients: Coefficients,
    domain: Domain,
    modes: ModeSet,
    b1: np.ndarray | None = None,
    b2: np.ndarray | None = None,
) -> ModalModel:
    """Assemble the modal exchange model on the given mode set.

    Optional b1, b2 are modal actuator columns (n x p), e.g. produced by
    ``sensing.input_matrix`` from zone/pointwise actuator descriptors; both
    default to zero columns (autonomous system, u == 0).
    """
    lam = eigenvalues(modes, domain)
    n = len(modes)
    beta = coefficients.beta_couple
    a11 = np.diag(coefficients.alpha_diff * lam + beta)
    a22 = np.diag(coefficients.gamma_diff * lam + beta)
    coupling = -beta * np.eye(n)
    if b1 is None and b2 is None:
        b1 = np.zeros((n, 0))
        b2 = np.zeros((n, 0))
    else:
        p = b1.shape[1] if b1 is not None else b2.shape[1]
        b1 = np.zeros((n, p)) if b1 is None else np.asarray(b1, dtype=float)
        b2 = np.zeros((n, p)) if b2 is None else np.asarray(b2, dtype=float)
        if b1.shape != (n, p) or b2.shape != (n, p):
            raise ValueError("actuator matrices must have shape (n_modes, p)")
    return ModalModel(
        domain=domain,
        coefficients=coefficients,
        mode_set=modes,
        eigenvalues=lam,
        A11=a11,
        A12=coupling.copy(),
        A21=coupling.copy(),
        A22=a22,
        B1=b1,
        B2=b2,
    )


class Propagator:
    """Exact one-step propagator of dx/dt = M x + B u under zero-order hold.

    E = exp(M dt) and Phi = int_0^dt exp(M s) ds B are computed once from the
    augmented-matrix exponential

        exp([[M, B], [0, 0]] dt) = [[E, Phi], [0, I]]

    which avoids inverting a possibly singular M.
    """

    def __init__(self, m: np.ndarray, dt: float, b: np.ndarray | None = None):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("M must be square")
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.dt = float(dt)
        n = m.shape[0]
        self.n = n
        if b is not None and b.size and b.shape[1] > 0:
            b = np.asarray(b, dtype=float)
            if b.shape[0] != n:
                raise ValueError("B row count must match M")
            p = b.shape[1]
            aug = np.zeros((n + p, n + p))
            aug[:n, :n] = m
            aug[:n, n:] = b
            ea = expm(aug * dt)
            self.E = ea[:n, :n]
            self.Phi = ea[:n, n:]
        else:
            self.E = expm(m * dt)
            self.Phi = np.zeros((n, 0))

    def step(self, state: np.ndarray, u=None) -> np.ndarray:
        out = self.E @ state
        if u is not None and self.Phi.shape[1]:
            out = out + self.Phi @ np.asarray(u, dtype=float)
        return out

    def run(self, state0: np.ndarray, steps: int, u=None) -> np.ndarray:
        """Propagate `steps` steps; returns array of shape (steps + 1, n)."""
        x = np.asarray(state0, dtype=float).reshape(self.n)
        out = np.empty((steps + 1, self.n))
        out[0] = x
        for k in range(steps):
            uk = _input_at(u, k, self.Phi.shape[1])
            out[k + 1] = self.step(out[k], uk)
        return out


def _input_at(u, k: int, p: int):
    if u is None or p == 0:
        return None
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return u
    return u[k]


def propagate(model_or_matrix, state0, dt: float, steps: int, u=None, b=None) -> np.ndarray:
    """Exact trajectory of the model (or any square matrix) from state0.

    For a ModalModel the state stacks both fields, [x1; x2], and inputs act
    through the stacked [B1; B2].  `u` is piecewise constant: None, a constant
    (p,) vector, or a (steps, p) array.
    """
    if isinstance(model_or_matrix, ModalModel):
        m = model_or_matrix.stacked_a()
        if b is None:
            b = model_or_matrix.stacked_b()
    else:
        m = np.atleast_2d(np.asarray(model_or_matrix, dtype=float))
    state0 = np.asarray(state0, dtype=float).reshape(-1)
    if state0.shape[0] != m.shape[0]:
        raise ValueError("state dimension does not match the system matrix")
    prop = Propagator(m, dt, b if (b is not None and b.shape[1] > 0) else None)
    return prop.run(state0, steps, u)
