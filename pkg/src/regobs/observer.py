"""Unstable/stable spectral splitting, detectability gain design, and exact
co-simulation of the full-order and reduced-order exponential estimators.

The gain shifts only the finitely many unstable eigendirections: on the
unstable block the equation H_u O_u = A_u + margin*I is solved by minimum-norm
least squares, which for diagonal blocks is exact pole placement and is
solvable precisely when the unstable observation columns have full rank.  A
residual above tolerance therefore signals that the sensor suite cannot
stabilize the error dynamics (NotDetectableError).

Both estimators are co-simulated with the plant through one stacked matrix
exponential, so the discrete trajectory satisfies the continuous error
dynamics exactly at the sample instants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .region import error_norm_series
from .sensing import output_matrix
from .spectral import ModalModel, Propagator, _input_at

MAX_STATE_NORM = 1e12


class NotDetectableError(RuntimeError):
    """The unstable-block rank condition fails for the given sensors."""

    def __init__(self, message: str, residual: float, blind_positions: tuple[int, ...]):
        super().__init__(message)
        self.residual = residual
        self.blind_positions = blind_positions


@dataclass(frozen=True)
class UnstableSplit:
    """Spectral partition of a block: eigendirections with Re >= -margin are
    unstable.  For diagonal blocks the coordinates are the modes themselves
    (basis None); otherwise indices refer to the eigenbasis columns."""

    eigenvalues: np.ndarray = field(repr=False)
    unstable: tuple[int, ...]
    stable: tuple[int, ...]
    margin: float
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def j_unstable(self) -> int:
        return len(self.unstable)

    @property
    def projection(self) -> np.ndarray:
        """0/1 selection matrix picking the unstable coordinates."""
        p = np.zeros((len(self.unstable), len(self.eigenvalues)))
        for r, k in enumerate(self.unstable):
            p[r, k] = 1.0
        return p


def split_unstable_stable(block: np.ndarray, margin: float = 0.0) -> UnstableSplit:
    """Split a diagonalizable block into unstable and stable eigendirections.

    Diagonal blocks keep their natural mode coordinates; symmetric blocks are
    diagonalized orthogonally.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    block = np.atleast_2d(np.asarray(block, dtype=float))
    if not np.any(block - np.diag(np.diag(block))):
        eigs = np.diag(block).astype(float).copy()
        basis = None
    elif np.allclose(block, block.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(block).max()))):
        eigs, basis = np.linalg.eigh(block)
    else:
        vals, vecs = scipy.linalg.eig(block)
        if np.abs(vals.imag).max() > 1e-10 * max(1.0, np.abs(vals).max()):
            raise ValueError("block has complex spectrum; real diagonalizable blocks only")
        eigs, basis = vals.real, vecs.real
    order = sorted(range(len(eigs)), key=lambda k: (-eigs[k], k))
    unstable = tuple(k for k in order if eigs[k] >= -margin)
    stable = tuple(k for k in order if eigs[k] < -margin)
    return UnstableSplit(eigenvalues=eigs, unstable=unstable, stable=stable,
                         margin=margin, basis=basis)


@dataclass(eq=False)
class ObserverGain:
    """Output-injection gain with the split it was designed on.

    H is n x q in the coordinates of the block (modal for diagonal blocks);
    rows indexed by stable modes are zero.  closed_loop_eigs is the recomputed
    spectrum of block - H @ obs_map.
    """

    H: np.ndarray
    split: UnstableSplit
    target_margin: float
    closed_loop_eigs: np.ndarray
    residual: float
    sensor_matrix: np.ndarray | None = None

    @property
    def achieved_margin(self) -> float:
        if self.closed_loop_eigs.size == 0:
            return float("inf")
        return float(-np.max(self.closed_loop_eigs.real))


def design_gain(
    block: np.ndarray,
    obs_map: np.ndarray,
    split: UnstableSplit,
    target_margin: float,
    tol_detect: float = 1e-8,
    tol_eig: float = 1e-8,
    sensor_matrix: np.ndarray | None = None,
) -> ObserverGain:
    """Gain placing every unstable eigendirection at -target_margin.

    obs_map is the observation matrix the gain multiplies in the error
    dynamics (C for the full system, the sensor-composed coupling rows for
    the reduced system).  sensor_matrix optionally records the raw C used to
    factor the gain through the measurements.
    """
    if target_margin <= 0:
        raise ValueError("target_margin must be > 0")
    block = np.atleast_2d(np.asarray(block, dtype=float))
    obs_map = np.atleast_2d(np.asarray(obs_map, dtype=float))
    n = block.shape[0]
    q = obs_map.shape[0]
    j = split.j_unstable
    if j == 0:
        h = np.zeros((n, q))
        closed = np.sort(np.linalg.eigvals(block))[::-1]
        return ObserverGain(H=h, split=split, target_margin=target_margin,
                            closed_loop_eigs=closed, residual=0.0,
                            sensor_matrix=sensor_matrix)
    idx = list(split.unstable)
    lam_u = split.eigenvalues[idx]
    target = np.diag(lam_u + target_margin)
    if split.basis is None:
        o_u = obs_map[:, idx]
    else:
        o_u = obs_map @ split.basis[:, idx]
    h_u = target @ np.linalg.pinv(o_u)
    residual = float(np.linalg.norm(h_u @ o_u - target))
    scale = max(1.0, float(np.linalg.norm(target)))
    if residual > tol_detect * scale:
        col_norms = np.linalg.norm(o_u, axis=0)
        blind = tuple(idx[k] for k in range(j) if col_norms[k] <= tol_detect * max(1.0, col_norms.max()))
        raise NotDetectableError(
            f"unstable block not observable through the sensors (residual {residual:.3e})",
            residual=residual,
            blind_positions=blind,
        )
    if split.basis is None:
        h = np.zeros((n, q))
        h[idx, :] = h_u
    else:
        h = split.basis[:, idx] @ h_u
    closed = np.linalg.eigvals(block - h @ obs_map)
    closed = np.sort_complex(closed)[::-1]
    if np.abs(closed.imag).max() <= 1e-8 * max(1.0, np.abs(closed).max()):
        closed = closed.real
    stable_eigs = split.eigenvalues[list(split.stable)]
    worst = max((-target_margin, *stable_eigs.tolist()))
    if np.max(np.real(closed)) > worst + tol_eig:
        raise RuntimeError("closed-loop spectrum misses the prescribed margin")
    return ObserverGain(H=h, split=split, target_margin=target_margin,
                        closed_loop_eigs=np.asarray(closed), residual=residual,
                        sensor_matrix=sensor_matrix)


def reduced_output_map(model: ModalModel, c: np.ndarray, measured_field: int = 1) -> np.ndarray:
    """Observation map of the reduced (unmeasured-field) error dynamics.

    The unmeasured field reaches the measurements only through the coupling
    block of the measured field's equation, read out by the sensors: the map
    is C @ A_mw (q x n).
    """
    _, a_mw, _, _, _, _ = model.partition(measured_field)
    return np.atleast_2d(np.asarray(c, dtype=float)) @ a_mw


def estimator_matrices(model: ModalModel, gain: ObserverGain, sensor_matrix: np.ndarray | None = None,
                       measured_field: int = 1):
    """Reduced-estimator coefficient matrices (F_red, G_y, G_u).

    With HC = H @ C (the gain factored through the sensors):

        F_red = A_ww - HC A_mw
        G_y   = A_ww HC - HC A_mw HC - HC A_mm + A_wm   (applied to the measured field)
        G_u   = B_w - HC B_m
    """
    a_mm, a_mw, a_wm, a_ww, b_m, b_w = model.partition(measured_field)
    c = sensor_matrix if sensor_matrix is not None else gain.sensor_matrix
    if c is None:
        raise ValueError("estimator matrices need the sensor matrix the gain factors through")
    hc = gain.H @ np.atleast_2d(np.asarray(c, dtype=float))
    f_red = a_ww - hc @ a_mw
    g_y = a_ww @ hc - hc @ a_mw @ hc - hc @ a_mm + a_wm
    g_u = b_w - hc @ b_m
    return f_red, g_y, g_u


@dataclass(eq=False)
class Trajectory:
    """Time-sampled record of one co-simulation.

    x1/x2 are the true modal states; estimator_state is z_hat (full order,
    both fields stacked) or phi (reduced order); x2_hat is the recovered
    estimate of the unmeasured field (phi + H y in the reduced case);
    mode_abs_err are per-mode absolute errors of that estimate.  err_gamma is
    attached when a region is supplied.
    """

    kind: str
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    estimator_state: np.ndarray
    x2_hat: np.ndarray
    mode_abs_err: np.ndarray
    err_gamma: np.ndarray | None = None
    decay_fit: object | None = None
    diverged: bool = False
    divergence_message: str = ""


def _steps(dt: float, t_final: float) -> int:
    if dt <= 0 or t_final < dt:
        raise ValueError("need dt > 0 and t_final >= dt")
    return int(round(t_final / dt))


def _run_guarded(prop: Propagator, s0: np.ndarray, steps: int, u):
    """Propagate with the divergence guard; truncates on non-finite values or
    sup-norm above MAX_STATE_NORM and reports instead of clipping."""
    out = np.empty((steps + 1, prop.n))
    out[0] = s0
    for k in range(steps):
        uk = _input_at(u, k, prop.Phi.shape[1])
        nxt = prop.step(out[k], uk)
        if not np.all(np.isfinite(nxt)) or np.abs(nxt).max() > MAX_STATE_NORM:
            msg = (f"state norm exceeded {MAX_STATE_NORM:.0e} at t index {k + 1}; "
                   "run truncated (non-detectable dynamics diverge)")
            return out[: k + 1], True, msg
        out[k + 1] = nxt
    return out, False, ""


def _split_stacked(x0: np.ndarray, n: int, measured_field: int):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != 2 * n:
        raise ValueError("x0 must stack both fields, shape (2 n_modes,)")
    x1_0, x2_0 = x0[:n], x0[n:]
    if measured_field == 1:
        return x1_0, x2_0
    return x2_0, x1_0


def simulate_reduced_order(
    model: ModalModel,
    sensors,
    gain: ObserverGain,
    u,
    x0: np.ndarray,
    phi0: np.ndarray,
    dt: float,
    t_final: float,
    measured_field: int = 1,
    region=None,
    norm_weight: str = "l2",
) -> Trajectory:
    """Co-simulate the plant with the reduced-order estimator.

    The estimator state phi obeys phi' = F_red phi + G_y x_m + G_u u, with the
    measured-field injection synthesized exactly from the plant dynamics (the
    auxiliary output is algebraic in the modal states, never differenced).
    The recovered estimate is x2_hat = phi + H y and its error obeys
    e' = F_red e exactly at the sample instants.
    """
    n = model.n_modes
    c = output_matrix(sensors, model.domain, model.mode_set)
    f_red, g_y, g_u = estimator_matrices(model, gain, sensor_matrix=c, measured_field=measured_field)
    a_mm, a_mw, a_wm, a_ww, b_m, b_w = model.partition(measured_field)
    steps = _steps(dt, t_final)
    m = np.zeros((3 * n, 3 * n))
    m[:n, :n], m[:n, n : 2 * n] = a_mm, a_mw
    m[n : 2 * n, :n], m[n : 2 * n, n : 2 * n] = a_wm, a_ww
    m[2 * n :, :n], m[2 * n :, 2 * n :] = g_y, f_red
    b = np.vstack([b_m, b_w, g_u]) if model.n_inputs else None
    x_m0, x_w0 = _split_stacked(x0, n, measured_field)
    phi0 = np.asarray(phi0, dtype=float).reshape(n)
    s0 = np.concatenate([x_m0, x_w0, phi0])
    prop = Propagator(m, dt, b)
    states, diverged, msg = _run_guarded(prop, s0, steps, u)
    k = states.shape[0]
    times = dt * np.arange(k)
    x_m, x_w, phi = states[:, :n], states[:, n : 2 * n], states[:, 2 * n :]
    y = x_m @ c.T
    x_w_hat = phi + y @ gain.H.T
    traj = Trajectory(
        kind="reduced",
        times=times,
        x1=x_m if measured_field == 1 else x_w,
        x2=x_w if measured_field == 1 else x_m,
        y=y,
        estimator_state=phi,
        x2_hat=x_w_hat,
        mode_abs_err=np.abs(x_w_hat - x_w),
        diverged=diverged,
        divergence_message=msg,
    )
    if region is not None:
        traj.err_gamma = error_norm_series(x_w_hat - x_w, model.domain, model.mode_set, region, norm_weight)
    return traj


def simulate_full_order(
    model: ModalModel,
    sensors,
    gain: ObserverGain,
    u,
    x0: np.ndarray,
    xhat0: np.ndarray,
    dt: float,
    t_final: float,
    measured_field: int = 1,
    region=None,
    norm_weight: str = "l2",
) -> Trajectory:
    """Co-simulate the plant with the full-order estimator
    z_hat' = A z_hat + B u + H (y - C_full z_hat); the stacked error obeys
    e' = (A - H C_full) e exactly at the sample instants.

    err_gamma combines both field errors, sqrt(|e1|_G^2 + |e2|_G^2).
    """
    n = model.n_modes
    c = output_matrix(sensors, model.domain, model.mode_set)
    q = c.shape[0]
    c_full = np.zeros((q, 2 * n))
    if measured_field == 1:
        c_full[:, :n] = c
    elif measured_field == 2:
        c_full[:, n:] = c
    else:
        raise ValueError("measured_field must be 1 or 2")
    a = model.stacked_a()
    b = model.stacked_b()
    if gain.H.shape != (2 * n, q):
        raise ValueError("full-order gain must have shape (2 n_modes, q)")
    hc = gain.H @ c_full
    steps = _steps(dt, t_final)
    m = np.zeros((4 * n, 4 * n))
    m[: 2 * n, : 2 * n] = a
    m[2 * n :, : 2 * n] = hc
    m[2 * n :, 2 * n :] = a - hc
    bb = np.vstack([b, b]) if model.n_inputs else None
    x0 = np.asarray(x0, dtype=float).reshape(2 * n)
    xhat0 = np.asarray(xhat0, dtype=float).reshape(2 * n)
    prop = Propagator(m, dt, bb)
    states, diverged, msg = _run_guarded(prop, np.concatenate([x0, xhat0]), steps, u)
    k = states.shape[0]
    times = dt * np.arange(k)
    x = states[:, : 2 * n]
    zhat = states[:, 2 * n :]
    x1, x2 = x[:, :n], x[:, n:]
    y = (x1 if measured_field == 1 else x2) @ c.T
    unmeasured = slice(n, 2 * n) if measured_field == 1 else slice(0, n)
    x_w = x[:, unmeasured]
    x_w_hat = zhat[:, unmeasured]
    traj = Trajectory(
        kind="full",
        times=times,
        x1=x1,
        x2=x2,
        y=y,
        estimator_state=zhat,
        x2_hat=x_w_hat,
        mode_abs_err=np.abs(x_w_hat - x_w),
        diverged=diverged,
        divergence_message=msg,
    )
    if region is not None:
        e = zhat - x
        n1 = error_norm_series(e[:, :n], model.domain, model.mode_set, region, norm_weight)
        n2 = error_norm_series(e[:, n:], model.domain, model.mode_set, region, norm_weight)
        traj.err_gamma = np.sqrt(n1**2 + n2**2)
    return traj
