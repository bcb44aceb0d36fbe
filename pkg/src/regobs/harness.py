"""Experiment orchestration: single runs, placement sweeps, file emission.

All emitted text uses shortest round-trip floats and contains no timestamps
or absolute paths, so identical config text produces byte-identical outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ExperimentConfig, render_config
from .geometry import Rect
from .observer import (
    NotDetectableError,
    ObserverGain,
    design_gain,
    reduced_output_map,
    simulate_full_order,
    simulate_reduced_order,
    split_unstable_stable,
)
from .region import BoundarySegment, DecayFit, build_collar, fit_decay
from .sensing import (
    PointwiseSensor,
    PredicateInapplicableError,
    StrategicReport,
    ZoneSensor,
    group_values,
    nonstrategic_pointwise_predicate,
    nonstrategic_zone_predicate,
    observability_gramian,
    output_matrix,
    strategic_rank_test,
)
from .spectral import ModeSet, assemble_exchange_model

CONFIG_ECHO_BEGIN = "--- config ---"
CONFIG_ECHO_END = "--- end config ---"


def _fmt(value) -> str:
    return repr(float(value))


@dataclass
class EstimatorSummary:
    kind: str
    j_unstable: int
    not_detectable: bool
    detail: str
    closed_loop_eigs: tuple[float, ...]
    achieved_margin: float
    decay_fit: DecayFit | None = None
    err_first: float | None = None
    err_last: float | None = None
    diverged: bool = False
    divergence_message: str = ""


@dataclass
class RunReport:
    config_echo: str
    strategic: StrategicReport
    estimators: dict[str, EstimatorSummary]
    primary: str
    region_note: str
    manifest: tuple[str, ...] = ()

    @property
    def not_detectable(self) -> bool:
        return self.estimators[self.primary].not_detectable

    @property
    def j_unstable(self) -> int:
        return self.estimators[self.primary].j_unstable

    @property
    def decay_fit(self) -> DecayFit | None:
        return self.estimators[self.primary].decay_fit


def _build_model(cfg: ExperimentConfig):
    modes = ModeSet.square(cfg.simulation.n_modes)
    model = assemble_exchange_model(cfg.coefficients, cfg.domain, modes)
    return modes, model


def _norm_region(cfg: ExperimentConfig):
    """Region used for error norms; boundary segments report the collar norm
    as the boundary-region proxy (the plant basis vanishes on the boundary)."""
    if isinstance(cfg.region, BoundarySegment):
        collar = build_collar(cfg.region, cfg.collar_radius, cfg.domain, cfg.region.n_quad)
        note = (
            f"boundary segment region: collar omega_r (radius = {_fmt(cfg.collar_radius)}) "
            "norm reported as the boundary-region proxy"
        )
        return collar, note
    return cfg.region, "internal rectangle region"


def _initial_state(cfg: ExperimentConfig, n: int) -> np.ndarray:
    rng = np.random.default_rng(cfg.simulation.x0_seed)
    draw = rng.standard_normal(2 * n)
    x1 = np.array(cfg.simulation.x0_field1, dtype=float) if cfg.simulation.x0_field1 else draw[:n]
    x2 = np.array(cfg.simulation.x0_field2, dtype=float) if cfg.simulation.x0_field2 else draw[n:]
    return np.concatenate([x1, x2])


def _zero_gain(block, obs_map, split, target_margin, sensor_matrix) -> ObserverGain:
    closed = np.sort(np.linalg.eigvals(np.asarray(block, dtype=float)).real)[::-1]
    return ObserverGain(
        H=np.zeros((np.asarray(block).shape[0], np.atleast_2d(obs_map).shape[0])),
        split=split,
        target_margin=target_margin,
        closed_loop_eigs=closed,
        residual=float("nan"),
        sensor_matrix=sensor_matrix,
    )


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None):
    """Full pipeline: assemble, rank test, gain design, simulate, fit, emit.

    A failed gain design (NotDetectable) is a successful run: the flag is set
    and the open-loop (zero gain) simulation is recorded.
    """
    if not cfg.sensors:
        raise ConfigError("observer requires ≥ 1 sensor")
    modes, model = _build_model(cfg)
    mf = cfg.observer.measured_field
    c = output_matrix(cfg.sensors, cfg.domain, modes)
    _, _, _, a_ww, _, _ = model.partition(mf)
    groups = group_values(np.diag(a_ww), modes)
    strategic = strategic_rank_test(c, groups)
    norm_region, region_note = _norm_region(cfg)

    x0 = _initial_state(cfg, model.n_modes)
    x_m0 = x0[:model.n_modes] if mf == 1 else x0[model.n_modes:]
    x_w0 = x0[model.n_modes:] if mf == 1 else x0[:model.n_modes]
    y0 = c @ x_m0

    wanted = ("reduced", "full") if cfg.observer.estimators == "both" else (cfg.observer.estimators,)
    summaries: dict[str, EstimatorSummary] = {}
    trajectories = {}

    for kind in wanted:
        if kind == "reduced":
            obs_map = reduced_output_map(model, c, mf)
            split = split_unstable_stable(a_ww, cfg.observer.margin)
            block = a_ww
        else:
            block = model.stacked_a()
            c_full = np.zeros((c.shape[0], 2 * model.n_modes))
            if mf == 1:
                c_full[:, : model.n_modes] = c
            else:
                c_full[:, model.n_modes :] = c
            obs_map = c_full
            split = split_unstable_stable(block, cfg.observer.margin)
        try:
            gain = design_gain(block, obs_map, split, cfg.observer.target_margin,
                               sensor_matrix=c if kind == "reduced" else obs_map)
            not_detectable = False
            detail = "gain placed all unstable modes at the target margin"
        except NotDetectableError as exc:
            gain = _zero_gain(block, obs_map, split, cfg.observer.target_margin,
                              c if kind == "reduced" else obs_map)
            not_detectable = True
            detail = str(exc)

        if kind == "reduced":
            phi0 = (x_w0 - gain.H @ y0) if cfg.simulation.estimator_init == "truth" else -gain.H @ y0
            traj = simulate_reduced_order(
                model, cfg.sensors, gain, None, x0, phi0, cfg.simulation.dt,
                cfg.simulation.t_final, measured_field=mf,
                region=norm_region, norm_weight=cfg.output.norm,
            )
        else:
            zhat0 = x0.copy() if cfg.simulation.estimator_init == "truth" else np.zeros(2 * model.n_modes)
            traj = simulate_full_order(
                model, cfg.sensors, gain, None, x0, zhat0, cfg.simulation.dt,
                cfg.simulation.t_final, measured_field=mf,
                region=norm_region, norm_weight=cfg.output.norm,
            )
        summary = EstimatorSummary(
            kind=kind,
            j_unstable=split.j_unstable,
            not_detectable=not_detectable,
            detail=detail,
            closed_loop_eigs=tuple(float(v) for v in np.real(gain.closed_loop_eigs)),
            achieved_margin=gain.achieved_margin,
            diverged=traj.diverged,
            divergence_message=traj.divergence_message,
        )
        if traj.err_gamma is not None and traj.err_gamma.size:
            summary.err_first = float(traj.err_gamma[0])
            summary.err_last = float(traj.err_gamma[-1])
            t_hi = cfg.output.fit_t_hi if cfg.output.fit_t_hi is not None else cfg.simulation.t_final
            t_lo = min(cfg.output.fit_t_lo, float(traj.times[-1]))
            t_hi = min(t_hi, float(traj.times[-1]))
            try:
                summary.decay_fit = fit_decay(traj.times, traj.err_gamma, window=(t_lo, t_hi))
            except ValueError:
                summary.decay_fit = None
            traj.decay_fit = summary.decay_fit
        summaries[kind] = summary
        trajectories[kind] = (traj, gain)

    primary = "reduced" if "reduced" in summaries else "full"
    report = RunReport(
        config_echo=render_config(cfg),
        strategic=strategic,
        estimators=summaries,
        primary=primary,
        region_note=region_note,
    )
    if out_dir is not None:
        report.manifest = emit_outputs(report, trajectories, cfg, out_dir)
    return report, {k: t for k, (t, _) in trajectories.items()}


# --- placement sweep ----------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    b1: float
    b2: float
    strategic: bool
    min_gramian_eig: float
    triggered: tuple


@dataclass
class SweepResult:
    grid_n: int
    rows: tuple[SweepRow, ...]


def _feasible_interval(cfg: ExperimentConfig, sensor):
    d = cfg.domain
    if isinstance(sensor, PointwiseSensor):
        return (d.alpha1, d.beta1), (d.alpha2, d.beta2)
    h1, h2 = sensor.rect.half_widths
    if d.alpha1 + h1 >= d.beta1 - h1 or d.alpha2 + h2 >= d.beta2 - h2:
        raise ConfigError("zone sensor support too wide to sweep inside the domain")
    return (d.alpha1 + h1, d.beta1 - h1), (d.alpha2 + h2, d.beta2 - h2)


def _sensor_at(sensor, b1: float, b2: float):
    if isinstance(sensor, PointwiseSensor):
        return PointwiseSensor(location=(b1, b2))
    h1, h2 = sensor.rect.half_widths
    return ZoneSensor(rect=Rect(b1 - h1, b1 + h1, b2 - h2, b2 + h2),
                      weight=sensor.weight, samples=sensor.samples)


def placement_sweep(cfg: ExperimentConfig, grid_n: int, workers: int = 1) -> SweepResult:
    """Evaluate sensor placements over an interior lattice.

    The first sensor's location (or zone center) is varied over a
    grid_n x grid_n lattice at fractions k/(grid_n + 1) of the feasible span;
    remaining sensors stay fixed.  Each position records the strategic
    verdict, the smallest observability-Gramian eigenvalue of the
    unmeasured-field block, and the closed-form predicate triggers.
    """
    if grid_n < 2:
        raise ConfigError("sweep grid must be >= 2")
    if not cfg.sensors:
        raise ConfigError("sweep requires ≥ 1 sensor")
    modes, model = _build_model(cfg)
    mf = cfg.observer.measured_field
    _, _, _, a_ww, _, _ = model.partition(mf)
    groups = group_values(np.diag(a_ww), modes)
    varied = cfg.sensors[0]
    rest = cfg.sensors[1:]
    (lo1, hi1), (lo2, hi2) = _feasible_interval(cfg, varied)
    fracs = [k / (grid_n + 1) for k in range(1, grid_n + 1)]
    positions = [
        (lo1 + (hi1 - lo1) * f1, lo2 + (hi2 - lo2) * f2)
        for f1 in fracs
        for f2 in fracs
    ]

    def evaluate(pos):
        b1, b2 = pos
        sensor = _sensor_at(varied, b1, b2)
        sensors = (sensor, *rest)
        c = output_matrix(sensors, cfg.domain, modes)
        verdict = strategic_rank_test(c, groups).strategic
        w = observability_gramian(a_ww, c, cfg.observer.gramian_horizon)
        min_eig = float(np.linalg.eigvalsh(w)[0])
        try:
            if isinstance(sensor, PointwiseSensor):
                pred = nonstrategic_pointwise_predicate(sensor, cfg.domain, modes)
            else:
                pred = nonstrategic_zone_predicate(sensor, cfg.domain, modes)
            triggered = pred.modes
        except PredicateInapplicableError:
            triggered = ()
        return SweepRow(b1=b1, b2=b2, strategic=verdict, min_gramian_eig=min_eig, triggered=triggered)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(evaluate, positions))
    else:
        rows = tuple(evaluate(p) for p in positions)
    return SweepResult(grid_n=grid_n, rows=rows)


# --- file emission -------------------------------------------------------------


def emit_outputs(report: RunReport, trajectories, cfg: ExperimentConfig, out_dir: str) -> tuple[str, ...]:
    """Write trajectory.csv, gain.csv (when the design succeeded), the
    optional error_decay.svg, and summary.txt; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = []

    primary_traj, primary_gain = trajectories[report.primary]
    full = trajectories.get("full", (None, None))[0]
    reduced = trajectories.get("reduced", (None, None))[0]
    _write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), cfg, primary_traj, full, reduced)
    manifest.append("trajectory.csv")

    if not report.not_detectable:
        _write_gain_csv(os.path.join(out_dir, "gain.csv"), cfg, report.primary, primary_gain)
        manifest.append("gain.csv")

    if cfg.output.plot and primary_traj.err_gamma is not None and report.decay_fit is not None:
        write_decay_svg(os.path.join(out_dir, "error_decay.svg"),
                        primary_traj.times, primary_traj.err_gamma, report.decay_fit)
        manifest.append("error_decay.svg")

    manifest.append("summary.txt")
    report.manifest = tuple(manifest)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_summary(report, cfg))
    return report.manifest


def _write_trajectory_csv(path, cfg, primary, full, reduced):
    n = cfg.simulation.n_modes**2
    modes = ModeSet.square(cfg.simulation.n_modes)
    header = ["t", "err_gamma", "err_full_order", "err_reduced_order"]
    header += [f"e_{m.i}_{m.j}" for m in modes]
    lengths = [primary.times.shape[0]]
    for traj in (full, reduced):
        if traj is not None:
            lengths.append(traj.times.shape[0])
    rows = max(lengths)
    dt = cfg.simulation.dt

    def series(traj):
        return traj.err_gamma if traj is not None and traj.err_gamma is not None else None

    err_primary = series(primary)
    err_full = series(full)
    err_reduced = series(reduced)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(rows):
            cells = [_fmt(k * dt)]
            cells.append(_fmt(err_primary[k]) if err_primary is not None and k < err_primary.shape[0] else "")
            cells.append(_fmt(err_full[k]) if err_full is not None and k < err_full.shape[0] else "")
            cells.append(_fmt(err_reduced[k]) if err_reduced is not None and k < err_reduced.shape[0] else "")
            if k < primary.mode_abs_err.shape[0]:
                cells.extend(_fmt(v) for v in primary.mode_abs_err[k])
            else:
                cells.extend("" for _ in range(n))
            fh.write(",".join(cells) + "\n")


def _write_gain_csv(path, cfg, kind, gain):
    modes = list(ModeSet.square(cfg.simulation.n_modes))
    q = gain.H.shape[1]
    header = ["field", "i", "j"] + [f"h_{s}" for s in range(1, q + 1)]
    mf = cfg.observer.measured_field
    if kind == "reduced":
        fields = [2 if mf == 1 else 1] * len(modes)
        mode_rows = modes
    else:
        fields = [1] * len(modes) + [2] * len(modes)
        mode_rows = modes + modes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r, (f, m) in enumerate(zip(fields, mode_rows)):
            cells = [str(f), str(m.i), str(m.j)] + [_fmt(v) for v in gain.H[r]]
            fh.write(",".join(cells) + "\n")


def emit_sweep(result: SweepResult, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("b1,b2,strategic,min_gramian_eig,triggered_modes\n")
        for row in result.rows:
            trig = ";".join(f"{m.i}.{m.j}" for m in row.triggered)
            fh.write(f"{_fmt(row.b1)},{_fmt(row.b2)},{int(row.strategic)},{_fmt(row.min_gramian_eig)},{trig}\n")
    return path


def render_rank_report(report: StrategicReport) -> str:
    lines = [f"verdict: {report.verdict}"]
    lines.append(f"sensors: q = {report.q}, largest multiplicity = {report.max_multiplicity}")
    lines.append(f"rank tolerance: {_fmt(report.tol_rank)}")
    lines.append("groups (descending eigenvalue):")
    for k, block in enumerate(report.blocks):
        modes = " ".join(f"({m.i},{m.j})" for m in block.group.modes)
        flag = "  << offending" if k in report.offending else ""
        lines.append(
            f"  value = {_fmt(block.group.value)}  multiplicity = {block.group.multiplicity}"
            f"  rank = {block.rank}  modes: {modes}{flag}"
        )
    return "\n".join(lines) + "\n"


def render_summary(report: RunReport, cfg: ExperimentConfig) -> str:
    lines = ["regobs run summary", "=================="]
    lines.append(f"error norm: {cfg.output.norm} ({report.region_note})")
    lines.append("")
    lines.append(render_rank_report(report.strategic).rstrip("\n"))
    for kind in ("reduced", "full"):
        summary = report.estimators.get(kind)
        if summary is None:
            continue
        lines.append("")
        lines.append(f"estimator: {kind}" + ("  (primary)" if kind == report.primary else ""))
        lines.append(f"  J (unstable modes) = {summary.j_unstable}")
        lines.append(f"  not_detectable = {str(summary.not_detectable).lower()}")
        lines.append(f"  detail: {summary.detail}")
        lines.append(f"  achieved margin = {_fmt(summary.achieved_margin)}")
        eigs = ", ".join(_fmt(v) for v in summary.closed_loop_eigs)
        lines.append(f"  closed-loop spectrum: [{eigs}]")
        if summary.err_first is not None:
            lines.append(f"  err_gamma initial = {_fmt(summary.err_first)}, final = {_fmt(summary.err_last)}")
        if summary.decay_fit is not None:
            f = summary.decay_fit
            lines.append(
                f"  decay fit: alpha = {_fmt(f.alpha_fit)}, M = {_fmt(f.m_fit)}, "
                f"window = [{_fmt(f.t_lo)}, {_fmt(f.t_hi)}], residual = {_fmt(f.residual)}, "
                f"floored = {f.n_floored}"
            )
        if summary.diverged:
            lines.append(f"  divergence: {summary.divergence_message}")
    lines.append("")
    lines.append("files: " + ", ".join(report.manifest))
    lines.append(CONFIG_ECHO_BEGIN)
    lines.append(report.config_echo.rstrip("\n"))
    lines.append(CONFIG_ECHO_END)
    return "\n".join(lines) + "\n"


def extract_config_echo(summary_text: str) -> str:
    """Recover the normalized config text embedded in a summary."""
    begin = summary_text.index(CONFIG_ECHO_BEGIN) + len(CONFIG_ECHO_BEGIN)
    end = summary_text.index(CONFIG_ECHO_END)
    return summary_text[begin:end].strip("\n") + "\n"


def write_decay_svg(path, times, values, fit: DecayFit):
    """Log-scale error plot: exactly two polylines (data, fitted line)."""
    width, height = 640, 420
    ml, mr, mt, mb = 60, 20, 20, 40
    t = np.asarray(times, dtype=float)
    v = np.maximum(np.asarray(values, dtype=float), 1e-30)
    logv = np.log10(v)
    t_min, t_max = float(t[0]), float(t[-1])
    y_min, y_max = float(logv.min()), float(logv.max())
    if y_max - y_min < 1e-12:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    if t_max - t_min < 1e-12:
        t_max = t_min + 1.0

    def sx(x):
        return ml + (x - t_min) / (t_max - t_min) * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb)

    data_pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(t, logv))
    fit_t = np.linspace(fit.t_lo, fit.t_hi, 2)
    fit_v = np.log10(np.maximum(fit.m_fit * np.exp(-fit.alpha_fit * fit_t), 1e-30))
    fit_v = np.clip(fit_v, y_min, y_max)
    fit_pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(fit_t, fit_v))
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 8}" font-size="12" text-anchor="middle">t</text>',
        f'<text x="14" y="{height // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {height // 2})">log10 err_gamma</text>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{data_pts}"/>',
        f'<polyline fill="none" stroke="crimson" stroke-width="1.5" stroke-dasharray="6 3" points="{fit_pts}"/>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(svg) + "\n")
