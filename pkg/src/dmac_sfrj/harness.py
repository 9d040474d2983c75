"""Experiment orchestration: calibration, closed-loop runs, sweeps and Monte Carlo.

Every trial owns its plant, controller and random streams.  Trial seeds are
derived from ``(seed, trial_index)`` only, so results do not depend on the
order or the process in which trials execute.
"""

from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import plant as pl
from .config import ExperimentConfig
from .dmac import CHANNELS, DmacController, MeasurementError, NormalizationMap, control_bounds, control_to_cowl
from .sysid import DegenerateUpdateError

log = logging.getLogger(__name__)

THETA_SHAPE = (len(CHANNELS), len(CHANNELS) + 1)


# ---- references -----------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSpec:
    """Piecewise-constant thrust command, ``((start_step, thrust_N), ...)``."""

    segments: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("reference needs at least one segment")
        starts = [s for s, _ in self.segments]
        if starts[0] != 0:
            raise ValueError("first segment must start at step 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment starts must be strictly increasing")
        if not all(math.isfinite(v) for _, v in self.segments):
            raise ValueError("reference thrust must be finite")

    @classmethod
    def from_list(cls, items) -> "ReferenceSpec":
        return cls(tuple((int(s), float(v)) for s, v in items))

    @classmethod
    def constant(cls, thrust: float) -> "ReferenceSpec":
        return cls(((0, float(thrust)),))

    def at(self, k: int) -> float:
        value = self.segments[0][1]
        for start, v in self.segments:
            if k < start:
                break
            value = v
        return value

    @property
    def final(self) -> float:
        return self.segments[-1][1]

    def bounds(self, steps: int) -> list[tuple[int, int, float]]:
        """``(start, stop, command)`` for each segment that starts inside the run."""
        out = []
        for i, (start, v) in enumerate(self.segments):
            if start >= steps:
                break
            stop = self.segments[i + 1][0] if i + 1 < len(self.segments) else steps
            out.append((start, min(stop, steps), v))
        return out


DOUBLE_STEP = ReferenceSpec(((0, 100.0), (200, 110.0)))


# ---- records and results --------------------------------------------------

RECORD_FIELDS = (
    "k", "r", "y", "u", "v", "z", "z_norm", "q", "r0_mm", "r3_mm",
    "saturated", "synthesis_failed", "pt4", "x_co", "phi_g", "mdot_air", "mdot_f",
)  # fmt: skip


@dataclass
class SimRecord:
    k: int
    r: float
    y: float
    u: float
    v: float
    z: float
    z_norm: float
    q: float
    r0_mm: float
    r3_mm: float
    saturated: bool
    synthesis_failed: bool
    pt4: float
    x_co: float
    phi_g: float
    mdot_air: float
    mdot_f: float
    theta: tuple = ()


@dataclass
class SegmentVerdict:
    start: int
    stop: int
    command: float
    error: float
    converged: bool


@dataclass
class TrialResult:
    index: int
    converged: bool
    terminal_error: float
    threshold: float
    steps_run: int
    diverged_reason: str | None = None
    params: dict = field(default_factory=dict)
    segments: list = field(default_factory=list)
    trace: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d


def window_mean_abs(z: np.ndarray, frac: float) -> float:
    n = len(z)
    if n == 0:
        return math.inf
    w = max(1, math.ceil(frac * n))
    return float(np.mean(np.abs(z[n - w :])))


def classify(z: np.ndarray, command: float, frac: float, tol: float) -> tuple[float, float, bool]:
    """Mean ``|z|`` over the final ``frac`` of the record against ``tol * |command|``."""
    err = window_mean_abs(np.asarray(z, dtype=float), frac)
    thr = tol * abs(command)
    return err, thr, bool(err < thr)


# ---- plant assembly and calibration ---------------------------------------


def nominal_fuel(config: ExperimentConfig, alpha_scale: float | None = None, **overrides) -> pl.FuelModel:
    kw = dict(config.plant.fuel)
    kw.update(overrides)
    if alpha_scale is not None:
        kw["alpha_scale"] = alpha_scale
    return pl.FuelModel(**kw)


def geometry(config: ExperimentConfig) -> pl.SfrjGeometry:
    return pl.SfrjGeometry(**config.plant.geometry)


def flight_condition(config: ExperimentConfig, altitude: float | None = None) -> pl.FlightCondition:
    h = config.plant.altitude if altitude is None else altitude
    return pl.FlightCondition.at(config.plant.mach, h)


def solve_alpha_scale(config: ExperimentConfig) -> float:
    """Regression-coefficient multiplier placing the nominal cowl at the calibration thrust.

    Evaluated at the configured flight condition with the nominal fuel.  The
    answer is clipped to ``alpha_scale_bounds``.
    """
    pc = config.plant
    if pc.alpha_scale is not None:
        return float(pc.alpha_scale)
    geom, fc = geometry(config), flight_condition(config)
    lo, hi = pc.alpha_scale_bounds

    def excess(s):
        return pl.evaluate(geom.r0_nominal, geom.r3_init, geom, nominal_fuel(config, s), fc).thrust - pc.calibration_thrust

    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo * f_hi > 0:
        s = lo if abs(f_lo) < abs(f_hi) else hi
        log.warning("calibration thrust not bracketed on [%g, %g]; using %g", lo, hi, s)
        return s
    return float(brentq(excess, lo, hi, xtol=1e-14, rtol=1e-14))


@dataclass
class Calibration:
    norm: NormalizationMap
    alpha_scale: float
    thrust_range: tuple[float, float]
    r0_grid: list
    sweep: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "alpha_scale": self.alpha_scale,
            "alpha_effective_nominal": pl.ALPHA_NOMINAL * self.alpha_scale,
            "thrust_range": list(self.thrust_range),
            "normalization": self.norm.to_dict(),
        }


def normalization_from_outputs(outs, widen: float = 0.1) -> NormalizationMap:
    """Observed per-channel min/max widened by ``widen`` of the span on each side.

    A flat channel gets a band of relative half-width 1e-6 (or 1e-9 absolute
    around zero) so the map stays invertible.
    """
    lo, hi = [], []
    for ch in CHANNELS:
        vals = [getattr(o, ch) for o in outs]
        a, b = min(vals), max(vals)
        pad = widen * (b - a)
        if pad <= 0.0:
            pad = max(1e-6 * max(abs(a), abs(b)), 1e-9)
        lo.append(a - pad)
        hi.append(b + pad)
    return NormalizationMap(tuple(lo), tuple(hi))


def sweep_cowl(geom, fm, fc, n: int):
    """Open-loop outputs on a uniform cowl grid at the initial port radius."""
    grid, outs = [], []
    for i in range(n):
        r0 = geom.r0_min + (geom.r0_max - geom.r0_min) * i / (n - 1)
        try:
            outs.append(pl.evaluate(r0, geom.r3_init, geom, fm, fc))
            grid.append(r0)
        except pl.PlantInfeasible:
            continue
    if not outs:
        raise pl.PlantInfeasible("cowl sweep is infeasible everywhere")
    return grid, outs


def calibrate(config: ExperimentConfig, fuel: pl.FuelModel | None = None, fc: pl.FlightCondition | None = None,
              alpha_scale: float | None = None) -> Calibration:  # fmt: skip
    """Normalization bounds from an open-loop cowl sweep, plus the regression scale."""
    pc = config.plant
    scale = solve_alpha_scale(config) if alpha_scale is None else alpha_scale
    fm = nominal_fuel(config, scale) if fuel is None else fuel
    fc = flight_condition(config) if fc is None else fc
    geom = geometry(config)
    grid, outs = sweep_cowl(geom, fm, fc, pc.calibration_points)
    thrusts = [o.thrust for o in outs]
    return Calibration(
        norm=normalization_from_outputs(outs, pc.calibration_widen),
        alpha_scale=scale,
        thrust_range=(min(thrusts), max(thrusts)),
        r0_grid=grid,
        sweep=outs,
    )


# ---- closed loop ----------------------------------------------------------


def trial_seed(seed: int, index: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed for random stream ``stream`` of trial ``index``; independent of execution order."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), int(stream)))


def make_controller(config: ExperimentConfig, norm: NormalizationMap, seed=None) -> DmacController:
    cc = config.controller
    geom = geometry(config)
    return DmacController(
        norm=norm,
        r_theta=cc.r_theta,
        lam=cc.lam,
        r1_scale=cc.r1,
        r2=cc.r2,
        sigma_v=cc.sigma_v,
        seed=cc.seed if seed is None else seed,
        u_bounds=control_bounds(geom.r0_nominal, (geom.r0_min, geom.r0_max)),
        q_limit=cc.q_limit,
        tol=cc.dare_tol,
        max_iter=cc.dare_max_iter,
        adapt=cc.adapt,
    )


def simulate(config: ExperimentConfig, fm: pl.FuelModel, fc: pl.FlightCondition, norm: NormalizationMap,
             reference: ReferenceSpec, seed=None, steps: int | None = None, record: bool = True,
             index: int = 0) -> tuple[list[SimRecord], TrialResult, np.ndarray]:  # fmt: skip
    """Step plant and controller in lockstep.

    Returns ``(records, result, y)`` where ``y`` is the thrust trace actually
    produced (shorter than ``steps`` on burnout or divergence).
    """
    geom = geometry(config)
    steps = config.run.steps if steps is None else steps
    dt = config.plant.dt
    ctrl = make_controller(config, norm, seed)
    bounds = (geom.r0_min, geom.r0_max)

    state = pl.PlantState(r3=geom.r3_init)
    r0 = geom.r0_nominal
    records: list[SimRecord] = []
    ys = np.empty(steps)
    zs = np.empty(steps)
    reason = None
    n = 0
    for k in range(steps):
        if state.burned_out:
            reason = "burnout"
            break
        r3 = state.r3
        try:
            out, state = pl.plant_step(state, r0, dt, geom, fm, fc)
            r_k = reference.at(k)
            u, diag = ctrl.step(r_k, out)
        except (pl.PlantInfeasible, MeasurementError, DegenerateUpdateError, FloatingPointError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            break
        if not math.isfinite(u):
            reason = "non-finite control"
            break
        r0, saturated = control_to_cowl(u, geom.r0_nominal, bounds)
        ys[k] = out.thrust
        zs[k] = r_k - out.thrust
        n = k + 1
        if record:
            records.append(
                SimRecord(
                    k=k, r=r_k, y=out.thrust, u=u, v=diag.v, z=r_k - out.thrust, z_norm=diag.z, q=diag.q,
                    r0_mm=r0 * 1e3, r3_mm=r3 * 1e3, saturated=saturated, synthesis_failed=diag.synthesis_failed,
                    pt4=out.pt4, x_co=out.x_co, phi_g=out.phi_g, mdot_air=out.mdot_air, mdot_f=out.mdot_f,
                    theta=tuple(float(t) for t in diag.theta.ravel()),
                )
            )  # fmt: skip
    ys, zs = ys[:n], zs[:n]

    rc = config.run
    segments = []
    for start, stop, cmd in reference.bounds(steps):
        seg_z = zs[start:min(stop, n)]
        err, thr, ok = classify(seg_z, cmd, rc.converge_window, rc.converge_tol)
        # a segment cut short by divergence has not converged
        ok = ok and n >= stop and reason in (None, "burnout")
        segments.append(SegmentVerdict(start, stop, cmd, err, ok))

    err, thr, ok = classify(zs, reference.final, rc.converge_window, rc.converge_tol)
    diverged = reason is not None and reason != "burnout"
    result = TrialResult(
        index=index,
        converged=ok and not diverged,
        terminal_error=err,
        threshold=thr,
        steps_run=n,
        diverged_reason=reason,
        segments=segments,
    )
    return records, result, ys


def run_closed_loop(config: ExperimentConfig, reference: ReferenceSpec | None = None, seed=None,
                    calibration: Calibration | None = None):  # fmt: skip
    """Calibrate at the configured condition, then run one closed-loop episode.

    Returns ``(records, result, calibration)``.
    """
    cal = calibrate(config) if calibration is None else calibration
    ref = ReferenceSpec.from_list(config.run.reference) if reference is None else reference
    fm = nominal_fuel(config, cal.alpha_scale)
    records, result, _ = simulate(config, fm, flight_condition(config), cal.norm, ref, seed)
    return records, result, cal


# ---- hyperparameter sweep -------------------------------------------------

SWEEP_PARAMS = ("r_theta", "lam", "r1", "r2")


@dataclass
class SweepRow:
    param: str
    value: float
    result: TrialResult
    y: np.ndarray = field(repr=False, default=None)
    z: np.ndarray = field(repr=False, default=None)


def sweep_configs(config: ExperimentConfig):
    """Yield ``(param, value, config)`` with exactly one hyperparameter moved off nominal."""
    for name in SWEEP_PARAMS:
        for value in config.sweep.grids.get(name, []):
            cfg = copy.deepcopy(config)
            setattr(cfg.controller, name, float(value))
            yield name, float(value), cfg


def sensitivity_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Single-step task at each grid value of each hyperparameter, others nominal."""
    cal = calibrate(config)
    ref = ReferenceSpec.constant(config.monte_carlo.command)
    fm = nominal_fuel(config, cal.alpha_scale)
    fc = flight_condition(config)
    rows = []
    for i, (name, value, cfg) in enumerate(sweep_configs(config)):
        try:
            _, res, y = simulate(cfg, fm, fc, cal.norm, ref, record=False, index=i)
        except Exception as exc:  # keep sweeping; the row records the failure
            res = TrialResult(i, False, math.inf, math.nan, 0, f"{type(exc).__name__}: {exc}")
            y = np.empty(0)
        res.params = {"param": name, "value": value}
        rows.append(SweepRow(name, value, res, y, ref.final - y))
    return rows


# ---- Monte Carlo ----------------------------------------------------------


@dataclass
class McSummary:
    results: list[TrialResult]
    alpha_scale: float
    seed: int

    @property
    def success_rate(self) -> float:
        return sum(r.converged for r in self.results) / len(self.results)

    @property
    def verdicts(self) -> list[bool]:
        return [r.converged for r in self.results]


def _truncated_normal(rng: np.random.Generator, mean: float, std: float, lo: float, hi: float) -> float:
    """Rejection-sample ``N(mean, std)`` restricted to ``(lo, hi]``."""
    if std == 0.0:
        return mean
    for _ in range(10000):
        x = rng.normal(mean, std)
        if lo < x <= hi:
            return float(x)
    raise RuntimeError("truncated normal rejection sampling failed")


def _params_trial(args) -> TrialResult:
    config, alpha_scale, seed, index = args
    mc = config.monte_carlo
    rng = np.random.default_rng(trial_seed(seed, index, 0))
    alpha = _truncated_normal(rng, mc.alpha_mean, mc.alpha_std, 0.0, math.inf)
    eta_c = _truncated_normal(rng, mc.eta_c_mean, mc.eta_c_std, 0.0, 1.0)
    params = {"alpha": alpha, "eta_c": eta_c, "altitude": config.plant.altitude, "command": mc.command}
    fm = nominal_fuel(config, alpha_scale, alpha=alpha, eta_c=eta_c)
    fc = flight_condition(config)
    try:
        cal = calibrate(config, fuel=fm, fc=fc, alpha_scale=alpha_scale)
    except pl.PlantInfeasible as exc:
        return TrialResult(index, False, math.inf, mc.command * config.run.converge_tol, 0, str(exc), params)
    _, res, y = simulate(config, fm, fc, cal.norm, ReferenceSpec.constant(mc.command),
                         seed=trial_seed(seed, index, 1), record=False, index=index)  # fmt: skip
    res.params = params
    res.trace = y[:: mc.trace_stride].copy()
    return res


def _envelope_trial(args) -> TrialResult:
    config, alpha_scale, seed, index, forced = args
    mc = config.monte_carlo
    rng = np.random.default_rng(trial_seed(seed, index, 0))
    h_lo, h_hi = mc.altitude_range
    altitude = float(rng.uniform(h_lo, h_hi))
    if forced.get("altitude") is not None:
        altitude = float(forced["altitude"])
    fm = nominal_fuel(config, alpha_scale)
    thr = math.nan
    params = {"altitude": altitude}
    try:
        fc = flight_condition(config, altitude)
        cal = calibrate(config, fuel=fm, fc=fc, alpha_scale=alpha_scale)
    except (pl.PlantInfeasible, ValueError) as exc:
        return TrialResult(index, False, math.inf, thr, 0, str(exc), params)
    t_min, t_max = cal.thrust_range
    span = t_max - t_min
    lo, hi = t_min + mc.command_margin * span, t_max - mc.command_margin * span
    commands = rng.uniform(lo, hi, mc.commands_per_trial)
    if forced.get("command") is not None:
        commands = np.full(mc.commands_per_trial, float(forced["command"]))
    params.update(t_min=t_min, t_max=t_max, commands=[float(c) for c in commands])

    runs, traces = [], []
    for j, cmd in enumerate(commands):
        _, res, y = simulate(config, fm, fc, cal.norm, ReferenceSpec.constant(cmd),
                             seed=trial_seed(seed, index, 1 + j), record=False, index=index)  # fmt: skip
        runs.append(res)
        traces.append(y[:: mc.trace_stride] / cmd)
    worst = max(runs, key=lambda r: r.terminal_error / r.threshold)
    params["run_converged"] = [r.converged for r in runs]
    params["run_errors"] = [r.terminal_error for r in runs]
    reasons = [r.diverged_reason for r in runs if r.diverged_reason]
    return TrialResult(
        index=index,
        converged=all(r.converged for r in runs),
        terminal_error=worst.terminal_error,
        threshold=worst.threshold,
        steps_run=sum(r.steps_run for r in runs),
        diverged_reason=reasons[0] if reasons else None,
        params=params,
        trace=np.array(traces),
    )


def _run_trials(fn, args: list, parallel: int) -> list[TrialResult]:
    if parallel is None or parallel <= 1 or len(args) == 1:
        results = [fn(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * parallel))))
    return sorted(results, key=lambda r: r.index)


def monte_carlo_params(config: ExperimentConfig, n_trials: int | None = None, seed: int | None = None,
                       parallel: int | None = None) -> McSummary:  # fmt: skip
    """Gaussian ``(alpha, eta_c)`` draws, fixed controller, 100 N single step at the nominal condition."""
    mc = config.monte_carlo
    n = mc.trials if n_trials is None else n_trials
    seed = mc.seed if seed is None else seed
    if n < 1:
        raise ValueError("n_trials must be >= 1")
    scale = solve_alpha_scale(config)
    args = [(config, scale, seed, i) for i in range(n)]
    results = _run_trials(_params_trial, args, mc.parallel if parallel is None else parallel)
    return McSummary(results, scale, seed)


def monte_carlo_envelope(config: ExperimentConfig, n_trials: int | None = None, seed: int | None = None,
                         parallel: int | None = None, force_altitude: float | None = None,
                         force_command: float | None = None) -> McSummary:  # fmt: skip
    """Uniform altitude draws with margin-clipped random commands, nominal fuel."""
    mc = config.monte_carlo
    n = mc.trials if n_trials is None else n_trials
    seed = mc.seed if seed is None else seed
    if n < 1:
        raise ValueError("n_trials must be >= 1")
    scale = solve_alpha_scale(config)
    forced = {"altitude": force_altitude, "command": force_command}
    args = [(config, scale, seed, i, forced) for i in range(n)]
    results = _run_trials(_envelope_trial, args, mc.parallel if parallel is None else parallel)
    return McSummary(results, scale, seed)


def envelope_runs(summary: McSummary) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten envelope trials to per-command ``(altitude, command, converged)`` arrays."""
    h, cmd, ok = [], [], []
    for r in summary.results:
        for c, flag in zip(r.params.get("commands", []), r.params.get("run_converged", [])):
            h.append(r.params["altitude"])
            cmd.append(c)
            ok.append(flag)
    return np.array(h), np.array(cmd), np.array(ok, dtype=bool)


# ---- open loop ------------------------------------------------------------


def open_loop_trace(config: ExperimentConfig, r0: float | None = None, steps: int | None = None,
                    alpha_scale: float | None = None):  # fmt: skip
    """Fixed-cowl time history; returns ``(time, r3, outputs)`` lists."""
    geom = geometry(config)
    scale = solve_alpha_scale(config) if alpha_scale is None else alpha_scale
    fm = nominal_fuel(config, scale)
    fc = flight_condition(config)
    r0 = geom.r0_nominal if r0 is None else r0
    steps = config.run.steps if steps is None else steps
    state = pl.PlantState(geom.r3_init)
    times, r3s, outs = [], [], []
    for _ in range(steps):
        if state.burned_out:
            break
        times.append(state.time)
        r3s.append(state.r3)
        out, state = pl.plant_step(state, r0, config.plant.dt, geom, fm, fc)
        outs.append(out)
    return times, r3s, outs
