import copy
import math

import numpy as np
import pytest

from dmac_sfrj import harness
from dmac_sfrj import plant as pl
from dmac_sfrj.config import ExperimentConfig
from dmac_sfrj.dmac import normalize
from dmac_sfrj.harness import (
    DOUBLE_STEP,
    ReferenceSpec,
    calibrate,
    classify,
    normalization_from_outputs,
    run_closed_loop,
    trial_seed,
)


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig().validate()


@pytest.fixture(scope="module")
def cal(cfg):
    return calibrate(cfg)


def short(cfg, steps=200, **mc):
    c = copy.deepcopy(cfg)
    c.run.steps = steps
    for k, v in mc.items():
        setattr(c.monte_carlo, k, v)
    return c


# ---- references / classifier ---------------------------------------------


def test_reference_spec_lookup_and_bounds():
    assert DOUBLE_STEP.at(0) == 100.0
    assert DOUBLE_STEP.at(199) == 100.0
    assert DOUBLE_STEP.at(200) == 110.0
    assert DOUBLE_STEP.final == 110.0
    assert DOUBLE_STEP.bounds(1000) == [(0, 200, 100.0), (200, 1000, 110.0)]
    assert DOUBLE_STEP.bounds(150) == [(0, 150, 100.0)]


@pytest.mark.parametrize("segments", [[], [[1, 100.0]], [[0, 100.0], [0, 110.0]], [[0, math.inf]]])
def test_reference_spec_validation(segments):
    with pytest.raises(ValueError):
        ReferenceSpec.from_list(segments)


def test_classify_window():
    z = np.concatenate([np.full(90, 50.0), np.full(10, 1.0)])
    err, thr, ok = classify(z, 100.0, 0.1, 0.02)
    assert (err, thr, ok) == (1.0, 2.0, True)
    err, thr, ok = classify(-z, 40.0, 0.1, 0.02)
    assert err == 1.0 and thr == pytest.approx(0.8) and not ok
    assert classify(np.empty(0), 100.0, 0.1, 0.02)[2] is False


# ---- calibration ----------------------------------------------------------


def test_alpha_scale_within_band(cal):
    assert 0.5 <= cal.alpha_scale <= 1.5
    assert cal.alpha_scale == pytest.approx(0.5821293052904051, rel=1e-10)


def test_calibration_brackets_feasible_range(cfg, cal):
    fm = harness.nominal_fuel(cfg, cal.alpha_scale)
    t_min, t_max = pl.feasible_thrust_range(harness.flight_condition(cfg), harness.geometry(cfg), fm, 64)
    assert cal.thrust_range == (t_min, t_max)
    lo, hi = cal.norm.lo[2], cal.norm.hi[2]
    assert lo < t_min and hi > t_max
    assert lo == pytest.approx(t_min - 0.1 * (t_max - t_min))
    assert len(cal.r0_grid) == 64


def test_degenerate_channel_gets_nonzero_band():
    out = pl.PlantOutputs(100.0, 5e4, 0.0, 0.1, 0.0, 0.0, 1000.0, 1000.0, 0.0)
    norm = normalization_from_outputs([out, out])
    assert all(h > l for l, h in zip(norm.lo, norm.hi))
    assert norm.lo[2] < 100.0 < norm.hi[2]


def test_normalization_round_trip_random(cal):
    rng = np.random.default_rng(0)
    lo, hi = cal.norm.lo[2], cal.norm.hi[2]
    for x in rng.uniform(-1.5, 1.5, 100):
        assert normalize(cal.norm.thrust_physical(x), lo, hi) == pytest.approx(x, abs=1e-12)


def test_fixed_alpha_scale_from_config(cfg):
    c = copy.deepcopy(cfg)
    c.plant.alpha_scale = 0.7
    assert harness.solve_alpha_scale(c) == 0.7


# ---- closed loop ----------------------------------------------------------


def test_records_contiguous_and_complete(cfg, cal):
    records, result, _ = run_closed_loop(short(cfg, 150), calibration=cal)
    assert [r.k for r in records] == list(range(150))
    assert result.steps_run == 150
    assert len(records[0].theta) == 12


def test_inactive_controller_reproduces_open_loop(cfg, cal):
    c = short(cfg, 200)
    c.controller.adapt = False
    c.controller.sigma_v = 0.0
    records, _, _ = run_closed_loop(c, calibration=cal)
    _, _, outs = harness.open_loop_trace(c, alpha_scale=cal.alpha_scale)
    assert [r.y for r in records] == [o.thrust for o in outs]
    assert all(r.u == 0.0 for r in records)


def test_nominal_single_step_converges(cfg, cal):
    records, result, _ = run_closed_loop(cfg, calibration=cal)
    assert result.converged
    assert result.terminal_error < 0.01 * 100.0
    assert not any(r.synthesis_failed for r in records[1:])


def test_double_step_segments(cfg, cal):
    c = copy.deepcopy(cfg)
    c.run.reference = [list(s) for s in DOUBLE_STEP.segments]
    _, result, _ = run_closed_loop(c, calibration=cal)
    assert [s.command for s in result.segments] == [100.0, 110.0]
    assert all(s.converged for s in result.segments)
    assert result.converged


def test_burnout_stops_run_without_divergence(cfg):
    c = short(cfg, 500)
    c.plant.dt = 50.0
    _, result, _ = run_closed_loop(c)
    assert result.diverged_reason == "burnout"
    assert result.steps_run < 500


def test_infeasible_plant_marks_diverged(cfg, cal, monkeypatch):
    calls = {"n": 0}
    real = pl.evaluate

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 20:
            raise pl.PlantInfeasible("forced")
        return real(*a, **k)

    monkeypatch.setattr(pl, "evaluate", flaky)
    _, result, _ = run_closed_loop(short(cfg, 100), calibration=cal)
    assert not result.converged
    assert result.steps_run == 20
    assert "forced" in result.diverged_reason


def test_trial_seed_depends_on_index_only():
    a = np.random.default_rng(trial_seed(5, 3, 1)).random(4)
    b = np.random.default_rng(trial_seed(5, 3, 1)).random(4)
    c = np.random.default_rng(trial_seed(5, 4, 1)).random(4)
    d = np.random.default_rng(trial_seed(5, 3, 2)).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


# ---- sweep ----------------------------------------------------------------


def test_sweep_isolation(cfg):
    base = cfg.controller
    grids = cfg.sweep.grids
    n = 0
    for name, value, c in harness.sweep_configs(cfg):
        diff = [f for f in ("r_theta", "lam", "r1", "r2", "sigma_v", "seed") if getattr(c.controller, f) != getattr(base, f)]
        assert diff in ([name], []) and getattr(c.controller, name) == value
        n += 1
    assert n == sum(len(v) for v in grids.values())
    for name in ("r_theta", "r1", "r2"):
        assert max(grids[name]) / min(grids[name]) >= 100
    assert all(0 < v <= 1 for v in grids["lam"])


def test_sweep_nominal_singleton_matches_closed_loop(cfg, cal):
    c = short(cfg, 300)
    c.sweep.grids = {"r_theta": [c.controller.r_theta]}
    rows = harness.sensitivity_sweep(c)
    records, result, _ = run_closed_loop(c, calibration=cal)
    assert len(rows) == 1
    assert np.array_equal(rows[0].y, [r.y for r in records])
    assert rows[0].result.terminal_error == result.terminal_error


def test_sweep_continues_after_failure(cfg, monkeypatch):
    c = short(cfg, 50)
    c.sweep.grids = {"lam": [0.99, 1.0]}
    real = harness.simulate

    def fail_first(config, *a, **k):
        if config.controller.lam == 0.99:
            raise RuntimeError("boom")
        return real(config, *a, **k)

    monkeypatch.setattr(harness, "simulate", fail_first)
    rows = harness.sensitivity_sweep(c)
    assert [r.result.converged for r in rows][0] is False
    assert "boom" in rows[0].result.diverged_reason
    assert rows[1].result.steps_run == 50


# ---- Monte Carlo ----------------------------------------------------------


def test_params_zero_variance_matches_nominal(cfg, cal):
    c = short(cfg, 300, alpha_std=0.0, eta_c_std=0.0)
    s = harness.monte_carlo_params(c, n_trials=1, seed=11)
    records, _, _ = run_closed_loop(c, seed=trial_seed(11, 0, 1), calibration=cal)
    np.testing.assert_array_equal(s.results[0].trace, np.array([r.y for r in records])[:: c.monte_carlo.trace_stride])
    assert s.results[0].params["alpha"] == pl.ALPHA_NOMINAL


def test_envelope_forced_reduces_to_nominal(cfg, cal):
    c = short(cfg, 300, commands_per_trial=2)
    s = harness.monte_carlo_envelope(c, n_trials=1, seed=3, force_altitude=30000.0, force_command=100.0)
    tr = s.results[0]
    assert tr.params["altitude"] == 30000.0 and tr.params["commands"] == [100.0, 100.0]
    for j in range(2):
        records, _, _ = run_closed_loop(c, seed=trial_seed(3, 0, 1 + j), calibration=cal)
        y = np.array([r.y for r in records])[:: c.monte_carlo.trace_stride] / 100.0
        np.testing.assert_array_equal(tr.trace[j], y)


def test_envelope_commands_inside_margin(cfg):
    c = short(cfg, 20, commands_per_trial=5)
    s = harness.monte_carlo_envelope(c, n_trials=3, seed=8)
    for r in s.results:
        p = r.params
        span = p["t_max"] - p["t_min"]
        assert 23000.0 <= p["altitude"] <= 36000.0
        assert all(p["t_min"] + 0.05 * span <= x <= p["t_max"] - 0.05 * span for x in p["commands"])
        assert r.converged == all(p["run_converged"])
    h, cmd, ok = harness.envelope_runs(s)
    assert len(h) == len(cmd) == len(ok) == 15


def test_params_truncation_bounds():
    rng = np.random.default_rng(0)
    draws = [harness._truncated_normal(rng, 0.75, 0.5, 0.0, 1.0) for _ in range(500)]
    assert all(0.0 < d <= 1.0 for d in draws)


def test_monte_carlo_same_seed_same_verdicts(cfg):
    c = short(cfg, 100)
    a = harness.monte_carlo_params(c, n_trials=4, seed=1)
    b = harness.monte_carlo_params(c, n_trials=4, seed=1)
    assert a.verdicts == b.verdicts
    assert [r.params for r in a.results] == [r.params for r in b.results]


def test_monte_carlo_serial_equals_parallel(cfg):
    c = short(cfg, 100)
    serial = harness.monte_carlo_params(c, n_trials=4, seed=9, parallel=1)
    par = harness.monte_carlo_params(c, n_trials=4, seed=9, parallel=2)
    assert [r.index for r in par.results] == [0, 1, 2, 3]
    for a, b in zip(serial.results, par.results):
        assert a.params == b.params and a.terminal_error == b.terminal_error
        np.testing.assert_array_equal(a.trace, b.trace)


def test_monte_carlo_rejects_zero_trials(cfg):
    with pytest.raises(ValueError):
        harness.monte_carlo_params(cfg, n_trials=0)
