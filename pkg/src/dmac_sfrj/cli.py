"""Command-line entry point: ``dmac-sfrj <subcommand> [--config file] ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import figures, harness, report
from .config import ConfigError, load_config

log = logging.getLogger("dmac_sfrj")

MODE_TO_COMMAND = {
    "single-step": "run",
    "double-step": "run",
    "sensitivity": "sweep",
    "mc-params": "mc-params",
    "mc-envelope": "mc-envelope",
    "open-loop-sweep": "open-loop",
    "calibrate": "calibrate",
}


def parse_reference(text: str) -> list:
    """``"0:100,200:110"`` -> ``[[0, 100.0], [200, 110.0]]``."""
    out = []
    for part in text.split(","):
        start, value = part.split(":")
        out.append([int(start), float(value)])
    return out


def _apply_overrides(cfg, args):
    if args.out is not None:
        cfg.run.out_dir = args.out
    if args.trials is not None:
        cfg.monte_carlo.trials = args.trials
    if args.parallel is not None:
        cfg.monte_carlo.parallel = args.parallel
    if args.no_plots:
        cfg.run.plots = False
    if getattr(args, "reference", None):
        cfg.run.reference = parse_reference(args.reference)
    elif getattr(args, "double_step", False) or (args.command == "run" and cfg.mode == "double-step"):
        if cfg.run.reference == [[0, 100.0]]:
            cfg.run.reference = [list(s) for s in harness.DOUBLE_STEP.segments]
    if args.seed is not None:
        if args.command in ("mc-params", "mc-envelope"):
            cfg.monte_carlo.seed = args.seed
        else:
            cfg.controller.seed = args.seed
    return cfg.validate()


def cmd_run(cfg, out: Path) -> int:
    records, result, cal = harness.run_closed_loop(cfg)
    report.write_records_csv(records, out / "records.csv")
    report.write_error_curve_csv({"run": np.array([r.z for r in records])}, out / "error_curve.csv")
    report.write_manifest(out / "manifest.json", cfg, calibration=cal.to_dict(), result=result.summary(),
                          seeds={"controller": cfg.controller.seed})  # fmt: skip
    if cfg.run.plots:
        figures.step_response(records, out / "step_response.png")
    status = "converged" if result.converged else f"not converged ({result.diverged_reason or 'error too large'})"
    print(f"run: {status}; terminal mean |z| = {result.terminal_error:.4g} N (threshold {result.threshold:.4g} N)")
    for seg in result.segments:
        print(f"  segment k={seg.start}..{seg.stop - 1} r={seg.command:g} N: |z|={seg.error:.4g} {'ok' if seg.converged else 'FAIL'}")
    return 0


def cmd_sweep(cfg, out: Path) -> int:
    rows = harness.sensitivity_sweep(cfg)
    results = [r.result for r in rows]
    report.write_results_csv(results, out / "sweep.csv")
    report.write_error_curve_csv({f"{r.param}={r.value!r}": r.z for r in rows}, out / "error_curves.csv")
    rate = sum(r.converged for r in results) / len(results)
    report.write_manifest(out / "manifest.json", cfg, summary={"runs": len(rows), "converged_fraction": rate})
    if cfg.run.plots:
        figures.sensitivity(rows, out / "sensitivity.png", cfg.monte_carlo.command)
    for r in rows:
        print(f"{r.param:8s} {r.value:<10g} {'ok' if r.result.converged else 'FAIL'}  |z|={r.result.terminal_error:.4g}")
    print(f"sweep: {rate:.1%} of {len(rows)} runs converged")
    return 0


def cmd_mc_params(cfg, out: Path) -> int:
    mc = cfg.monte_carlo
    summary = harness.monte_carlo_params(cfg)
    report.write_results_csv(summary.results, out / "trials.csv")
    report.write_traces_csv(summary.results, out / "traces.csv", mc.trace_stride, "thrust")
    report.write_manifest(out / "manifest.json", cfg, seeds={"monte_carlo": summary.seed},
                          summary={"trials": len(summary.results), "success_rate": summary.success_rate,
                                   "alpha_scale": summary.alpha_scale})  # fmt: skip
    if cfg.run.plots:
        figures.mc_params(summary, out / "mc_params_scatter.png", out / "mc_params_performance.png",
                          mc.trace_stride, mc.command)  # fmt: skip
    print(f"mc-params: {sum(summary.verdicts)}/{len(summary.results)} converged ({summary.success_rate:.1%})")
    return 0


def cmd_mc_envelope(cfg, out: Path) -> int:
    mc = cfg.monte_carlo
    summary = harness.monte_carlo_envelope(cfg)
    h, c, ok = harness.envelope_runs(summary)
    rho = None
    if ok.size and (~ok).any() and ok.any():
        rho = float(spearmanr(c, (~ok).astype(float)).statistic)
    report.write_results_csv(summary.results, out / "trials.csv")
    report.write_envelope_runs_csv(summary.results, out / "runs.csv")
    report.write_traces_csv(summary.results, out / "traces.csv", mc.trace_stride, "thrust_over_command")
    report.write_manifest(out / "manifest.json", cfg, seeds={"monte_carlo": summary.seed},
                          summary={"trials": len(summary.results), "success_rate": summary.success_rate,
                                   "run_success_rate": float(ok.mean()) if ok.size else None,
                                   "spearman_command_vs_divergence": rho,
                                   "alpha_scale": summary.alpha_scale})  # fmt: skip
    if cfg.run.plots:
        figures.mc_envelope(summary, out / "mc_envelope_scatter.png", out / "mc_envelope_performance.png", mc.trace_stride)
    print(f"mc-envelope: {sum(summary.verdicts)}/{len(summary.results)} trials converged ({summary.success_rate:.1%})")
    if rho is not None:
        print(f"  spearman(command, diverged) = {rho:.3f}")
    return 0


def cmd_calibrate(cfg, out: Path) -> int:
    cal = harness.calibrate(cfg)
    report.write_manifest(out / "calibration.json", cfg, calibration=cal.to_dict())
    print(f"alpha_scale = {cal.alpha_scale:.6g}")
    print(f"thrust range = [{cal.thrust_range[0]:.3f}, {cal.thrust_range[1]:.3f}] N")
    for ch, (lo, hi) in cal.norm.to_dict().items():
        print(f"  {ch:7s} lo={lo:.6g} hi={hi:.6g}")
    return 0


def cmd_open_loop(cfg, out: Path) -> int:
    cal = harness.calibrate(cfg)
    fields = ("thrust", "pt4", "x_co", "mdot_air", "mdot_f", "phi_g", "t4", "ue", "rdot")
    report._write_rows(out / "open_loop_sweep.csv", ("r0_mm",) + fields,
                       ([r0 * 1e3] + [getattr(o, f) for f in fields] for r0, o in zip(cal.r0_grid, cal.sweep)))  # fmt: skip
    times, r3s, outs = harness.open_loop_trace(cfg, alpha_scale=cal.alpha_scale)
    report._write_rows(out / "open_loop_trace.csv", ("k", "time", "r3_mm") + fields,
                       ([k, t, r3 * 1e3] + [getattr(o, f) for f in fields]
                        for k, (t, r3, o) in enumerate(zip(times, r3s, outs))))  # fmt: skip
    report.write_manifest(out / "manifest.json", cfg, calibration=cal.to_dict())
    if cfg.run.plots:
        figures.open_loop(cal.r0_grid, cal.sweep, out / "open_loop_sweep.png")
    print(f"open-loop: thrust {cal.thrust_range[0]:.2f}..{cal.thrust_range[1]:.2f} N over the cowl range")
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "mc-params": cmd_mc_params,
    "mc-envelope": cmd_mc_envelope,
    "calibrate": cmd_calibrate,
    "open-loop": cmd_open_loop,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration")
    common.add_argument("--seed", type=int, help="controller seed (run/sweep) or Monte Carlo seed")
    common.add_argument("--out", help="output directory (default: run.out_dir)")
    common.add_argument("--trials", type=int, help="Monte Carlo trial count")
    common.add_argument("--parallel", type=int, help="worker processes for Monte Carlo trials")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dmac-sfrj", parents=[common],
                                description="DMAC thrust control of a solid-fuel ramjet model.")  # fmt: skip
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", parents=[common], help="closed-loop step or multi-step run")
    run.add_argument("--reference", help='piecewise command, e.g. "0:100,200:110"')
    run.add_argument("--double-step", action="store_true", help="100 N then 110 N from k=200")
    sub.add_parser("sweep", parents=[common], help="hyperparameter sensitivity sweep")
    sub.add_parser("mc-params", parents=[common], help="Monte Carlo over regression/combustion parameters")
    sub.add_parser("mc-envelope", parents=[common], help="Monte Carlo over altitude and thrust commands")
    sub.add_parser("calibrate", parents=[common], help="normalization bounds and regression scale")
    sub.add_parser("open-loop", parents=[common], help="open-loop cowl sweep and fixed-cowl trace")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command is None:
            args.command = MODE_TO_COMMAND[cfg.mode]
        cfg = _apply_overrides(cfg, args)
        out = Path(cfg.run.out_dir)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        print(f"dmac-sfrj: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dmac-sfrj: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
