"""CSV / JSON emission.

Files are written deterministically: floats use ``repr``, JSON keys are
sorted, and nothing time- or host-dependent is recorded, so a rerun with the
same configuration and seed reproduces every byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .harness import RECORD_FIELDS, THETA_SHAPE, SimRecord, TrialResult

THETA_FIELDS = tuple(f"theta_{i}{j}" for i in range(THETA_SHAPE[0]) for j in range(THETA_SHAPE[1]))
RECORD_HEADER = RECORD_FIELDS + THETA_FIELDS


class EmitError(OSError):
    pass


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_records_csv(records: list[SimRecord], path) -> Path:
    """One row per simulation step; Theta flattened row-major into ``theta_ij``."""

    def rows():
        for rec in records:
            yield [getattr(rec, f) for f in RECORD_FIELDS] + list(rec.theta)

    return _write_rows(path, RECORD_HEADER, rows())


def read_records_csv(path) -> dict[str, np.ndarray]:
    """Column arrays from a records CSV (used to re-derive verdicts)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
    return cols


def write_error_curve_csv(curves: dict[str, np.ndarray], path) -> Path:
    """Long format ``run, step, abs_z`` for log-scale error plots."""

    def rows():
        for run in sorted(curves):
            for k, z in enumerate(np.asarray(curves[run], dtype=float)):
                yield [run, k, abs(z)]

    return _write_rows(path, ("run", "step", "abs_z"), rows())


def _param_keys(results: list[TrialResult]) -> list[str]:
    keys = set()
    for r in results:
        keys.update(k for k, v in r.params.items() if not isinstance(v, (list, tuple)))
    return sorted(keys)


def write_results_csv(results: list[TrialResult], path) -> Path:
    keys = _param_keys(results)
    header = ["index", "converged", "terminal_error", "threshold", "steps_run", "diverged_reason"] + keys

    def rows():
        for r in results:
            yield [r.index, r.converged, r.terminal_error, r.threshold, r.steps_run, r.diverged_reason] + [
                r.params.get(k) for k in keys
            ]

    return _write_rows(path, header, rows())


def write_envelope_runs_csv(results: list[TrialResult], path) -> Path:
    """One row per commanded step inside each envelope trial."""

    def rows():
        for r in results:
            p = r.params
            for j, (c, ok, err) in enumerate(zip(p.get("commands", []), p.get("run_converged", []), p.get("run_errors", []))):
                yield [r.index, j, p["altitude"], p.get("t_min"), p.get("t_max"), c, ok, err]

    header = ("trial", "run", "altitude", "t_min", "t_max", "command", "converged", "terminal_error")
    return _write_rows(path, header, rows())


def write_traces_csv(results: list[TrialResult], path, stride: int, value_name: str = "y") -> Path:
    """Long-format decimated traces: ``trial, run, step, value``."""

    def rows():
        for r in results:
            if r.trace is None:
                continue
            tr = np.atleast_2d(r.trace)
            for j, line in enumerate(tr):
                for i, v in enumerate(line):
                    yield [r.index, j, i * stride, v]

    return _write_rows(path, ("trial", "run", "step", value_name), rows())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_manifest(path, config, **sections) -> Path:
    """JSON manifest: resolved config, its content hash, and any extra sections."""
    body = {"config": config.to_dict(), "config_hash": config.content_hash()}
    body.update(sections)
    path = Path(path)
    with _open(path) as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
