"""Experiment configuration: a YAML tree mapped onto nested dataclasses."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

MODES = ("single-step", "double-step", "sensitivity", "mc-params", "mc-envelope", "open-loop-sweep", "calibrate")


class ConfigError(ValueError):
    pass


@dataclass
class PlantConfig:
    mach: float = 3.25
    altitude: float = 30000.0
    dt: float = 0.01
    # FuelModel / SfrjGeometry overrides, keyed by field name
    fuel: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    # None: solve for it so the nominal cowl produces calibration_thrust
    alpha_scale: float | None = None
    calibration_thrust: float = 105.0
    alpha_scale_bounds: tuple[float, float] = (0.5, 1.5)
    calibration_points: int = 64
    calibration_widen: float = 0.1


@dataclass
class ControllerConfig:
    r_theta: float = 1e2
    lam: float = 0.999
    r1: float = 1.0
    r2: float = 1.0
    sigma_v: float = 1e-3
    seed: int = 0
    q_limit: float = 50.0
    adapt: bool = True
    dare_tol: float = 1e-10
    dare_max_iter: int = 200


@dataclass
class RunConfig:
    steps: int = 1000
    # piecewise-constant command: [[start_step, thrust_N], ...]
    reference: list = field(default_factory=lambda: [[0, 100.0]])
    converge_window: float = 0.1
    converge_tol: float = 0.02
    out_dir: str = "out"
    plots: bool = True


@dataclass
class MonteCarloConfig:
    trials: int = 200
    parallel: int = 1
    seed: int = 2025
    alpha_mean: float = 4.44e-7
    alpha_std: float = 4.44e-8
    eta_c_mean: float = 0.75
    eta_c_std: float = 0.05
    command: float = 100.0
    altitude_range: tuple[float, float] = (23000.0, 36000.0)
    commands_per_trial: int = 5
    command_margin: float = 0.05
    trace_stride: int = 10


def _default_grids():
    return {
        "r_theta": [1.0, 1e1, 1e2, 1e3, 1e4],
        "lam": [0.9, 0.95, 0.99, 0.995, 0.999, 1.0],
        "r1": [1e-2, 1e-1, 1.0, 1e1, 1e2],
        "r2": [1e-2, 1e-1, 1.0, 1e1, 1e2],
    }


@dataclass
class SweepConfig:
    grids: dict = field(default_factory=_default_grids)


@dataclass
class ExperimentConfig:
    mode: str = "single-step"
    plant: PlantConfig = field(default_factory=PlantConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    run: RunConfig = field(default_factory=RunConfig)
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.run.steps < 1:
            raise ConfigError("run.steps must be >= 1")
        if self.plant.dt <= 0:
            raise ConfigError("plant.dt must be positive")
        if not (0.0 < self.controller.lam <= 1.0):
            raise ConfigError("controller.lam must lie in (0, 1]")
        for name in ("r_theta", "r1", "r2"):
            if getattr(self.controller, name) <= 0:
                raise ConfigError(f"controller.{name} must be positive")
        if self.controller.sigma_v < 0:
            raise ConfigError("controller.sigma_v must be non-negative")
        from .harness import ReferenceSpec  # validation lives with the type

        try:
            ReferenceSpec.from_list(self.run.reference)
        except ValueError as exc:
            raise ConfigError(f"run.reference: {exc}") from None
        if self.monte_carlo.trials < 1:
            raise ConfigError("monte_carlo.trials must be >= 1")
        return self

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def content_hash(self) -> str:
        """Git blob hash of the canonical JSON form of the config."""
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        # YAML 1.1 reads "1e2" as a string
        if isinstance(value, str) and (isinstance(current, float) or current is None):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f"{where}.{name}: expected a number, got {value!r}") from None
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(current, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "config").validate()


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return from_dict(data)
