"""Dynamic mode adaptive controller.

Each step normalizes the measurements, refines the one-step linear model by
RLS, redesigns the LQI gains on the refreshed model and applies

    u_k = K_xi xi_k + K_q q_k + v_k,   q_{k+1} = q_k + (r_k - y_k)

with ``v_k`` Gaussian dither.  Everything here is in normalized units; only
:func:`control_to_cowl` touches the physical actuator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lqi import DEFAULT_MAX_ITER, DEFAULT_TOL, DareError, LqiGains, LqiWeights, lqi_gains
from .sysid import extract_ab, new_estimator, rls_update

CHANNELS = ("pt4", "x_co", "thrust")
R0_NOMINAL = 0.05358
R0_BOUNDS = (0.04788, 0.05928)
COWL_GAIN = 0.001  # m of cowl radius per unit control
Q_LIMIT = 50.0


def normalize(x, lo, hi):
    """Symmetric min-max map of ``[lo, hi]`` onto ``[-1, 1]``."""
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def denormalize(x, lo, hi):
    return lo + 0.5 * (x + 1.0) * (hi - lo)


@dataclass(frozen=True)
class NormalizationMap:
    """Per-channel physical bounds for ``(pt4, x_co, thrust)``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(CHANNELS) or len(hi) != len(CHANNELS):
            raise ValueError(f"need bounds for channels {CHANNELS}")
        for name, a, b in zip(CHANNELS, lo, hi):
            if not (math.isfinite(a) and math.isfinite(b) and b > a):
                raise ValueError(f"channel {name}: need finite hi > lo, got ({a}, {b})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def xi(self, pt4: float, x_co: float, thrust: float) -> np.ndarray:
        return np.array([normalize(v, a, b) for v, a, b in zip((pt4, x_co, thrust), self.lo, self.hi)])

    def thrust(self, value: float) -> float:
        return normalize(value, self.lo[2], self.hi[2])

    def thrust_physical(self, value: float) -> float:
        return denormalize(value, self.lo[2], self.hi[2])

    def to_dict(self) -> dict:
        return {ch: [a, b] for ch, a, b in zip(CHANNELS, self.lo, self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationMap":
        return cls(tuple(d[ch][0] for ch in CHANNELS), tuple(d[ch][1] for ch in CHANNELS))


def control_to_cowl(u: float, r0_nominal: float = R0_NOMINAL, bounds=R0_BOUNDS) -> tuple[float, bool]:
    """Map the control signal to a cowl radius in metres, clamped to the hardware range.

    Returns ``(r0, saturated)``.
    """
    r0 = r0_nominal - COWL_GAIN * u
    lo, hi = bounds
    if r0 < lo:
        return lo, True
    if r0 > hi:
        return hi, True
    return r0, False


def control_bounds(r0_nominal: float = R0_NOMINAL, bounds=R0_BOUNDS) -> tuple[float, float]:
    """Range of ``u`` that maps inside the cowl limits."""
    lo, hi = bounds
    return (r0_nominal - hi) / COWL_GAIN, (r0_nominal - lo) / COWL_GAIN


class MeasurementError(ValueError):
    """A measurement was not finite; the controller refuses the step."""


@dataclass
class StepDiagnostics:
    xi: np.ndarray
    u: float
    v: float
    z: float
    q: float
    gains: LqiGains
    synthesis_failed: bool
    theta: np.ndarray


@dataclass
class DmacController:
    """Sequential DMAC state machine for a single trial.

    ``u_bounds``, when given, is the range of ``u`` the actuator can realize;
    the clipped value is what enters the regressor.  With ``adapt=False`` the
    identifier is frozen at zero and the loop runs open with pure dither.
    """

    norm: NormalizationMap
    r_theta: float = 1e2
    lam: float = 0.999
    r1_scale: float = 1.0
    r2: float = 1.0
    sigma_v: float = 1e-3
    seed: int | np.random.SeedSequence = 0
    u_bounds: tuple[float, float] | None = None
    q_limit: float = Q_LIMIT
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    adapt: bool = True
    c: np.ndarray = field(default_factory=lambda: np.array([[0.0, 0.0, 1.0]]))

    def __post_init__(self):
        l_xi = len(CHANNELS)
        self.estimator = new_estimator(l_xi, 1, self.r_theta, self.lam)
        self.weights = LqiWeights.scaled_identity(l_xi + 1, 1, self.r1_scale, self.r2)
        self.rng = np.random.default_rng(self.seed)
        self.q = np.zeros(1)
        self.last_gains = LqiGains.zeros(l_xi)
        self.prev_phi: np.ndarray | None = None
        self.k = 0

    def step(self, r_k: float, meas) -> tuple[float, StepDiagnostics]:
        """Advance one sample given the command (N) and the plant measurements.

        ``meas`` is anything with ``pt4``, ``x_co`` and ``thrust`` attributes,
        normally :class:`~dmac_sfrj.plant.PlantOutputs`.
        """
        pt4, x_co, thrust = meas.pt4, meas.x_co, meas.thrust
        if not all(math.isfinite(v) for v in (r_k, pt4, x_co, thrust)):
            raise MeasurementError(f"non-finite input at step {self.k}")
        xi = self.norm.xi(pt4, x_co, thrust)
        if self.adapt and self.prev_phi is not None:
            rls_update(self.estimator, xi, self.prev_phi)

        a, b = extract_ab(self.estimator)
        failed = False
        try:
            gains = lqi_gains(a, b, self.c, self.weights, self.tol, self.max_iter)
        except (DareError, np.linalg.LinAlgError):
            gains, failed = self.last_gains, True
        self.last_gains = gains

        v = self.sigma_v * self.rng.standard_normal() if self.sigma_v > 0.0 else 0.0
        u = float(gains.k_xi[0] @ xi + gains.k_q[0] @ self.q) + v

        z = self.norm.thrust(r_k) - xi[2]
        q_now = float(self.q[0])
        self.q = np.clip(self.q + z, -self.q_limit, self.q_limit)

        u_applied = u if self.u_bounds is None else min(max(u, self.u_bounds[0]), self.u_bounds[1])
        self.prev_phi = np.append(xi, u_applied)
        self.k += 1
        diag = StepDiagnostics(
            xi=xi, u=u, v=v, z=z, q=q_now, gains=gains, synthesis_failed=failed, theta=self.estimator.theta.copy()
        )
        return u, diag
