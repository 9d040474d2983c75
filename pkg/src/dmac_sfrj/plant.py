"""Quasi-static one-dimensional solid-fuel ramjet with a variable-cowl inlet.

Station numbering: 0 freestream, 2 combustor entrance, 3 fuel port,
4 combustor aft end, e nozzle exit.  The inlet and the combustion
equilibrium are analytic surrogates; everything else follows the usual
one-dimensional cycle relations.  All quantities are SI.

Scalar math is done with :mod:`math` rather than numpy; the plant is
evaluated once per control step inside long Monte Carlo loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

GAMMA_AIR = 1.4
R_AIR = 287.05287  # J/(kg K)
G0 = 9.80665
R_EARTH = 6356766.0  # m, geopotential reference radius of the 1976 standard
_GMR = 0.034163195  # g0 * M0 / R*, K/m

# 1976 standard layers 0-3: (base geopotential height m, base T K, lapse K/m)
_LAYERS = (
    (0.0, 288.15, -0.0065),
    (11000.0, 216.65, 0.0),
    (20000.0, 216.65, 0.001),
    (32000.0, 228.65, 0.0028),
)
_H_TOP = 47000.0


class PlantInfeasible(ArithmeticError):
    """The cycle has no physical solution at the requested point."""


def _layer_pressure(p_base, t_base, lapse, dh):
    if lapse == 0.0:
        return p_base * math.exp(-_GMR * dh / t_base)
    return p_base * (t_base / (t_base + lapse * dh)) ** (_GMR / lapse)


def _base_pressures():
    out = [101325.0]
    for (h0, t0, lapse), (h1, _, _) in zip(_LAYERS[:-1], _LAYERS[1:]):
        out.append(_layer_pressure(out[-1], t0, lapse, h1 - h0))
    return tuple(out)


_P_BASE = _base_pressures()


def geometric_to_geopotential(h: float) -> float:
    return R_EARTH * h / (R_EARTH + h)


def standard_atmosphere(h: float, geopotential: bool = False) -> tuple[float, float]:
    """Static ``(pressure Pa, temperature K)`` of the 1976 US Standard Atmosphere.

    ``h`` is geometric altitude unless ``geopotential`` is set.  Only the
    first four layers (up to 47 km geopotential) are tabulated.
    """
    if not (0.0 <= h <= _H_TOP):
        raise ValueError(f"altitude {h} m outside [0, {_H_TOP}] m")
    hg = h if geopotential else geometric_to_geopotential(h)
    i = len(_LAYERS) - 1
    while hg < _LAYERS[i][0]:
        i -= 1
    hb, tb, lapse = _LAYERS[i]
    dh = hg - hb
    return _layer_pressure(_P_BASE[i], tb, lapse, dh), tb + lapse * dh


def total_ratios(mach: float, gamma: float = GAMMA_AIR) -> tuple[float, float]:
    """``(Tt/T, Pt/P)`` for isentropic flow."""
    tr = 1.0 + 0.5 * (gamma - 1.0) * mach * mach
    return tr, tr ** (gamma / (gamma - 1.0))


@dataclass(frozen=True)
class FlightCondition:
    mach: float
    altitude: float
    p0: float
    t0: float
    pt0: float
    tt0: float
    u0: float

    @classmethod
    def at(cls, mach: float = 3.25, altitude: float = 30000.0) -> "FlightCondition":
        p0, t0 = standard_atmosphere(altitude)
        tr, pr = total_ratios(mach)
        u0 = mach * math.sqrt(GAMMA_AIR * R_AIR * t0)
        return cls(mach, altitude, p0, t0, p0 * pr, t0 * tr, u0)

    @property
    def rho0(self) -> float:
        return self.p0 / (R_AIR * self.t0)


@dataclass(frozen=True)
class SfrjGeometry:
    r0_min: float = 0.04788
    r0_max: float = 0.05928
    r0_nominal: float = 0.05358
    r2: float = 0.0467
    r3_init: float = 0.0592
    r3_max: float = 0.0686
    rt: float = 0.0504
    lf: float = 0.5

    def __post_init__(self):
        radii = (self.r0_min, self.r0_max, self.r2, self.r3_init, self.r3_max, self.rt)
        if min(radii) <= 0.0 or self.lf <= 0.0:
            raise ValueError("geometry lengths must be positive")
        if not self.r3_init < self.r3_max:
            raise ValueError("r3_init must be below r3_max")
        if not self.r0_min < self.r0_max:
            raise ValueError("r0_min must be below r0_max")


# C4H6 + 5.5 O2 -> 4 CO2 + 3 H2O, air 23.2 % O2 by mass
F_STOICH_C4H6 = 54.09 / (5.5 * 32.0 / 0.232)
ALPHA_NOMINAL = 4.44e-7


@dataclass(frozen=True)
class FuelModel:
    """Fuel grain, regression law and combustion/nozzle surrogate parameters.

    The regression rate is ``alpha_scale * alpha * G**a * P4**b * Tt2**c``.
    ``alpha_scale`` is the calibration multiplier found by the harness.
    """

    rho_f: float = 900.0
    alpha: float = ALPHA_NOMINAL
    alpha_scale: float = 1.0
    a: float = 0.8
    b: float = 0.1
    c: float = 0.25
    f_stoich: float = F_STOICH_C4H6
    eta_c: float = 0.75
    eta_n: float = 0.95
    f_darcy: float = 0.03
    m2: float = 0.3
    dt_peak: float = 2100.0
    x_co_max: float = 0.15
    co_center: float = 1.0
    co_width: float = 0.25
    gamma_lo: tuple[float, float] = (1000.0, 1.33)
    gamma_hi: tuple[float, float] = (2800.0, 1.25)
    r4: float = 288.0

    def __post_init__(self):
        if not (0.0 < self.eta_c <= 1.0):
            raise ValueError(f"eta_c must lie in (0, 1], got {self.eta_c}")
        if not (0.0 < self.eta_n <= 1.0):
            raise ValueError(f"eta_n must lie in (0, 1], got {self.eta_n}")
        if self.rho_f <= 0.0 or self.alpha <= 0.0 or self.alpha_scale <= 0.0:
            raise ValueError("rho_f, alpha and alpha_scale must be positive")

    @property
    def alpha_eff(self) -> float:
        return self.alpha * self.alpha_scale

    def with_(self, **kw) -> "FuelModel":
        return replace(self, **kw)


# ---- cycle pieces ---------------------------------------------------------


def inlet_surrogate(r0: float, fc: FlightCondition, m2: float = 0.3) -> tuple[float, float, float, float]:
    """Full-capture inlet with MIL-E-5008B pressure recovery.

    Returns ``(mdot_air, pt2, tt2, m2)``.
    """
    mdot = fc.rho0 * fc.u0 * math.pi * r0 * r0
    eta_r = 1.0 - 0.075 * (fc.mach - 1.0) ** 1.35 if fc.mach > 1.0 else 1.0
    return mdot, eta_r * fc.pt0, fc.tt0, m2


def port_flow_and_pressure(mdot_air, pt2, tt2, m2, r3, lf, f_darcy=0.03):
    """Port mass flux and aft pressure after the friction loss.

    Returns ``(g, p4, rho3, u3)``.
    """
    if r3 <= 0.0:
        raise ValueError("port radius must be positive")
    g = mdot_air / (math.pi * r3 * r3)
    tr, pr = total_ratios(m2)
    t2 = tt2 / tr
    p2 = pt2 / pr
    rho3 = p2 / (R_AIR * t2)
    u3 = g / rho3
    dpt = 0.25 * f_darcy * (lf / (2.0 * r3)) * 0.5 * rho3 * u3 * u3
    p4 = pt2 - dpt
    if p4 <= 0.0:
        raise PlantInfeasible(f"friction loss {dpt:.1f} Pa exceeds pt2 {pt2:.1f} Pa")
    return g, p4, rho3, u3


def regression_rate(g: float, p4: float, tt2: float, fm: FuelModel) -> float:
    if g <= 0.0 or p4 <= 0.0 or tt2 <= 0.0:
        raise ValueError("regression law needs positive mass flux, pressure and temperature")
    return fm.alpha_eff * g**fm.a * p4**fm.b * tt2**fm.c


def fuel_flow(r3: float, lf: float, rho_f: float, rdot: float) -> float:
    return 2.0 * math.pi * r3 * lf * rho_f * rdot


def equivalence_ratio(mdot_f: float, mdot_air: float, f_stoich: float) -> float:
    if mdot_air <= 0.0 or f_stoich <= 0.0:
        raise ValueError("mdot_air and f_stoich must be positive")
    return (mdot_f / mdot_air) / f_stoich


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def heat_release_shape(phi: float) -> float:
    return phi * (2.0 - phi) if 0.0 <= phi <= 2.0 else 0.0


def equilibrium_surrogate(phi_g: float, t2: float, p4: float, fm: FuelModel) -> tuple[float, float, float, float]:
    """Smooth stand-in for an equilibrium solver at the aft mixing end.

    Returns ``(t4_eq, gamma4, r4, x_co)``.  ``p4`` is accepted for interface
    parity and has no effect on the surrogate.
    """
    if phi_g < 0.0:
        raise ValueError("equivalence ratio must be non-negative")
    t4_eq = t2 + fm.dt_peak * heat_release_shape(phi_g)
    s0 = _sigmoid(-fm.co_center / fm.co_width)
    s = _sigmoid((phi_g - fm.co_center) / fm.co_width)
    x_co = fm.x_co_max * (s - s0) / (1.0 - s0)
    (t_lo, g_lo), (t_hi, g_hi) = fm.gamma_lo, fm.gamma_hi
    frac = min(max((t4_eq - t_lo) / (t_hi - t_lo), 0.0), 1.0)
    gamma4 = g_lo + frac * (g_hi - g_lo)
    return t4_eq, gamma4, fm.r4, x_co


def aft_temperature(t4_eq: float, t2: float, eta_c: float) -> float:
    return eta_c * (t4_eq - t2) + t2


def exhaust_velocity(gamma4, r4, tt4, p0, pt4, eta_n) -> float:
    """Nozzle exit velocity with ``eta_n`` applied as a velocity coefficient."""
    if gamma4 <= 1.0:
        raise ValueError("gamma4 must exceed 1")
    if pt4 < p0:
        raise PlantInfeasible(f"aft pressure {pt4:.1f} Pa below ambient {p0:.1f} Pa")
    expo = (gamma4 - 1.0) / gamma4
    u_th2 = 2.0 * gamma4 * r4 * tt4 / (gamma4 - 1.0) * (1.0 - (p0 / pt4) ** expo)
    return eta_n * math.sqrt(max(u_th2, 0.0))


def thrust(mdot_air: float, f: float, ue: float, u0: float) -> float:
    return mdot_air * (1.0 + f) * ue - mdot_air * u0


# ---- assembled plant ------------------------------------------------------


@dataclass(frozen=True)
class PlantState:
    r3: float
    time: float = 0.0
    burned_out: bool = False


@dataclass(frozen=True)
class PlantOutputs:
    thrust: float
    pt4: float
    x_co: float
    mdot_air: float
    mdot_f: float
    phi_g: float
    t4: float
    ue: float
    rdot: float


def evaluate(r0: float, r3: float, geom: SfrjGeometry, fm: FuelModel, fc: FlightCondition) -> PlantOutputs:
    """Evaluate the full quasi-static chain at cowl radius ``r0`` and port radius ``r3``."""
    mdot_air, pt2, tt2, m2 = inlet_surrogate(r0, fc, fm.m2)
    g, p4, _, _ = port_flow_and_pressure(mdot_air, pt2, tt2, m2, r3, geom.lf, fm.f_darcy)
    rdot = regression_rate(g, p4, tt2, fm)
    mdot_f = fuel_flow(r3, geom.lf, fm.rho_f, rdot)
    phi = equivalence_ratio(mdot_f, mdot_air, fm.f_stoich)
    t2 = tt2 / total_ratios(m2)[0]
    t4_eq, gamma4, r4, x_co = equilibrium_surrogate(phi, t2, p4, fm)
    t4 = aft_temperature(t4_eq, t2, fm.eta_c)
    ue = exhaust_velocity(gamma4, r4, t4, fc.p0, p4, fm.eta_n)
    f = mdot_f / mdot_air
    return PlantOutputs(
        thrust=thrust(mdot_air, f, ue, fc.u0),
        pt4=p4,
        x_co=x_co,
        mdot_air=mdot_air,
        mdot_f=mdot_f,
        phi_g=phi,
        t4=t4,
        ue=ue,
        rdot=rdot,
    )


def plant_step(st: PlantState, r0: float, dt: float, geom: SfrjGeometry, fm: FuelModel, fc: FlightCondition):
    """Evaluate outputs at the current port radius, then burn for ``dt``.

    Returns ``(outputs, new_state)``.
    """
    if st.burned_out:
        raise RuntimeError("grain is burned out")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    out = evaluate(r0, st.r3, geom, fm, fc)
    r3 = st.r3 + out.rdot * dt
    burned = r3 >= geom.r3_max
    return out, PlantState(r3=min(r3, geom.r3_max), time=st.time + dt, burned_out=burned)


def feasible_thrust_range(fc: FlightCondition, geom: SfrjGeometry, fm: FuelModel, n_samples: int = 64, r3: float | None = None):
    """Min and max thrust over a uniform cowl sweep at the initial port radius."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    r3 = geom.r3_init if r3 is None else r3
    vals = []
    for i in range(n_samples):
        r0 = geom.r0_min + (geom.r0_max - geom.r0_min) * i / (n_samples - 1)
        try:
            vals.append(evaluate(r0, r3, geom, fm, fc).thrust)
        except PlantInfeasible:
            continue
    if not vals:
        raise PlantInfeasible("every sample of the cowl sweep is infeasible")
    return min(vals), max(vals)
