"""Dynamic mode adaptive control (DMAC) for a quasi-static solid-fuel ramjet model.

Modules:

* :mod:`~dmac_sfrj.sysid`: recursive least-squares identification of ``[A B]``
* :mod:`~dmac_sfrj.lqi`: discrete Riccati solver and LQI gain synthesis
* :mod:`~dmac_sfrj.dmac`: the adaptive controller and the cowl actuator map
* :mod:`~dmac_sfrj.plant`: atmosphere, inlet, combustor and nozzle surrogates
* :mod:`~dmac_sfrj.harness`: calibration, closed-loop runs, sweeps and Monte Carlo
"""

from .dmac import DmacController, NormalizationMap, control_to_cowl
from .lqi import DareError, LqiGains, LqiWeights, lqi_gains, solve_dare
from .plant import FlightCondition, FuelModel, PlantOutputs, PlantState, SfrjGeometry, evaluate, plant_step
from .sysid import RlsEstimator, extract_ab, new_estimator, rls_update

__version__ = "0.1.0"

__all__ = [
    "DareError",
    "DmacController",
    "FlightCondition",
    "FuelModel",
    "LqiGains",
    "LqiWeights",
    "NormalizationMap",
    "PlantOutputs",
    "PlantState",
    "RlsEstimator",
    "SfrjGeometry",
    "control_to_cowl",
    "evaluate",
    "extract_ab",
    "lqi_gains",
    "new_estimator",
    "plant_step",
    "rls_update",
    "solve_dare",
]
