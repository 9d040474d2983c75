"""Seeded LTI surrogate used in place of the ramjet for controller checks."""

from types import SimpleNamespace

import numpy as np

from dmac_sfrj.dmac import DmacController, NormalizationMap

IDENTITY_NORM = NormalizationMap((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


def stable_lti(seed, rho=0.8):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    a *= rho / max(abs(np.linalg.eigvals(a)))
    b = rng.normal(size=(3, 1))
    return a, b


def run_lti_loop(seed, steps=1000, reference=0.5, dither_off_at=600, **ctrl_kw):
    """DMAC on ``x+ = A x + B u`` with all states measured; returns z and u histories."""
    a, b = stable_lti(seed)
    ctrl = DmacController(IDENTITY_NORM, seed=seed, **ctrl_kw)
    x = np.zeros(3)
    zs, us = np.empty(steps), np.empty(steps)
    for k in range(steps):
        if dither_off_at is not None and k == dither_off_at:
            ctrl.sigma_v = 0.0
        u, diag = ctrl.step(reference, SimpleNamespace(pt4=x[0], x_co=x[1], thrust=x[2]))
        zs[k], us[k] = diag.z, u
        x = a @ x + b[:, 0] * u
    return zs, us
