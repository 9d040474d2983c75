"""Discrete linear-quadratic-integral gain synthesis.

The identified one-step model is augmented with an output-error integrator
and an infinite-horizon LQR gain is computed from the discrete algebraic
Riccati equation (DARE).  Exported gains follow the positive-feedback sign
convention ``u = K_xi xi + K_q q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


class DareError(ArithmeticError):
    """The Riccati iteration failed to produce a valid solution."""


@dataclass(frozen=True)
class LqiWeights:
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        r1 = np.atleast_2d(np.asarray(self.r1, dtype=float))
        r2 = np.atleast_2d(np.asarray(self.r2, dtype=float))
        if not np.allclose(r1, r1.T) or np.linalg.eigvalsh(r1).min() < -1e-12:
            raise ValueError("r1 must be symmetric positive semidefinite")
        if not np.allclose(r2, r2.T) or np.linalg.eigvalsh(r2).min() <= 0.0:
            raise ValueError("r2 must be symmetric positive definite")
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)

    @classmethod
    def scaled_identity(cls, n_aug: int, n_u: int, r1_scale: float = 1.0, r2_scale: float = 1.0) -> "LqiWeights":
        return cls(r1_scale * np.eye(n_aug), r2_scale * np.eye(n_u))


@dataclass(frozen=True)
class LqiGains:
    k_xi: np.ndarray
    k_q: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.hstack([self.k_xi, self.k_q])

    @classmethod
    def zeros(cls, l_xi: int, l_u: int = 1, l_y: int = 1) -> "LqiGains":
        return cls(np.zeros((l_u, l_xi)), np.zeros((l_u, l_y)))


def augment(a, b, c) -> tuple[np.ndarray, np.ndarray]:
    """Append an integrator ``q[k+1] = q[k] - C xi[k]`` to ``(A, B)``.

    The reference is an exogenous offset and is left out of the synthesis
    model.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n, m = b.shape
    ly = c.shape[0]
    a_bar = np.zeros((n + ly, n + ly))
    a_bar[:n, :n] = a
    a_bar[n:, :n] = -c
    a_bar[n:, n:] = np.eye(ly)
    b_bar = np.zeros((n + ly, m))
    b_bar[:n] = b
    return a_bar, b_bar


def dare_residual(a, b, q, r, p) -> float:
    bp = b.T @ p
    gain_term = (a.T @ p @ b) @ np.linalg.solve(r + bp @ b, bp @ a)
    res = a.T @ p @ a - gain_term + q - p
    return float(np.linalg.norm(res, "fro"))


def _sda(a, g, h, tol, max_iter):
    n = a.shape[0]
    eye = np.eye(n)
    for _ in range(max_iter):
        try:
            sol = np.linalg.solve(eye + g @ h, np.hstack((a, g)))
        except np.linalg.LinAlgError:
            return None
        wa, wg = sol[:, :n], sol[:, n:]
        h_next = h + a.T @ h @ wa
        g = g + a @ wg @ a.T
        a = a @ wa
        h_next = 0.5 * (h_next + h_next.T)
        if not np.isfinite(h_next).all():
            return None
        step = h_next - h
        step_norm = math.sqrt((step * step).sum())
        h_norm = math.sqrt((h_next * h_next).sum())
        if not math.isfinite(step_norm) or not math.isfinite(h_norm):
            return None
        if step_norm <= tol * (1.0 + h_norm):
            return h_next
        h = h_next
    return None


def _value_iteration(a, b, q, r, tol, max_iter, damping=1.0):
    p = q.copy()
    for _ in range(max_iter):
        bp = b.T @ p
        p_new = a.T @ p @ a - (a.T @ p @ b) @ np.linalg.solve(r + bp @ b, bp @ a) + q
        p_new = 0.5 * (p_new + p_new.T)
        p_new = (1.0 - damping) * p + damping * p_new
        if not np.all(np.isfinite(p_new)):
            return None
        if np.linalg.norm(p_new - p) <= tol * (1.0 + np.linalg.norm(p_new)):
            return p_new
        p = p_new
    return None


def solve_dare(a, b, q, r, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Solve ``P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q``.

    Structure-preserving doubling first; plain value iteration from ``P = Q``
    if doubling breaks down.  The answer is accepted only when its residual is
    within ``tol * (1 + ||P||_F)`` and it is positive semidefinite.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))

    g = b @ np.linalg.solve(r, b.T)
    # divergent iterates on unstabilizable pairs overflow; the finiteness checks handle that
    with np.errstate(over="ignore", invalid="ignore"):
        p = _sda(a, g, q, tol, max_iter)
        if p is None or not _acceptable(a, b, q, r, p, tol):
            p = _value_iteration(a, b, q, r, tol, max_iter)
            if p is None:
                raise DareError("Riccati iteration did not converge")
            if not _acceptable(a, b, q, r, p, tol):
                raise DareError("Riccati solution failed the residual/PSD check")
    return p


def _acceptable(a, b, q, r, p, tol) -> bool:
    scale = 1.0 + np.linalg.norm(p, "fro")
    res = dare_residual(a, b, q, r, p)
    if not (np.isfinite(scale) and res <= tol * scale):
        return False
    return np.linalg.eigvalsh(p).min() >= -1e-10 * scale


def lqi_gains(a, b, c, weights: LqiWeights, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LqiGains:
    """LQI gains for the identified ``(A, B)`` with output map ``C``.

    Raises :class:`DareError` when no stabilizing gain is found.  With
    ``B = 0`` there is no control authority and the zero gain is returned.
    """
    a_bar, b_bar = augment(a, b, c)
    n = np.atleast_2d(a).shape[0]
    if not np.any(b_bar):
        m = b_bar.shape[1]
        return LqiGains(np.zeros((m, n)), np.zeros((m, a_bar.shape[0] - n)))

    p = solve_dare(a_bar, b_bar, weights.r1, weights.r2, tol, max_iter)
    bp = b_bar.T @ p
    k = np.linalg.solve(weights.r2 + bp @ b_bar, bp @ a_bar)
    closed = a_bar - b_bar @ k
    if np.max(np.abs(np.linalg.eigvals(closed))) >= 1.0:
        raise DareError("synthesized gain does not stabilize the augmented model")
    return LqiGains(k_xi=-k[:, :n], k_q=-k[:, n:])
