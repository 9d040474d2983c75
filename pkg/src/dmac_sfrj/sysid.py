"""Online identification of one-step linear dynamics by recursive least squares.

The estimator fits ``xi[k+1] = A xi[k] + B u[k]`` by minimizing an
exponentially weighted, regularized least-squares cost.  ``theta`` holds the
stacked ``[A B]`` and ``covariance`` the inverse information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA_MIN = 1e-12
COND_MAX = 1e12


class DegenerateUpdateError(FloatingPointError):
    """Raised when the RLS gain denominator is numerically zero."""


def _check_spd(m: np.ndarray, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-14):
        raise ValueError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


@dataclass
class RlsEstimator:
    l_xi: int
    l_u: int
    theta: np.ndarray
    covariance: np.ndarray
    lam: float
    step_count: int = 0
    resets: int = 0
    cov0: np.ndarray = field(repr=False, default=None)

    @property
    def n_reg(self) -> int:
        return self.l_xi + self.l_u


def new_estimator(l_xi: int, l_u: int, r_theta, lam: float) -> RlsEstimator:
    """Start an estimator at ``theta = 0`` and ``covariance = inv(r_theta)``.

    ``r_theta`` may be a full matrix or a positive scalar (taken as a multiple
    of the identity).
    """
    if l_xi < 1 or l_u < 1:
        raise ValueError("l_xi and l_u must be positive")
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")
    n = l_xi + l_u
    r = np.asarray(r_theta, dtype=float)
    if r.ndim == 0:
        r = float(r) * np.eye(n)
    if r.shape != (n, n):
        raise ValueError(f"r_theta must be {n}x{n}, got {r.shape}")
    _check_spd(r, "r_theta")
    p0 = np.linalg.inv(r)
    p0 = 0.5 * (p0 + p0.T)
    return RlsEstimator(
        l_xi=l_xi,
        l_u=l_u,
        theta=np.zeros((l_xi, n)),
        covariance=p0.copy(),
        lam=float(lam),
        cov0=p0,
    )


def rls_update(est: RlsEstimator, xi_next, phi_prev) -> RlsEstimator:
    """Fold one data pair ``(phi[k-1], xi[k])`` into the estimate, in place.

    Returns ``est`` for chaining.
    """
    xi_next = np.asarray(xi_next, dtype=float).reshape(-1)
    phi = np.asarray(phi_prev, dtype=float).reshape(-1)
    if xi_next.shape[0] != est.l_xi or phi.shape[0] != est.n_reg:
        raise ValueError(
            f"expected xi of length {est.l_xi} and phi of length {est.n_reg}, "
            f"got {xi_next.shape[0]} and {phi.shape[0]}"
        )
    if not (np.all(np.isfinite(xi_next)) and np.all(np.isfinite(phi))):
        raise ValueError("non-finite data passed to rls_update")

    lam = est.lam
    p_prev = est.covariance
    p_phi = p_prev @ phi
    gamma = lam + phi @ p_phi
    if not gamma > GAMMA_MIN:
        raise DegenerateUpdateError(f"gamma_k = {gamma!r} below {GAMMA_MIN}")

    p = (p_prev - np.outer(p_phi, p_phi) / gamma) / lam
    p = 0.5 * (p + p.T)

    innovation = xi_next - est.theta @ phi
    est.theta = est.theta + np.outer(innovation, p @ phi)

    # windup guard: keep theta, restart the covariance
    if np.linalg.cond(p) > COND_MAX:
        p = est.cov0.copy()
        est.resets += 1
    est.covariance = p
    est.step_count += 1
    return est


def extract_ab(est: RlsEstimator) -> tuple[np.ndarray, np.ndarray]:
    return est.theta[:, : est.l_xi].copy(), est.theta[:, est.l_xi :].copy()


def predict(est: RlsEstimator, xi, u) -> np.ndarray:
    phi = np.concatenate([np.atleast_1d(xi), np.atleast_1d(u)]).astype(float)
    return est.theta @ phi


def batch_minimizer(phis: np.ndarray, xis: np.ndarray, r_theta: np.ndarray, lam: float = 1.0) -> np.ndarray:
    """Directly minimize the weighted regularized cost over a finite record.

    ``phis[i]`` is the regressor that produced ``xis[i]``.  Used as an
    independent check of the recursion.
    """
    phis = np.atleast_2d(phis)
    xis = np.atleast_2d(xis)
    k = phis.shape[0]
    w = lam ** np.arange(k - 1, -1, -1, dtype=float)
    info = (phis * w[:, None]).T @ phis + lam**k * np.asarray(r_theta, dtype=float)
    cross = (xis * w[:, None]).T @ phis
    return np.linalg.solve(info, cross.T).T
