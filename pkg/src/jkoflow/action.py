"""Kinetic action density phi, its regularization, and Hessian diagonals.

phi(rho, m) = |m|^2 / M(rho), extended by 0 at (M, m) = (0, 0) and +inf
elsewhere; the regularized phi_hat divides by M(rho) + r instead and is the
smooth surrogate from which the diagonal preconditioner is built.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, _check_flux, _check_scalar
from .mobility import Mobility

DEFAULT_REGULARIZATION = 1e-5


@dataclass(frozen=True)
class ActionParams:
    tau: float
    r: float = DEFAULT_REGULARIZATION

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.r < 0.0:
            raise ValueError("r must be nonnegative")


def phi(rho, m, mob: Mobility):
    """Extended-real action density; vectorizes over cells."""
    rho = np.asarray(rho, dtype=float)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    m2 = np.sum(m**2, axis=-1) if m.ndim > rho.ndim else m**2
    M = mob.eval(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(M > 0.0, m2 / np.where(M > 0.0, M, 1.0), np.inf)
    val = np.where((M == 0.0) & (m2 == 0.0), 0.0, val)
    val = np.where(M < 0.0, np.inf, val)
    return val if val.ndim else float(val)


def phi_hat(rho, m, mob: Mobility, r: float):
    """Regularized action density |m|^2 / (M + r)."""
    rho = np.asarray(rho, dtype=float)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    m2 = np.sum(m**2, axis=-1) if m.ndim > rho.ndim else m**2
    Mr = mob.eval(rho) + r
    if np.any(Mr <= 0.0):
        raise ValueError("phi_hat requires M(rho) + r > 0")
    out = m2 / Mr
    return out if out.ndim else float(out)


def action_total(rho: np.ndarray, m: np.ndarray, mob: Mobility, g: GridSpec) -> float:
    """Midpoint-rule action Phi_h(u) = sum_i phi(rho_i, m_i) dV."""
    rho = _check_scalar(rho, g)
    m = _check_flux(m, g)
    return float(np.sum(phi(rho, m, mob)) * g.dV)


def action_hess_diag(
    rho: np.ndarray,
    m: np.ndarray,
    mob: Mobility,
    params: ActionParams,
    g: GridSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal second derivatives of (1/2 tau) * phi_hat * dV.

    Returns (h_rho of shape (N,), h_m of shape (N, d)).
    """
    rho = _check_scalar(rho, g)
    m = _check_flux(m, g)
    Mr = mob.eval(rho) + params.r
    if np.any(Mr <= 0.0):
        raise ValueError("action_hess_diag requires M(rho) + r > 0")
    scale = g.dV / (2.0 * params.tau)
    m2 = np.sum(m**2, axis=1)
    M1 = mob.deriv(rho)
    M2 = mob.deriv2(rho)
    h_rho = scale * m2 * (2.0 * M1**2 / Mr**3 - M2 / Mr**2)
    # cells with m = 0 contribute nothing even where M' or M'' blow up
    h_rho = np.where(m2 == 0.0, 0.0, h_rho)
    h_m = np.broadcast_to((scale * 2.0 / Mr)[:, None], m.shape).copy()
    return h_rho, h_m
