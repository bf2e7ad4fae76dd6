"""Diagonal primal preconditioner I_u and dual Schur preconditioner I_p.

I_u collects the diagonal Hessian entries of the regularized objective at the
previous JKO minimizer, floored to stay SPD; I_p = B I_u^{-1} B^T is either
factorized once per JKO step (fill-reducing sparse LU, moderate sizes) or
solved iteratively with an incomplete-factorization preconditioned CG.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .action import ActionParams, action_hess_diag
from .energy import EnergyModel, energy_hess_diag
from .grid import GridSpec
from .mobility import Mobility

DIRECT_SIZE_LIMIT = 200_000
CG_RTOL = 1e-10
CG_MAXITER = 10_000


@dataclass
class DiagOperator:
    """Positive diagonal operator on the packed unknown [rho; m]."""

    rho: np.ndarray  # (N,)
    m: np.ndarray  # (N, d)

    @property
    def entries(self) -> np.ndarray:
        return np.concatenate([self.rho, self.m.ravel(order="F")])


def _interaction_row_sum_bound(table: np.ndarray, g: GridSpec) -> float:
    """Largest absolute row sum of the kernel convolution matrix (without dV^2)."""
    from scipy.signal import fftconvolve

    window = fftconvolve(np.abs(table), np.ones(g.n), mode="valid")
    return float(window.max())


def pd_floor(params: ActionParams, g: GridSpec) -> float:
    """SPD floor for I_u entries; guards non-convex internal potentials."""
    return max(params.r, 1e-8) * g.dV


def build_Iu(
    rho_prev: np.ndarray,
    m_prev: np.ndarray,
    mob: Mobility,
    model: EnergyModel,
    params: ActionParams,
    g: GridSpec,
    eps_pd: float | None = None,
) -> DiagOperator:
    """Diagonal of the regularized objective Hessian at the previous minimizer.

    The internal-energy curvature is taken as the pointwise value or its
    supremum over the admissible density interval, whichever is larger (when
    the supremum is finite).  The frozen pointwise value underestimates the
    curvature the iterates encounter elsewhere in the admissible set --
    e.g. a double-well potential evaluated between its wells -- which breaks
    the step-size stability of the explicit energy gradient.
    """
    if eps_pd is None:
        eps_pd = pd_floor(params, g)
    h_rho, h_m = action_hess_diag(rho_prev, m_prev, mob, params, g)
    h_energy = energy_hess_diag(model, rho_prev, g)
    if model.internal is not None:
        lo, hi = mob.bounds()
        sup = model.internal.h2_sup(lo, hi)
        if np.isfinite(sup):
            h2_pt = model.internal.h2(rho_prev) * g.dV
            h_energy = h_energy - h2_pt + np.maximum(h2_pt, sup * g.dV)
    if model.interaction is not None:
        # The interaction Hessian is the kernel convolution operator, whose
        # diagonal entry W(0) dV^2 can be far below its operator norm; bound
        # the latter by the largest absolute row sum of the kernel matrix.
        center = tuple(nj - 1 for nj in g.n)
        row_sum = _interaction_row_sum_bound(model.interaction, g)
        h_energy = h_energy + (row_sum - model.interaction[center]) * g.dV**2
    h_rho = h_rho + h_energy
    return DiagOperator(
        rho=np.maximum(h_rho, eps_pd),
        m=np.maximum(h_m, eps_pd),
    )


@dataclass
class DualPreconditioner:
    """I_p = B I_u^{-1} B^T with a cached direct factorization or CG context."""

    matrix: sp.spmatrix
    mode: str  # "direct" | "cg"
    _lu: spla.SuperLU | None = None
    _ilu: spla.SuperLU | None = None
    factorizations: int = 0
    solves: int = 0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        self.solves += 1
        if self.mode == "direct":
            return self._lu.solve(rhs)
        M = spla.LinearOperator(self.matrix.shape, matvec=self._ilu.solve)
        x, info = spla.cg(self.matrix, rhs, rtol=CG_RTOL, atol=0.0, maxiter=CG_MAXITER, M=M)
        if info != 0:
            res = np.linalg.norm(self.matrix @ x - rhs)
            raise RuntimeError(f"CG on I_p did not converge (info={info}, residual={res:.3e})")
        return x


def build_Ip(
    B: sp.spmatrix,
    Iu: DiagOperator,
    direct_limit: int = DIRECT_SIZE_LIMIT,
    force_mode: str | None = None,
) -> DualPreconditioner:
    """Assemble and factorize I_p = B diag(I_u)^{-1} B^T."""
    winv = sp.diags(1.0 / Iu.entries)
    Ip = (B @ winv @ B.T).tocsc()
    N = Ip.shape[0]
    mode = force_mode or ("direct" if N <= direct_limit else "cg")
    P = DualPreconditioner(matrix=Ip, mode=mode)
    if mode == "direct":
        try:
            P._lu = spla.splu(Ip)
            P.factorizations += 1
            return P
        except RuntimeError as exc:  # pragma: no cover - factorization failure path
            warnings.warn(f"sparse factorization of I_p failed ({exc}); falling back to CG")
            P.mode = "cg"
    P._ilu = spla.spilu(Ip, drop_tol=1e-5, fill_factor=20)
    P.factorizations += 1
    return P


def solve_Ip(P: DualPreconditioner, rhs: np.ndarray) -> np.ndarray:
    return P.solve(np.asarray(rhs, dtype=float))
