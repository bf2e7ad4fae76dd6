"""Saddle-point solvers for one dynamic JKO step.

`solve_jko_step` runs the variable-preconditioned transformed primal-dual
iteration (VPTPD): a proximal step in the I_u metric for the kinetic action,
an explicit gradient for the energy, and a dual update through the Schur
preconditioner I_p = B I_u^{-1} B^T, with optional adaptive primal step size.
`prepdjko_step` is the constant-preconditioner primal-dual baseline used for
efficiency comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .action import ActionParams, action_total
from .energy import EnergyModel, energy_grad, energy_value
from .grid import ConstraintSystem, GridSpec, assemble_constraints, pack, unpack
from .mobility import Mobility
from .precond import DiagOperator, DualPreconditioner, build_Ip, build_Iu, solve_Ip
from .prox import ProxStats, prox_field

MONITOR_HYSTERESIS = 1e-14


@dataclass
class SolverParams:
    lambda0: float = 0.556
    sigma0: float = 0.667
    kappa1: float = 0.3
    kappa2: float = 0.8
    tol: float = 1e-5
    TOL: float = 1e-5
    iter_max: int = 100_000
    adaptive: bool = False
    lambda_max: float | None = None  # defaults to 3 * lambda0
    lambda_min: float | None = None  # defaults to lambda0
    gamma_plus: float = 1.2
    gamma_minus: float = 0.8
    theta_max: float = 0.99
    regularization: float = 1e-5

    def __post_init__(self):
        if self.lambda_max is None:
            self.lambda_max = 3.0 * self.lambda0
        if self.lambda_min is None:
            self.lambda_min = self.lambda0
        if not (self.lambda0 > 0 and self.sigma0 > 0):
            raise ValueError("step sizes must be positive")
        if not (self.gamma_plus > 1.0 and 0.0 < self.gamma_minus < 1.0):
            raise ValueError("need gamma_plus > 1 and gamma_minus in (0, 1)")
        if self.gamma_plus * self.gamma_minus >= 1.0:
            raise ValueError("need gamma_plus * gamma_minus < 1")
        if not (0.0 < self.theta_max < 1.0):
            raise ValueError("theta_max must lie in (0, 1)")
        if not self.lambda_min <= self.lambda0 <= self.lambda_max:
            raise ValueError("need lambda_min <= lambda0 <= lambda_max")


@dataclass
class Monitors:
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3, self.e4, self.e5])

    @property
    def worst_rel(self) -> float:
        return max(self.e2, self.e3, self.e4, self.e5)


@dataclass
class IterStats:
    converged: bool
    iterations: int
    wall_time: float
    monitors: Monitors | None
    lambda_mean: float
    prox: ProxStats = field(default_factory=ProxStats)


def _rel_scalar(new: float, old: float) -> float:
    num = abs(new - old)
    if num == 0.0:
        return 0.0
    den = abs(new)
    return num / den if den > 0.0 else np.inf


def _rel_norm(new: np.ndarray, old: np.ndarray) -> float:
    num = float(np.linalg.norm(new - old))
    if num == 0.0:
        return 0.0
    den = float(np.linalg.norm(new))
    return num / den if den > 0.0 else np.inf


def compute_monitors(
    u_new: np.ndarray,
    u_old: np.ndarray,
    p_new: np.ndarray,
    p_old: np.ndarray,
    J_new: float,
    J_old: float,
    Phi_new: float,
    Phi_old: float,
    B: sp.spmatrix,
    b: np.ndarray,
) -> Monitors:
    """Constraint residual plus relative changes of energy, action, u, p."""
    N = b.shape[0]
    e1 = float(np.linalg.norm(B @ u_new - b)) / np.sqrt(N)
    return Monitors(
        e1=e1,
        e2=_rel_scalar(J_new, J_old),
        e3=_rel_scalar(Phi_new, Phi_old),
        e4=_rel_norm(u_new, u_old),
        e5=_rel_norm(p_new, p_old),
    )


def adapt_lambda(
    lam_prev: float,
    du: np.ndarray,
    du_prev: np.ndarray,
    monitors_now: Monitors,
    monitors_prev: Monitors,
    params: SolverParams,
) -> float:
    """Increase lambda on aligned search directions, decrease on monitor growth."""
    lam = lam_prev
    dot = float(np.dot(du, du_prev))
    if dot > params.theta_max * np.linalg.norm(du) * np.linalg.norm(du_prev):
        lam = min(lam_prev * params.gamma_plus, params.lambda_max)
    now = monitors_now.as_array()
    prev = monitors_prev.as_array()
    if np.any(now > prev * (1.0 + MONITOR_HYSTERESIS)):
        lam = max(lam * params.gamma_minus, params.lambda_min)
    return lam


def grad_energy_packed(model: EnergyModel, u: np.ndarray, g: GridSpec) -> np.ndarray:
    """Energy gradient on the packed unknown (zero on the momentum block)."""
    rho, _ = unpack(u, g)
    out = np.zeros_like(u)
    out[: g.N] = energy_grad(model, rho, g)
    return out


def grad_F_tilde(
    u_next: np.ndarray,
    u_bar: np.ndarray,
    p_bar: np.ndarray,
    Iu: DiagOperator,
    lam: float,
    gJ_bar: np.ndarray,
    gJ_next: np.ndarray,
    B: sp.spmatrix,
) -> np.ndarray:
    """Subgradient surrogate extracted from the prox optimality condition."""
    return Iu.entries * (u_bar - u_next) / lam - B.T @ p_bar - gJ_bar + gJ_next


def _prox_step(
    u_hat: np.ndarray,
    Iu: DiagOperator,
    lam: float,
    tau: float,
    mob: Mobility,
    g: GridSpec,
    stats: ProxStats,
) -> np.ndarray:
    rho_hat, m_hat = unpack(u_hat, g)
    rho, m = prox_field(rho_hat, m_hat, Iu.rho, Iu.m, lam, tau, mob, g, stats=stats)
    return pack(rho, m)


def vptpd_iterate(
    u: np.ndarray,
    u_bar: np.ndarray,
    p: np.ndarray,
    p_bar: np.ndarray,
    system: ConstraintSystem,
    Iu: DiagOperator,
    Ip: DualPreconditioner,
    mob: Mobility,
    model: EnergyModel,
    params: SolverParams,
    g: GridSpec,
    tau: float,
    lam: float,
    stats: ProxStats,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One semi-implicit-explicit iteration; returns (u+, p+, u_bar+, p_bar+)."""
    B, b = system.B, system.b
    gJ_bar = grad_energy_packed(model, u_bar, g)
    Bt_pbar = B.T @ p_bar
    u_hat = u_bar - lam * (gJ_bar + Bt_pbar) / Iu.entries
    u_next = _prox_step(u_hat, Iu, lam, tau, mob, g, stats)
    gJ_next = grad_energy_packed(model, u_next, g)
    gF = grad_F_tilde(u_next, u_bar, p_bar, Iu, lam, gJ_bar, gJ_next, B)
    resid = B @ u_next - b - B @ ((gF + Bt_pbar) / Iu.entries)
    p_next = p_bar + params.sigma0 * solve_Ip(Ip, resid)
    u_bar_next = (1.0 + params.kappa1) * u_next - params.kappa1 * u
    p_bar_next = (1.0 + params.kappa2) * p_next - params.kappa2 * p
    return u_next, p_next, u_bar_next, p_bar_next


def _objective_values(
    u: np.ndarray, mob: Mobility, model: EnergyModel, g: GridSpec
) -> tuple[float, float]:
    rho, m = unpack(u, g)
    return energy_value(model, rho, g), action_total(rho, m, mob, g)


def solve_jko_step(
    u_k: np.ndarray,
    p_k: np.ndarray,
    mob: Mobility,
    model: EnergyModel,
    params: SolverParams,
    g: GridSpec,
    tau: float,
) -> tuple[np.ndarray, np.ndarray, IterStats]:
    """One JKO step with the VPTPD iteration, warm-started at (u^k, p^k)."""
    t0 = time.perf_counter()
    rho_k, m_k = unpack(u_k, g)
    act = ActionParams(tau=tau, r=params.regularization)
    Iu = build_Iu(rho_k, m_k, mob, model, act, g)
    system = assemble_constraints(g, rho_k)
    Ip = build_Ip(system.B, Iu)
    return _run_loop(u_k, p_k, system, Iu, Ip, mob, model, params, g, tau, t0)


def _run_loop(u_k, p_k, system, Iu, Ip, mob, model, params, g, tau, t0):
    B, b = system.B, system.b
    u = u_k.copy()
    p = p_k.copy()
    u_bar = u.copy()
    p_bar = p.copy()
    J, Phi = _objective_values(u, mob, model, g)
    lam = params.lambda0
    lam_sum = 0.0
    monitors = None
    monitors_prev = None
    du = None
    du_prev = None
    stats = ProxStats()
    n = 0
    converged = False
    while n < params.iter_max:
        if params.adaptive and du is not None and du_prev is not None and monitors_prev is not None:
            lam = adapt_lambda(lam, du, du_prev, monitors, monitors_prev, params)
        u_next, p_next, u_bar, p_bar = vptpd_iterate(
            u, u_bar, p, p_bar, system, Iu, Ip, mob, model, params, g, tau, lam, stats
        )
        J_new, Phi_new = _objective_values(u_next, mob, model, g)
        monitors_prev, monitors = monitors, compute_monitors(
            u_next, u, p_next, p, J_new, J, Phi_new, Phi, B, b
        )
        du_prev, du = du, u_next - u
        u, p, J, Phi = u_next, p_next, J_new, Phi_new
        lam_sum += lam
        n += 1
        if monitors.e1 < params.tol and monitors.worst_rel < params.TOL:
            converged = True
            break
    stats_out = IterStats(
        converged=converged,
        iterations=n,
        wall_time=time.perf_counter() - t0,
        monitors=monitors,
        lambda_mean=lam_sum / max(n, 1),
        prox=stats,
    )
    return u, p, stats_out


def prepdjko_step(
    u_k: np.ndarray,
    p_k: np.ndarray,
    mob: Mobility,
    model: EnergyModel,
    params: SolverParams,
    g: GridSpec,
    tau: float,
) -> tuple[np.ndarray, np.ndarray, IterStats]:
    """Constant-preconditioner primal-dual baseline with exact constraints.

    I_u = (1/lambda) I, I_p = lambda B B^T, classic over-relaxation on the
    primal iterate only, and the same stopping monitors as the VPTPD loop.
    """
    t0 = time.perf_counter()
    rho_k, _ = unpack(u_k, g)
    system = assemble_constraints(g, rho_k)
    B, b = system.B, system.b
    lam = params.lambda0
    # prox of (lambda / 2 tau) Phi_h in the unweighted metric: the primal
    # step size enters through zeta = lambda dV / tau inside prox_field
    Iu = DiagOperator(
        rho=np.ones(g.N),
        m=np.ones((g.N, g.d)),
    )
    BBt = (B @ B.T).tocsc()
    lu = spla.splu(BBt)
    u = u_k.copy()
    p = p_k.copy()
    J, Phi = _objective_values(u, mob, model, g)
    monitors = None
    stats = ProxStats()
    n = 0
    converged = False
    while n < params.iter_max:
        gJ = grad_energy_packed(model, u, g)
        u_hat = u - lam * (gJ + B.T @ p)
        u_next = _prox_step(u_hat, Iu, lam, tau, mob, g, stats)
        u_over = 2.0 * u_next - u
        p_next = p + params.sigma0 * lu.solve(B @ u_over - b) / lam
        J_new, Phi_new = _objective_values(u_next, mob, model, g)
        monitors = compute_monitors(u_next, u, p_next, p, J_new, J, Phi_new, Phi, B, b)
        u, p, J, Phi = u_next, p_next, J_new, Phi_new
        n += 1
        if monitors.e1 < params.tol and monitors.worst_rel < params.TOL:
            converged = True
            break
    stats_out = IterStats(
        converged=converged,
        iterations=n,
        wall_time=time.perf_counter() - t0,
        monitors=monitors,
        lambda_mean=lam,
        prox=stats,
    )
    return u, p, stats_out
