"""Generalized proximal operator of the action with a diagonal preconditioner.

Each cell solves

    min_{rho, m}  D_rho (rho - rho_hat)^2 / 2
                  + sum_j D_mj (m_j - m_hat_j)^2 / 2
                  + (zeta / 2) phi(rho, m)

which reduces, after eliminating m, to a scalar root-find L(rho) = 0 with
L strictly increasing on the interior of the admissible interval.  Newton
from a case-dependent initial value converges monotonically; a bisection
safeguard against a maintained bracket exists but is never expected to fire.
All cells are solved simultaneously with masked array iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec
from .mobility import CONCAVE_POWER, CONCAVE_QUADRATIC, LINEAR, POWER, Mobility

NEWTON_TOL = 1e-12
NEWTON_CAP = 200


class ProxConvergenceError(RuntimeError):
    """Newton failed to converge; carries cell diagnostics (a bug signal)."""


@dataclass
class ProxStats:
    """Accumulated diagnostics over prox calls."""

    calls: int = 0
    max_newton_iters: int = 0
    bisection_fallbacks: int = 0

    def update(self, iters: int, fallbacks: int) -> None:
        self.calls += 1
        self.max_newton_iters = max(self.max_newton_iters, iters)
        self.bisection_fallbacks += fallbacks


@dataclass(frozen=True)
class ProxCellInput:
    rho_hat: float
    m_hat: np.ndarray
    D_rho: float
    D_m: np.ndarray
    zeta: float

    def __post_init__(self):
        if self.D_rho <= 0.0 or np.any(np.asarray(self.D_m) <= 0.0) or self.zeta <= 0.0:
            raise ValueError("prox weights and zeta must be strictly positive")


@dataclass(frozen=True)
class InitialPlan:
    """Outcome of the case analysis: a direct solution or a Newton start."""

    direct: bool
    value: float  # rho* when direct, otherwise the Newton initial value
    rho_m: float = np.nan
    C1: float = np.nan
    C2: float = np.nan


def default_offset(mob: Mobility) -> float:
    """Strictly interior offset for Newton starts at degenerate endpoints."""
    if mob.bounded:
        return 1e-8 * max(1.0, mob.beta - mob.alpha)
    return 1e-8


def _L_terms(rho, rho_hat, D_rho, D_m, Dm_mhat, zeta, mob):
    """L(rho) and L'(rho), vectorized; requires strictly interior or
    quadratic-kind endpoint evaluation (finite M', M'')."""
    M = mob.eval(rho)
    M1 = mob.deriv(rho)
    M2 = mob.deriv2(rho)
    den = D_m * M[..., None] + zeta
    q = Dm_mhat / den
    Sq = np.sum(q**2, axis=-1)
    L = D_rho * (rho - rho_hat) - 0.5 * zeta * M1 * Sq
    Lp = D_rho - 0.5 * zeta * (M2 * Sq - 2.0 * M1**2 * np.sum(D_m * q**2 / den, axis=-1))
    return L, Lp


def L_eval(rho: float, inp: ProxCellInput, mob: Mobility) -> tuple[float, float]:
    """Scalar (L, L') at rho; domain error outside M > 0 except where finite."""
    M = float(mob.eval(rho))
    if M < 0.0:
        raise ValueError("L is defined on the admissible interval only")
    Dm_mhat = np.asarray(inp.D_m) * np.asarray(inp.m_hat)
    L, Lp = _L_terms(
        np.asarray(rho, dtype=float),
        inp.rho_hat,
        inp.D_rho,
        np.asarray(inp.D_m, dtype=float),
        Dm_mhat,
        inp.zeta,
        mob,
    )
    return float(L), float(Lp)


def _plan_arrays(rho_hat, S, D_rho, zeta, mob, delta):
    """Vectorized Table-of-cases analysis.

    Returns (direct mask, direct value, Newton start).  The Newton start is
    only meaningful where ``direct`` is False.
    """
    n = rho_hat.shape[0]
    direct = np.zeros(n, dtype=bool)
    value = np.zeros(n)
    start = np.zeros(n)
    if mob.kind == LINEAR:
        C1 = -S / (2.0 * zeta * D_rho)
        direct = rho_hat <= C1
        value = np.zeros(n)
        start = np.zeros(n)  # L and L' are finite at 0 for M = rho
    elif mob.kind == POWER:
        start = np.maximum(rho_hat, delta)
        # with zero momentum L is affine and its root may fall outside the
        # admissible set; the minimizer is then the clamped input
        direct = (S == 0.0) & (rho_hat <= 0.0)
        value = np.zeros(n)
    else:
        rho_m = 0.5 * (mob.alpha + mob.beta)
        at_mid = rho_hat == rho_m
        below = rho_hat < rho_m
        above = rho_hat > rho_m
        if mob.kind == CONCAVE_QUADRATIC:
            C2 = (mob.beta - mob.alpha) * S / (2.0 * zeta * D_rho)
            clampA = rho_hat <= mob.alpha - C2
            clampB = rho_hat >= mob.beta + C2
            direct = clampA | clampB | at_mid
            value = np.where(clampA, mob.alpha, np.where(clampB, mob.beta, rho_m))
            start = np.where(below, mob.alpha, mob.beta)
        else:  # concave power, xi in (0, 1)
            zero_mom = S == 0.0
            direct = at_mid | zero_mom
            value = np.where(zero_mom, np.clip(rho_hat, mob.alpha, mob.beta), rho_m)
            start = np.where(below, mob.alpha + delta, mob.beta - delta)
    return direct, value, start


def plan_initial(inp: ProxCellInput, mob: Mobility, delta_off: float | None = None) -> InitialPlan:
    """Case analysis for a single cell."""
    if delta_off is None:
        delta_off = default_offset(mob)
    Dm_mhat = np.asarray(inp.D_m, dtype=float) * np.asarray(inp.m_hat, dtype=float)
    S = np.array([np.sum(Dm_mhat**2)])
    direct, value, start = _plan_arrays(
        np.array([inp.rho_hat]), S, np.array([inp.D_rho]), inp.zeta, mob, delta_off
    )
    rho_m = 0.5 * (mob.alpha + mob.beta) if mob.bounded else np.nan
    C1 = float(-S[0] / (2.0 * inp.zeta * inp.D_rho))
    C2 = float((mob.beta - mob.alpha) * S[0] / (2.0 * inp.zeta * inp.D_rho)) if mob.bounded else np.nan
    return InitialPlan(
        direct=bool(direct[0]),
        value=float(value[0] if direct[0] else start[0]),
        rho_m=rho_m,
        C1=C1,
        C2=C2,
    )


def _newton_solve(rho_hat, Dm_mhat, D_rho, D_m, zeta, mob, tol, delta, trace=None):
    """Solve L(rho) = 0 for every cell at once.

    Returns (rho, iterations used, fallback count).
    """
    S = np.sum(Dm_mhat**2, axis=-1)
    direct, value, rho = _plan_arrays(rho_hat, S, D_rho, zeta, mob, delta)
    rho = np.where(direct, value, rho)
    lo, hi = mob.bounds()
    blo = np.full_like(rho, lo)
    bhi = np.full_like(rho, hi)
    active = ~direct
    # Power-family starts sit delta inside a degenerate endpoint.  When the
    # sign of L at the start places the root between the endpoint and the
    # start, the minimizer lies within delta of the endpoint; clamp directly
    # (L' blows up there and a Newton step would leave the domain).
    if mob.kind in (POWER, CONCAVE_POWER) and np.any(active):
        sub = np.nonzero(active)[0]
        L0, _ = _L_terms(rho[sub], rho_hat[sub], D_rho[sub],
                         D_m[sub], Dm_mhat[sub], zeta, mob)
        if mob.kind == POWER:
            clamp = (rho[sub] == delta) & (L0 >= 0.0)
            rho[sub[clamp]] = 0.0
        else:
            lo_side = (rho[sub] == mob.alpha + delta) & (L0 >= 0.0)
            hi_side = (rho[sub] == mob.beta - delta) & (L0 <= 0.0)
            rho[sub[lo_side]] = mob.alpha
            rho[sub[hi_side]] = mob.beta
            clamp = lo_side | hi_side
        active[sub[clamp]] = False
    tol_abs = tol * np.maximum(1.0, D_rho)
    fallbacks = 0
    iters = 0
    while np.any(active):
        if iters >= NEWTON_CAP:
            bad = np.nonzero(active)[0]
            raise ProxConvergenceError(
                f"prox Newton failed to converge for {bad.size} cells after "
                f"{NEWTON_CAP} iterations; first cell {bad[0]}: "
                f"rho={rho[bad[0]]!r}, rho_hat={rho_hat[bad[0]]!r}"
            )
        L, Lp = _L_terms(rho[active], rho_hat[active], D_rho[active],
                         D_m[active], Dm_mhat[active], zeta, mob)
        done = np.abs(L) <= tol_abs[active]
        # tighten the bracket using the monotonicity of L
        neg = L < 0.0
        sub = np.nonzero(active)[0]
        blo[sub[neg]] = np.maximum(blo[sub[neg]], rho[sub[neg]])
        bhi[sub[~neg]] = np.minimum(bhi[sub[~neg]], rho[sub[~neg]])
        # when L' is huge (root hugging a degenerate endpoint) no float
        # satisfies the residual tolerance; accept once the bracket has
        # collapsed to adjacent floats or the Newton update cannot move
        collapsed = (bhi[sub] - blo[sub]) <= np.spacing(
            np.maximum(np.abs(blo[sub]), np.abs(bhi[sub]))
        )
        done |= collapsed
        step_to = rho[active] - L / Lp
        done |= np.isfinite(step_to) & (step_to == rho[active])
        inside = (step_to > blo[sub]) & (step_to < bhi[sub])
        # quadratic-kind starts sit exactly on a closed endpoint where L is
        # finite and the first Newton step moves inward; exempt those from
        # the bracket test (the bracket itself has collapsed onto them)
        at_endpoint = (rho[sub] == lo) | (rho[sub] == hi)
        inside |= (at_endpoint & (step_to > lo) & (step_to < hi)
                   & (step_to != rho[sub]))
        if not np.all(inside | done):
            bad = ~inside & ~done
            mid_hi = np.where(np.isfinite(bhi[sub]), bhi[sub], rho[active] + 1.0)
            step_to = np.where(bad, 0.5 * (blo[sub] + mid_hi), step_to)
            fallbacks += int(np.count_nonzero(bad))
        new_rho = np.where(done, rho[active], step_to)
        rho[sub] = new_rho
        if trace is not None:
            trace.append((rho.copy(), np.abs(L).copy()))
        still = ~done
        active[sub] = still
        iters += 1
    return rho, iters, fallbacks


def _recover_m(rho, m_hat, D_m, zeta, mob):
    M = np.maximum(mob.eval(rho), 0.0)
    return (M[..., None] * D_m * m_hat) / (D_m * M[..., None] + zeta)


def prox_cell(
    inp: ProxCellInput,
    mob: Mobility,
    tol_newton: float = NEWTON_TOL,
    stats: ProxStats | None = None,
) -> tuple[float, np.ndarray]:
    """Unique minimizer (rho*, m*) of the per-cell subproblem."""
    m_hat = np.atleast_1d(np.asarray(inp.m_hat, dtype=float))
    D_m = np.atleast_1d(np.asarray(inp.D_m, dtype=float))
    rho, iters, fallbacks = _newton_solve(
        np.array([inp.rho_hat]),
        (D_m * m_hat)[None, :],
        np.array([inp.D_rho]),
        D_m[None, :],
        inp.zeta,
        mob,
        tol_newton,
        default_offset(mob),
    )
    m = _recover_m(rho, m_hat[None, :], D_m[None, :], inp.zeta, mob)
    if stats is not None:
        stats.update(iters, fallbacks)
    return float(rho[0]), m[0]


def prox_field(
    rho_hat: np.ndarray,
    m_hat: np.ndarray,
    D_rho: np.ndarray,
    D_m: np.ndarray,
    lam: float,
    tau: float,
    mob: Mobility,
    g: GridSpec,
    tol_newton: float = NEWTON_TOL,
    stats: ProxStats | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cellwise prox of (lambda / 2 tau) Phi_h in the diagonal weighted norm.

    (D_rho, D_m) are the preconditioner entries per cell; zeta = lambda dV / tau.
    """
    zeta = lam * g.dV / tau
    rho_hat = np.asarray(rho_hat, dtype=float)
    m_hat = np.asarray(m_hat, dtype=float)
    D_rho = np.asarray(D_rho, dtype=float)
    D_m = np.asarray(D_m, dtype=float)
    rho, iters, fallbacks = _newton_solve(
        rho_hat, D_m * m_hat, D_rho, D_m, zeta, mob, tol_newton, default_offset(mob)
    )
    m = _recover_m(rho, m_hat, D_m, zeta, mob)
    if stats is not None:
        stats.update(iters, fallbacks)
    return rho, m
