"""Discrete free energy: internal + potential + Dirichlet + interaction + wall terms.

Value, per-cell gradient and diagonal Hessian share one code path per term so
that finite-difference consistency holds for every term combination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.signal import fftconvolve

from .grid import GridSpec, _check_scalar, neumann_laplacian

_LOG_CLIP = 1e-12  # logarithmic potential is clamped to |rho| <= 1 - _LOG_CLIP
_ENTROPY_FLOOR = 1e-14

ENTROPY = "entropy"
DOUBLE_WELL = "double_well"
LOGARITHMIC = "logarithmic"
NONE = "none"


@dataclass(frozen=True)
class InternalPotential:
    """Pointwise internal energy density H(rho)."""

    kind: str
    theta: float = 0.3
    theta_c: float = 1.0

    def __post_init__(self):
        if self.kind not in (ENTROPY, DOUBLE_WELL, LOGARITHMIC, NONE):
            raise ValueError(f"unknown internal potential {self.kind!r}")
        if self.kind == LOGARITHMIC and (self.theta <= 0 or self.theta_c <= 0):
            raise ValueError("logarithmic potential requires theta, theta_c > 0")

    def h(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == NONE:
            return np.zeros_like(rho)
        if self.kind == ENTROPY:
            r = np.maximum(rho, _ENTROPY_FLOOR)
            return np.where(rho > 0.0, r * (np.log(r) - 1.0), 0.0)
        if self.kind == DOUBLE_WELL:
            return 0.25 * (1.0 - rho**2) ** 2
        self._check_log_domain(rho)
        r = np.clip(rho, -1.0 + _LOG_CLIP, 1.0 - _LOG_CLIP)
        ent = (1.0 + r) * np.log((1.0 + r) / 2.0) + (1.0 - r) * np.log((1.0 - r) / 2.0)
        return 0.5 * self.theta * ent + 0.5 * self.theta_c * (1.0 - r**2)

    def h1(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == NONE:
            return np.zeros_like(rho)
        if self.kind == ENTROPY:
            return np.log(np.maximum(rho, _ENTROPY_FLOOR))
        if self.kind == DOUBLE_WELL:
            return rho**3 - rho
        self._check_log_domain(rho)
        r = np.clip(rho, -1.0 + _LOG_CLIP, 1.0 - _LOG_CLIP)
        return 0.5 * self.theta * (np.log(1.0 + r) - np.log(1.0 - r)) - self.theta_c * r

    def h2(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == NONE:
            return np.zeros_like(rho)
        if self.kind == ENTROPY:
            return 1.0 / np.maximum(rho, _ENTROPY_FLOOR)
        if self.kind == DOUBLE_WELL:
            return 3.0 * rho**2 - 1.0
        self._check_log_domain(rho)
        r = np.clip(rho, -1.0 + _LOG_CLIP, 1.0 - _LOG_CLIP)
        return self.theta / (1.0 - r**2) - self.theta_c

    def h2_sup(self, lo: float, hi: float) -> float:
        """Supremum of h'' over the density interval [lo, hi].

        Returns +inf when the curvature is unbounded on the interval (e.g.
        entropy near 0, logarithmic near +-1); callers then fall back to the
        pointwise value.
        """
        if self.kind == NONE:
            return 0.0
        if self.kind == ENTROPY:
            return 1.0 / lo if lo > 0.0 else np.inf
        if self.kind == DOUBLE_WELL:
            if not (np.isfinite(lo) and np.isfinite(hi)):
                return np.inf
            return 3.0 * max(lo * lo, hi * hi) - 1.0
        r = max(abs(lo), abs(hi))
        if r >= 1.0:
            return np.inf
        return self.theta / (1.0 - r * r) - self.theta_c

    def _check_log_domain(self, rho: np.ndarray) -> None:
        if np.any(np.abs(rho) >= 1.0 + _LOG_CLIP):
            raise ValueError("logarithmic potential requires |rho| <= 1")


@dataclass(frozen=True)
class WallEnergy:
    """Cubic-polynomial substrate energy on one designated grid face.

    The surface integral is approximated with the trace values of the cell
    layer adjacent to the face, weighted by the boundary cell area.
    """

    axis: int
    side: int  # 0 = low face, 1 = high face
    beta_w: float
    eps: float

    def coeff(self) -> float:
        return self.eps / np.sqrt(2.0) * np.cos(self.beta_w)

    def f(self, rho: np.ndarray) -> np.ndarray:
        return self.coeff() * (rho**3 / 3.0 - rho)

    def f1(self, rho: np.ndarray) -> np.ndarray:
        return self.coeff() * (rho**2 - 1.0)

    def f2(self, rho: np.ndarray) -> np.ndarray:
        return self.coeff() * 2.0 * rho


@dataclass
class EnergyModel:
    internal: Optional[InternalPotential] = None
    external: Optional[np.ndarray] = None  # sampled V(x_i), length N
    dirichlet_eps: float = 0.0
    interaction: Optional[np.ndarray] = None  # kernel table on the difference lattice
    wall: Optional[WallEnergy] = None

    def validate(self, g: GridSpec) -> None:
        if self.external is not None and self.external.shape != (g.N,):
            raise ValueError("external potential shape mismatch")
        if self.interaction is not None:
            want = tuple(2 * nj - 1 for nj in g.n)
            if self.interaction.shape != want:
                raise ValueError(f"interaction table shape {self.interaction.shape} != {want}")


def _wall_mask(wall: WallEnergy, g: GridSpec) -> np.ndarray:
    idx = np.zeros(g.n, dtype=bool)
    sel = [slice(None)] * g.d
    sel[wall.axis] = 0 if wall.side == 0 else g.n[wall.axis] - 1
    idx[tuple(sel)] = True
    return g.to_flat(idx)


def _interaction_conv(table: np.ndarray, rho: np.ndarray, g: GridSpec) -> np.ndarray:
    """(W * rho)_i = sum_k W(x_i - x_k) rho_k via linear convolution."""
    conv = fftconvolve(g.to_grid(rho), table, mode="valid")
    return g.to_flat(conv)


def _dirichlet_parts(rho: np.ndarray, g: GridSpec) -> float:
    """sum over interior faces of (forward difference / dx)^2."""
    a = g.to_grid(rho)
    total = 0.0
    for j in range(g.d):
        if g.n[j] == 1:
            continue
        d = np.diff(a, axis=j) / g.dx[j]
        total += float(np.sum(d**2))
    return total


def energy_value(model: EnergyModel, rho: np.ndarray, g: GridSpec) -> float:
    rho = _check_scalar(rho, g)
    model.validate(g)
    dV = g.dV
    total = 0.0
    if model.internal is not None:
        total += float(np.sum(model.internal.h(rho))) * dV
    if model.external is not None:
        total += float(np.dot(model.external, rho)) * dV
    if model.dirichlet_eps > 0.0:
        total += 0.5 * model.dirichlet_eps**2 * _dirichlet_parts(rho, g) * dV
    if model.interaction is not None:
        conv = _interaction_conv(model.interaction, rho, g)
        total += 0.5 * float(np.dot(rho, conv)) * dV**2
    if model.wall is not None:
        dA = dV / g.dx[model.wall.axis]
        mask = _wall_mask(model.wall, g)
        total += float(np.sum(model.wall.f(rho[mask]))) * dA
    return total


def energy_grad(model: EnergyModel, rho: np.ndarray, g: GridSpec) -> np.ndarray:
    rho = _check_scalar(rho, g)
    model.validate(g)
    dV = g.dV
    grad = np.zeros(g.N)
    if model.internal is not None:
        grad += model.internal.h1(rho) * dV
    if model.external is not None:
        grad += model.external * dV
    if model.dirichlet_eps > 0.0:
        grad += -model.dirichlet_eps**2 * neumann_laplacian(rho, g) * dV
    if model.interaction is not None:
        grad += _interaction_conv(model.interaction, rho, g) * dV**2
    if model.wall is not None:
        dA = dV / g.dx[model.wall.axis]
        mask = _wall_mask(model.wall, g)
        grad[mask] += model.wall.f1(rho[mask]) * dA
    return grad


def _dirichlet_hess_diag(g: GridSpec) -> np.ndarray:
    """Exact diagonal of the Dirichlet-term Hessian (without eps^2 dV)."""
    diag = np.zeros(g.n)
    for j in range(g.d):
        if g.n[j] == 1:
            continue
        c = np.full(g.n[j], 2.0)
        c[0] = c[-1] = 1.0
        shape = [1] * g.d
        shape[j] = g.n[j]
        diag += c.reshape(shape) / g.dx[j] ** 2
    return g.to_flat(diag)


def energy_hess_diag(model: EnergyModel, rho: np.ndarray, g: GridSpec) -> np.ndarray:
    rho = _check_scalar(rho, g)
    model.validate(g)
    dV = g.dV
    diag = np.zeros(g.N)
    if model.internal is not None:
        diag += model.internal.h2(rho) * dV
    if model.dirichlet_eps > 0.0:
        diag += model.dirichlet_eps**2 * _dirichlet_hess_diag(g) * dV
    if model.interaction is not None:
        center = tuple(nj - 1 for nj in g.n)
        diag += model.interaction[center] * dV**2
    if model.wall is not None:
        dA = dV / g.dx[model.wall.axis]
        mask = _wall_mask(model.wall, g)
        diag[mask] += model.wall.f2(rho[mask]) * dA
    return diag


def kernel_sample(
    w: Callable[[np.ndarray], np.ndarray],
    g: GridSpec,
    zero_average: Optional[float] = None,
    quad_order: int = 64,
) -> np.ndarray:
    """Sample an interaction kernel on the difference lattice.

    The offset-zero entry is replaced by the cell average of the kernel over
    the cell [-dx/2, dx/2]^d: pass a closed-form ``zero_average`` when the
    kernel has an integrable singularity, otherwise a tensor Gauss-Legendre
    rule is used.  ``w`` takes points of shape (..., d).
    """
    axes = [np.arange(-(nj - 1), nj) * g.dx[j] for j, nj in enumerate(g.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.asarray(w(pts), dtype=float)
    if zero_average is None:
        zero_average = cell_average(w, np.zeros(g.d), g.dx, order=quad_order)
    center = tuple(nj - 1 for nj in g.n)
    table[center] = zero_average
    if not np.all(np.isfinite(table)):
        raise ValueError("kernel is not integrable on the difference lattice")
    return table


def cell_average(
    w: Callable[[np.ndarray], np.ndarray],
    center: np.ndarray,
    dx: np.ndarray,
    order: int = 64,
) -> float:
    """Tensor Gauss-Legendre cell average of w over a cell at ``center``."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes = [center[j] + 0.5 * dx[j] * nodes for j in range(len(dx))]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    wgt = weights
    for _ in range(len(dx) - 1):
        wgt = np.multiply.outer(wgt, weights)
    vals = np.asarray(w(pts), dtype=float)
    # GL weights integrate over [-1,1]^d; the Jacobian cancels in the average
    return float(np.sum(vals * wgt) / 2.0 ** len(dx))


def ln_abs_cell_average_1d(x0: float, x1: float) -> float:
    """Average of ln|x| over [x0, x1], valid across the singularity."""

    def prim(x):
        return 0.0 if x == 0.0 else x * np.log(abs(x)) - x

    if x0 < 0.0 < x1:
        val = prim(x1) - prim(0.0) + prim(0.0) - prim(x0)
    else:
        val = prim(x1) - prim(x0)
    return val / (x1 - x0)


def _ln_r_primitive(x: float, y: float) -> float:
    """Antiderivative of ln sqrt(x^2+y^2) in both variables."""
    if x == 0.0 or y == 0.0:
        return 0.0
    r2 = x * x + y * y
    return (x * y * 0.5 * np.log(r2) - 1.5 * x * y
            + 0.5 * x * x * np.arctan(y / x) + 0.5 * y * y * np.arctan(x / y))


def ln_r_cell_average_2d(x0: float, x1: float, y0: float, y1: float) -> float:
    """Average of ln|x| over an axis-aligned rectangle; exact in closed form."""
    # The primitive is discontinuous across the coordinate axes, so split
    # rectangles that straddle them.
    xs = sorted({x0, x1} | ({0.0} if x0 < 0.0 < x1 else set()))
    ys = sorted({y0, y1} | ({0.0} if y0 < 0.0 < y1 else set()))
    val = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        for c, d in zip(ys[:-1], ys[1:]):
            val += (_ln_r_primitive(b, d) - _ln_r_primitive(a, d)
                    - _ln_r_primitive(b, c) + _ln_r_primitive(a, c))
    return val / ((x1 - x0) * (y1 - y0))
