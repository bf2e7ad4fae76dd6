"""Uniform Cartesian grid geometry and discrete differential operators.

Fields live at cell centers and are stored as flat length-N arrays.  The
linear cell index is row-major with the *first* axis fastest, i.e.
``idx = i_0 + n_0*(i_1 + n_1*i_2)``; this matches ``reshape(order='F')``
and is the layout used by all binary dumps.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GridSpec:
    """d-dimensional uniform box partition (d = 1..3)."""

    n: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if not (1 <= self.d <= 3):
            raise ValueError(f"dimension must be 1..3, got {self.d}")
        if len(self.lo) != self.d or len(self.hi) != self.d:
            raise ValueError("n, lo, hi must have equal length")
        if any(nj < 1 for nj in self.n):
            raise ValueError("cell counts must be >= 1")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("domain bounds must satisfy lo < hi")

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def N(self) -> int:
        return int(np.prod(self.n))

    @property
    def dx(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.n)

    @property
    def dV(self) -> float:
        return float(np.prod(self.dx))

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def axis_coords(self, j: int) -> np.ndarray:
        """Cell-center coordinates along axis j."""
        return self.lo[j] + (np.arange(self.n[j]) + 0.5) * self.dx[j]

    def cell_centers(self) -> np.ndarray:
        """(N, d) array of cell-center coordinates, canonical ordering."""
        axes = [self.axis_coords(j) for j in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def to_grid(self, flat: np.ndarray) -> np.ndarray:
        return np.asarray(flat).reshape(self.n, order="F")

    def to_flat(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr).ravel(order="F")


def _check_scalar(rho: np.ndarray, g: GridSpec) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (g.N,):
        raise ValueError(f"scalar field shape {rho.shape} != ({g.N},)")
    return rho


def _check_flux(m: np.ndarray, g: GridSpec) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (g.N, g.d):
        raise ValueError(f"flux field shape {m.shape} != ({g.N}, {g.d})")
    return m


def divergence(m: np.ndarray, g: GridSpec) -> np.ndarray:
    """Central-difference divergence with sign-reflected ghost values.

    At both ends of each axis the outside neighbor is taken as the negated
    boundary value, which makes the discrete divergence telescope to zero.
    """
    m = _check_flux(m, g)
    out = np.zeros(g.N)
    for j in range(g.d):
        a = g.to_grid(m[:, j])
        lo = -a.take([0], axis=j)
        hi = -a.take([-1], axis=j)
        ext = np.concatenate([lo, a, hi], axis=j)
        up = ext.take(range(2, g.n[j] + 2), axis=j)
        dn = ext.take(range(0, g.n[j]), axis=j)
        out += g.to_flat((up - dn) / (2.0 * g.dx[j]))
    return out


def neumann_laplacian(rho: np.ndarray, g: GridSpec) -> np.ndarray:
    """Second-order 2d+1-point Laplacian with mirror (homogeneous Neumann) ghosts."""
    rho = _check_scalar(rho, g)
    a = g.to_grid(rho)
    out = np.zeros(g.n)
    for j in range(g.d):
        if g.n[j] == 1:
            continue
        lo = a.take([0], axis=j)
        hi = a.take([-1], axis=j)
        ext = np.concatenate([lo, a, hi], axis=j)
        up = ext.take(range(2, g.n[j] + 2), axis=j)
        dn = ext.take(range(0, g.n[j]), axis=j)
        out += (up - 2.0 * a + dn) / g.dx[j] ** 2
    return g.to_flat(out)


def mass(rho: np.ndarray, g: GridSpec) -> float:
    """Midpoint-rule integral of a cell-centered density."""
    rho = _check_scalar(rho, g)
    return float(rho.sum() * g.dV)


def _div_1d(n: int, dx: float) -> sp.spmatrix:
    # Single-cell axis: reflection on both sides cancels exactly.
    if n == 1:
        return sp.csr_matrix((1, 1))
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], offsets=[-1, 1], format="lil")
    D[0, 0] += 1.0
    D[n - 1, n - 1] += -1.0
    return (D / (2.0 * dx)).tocsr()


def _axis_operator(g: GridSpec, j: int, op1d: sp.spmatrix) -> sp.spmatrix:
    """Lift a 1D operator on axis j to the full grid (axis 0 fastest)."""
    mats = [op1d if ax == j else sp.identity(g.n[ax], format="csr") for ax in range(g.d)]
    return reduce(lambda fast, slow: sp.kron(slow, fast, format="csr"), mats)


def divergence_matrix(g: GridSpec) -> sp.spmatrix:
    """Sparse N x N*d matrix applying :func:`divergence` to a packed flux."""
    blocks = [_axis_operator(g, j, _div_1d(g.n[j], g.dx[j])) for j in range(g.d)]
    return sp.hstack(blocks, format="csr")


@dataclass
class ConstraintSystem:
    """Linear constraint B u = b of one JKO step, with u = [rho; m]."""

    B: sp.spmatrix
    b: np.ndarray


def assemble_constraints(g: GridSpec, rho_prev: np.ndarray) -> ConstraintSystem:
    """Build B = [I | D] and b = rho^k for the continuity constraint."""
    rho_prev = _check_scalar(rho_prev, g)
    B = sp.hstack([sp.identity(g.N, format="csr"), divergence_matrix(g)], format="csr")
    return ConstraintSystem(B=B, b=rho_prev.copy())


def pack(rho: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Pack (rho, m) into the unknown vector [rho; m_1; ...; m_d]."""
    return np.concatenate([rho, m.ravel(order="F")])


def unpack(u: np.ndarray, g: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    rho = u[: g.N]
    m = u[g.N :].reshape((g.N, g.d), order="F")
    return rho, m
