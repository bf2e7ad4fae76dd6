"""Concave mobility family M(rho) with derivatives and admissible bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
POWER = "power"
CONCAVE_QUADRATIC = "concave_quadratic"
CONCAVE_POWER = "concave_power"

_KINDS = (LINEAR, POWER, CONCAVE_QUADRATIC, CONCAVE_POWER)


@dataclass(frozen=True)
class Mobility:
    """One of M = rho, rho^xi, (rho-alpha)(beta-rho), ((rho-alpha)(beta-rho))^xi.

    xi is restricted to (0, 1) for the power kinds; alpha < beta for the
    bounded kinds.  Evaluation outside the admissible interval returns the
    analytic continuation (negative for the bounded kinds), which is only
    meaningful to diagnostic callers.
    """

    kind: str
    xi: float = 1.0
    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown mobility kind {self.kind!r}")
        if self.kind in (POWER, CONCAVE_POWER) and not (0.0 < self.xi < 1.0):
            raise ValueError("xi must lie in (0, 1)")
        if self.kind in (CONCAVE_QUADRATIC, CONCAVE_POWER) and not self.alpha < self.beta:
            raise ValueError("bounded mobility requires alpha < beta")

    @staticmethod
    def linear() -> "Mobility":
        return Mobility(LINEAR)

    @staticmethod
    def power(xi: float) -> "Mobility":
        return Mobility(POWER, xi=xi)

    @staticmethod
    def concave_quadratic(alpha: float, beta: float) -> "Mobility":
        return Mobility(CONCAVE_QUADRATIC, alpha=alpha, beta=beta)

    @staticmethod
    def concave_power(alpha: float, beta: float, xi: float) -> "Mobility":
        return Mobility(CONCAVE_POWER, xi=xi, alpha=alpha, beta=beta)

    @property
    def bounded(self) -> bool:
        return self.kind in (CONCAVE_QUADRATIC, CONCAVE_POWER)

    def bounds(self) -> tuple[float, float]:
        """Closed admissible interval on which M >= 0."""
        if self.bounded:
            return (self.alpha, self.beta)
        return (0.0, np.inf)

    def eval(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == LINEAR:
            return rho.copy()
        if self.kind == POWER:
            return np.where(rho >= 0.0, np.abs(rho) ** self.xi, -np.abs(rho) ** self.xi)
        q = (rho - self.alpha) * (self.beta - rho)
        if self.kind == CONCAVE_QUADRATIC:
            return q
        return np.where(q >= 0.0, np.abs(q) ** self.xi, -np.abs(q) ** self.xi)

    def deriv(self, rho):
        """dM/drho; signed infinity at degenerate endpoints of the power kinds."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == LINEAR:
            return np.ones_like(rho)
        if self.kind == POWER:
            with np.errstate(divide="ignore"):
                return self.xi * np.abs(rho) ** (self.xi - 1.0)
        qp = self.alpha + self.beta - 2.0 * rho
        if self.kind == CONCAVE_QUADRATIC:
            return qp
        q = (rho - self.alpha) * (self.beta - rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.xi * np.abs(q) ** (self.xi - 1.0) * qp
        # q -> 0 with qp of fixed sign: derivative diverges with the sign of qp
        out = np.where(q == 0.0, np.sign(qp) * np.inf, out)
        return out

    def deriv2(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == LINEAR:
            return np.zeros_like(rho)
        if self.kind == POWER:
            with np.errstate(divide="ignore"):
                return self.xi * (self.xi - 1.0) * np.abs(rho) ** (self.xi - 2.0)
        if self.kind == CONCAVE_QUADRATIC:
            return np.full_like(rho, -2.0)
        q = (rho - self.alpha) * (self.beta - rho)
        qp = self.alpha + self.beta - 2.0 * rho
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.xi * ((self.xi - 1.0) * np.abs(q) ** (self.xi - 2.0) * qp**2
                             - 2.0 * np.abs(q) ** (self.xi - 1.0))
        out = np.where(q == 0.0, -np.inf, out)
        return out
