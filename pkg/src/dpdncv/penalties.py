"""Folded-concave penalty families: L1, SCAD and MCP.

All families satisfy: increasing, continuously differentiable and concave
on [0, inf), with rho = p'(0+)/lambda = 1. Knot convention: at an interior
knot the left branch is used for value/deriv and the more negative branch
for second_deriv, making the piecewise definitions total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCAD_DEFAULT_A = 3.7
MCP_DEFAULT_A = 3.0


@dataclass(frozen=True)
class Penalty:
    lam: float

    def __post_init__(self):
        if not (self.lam > 0) or not np.isfinite(self.lam):
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def rho(self) -> float:
        """p'(0+)/lambda, positive and lambda-free for all shipped families."""
        return 1.0

    def deriv_at_zero_plus(self) -> float:
        return self.lam

    def value(self, s):
        raise NotImplementedError

    def deriv(self, s):
        raise NotImplementedError

    def second_deriv(self, s):
        raise NotImplementedError

    def cccp_grad(self, s):
        """Gradient of the concave part J(s) = p(s) - lambda*s; 0 at s = 0."""
        s = np.asarray(s, dtype=np.float64)
        out = np.where(s > 0.0, self.deriv(s) - self.lam, 0.0)
        return out if out.ndim else float(out)

    def local_concavity(self, b) -> float:
        """max_j of -p''(|b_j|), with knots resolved to the curved branch."""
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if b.size == 0:
            return 0.0
        return float(np.max(-self.second_deriv(np.abs(b))))

    def _check_nonneg(self, s):
        s = np.asarray(s, dtype=np.float64)
        if np.any(s < 0.0):
            raise ValueError("penalty argument must be >= 0; pass |beta_j|")
        return s


@dataclass(frozen=True)
class L1Penalty(Penalty):
    def value(self, s):
        s = self._check_nonneg(s)
        return self.lam * s

    def deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.full_like(s, self.lam)

    def second_deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.zeros_like(s)


@dataclass(frozen=True)
class ScadPenalty(Penalty):
    a: float = SCAD_DEFAULT_A

    def __post_init__(self):
        super().__post_init__()
        if not (self.a > 2):
            raise ValueError(f"SCAD requires a > 2, got {self.a}")

    def value(self, s):
        s = self._check_nonneg(s)
        lam, a = self.lam, self.a
        linear = lam * s
        middle = (2 * a * lam * s - s * s - lam * lam) / (2.0 * (a - 1.0))
        plateau = (a + 1.0) * lam * lam / 2.0
        return np.where(s <= lam, linear, np.where(s <= a * lam, middle, plateau))

    def deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        lam, a = self.lam, self.a
        middle = (a * lam - s) / (a - 1.0)
        return np.where(s <= lam, lam, np.where(s <= a * lam, middle, 0.0))

    def second_deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        lam, a = self.lam, self.a
        inside = (s >= lam) & (s <= a * lam)
        return np.where(inside, -1.0 / (a - 1.0), 0.0)


@dataclass(frozen=True)
class McpPenalty(Penalty):
    a: float = MCP_DEFAULT_A

    def __post_init__(self):
        super().__post_init__()
        if not (self.a > 1):
            raise ValueError(f"MCP requires a > 1, got {self.a}")

    def value(self, s):
        s = self._check_nonneg(s)
        lam, a = self.lam, self.a
        inner = lam * s - s * s / (2.0 * a)
        plateau = a * lam * lam / 2.0
        return np.where(s <= a * lam, inner, plateau)

    def deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        lam, a = self.lam, self.a
        return np.where(s <= a * lam, (a * lam - s) / a, 0.0)

    def second_deriv(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.where(s <= self.a * self.lam, -1.0 / self.a, 0.0)


PENALTY_FAMILIES = ("l1", "scad", "mcp")


def make_penalty(family: str, lam: float, a: float | None = None) -> Penalty:
    family = family.lower()
    if family == "l1":
        return L1Penalty(lam)
    if family == "scad":
        return ScadPenalty(lam, SCAD_DEFAULT_A if a is None else a)
    if family == "mcp":
        return McpPenalty(lam, MCP_DEFAULT_A if a is None else a)
    raise ValueError(f"unknown penalty family {family!r}; expected one of {PENALTY_FAMILIES}")
