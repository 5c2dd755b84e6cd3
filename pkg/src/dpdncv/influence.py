"""Influence diagnostics: point-contamination derivatives of the estimator,
sensitivity surfaces and the sandwich covariance of the active block.

The population distribution is always replaced by the empirical
distribution of the supplied dataset; influence values are diagnostic
quantities evaluated after a fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import psi1, psi2
from .model import ModelParams
from .objective import (
    ObjectiveContext,
    bordered_matrix,
    sigma_matrix,
    sigma_star_matrix,
)
from .penalties import Penalty

COND_LIMIT = 1e12
SIGMA_IF_POLE = (np.sqrt(13.0) - 3.0) / 2.0  # root of 1 - 3a - a^2


class SingularCurvatureError(RuntimeError):
    """Curvature matrix numerically singular; influence system unsolvable."""


@dataclass(frozen=True)
class ContaminationPoint:
    y_t: float
    x_t: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_t, dtype=np.float64)
        if x.ndim != 1 or not np.all(np.isfinite(x)) or not np.isfinite(self.y_t):
            raise ValueError("contamination point must be finite, x_t a vector")
        object.__setattr__(self, "x_t", x)
        object.__setattr__(self, "y_t", float(self.y_t))


@dataclass(frozen=True)
class IfResult:
    if_beta_active: np.ndarray
    if_sigma: float
    if_beta_inactive: np.ndarray   # identically zero by construction
    active_indices: tuple[int, ...]
    p: int

    @property
    def beta_norm2(self) -> float:
        return float(np.linalg.norm(self.if_beta_active))

    @property
    def norm2(self) -> float:
        return float(np.sqrt(self.beta_norm2 ** 2 + self.if_sigma ** 2))

    def full_beta(self) -> np.ndarray:
        out = np.zeros(self.p)
        out[list(self.active_indices)] = self.if_beta_active
        return out


class SmoothedPenalty:
    """Quadratic rounding of the |.| kink on [-h, h] around a base penalty.

    Defined on all of R (signed argument); as h -> 0 these derivatives
    converge to the base penalty's away from zero while the curvature at
    zero grows like lambda/h, which is what drives the inactive influence
    block to zero in the small-h limit.
    """

    def __init__(self, base: Penalty, h: float):
        if h <= 0:
            raise ValueError("smoothing width must be positive")
        self.base = base
        self.h = h

    def _q(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = np.abs(t) <= self.h
        return np.where(inside, t * t / (2.0 * self.h) + self.h / 2.0, np.abs(t))

    def value_signed(self, t):
        return self.base.value(self._q(t))

    def deriv_signed(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = np.abs(t) <= self.h
        qp = np.where(inside, t / self.h, np.sign(t))
        return self.base.deriv(self._q(t)) * qp

    def second_deriv_signed(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = np.abs(t) <= self.h
        q = self._q(t)
        qp = np.where(inside, t / self.h, np.sign(t))
        qpp = np.where(inside, 1.0 / self.h, 0.0)
        return self.base.second_deriv(q) * qp * qp + self.base.deriv(q) * qpp


def _score_vector(ctx, params, point, x_part):
    alpha = ctx.alpha
    r_t = (point.y_t - point.x_t @ params.beta) / params.sigma
    scale = (1.0 + alpha) / params.sigma ** (alpha + 1.0)
    top = scale * float(psi1(ctx.model, alpha, r_t)) * x_part
    bottom = scale * float(psi2(ctx.model, alpha, r_t))
    return top, bottom


def _solve_checked(matrix, rhs, what):
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        lam_min = float(np.linalg.eigvalsh((matrix + matrix.T) / 2.0)[0])
        raise SingularCurvatureError(
            f"{what} is numerically singular (cond={cond:.3e}, min eig={lam_min:.3e})"
        )
    return np.linalg.solve(matrix, rhs)


def if_smooth(
    ctx: ObjectiveContext,
    params: ModelParams,
    pen_smooth: SmoothedPenalty,
    point: ContaminationPoint,
) -> np.ndarray:
    """Influence vector (length p+1) for a twice-differentiable penalty."""
    if not hasattr(pen_smooth, "deriv_signed"):
        raise TypeError(
            "penalty is not twice differentiable; use if_sparse for kinked penalties"
        )
    j_emp = bordered_matrix(sigma_matrix(ctx, params), ctx.data.X) / ctx.n
    curv = np.zeros(ctx.p + 1)
    curv[: ctx.p] = pen_smooth.second_deriv_signed(params.beta)
    j_star = j_emp + np.diag(curv)

    top, bottom = _score_vector(ctx, params, point, point.x_t)
    rhs = np.concatenate([top + pen_smooth.deriv_signed(params.beta), [bottom]])
    return -_solve_checked(j_star, rhs, "penalized curvature matrix")


def if_sparse(
    ctx: ObjectiveContext,
    params: ModelParams,
    pen: Penalty,
    point: ContaminationPoint,
) -> IfResult:
    """Active-block influence; the inactive block is identically zero."""
    beta = params.beta
    active = np.nonzero(beta)[0]
    s = active.size

    m = bordered_matrix(sigma_matrix(ctx, params), ctx.data.X, active) / ctx.n
    if s:
        b1 = np.abs(beta[active])
        m[:s, :s] += np.diag(np.atleast_1d(pen.second_deriv(b1)))
        pstar = np.atleast_1d(pen.deriv(b1)) * np.sign(beta[active])
    else:
        pstar = np.zeros(0)

    top, bottom = _score_vector(ctx, params, point, point.x_t[active])
    rhs = np.concatenate([top + pstar, [bottom]])
    sol = -_solve_checked(m, rhs, "active-set curvature matrix")
    return IfResult(
        if_beta_active=sol[:s],
        if_sigma=float(sol[s]),
        if_beta_inactive=np.zeros(ctx.p - s),
        active_indices=tuple(int(j) for j in active),
        p=ctx.p,
    )


def if_normal_sigma_closed_form(alpha: float, sigma: float, r_t: float) -> float:
    """Scale-influence closed form for normal errors; r_t is the raw
    (unstandardized) residual y_t - x_t' beta.

    Reported alongside the matrix route, which it matches up to a global
    parameter-dependent factor; the formula has a pole in alpha that the
    matrix route does not share.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    denom = 1.0 - 3.0 * alpha - alpha * alpha
    if abs(alpha - SIGMA_IF_POLE) < 1e-6:
        raise ValueError(
            f"closed form has a pole at alpha={SIGMA_IF_POLE:.6f}; "
            "use the matrix route near this alpha"
        )
    z = r_t / sigma
    bracket = (1.0 - z * z) * np.exp(-alpha * z * z / 2.0) - alpha / (1.0 + alpha) ** 1.5
    return float(sigma * (1.0 + alpha) ** 2.5 / denom * bracket)


@dataclass(frozen=True)
class GridSpec:
    y_values: np.ndarray
    x_scales: np.ndarray
    x_direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_values", np.asarray(self.y_values, dtype=np.float64))
        object.__setattr__(self, "x_scales", np.asarray(self.x_scales, dtype=np.float64))
        object.__setattr__(
            self, "x_direction", np.asarray(self.x_direction, dtype=np.float64)
        )


@dataclass
class ScanResult:
    rows: np.ndarray  # columns: y_t, x_scale, if_beta_norm2, if_sigma

    CSV_HEADER = ("y_t", "x_scale", "if_beta_norm2", "if_sigma")

    def supremum(self) -> tuple[float, float]:
        """(sup |IF_beta|_2, sup |IF_sigma|) over the grid."""
        if self.rows.size == 0:
            raise ValueError("supremum undefined on an empty grid")
        return float(np.max(self.rows[:, 2])), float(np.max(np.abs(self.rows[:, 3])))


def sensitivity_scan(
    ctx: ObjectiveContext, params: ModelParams, pen: Penalty, grid: GridSpec
) -> ScanResult:
    """Influence-norm surface over contamination points (y_t, s * x_dir),
    row-major over y then scale."""
    rows = []
    for y_t in grid.y_values:
        for s in grid.x_scales:
            point = ContaminationPoint(float(y_t), s * grid.x_direction)
            res = if_sparse(ctx, params, pen, point)
            rows.append((float(y_t), float(s), res.beta_norm2, res.if_sigma))
    return ScanResult(np.asarray(rows, dtype=np.float64).reshape(-1, 4))


def asymptotic_covariance(ctx: ObjectiveContext, fit_result) -> np.ndarray:
    """Sandwich covariance of the active coefficients bordered by the scale."""
    if not fit_result.converged:
        raise ValueError("covariance requires a converged fit")
    active = list(fit_result.active_set.indices)
    if not active:
        raise ValueError("covariance requires a nonempty active set")
    params = fit_result.params
    bread = bordered_matrix(sigma_matrix(ctx, params), ctx.data.X, active)
    meat = bordered_matrix(sigma_star_matrix(ctx, params), ctx.data.X, active)
    bread_inv = _solve_checked(bread, np.eye(len(active) + 1), "curvature matrix")
    cov = bread_inv @ meat @ bread_inv.T
    return (cov + cov.T) / 2.0
