"""Divergence loss, penalized objective, analytic gradient and curvature blocks.

The loss for robustness level alpha > 0 is

    L(beta, sigma) = sigma^-alpha M_f
                     - (1+alpha)/alpha * 1/(n sigma^alpha) * sum_i f^alpha(r_i)
                     + 1/alpha,

with r_i = (y_i - x_i' beta)/sigma. At alpha = 0 the likelihood limit is
used: the average negative log conditional density (without the 1/alpha
constant, which diverges term-by-term but cancels in the limit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ErrorModel, ModelMoments, j_terms, psi1, psi2
from .model import Dataset, DpdConfig, ModelParams, clamp_residuals, residuals
from .penalties import Penalty


@dataclass
class ObjectiveContext:
    """Dataset + error model + robustness level, with cached moments."""

    data: Dataset
    model: ErrorModel
    config: DpdConfig

    def __post_init__(self):
        self.moments: ModelMoments = self.model.moments(self.config.alpha)

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.data.p


@dataclass(frozen=True)
class SigmaBlocks:
    """Diagonals of the three n x n blocks of a bordered curvature matrix."""

    j11: np.ndarray
    j12: np.ndarray
    j22: np.ndarray

    def __post_init__(self):
        for name in ("j11", "j12", "j22"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} diagonal contains non-finite entries")
            object.__setattr__(self, name, arr)


def dpd_loss(ctx: ObjectiveContext, params: ModelParams) -> float:
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    if alpha == 0.0:
        return float(np.mean(np.log(params.sigma) - ctx.model.log_pdf(r)))
    spow = params.sigma ** (-alpha)
    mean_fpow = float(np.mean(ctx.model.pdf_pow(r, alpha)))
    return (
        spow * ctx.moments.mf
        - (1.0 + alpha) / alpha * spow * mean_fpow
        + 1.0 / alpha
    )


def penalized_objective(ctx: ObjectiveContext, params: ModelParams, pen: Penalty) -> float:
    return dpd_loss(ctx, params) + float(np.sum(pen.value(np.abs(params.beta))))


def gradient(ctx: ObjectiveContext, params: ModelParams) -> np.ndarray:
    """Analytic gradient of the loss, length p+1 (beta block then sigma)."""
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    scale = (1.0 + alpha) / params.sigma ** (alpha + 1.0)
    p1 = psi1(ctx.model, alpha, r)
    p2 = psi2(ctx.model, alpha, r)
    g = np.empty(ctx.p + 1)
    g[: ctx.p] = scale * (ctx.data.X.T @ p1) / ctx.n
    g[ctx.p] = scale * np.mean(p2)
    return g


def sigma_matrix(ctx: ObjectiveContext, params: ModelParams) -> SigmaBlocks:
    """Curvature diagonals -(1+alpha)/sigma^(alpha+2) * J_ij(r_i)."""
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    j11, j12, j22 = j_terms(ctx.model, alpha, r)
    c = -(1.0 + alpha) / params.sigma ** (alpha + 2.0)
    return SigmaBlocks(c * j11, c * j12, c * j22)


def sigma_star_matrix(ctx: ObjectiveContext, params: ModelParams) -> SigmaBlocks:
    """Score outer-product diagonals (1+alpha)^2/sigma^(2alpha+2) psi_i psi_j."""
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    p1 = psi1(ctx.model, alpha, r)
    p2 = psi2(ctx.model, alpha, r)
    c = (1.0 + alpha) ** 2 / params.sigma ** (2.0 * alpha + 2.0)
    return SigmaBlocks(c * p1 * p1, c * p1 * p2, c * p2 * p2)


def bordered_matrix(blocks: SigmaBlocks, X: np.ndarray, cols=None) -> np.ndarray:
    """Assemble X_c*' D X_c* for a column subset without forming p x p arrays.

    X_c* is the block-diagonal of X[:, cols] and the all-ones column, so the
    result is (len(cols)+1) x (len(cols)+1): coefficients bordered by scale.
    """
    Xc = X if cols is None else X[:, list(cols)]
    top_left = Xc.T @ (blocks.j11[:, None] * Xc)
    top_right = Xc.T @ blocks.j12
    bottom = float(np.sum(blocks.j22))
    s = Xc.shape[1]
    out = np.empty((s + 1, s + 1))
    out[:s, :s] = top_left
    out[:s, s] = top_right
    out[s, :s] = top_right
    out[s, s] = bottom
    return out
