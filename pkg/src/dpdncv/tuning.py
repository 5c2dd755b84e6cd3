"""Regularization selection over a lambda grid by a high-dimensional BIC."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import DpdConfig, ModelParams
from .objective import ObjectiveContext, penalized_objective
from .penalties import make_penalty
from .solver import (
    DegenerateScaleError,
    FitResult,
    SolverConfig,
    fit,
    initializer,
    lambda_anchor,
    lambda_zero_max,
    solve_sigma,
)


class TuningError(RuntimeError):
    """No usable grid point (every fit failed to converge)."""


def hbic_value(sigma2: float, model_size: int, n: int, p: int) -> float:
    """log(sigma^2) + (log log n * log p / n) * model_size."""
    if n < 3:
        raise ValueError(f"criterion needs n >= 3, got n={n}")
    if p < 1:
        raise ValueError("p must be >= 1")
    if sigma2 <= 0:
        raise ValueError("sigma^2 must be positive")
    return float(np.log(sigma2) + np.log(np.log(n)) * np.log(p) / n * model_size)


def hbic(fit_result: FitResult, n: int, p: int) -> float:
    sigma = fit_result.params.sigma
    return hbic_value(sigma * sigma, fit_result.active_set.size, n, p)


@dataclass(frozen=True)
class TuningGrid:
    lambdas: np.ndarray
    alphas: tuple[float, ...] | None = None
    warm_start: bool = True

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=np.float64)
        if lams.ndim != 1 or lams.size < 1:
            raise ValueError("lambda grid must be a non-empty vector")
        if np.any(lams <= 0) or not np.all(np.isfinite(lams)):
            raise ValueError("lambda grid entries must be positive and finite")
        lams = np.unique(lams)[::-1]  # strictly descending, duplicate-free
        object.__setattr__(self, "lambdas", lams)
        if self.alphas is not None:
            object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))


def default_lambda_grid(
    ctx: ObjectiveContext,
    cfg: SolverConfig | None = None,
    n_lambdas: int = 50,
    min_ratio: float = 1e-3,
    alphas=None,
    warm_start: bool = True,
) -> TuningGrid:
    """Log-spaced grid anchored at the initializer.

    The top is the larger of two stationarity thresholds: no coordinate can
    enter from beta = 0 at its scale fixed point, and none can enter from
    the initializer's parameters. The second anchor matters on strong-signal
    data, where the workable lambda range at the fitted scale sits far above
    the null-model threshold.
    """
    cfg = cfg or SolverConfig()
    start = initializer(ctx, cfg)
    null = initializer(ctx, replace(cfg, init="zero", init_params=None))
    try:
        sigma0 = solve_sigma(ctx, null, cfg.sigma_floor)
    except DegenerateScaleError:
        sigma0 = null.sigma
    lam_max = max(lambda_zero_max(ctx, sigma0), 1e-10)
    if np.any(start.beta != 0.0):
        # generous headroom above the anchor: with a mediocre initializer
        # the workable window at the converged scale can sit well above the
        # threshold measured at the starting point, and points above the
        # window are cheap (they settle in coarse basins quickly)
        lam_max = max(lam_max, 4.0 * lambda_anchor(ctx, start))
    if n_lambdas == 1:
        lams = np.array([lam_max])
    else:
        lams = np.geomspace(lam_max, min_ratio * lam_max, n_lambdas)
    return TuningGrid(lams, alphas=alphas, warm_start=warm_start)


@dataclass(frozen=True)
class PathPoint:
    lam: float
    alpha: float
    hbic: float
    model_size: int
    sigma2: float
    converged: bool
    objective: float


@dataclass
class TuningResult:
    best_lambda: float
    best_alpha: float
    records: list[PathPoint]
    best_fit: FitResult

    def per_alpha_best(self) -> dict[float, PathPoint]:
        out: dict[float, PathPoint] = {}
        for rec in self.records:
            cur = out.get(rec.alpha)
            if cur is None or rec.hbic < cur.hbic:
                out[rec.alpha] = rec
        return out


def _usable(result: FitResult, sigma_floor: float) -> bool:
    # Degenerate scale would win on log(sigma^2) alone; treat like failure.
    return (
        result.converged
        and not result.degenerate_scale
        and result.params.sigma > 2.0 * sigma_floor
    )


def lambda_path(
    ctx: ObjectiveContext,
    pen_family: str,
    grid: TuningGrid,
    cfg: SolverConfig | None = None,
    a: float | None = None,
) -> TuningResult:
    """Fit each lambda in descending order (optionally warm-started) and
    select the information-criterion minimizer; ties go to the larger lambda."""
    cfg = cfg or SolverConfig()
    records: list[PathPoint] = []
    best: tuple[float, FitResult, ModelParams] | None = None

    start = initializer(ctx, cfg)
    # path fits run at a loosened profile; the selected point is refit at
    # the caller's tolerances below
    path_cfg = replace(
        cfg,
        init="supplied",
        init_params=start,
        tol=max(cfg.tol, 1e-5),
        cd_tol=max(cfg.cd_tol, 1e-5),
        max_cd_passes=min(cfg.max_cd_passes, 300),
        max_cccp_iters=min(cfg.max_cccp_iters, 4),
    )
    prev: ModelParams | None = None
    for lam in grid.lambdas:
        pen = make_penalty(pen_family, float(lam), a)
        seed = start
        if grid.warm_start and prev is not None:
            # a warm start can carry over a basin that is poor at this
            # lambda; keep whichever candidate scores better here
            if penalized_objective(ctx, prev, pen) <= penalized_objective(ctx, start, pen):
                seed = prev
        result = fit(ctx, pen, replace(path_cfg, init_params=seed))
        usable = _usable(result, cfg.sigma_floor)
        crit = hbic(result, ctx.n, ctx.p) if usable else np.inf
        records.append(
            PathPoint(
                lam=float(lam),
                alpha=ctx.alpha,
                hbic=crit,
                model_size=result.active_set.size,
                sigma2=result.params.sigma ** 2,
                converged=result.converged,
                objective=result.objective,
            )
        )
        if usable and (best is None or crit < best[0]):
            best = (crit, result, result.params)
        if grid.warm_start:
            prev = None if result.degenerate_scale else result.params

    if best is None:
        failed = ", ".join(f"lambda={r.lam:g}" for r in records)
        raise TuningError(f"no grid point produced a usable fit ({failed})")
    best_rec = min(records, key=lambda r: r.hbic)
    pen = make_penalty(pen_family, best_rec.lam, a)
    final = fit(ctx, pen, replace(cfg, init="supplied", init_params=best[2]))
    return TuningResult(
        best_lambda=best_rec.lam,
        best_alpha=ctx.alpha,
        records=records,
        best_fit=final,
    )


def alpha_sweep(
    ctx: ObjectiveContext,
    pen_family: str,
    grid: TuningGrid,
    cfg: SolverConfig | None = None,
    a: float | None = None,
) -> TuningResult:
    """Joint (lambda, alpha) selection: one path per alpha, global minimum."""
    if not grid.alphas:
        raise ValueError("alpha_sweep needs at least one alpha in the grid")
    cfg = cfg or SolverConfig()
    records: list[PathPoint] = []
    best: TuningResult | None = None
    for alpha in grid.alphas:
        sub_ctx = ObjectiveContext(ctx.data, ctx.model, DpdConfig(alpha))
        sub = lambda_path(sub_ctx, pen_family, grid, cfg, a)
        records.extend(sub.records)
        if best is None or min(r.hbic for r in sub.records) < min(
            r.hbic for r in best.records
        ):
            best = sub
    return TuningResult(
        best_lambda=best.best_lambda,
        best_alpha=best.best_alpha,
        records=records,
        best_fit=best.best_fit,
    )
