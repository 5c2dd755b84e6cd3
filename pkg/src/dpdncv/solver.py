"""Alternating minimization for the penalized divergence objective.

One outer iteration linearizes the concave penalty part at the current
coefficients (difference-of-convex tangent), majorizes the non-convex loss
by its tangent-line bound on the exponential (weights w_i), solves the
resulting weighted lasso by coordinate descent, then updates the scale
through its stationarity fixed point. Every step is descent-guarded, so
the penalized objective trace is non-increasing.

The computational path assumes normal errors (the weights are Gaussian);
the surrounding evaluation and certification code stays model-generic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from ._cd import cd_weighted_lasso
from .errors import psi1, psi2
from .model import ActiveSet, Dataset, ModelParams, clamp_residuals, residuals
from .objective import (
    ObjectiveContext,
    bordered_matrix,
    dpd_loss,
    gradient,
    penalized_objective,
    sigma_matrix,
)
from .penalties import L1Penalty, Penalty

_LOG_2PI = np.log(2.0 * np.pi)
_MAX_HALVINGS = 30

INIT_MODES = ("zero", "supplied", "ransac_lasso")


class DegenerateScaleError(RuntimeError):
    """Scale update denominator non-positive: essentially all mass outlying."""


class InstanceTooLargeError(ValueError):
    """Brute-force oracle invoked on a problem beyond its size limits."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_outer_iters: int = 200
    max_cccp_iters: int = 10
    max_cd_passes: int = 1000
    cd_tol: float = 1e-7
    sigma_floor: float = 1e-8
    init: str = "zero"
    init_params: ModelParams | None = None
    seed: int = 0
    ransac_draws: int = 12
    ransac_fraction: float = 0.5
    ransac_trim: float = 0.2

    def __post_init__(self):
        if self.tol <= 0 or self.cd_tol <= 0 or self.sigma_floor <= 0:
            raise ValueError("tolerances and sigma_floor must be positive")
        if min(self.max_outer_iters, self.max_cccp_iters, self.max_cd_passes) < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.init == "supplied" and self.init_params is None:
            raise ValueError("init='supplied' requires init_params")


@dataclass(frozen=True)
class KktReport:
    stationarity_S_norm: float
    dual_feasibility_margin: float
    sigma_eq_residual: float
    second_order_margin: float
    satisfied: bool


@dataclass
class FitResult:
    params: ModelParams
    active_set: ActiveSet
    objective: float
    outer_iters: int
    trace: list[float]            # penalized objective per outer iteration
    loss_trace: list[float]       # unpenalized loss (stopping rule input)
    kkt: KktReport | None
    converged: bool
    cd_converged: bool = True
    degenerate_scale: bool = False


def weights(ctx: ObjectiveContext, params: ModelParams) -> np.ndarray:
    """Per-observation weights exp(-alpha (y - x'b)^2 / (2 sigma^2))."""
    alpha = ctx.alpha
    if alpha == 0.0:
        return np.ones(ctx.n)
    rt = clamp_residuals(ctx.data.y - ctx.data.X @ params.beta)
    return np.exp(-alpha * (rt / params.sigma) ** 2 / 2.0)


def sigma_step(ctx: ObjectiveContext, params: ModelParams, sigma_floor: float = 1e-8) -> float:
    """One scale update: the stationarity ratio with weights at (beta, sigma)."""
    rt = clamp_residuals(ctx.data.y - ctx.data.X @ params.beta)
    w = weights(ctx, params)
    alpha = ctx.alpha
    denom = float(np.sum(w)) - ctx.n * alpha / (1.0 + alpha) ** 1.5
    if denom <= 0.0:
        raise DegenerateScaleError(
            f"scale update denominator {denom!r} <= 0 at alpha={alpha}"
        )
    s2 = float(np.sum(w * rt * rt)) / denom
    return max(np.sqrt(s2), sigma_floor)


def solve_sigma(
    ctx: ObjectiveContext,
    params: ModelParams,
    sigma_floor: float = 1e-8,
    rtol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Iterate sigma_step to its fixed point at fixed coefficients."""
    alpha = ctx.alpha
    rt = clamp_residuals(ctx.data.y - ctx.data.X @ params.beta)
    rt2 = rt * rt
    correction = ctx.n * alpha / (1.0 + alpha) ** 1.5
    sigma = params.sigma
    for _ in range(max_iter):
        w = np.exp(-alpha * rt2 / (2.0 * sigma * sigma)) if alpha else np.ones(ctx.n)
        denom = float(np.sum(w)) - correction
        if denom <= 0.0:
            raise DegenerateScaleError(
                f"scale update denominator {denom!r} <= 0 at alpha={alpha}"
            )
        new = max(float(np.sqrt(np.sum(w * rt2) / denom)), sigma_floor)
        if new <= sigma_floor:
            return sigma_floor
        if abs(new - sigma) <= rtol * sigma:
            return new
        sigma = new
    return sigma


def lambda_zero_max(ctx: ObjectiveContext, sigma: float) -> float:
    """Smallest lambda at which beta = 0 is stationary (rho = 1 families)."""
    params0 = ModelParams(np.zeros(ctx.p), sigma)
    g = gradient(ctx, params0)
    return float(np.max(np.abs(g[: ctx.p])))


def lambda_anchor(ctx: ObjectiveContext, params: ModelParams, trim: float = 0.2) -> float:
    """Gradient-scale anchor for the top of a regularization grid.

    Combines the weighted gradient magnitude at ``params`` with a trimmed
    unweighted (likelihood-scale) one. The second term keeps the anchor
    meaningful when the robust weights have suppressed most observations,
    which is where the workable lambda range actually lives; trimming keeps
    it stable under contamination.
    """
    g = gradient(ctx, params)
    anchor = float(np.max(np.abs(g[: ctx.p])))
    rt = clamp_residuals(ctx.data.y - ctx.data.X @ params.beta)
    keep = np.argsort(np.abs(rt), kind="stable")[: max(1, int(np.ceil((1 - trim) * ctx.n)))]
    mask = np.zeros(ctx.n)
    mask[keep] = 1.0
    quad = np.abs(ctx.data.X.T @ (mask * rt)) / (ctx.n * params.sigma ** 2)
    return max(anchor, float(np.max(quad)))


def _loss_curvature(ctx: ObjectiveContext, sigma: float) -> float:
    """Per-observation quadratic coefficient of the majorized loss."""
    alpha = ctx.alpha
    return (1.0 + alpha) * (2.0 * np.pi) ** (-alpha / 2.0) / sigma ** (alpha + 2.0)


def _design_fortran(ctx: ObjectiveContext) -> np.ndarray:
    Xf = getattr(ctx, "_Xf", None)
    if Xf is None:
        Xf = np.asfortranarray(ctx.data.X)
        ctx._Xf = Xf
    return Xf


def beta_step(
    ctx: ObjectiveContext, pen: Penalty, params: ModelParams, cfg: SolverConfig
) -> tuple[np.ndarray, bool]:
    """Coefficient update at fixed scale; returns (beta, cd_converged)."""
    Xf = _design_fortran(ctx)
    y = ctx.data.y
    sigma = params.sigma
    kappa_over_n = _loss_curvature(ctx, sigma) / ctx.n

    beta = params.beta.copy()
    q_cur = penalized_objective(ctx, params, pen)
    cd_ok = True
    # with p >= n the interpolating regime is reachable; saturating solves
    # are abandoned early (the fit flags them as degenerate)
    max_active = ctx.n - 1 if ctx.p >= ctx.n - 1 else -1
    for _ in range(cfg.max_cccp_iters):
        w = weights(ctx, params.replace(beta=beta))
        lin = np.asarray(pen.cccp_grad(np.abs(beta)), dtype=np.float64) * np.sign(beta)
        prop = beta.copy()
        resid = y - ctx.data.X @ prop
        _, converged = cd_weighted_lasso(
            Xf,
            w,
            prop,
            resid,
            kappa_over_n,
            lin,
            pen.lam,
            cfg.cd_tol,
            cfg.max_cd_passes,
            max_active,
        )
        cd_ok = cd_ok and converged
        q_prop = penalized_objective(ctx, params.replace(beta=prop), pen)
        if q_prop > q_cur:
            accepted = False
            for _ in range(_MAX_HALVINGS):
                prop = 0.5 * (prop + beta)
                q_prop = penalized_objective(ctx, params.replace(beta=prop), pen)
                if q_prop <= q_cur:
                    accepted = True
                    break
            if not accepted:
                break
        move = float(np.max(np.abs(prop - beta))) if prop.size else 0.0
        beta, q_cur = prop, q_prop
        if move < cfg.cd_tol:
            break
        if isinstance(pen, L1Penalty) and ctx.alpha == 0.0:
            break  # surrogate is exact and convex: one solve suffices
    return beta, cd_ok


def _mad_scale(y: np.ndarray, floor: float) -> float:
    mad = float(np.median(np.abs(y - np.median(y))))
    return max(1.4826 * mad, floor)


def _trimmed_loss(ctx: ObjectiveContext, params: ModelParams, trim: float) -> float:
    """Mean of the smallest (1-trim) fraction of per-observation losses."""
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    if alpha == 0.0:
        per_obs = np.log(params.sigma) - ctx.model.log_pdf(r)
    else:
        spow = params.sigma ** (-alpha)
        per_obs = (
            spow * ctx.moments.mf
            - (1.0 + alpha) / alpha * spow * ctx.model.pdf_pow(r, alpha)
            + 1.0 / alpha
        )
    keep = max(1, int(np.ceil((1.0 - trim) * ctx.n)))
    return float(np.mean(np.sort(per_obs)[:keep]))


def _trimmed_lasso_pilot(
    y: np.ndarray,
    X: np.ndarray,
    trim: float,
    sigma_floor: float,
    lam_fracs=(0.5, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05, 0.03, 0.02),
) -> ModelParams:
    """Sparse pilot by trimmed-lasso concentration steps.

    Works on a column-winsorized copy of the design (neutralizing leverage
    points) and walks a decreasing penalty ladder, each stage a plain
    lasso on the observations with the smallest absolute residuals; stops
    when the active set would exceed a density cap, then debiases by least
    squares on the selected support. The quadratic loss has no scale
    coupling, so this is well posed on strong-signal data where joint
    (beta, sigma) iterations from the null scale are not.
    """
    med = np.median(X, axis=0)
    spread = 1.4826 * np.median(np.abs(X - med), axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    z = np.abs(X - med) / spread
    # leverage screen: rows whose covariates carry far more tail mass than
    # typical rows are dropped before any fitting (they are identifiable
    # without a model and would corrupt the null-start lasso stages)
    excess = np.sum(np.maximum(z - 2.5, 0.0), axis=1)
    cut = 10.0 * float(np.median(excess)) + 5.0
    flagged = np.nonzero(excess > cut)[0]
    max_drop = X.shape[0] // 4
    if flagged.size > max_drop:
        flagged = flagged[np.argsort(excess[flagged], kind="stable")[-max_drop:]]
    if flagged.size:
        keep_rows = np.setdiff1d(np.arange(X.shape[0]), flagged)
        X, y = X[keep_rows], y[keep_rows]
        med = np.median(X, axis=0)
        spread = 1.4826 * np.median(np.abs(X - med), axis=0)
        spread = np.where(spread > 0, spread, 1.0)

    n, p = X.shape
    Xw = np.clip(X, med - 2.5 * spread, med + 2.5 * spread)
    Xf = np.asfortranarray(Xw)

    beta = np.zeros(p)
    h = max(2, int(np.ceil((1.0 - trim) * n)))
    cap = max(5, h // 4)  # denser pilots head toward interpolation
    for lam_frac in lam_fracs:
        resid_all = y - Xw @ beta
        order = np.argsort(np.abs(resid_all), kind="stable")
        mask = np.zeros(n)
        mask[order[:h]] = 1.0
        lam = lam_frac * float(np.max(np.abs(Xw.T @ (mask * y)))) / h
        lam = max(lam, 1e-12)
        prop = beta.copy()
        resid = y - Xw @ prop
        cd_weighted_lasso(Xf, mask, prop, resid, 1.0 / h, np.zeros(p), lam, 1e-7, 500)
        if np.count_nonzero(prop) > cap:
            break
        beta = prop

    active = np.nonzero(beta)[0]
    if 0 < active.size <= cap:
        resid_all = y - Xw @ beta
        keep = np.argsort(np.abs(resid_all), kind="stable")[:h]
        ls, *_ = np.linalg.lstsq(Xw[np.ix_(keep, active)], y[keep], rcond=None)
        beta = np.zeros(p)
        beta[active] = ls
    sigma = _mad_scale(y - Xw @ beta, 10.0 * sigma_floor)
    return ModelParams(beta, sigma)


def initializer(ctx: ObjectiveContext, cfg: SolverConfig) -> ModelParams:
    """Starting point: zeros with a robust scale, a user vector, or the best
    of a full-data trimmed-lasso pilot and several subsample pilots, scored
    by trimmed loss on the full data and polished by a short L1 fit."""
    if cfg.init == "supplied":
        return cfg.init_params
    zero = ModelParams(np.zeros(ctx.p), _mad_scale(ctx.data.y, cfg.sigma_floor))
    if cfg.init == "zero":
        return zero

    candidates = [
        zero,
        _trimmed_lasso_pilot(ctx.data.y, ctx.data.X, cfg.ransac_trim, cfg.sigma_floor),
    ]
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0x696E6974,)))
    )
    m = max(4, int(np.ceil(cfg.ransac_fraction * ctx.n)))
    for _ in range(cfg.ransac_draws):
        idx = np.sort(rng.choice(ctx.n, size=m, replace=False))
        candidates.append(
            _trimmed_lasso_pilot(
                ctx.data.y[idx], ctx.data.X[idx], cfg.ransac_trim, cfg.sigma_floor
            )
        )

    scores = [_trimmed_loss(ctx, cand, cfg.ransac_trim) for cand in candidates]
    best = candidates[int(np.argmin(scores))]
    best_score = min(scores)

    # one short L1 polish aligns the winner with the divergence objective
    if np.any(best.beta != 0.0):
        lam = 0.1 * max(lambda_anchor(ctx, best), 1e-10)
        polish_cfg = replace(
            cfg,
            init="supplied",
            init_params=best,
            max_outer_iters=20,
            max_cccp_iters=3,
            cd_tol=max(cfg.cd_tol, 1e-5),
            max_cd_passes=min(cfg.max_cd_passes, 200),
        )
        try:
            polished = fit(ctx, L1Penalty(lam), polish_cfg)
            if not polished.degenerate_scale:
                score = _trimmed_loss(ctx, polished.params, cfg.ransac_trim)
                if score < best_score:
                    best = polished.params
        except DegenerateScaleError:
            pass
    return best


def fit(ctx: ObjectiveContext, pen: Penalty, cfg: SolverConfig | None = None) -> FitResult:
    """Alternate coefficient and scale updates until the loss change is
    below tolerance; certify the terminal point with the first- and
    second-order optimality checks."""
    cfg = cfg or SolverConfig()
    params = initializer(ctx, cfg)
    loss_prev = dpd_loss(ctx, params)
    trace = [loss_prev + float(np.sum(pen.value(np.abs(params.beta))))]
    loss_trace = [loss_prev]

    converged = False
    cd_ok = True
    degenerate = False
    outer = 0
    for outer in range(1, cfg.max_outer_iters + 1):
        beta_new, step_ok = beta_step(ctx, pen, params, cfg)
        cd_ok = cd_ok and step_ok
        at_beta = params.replace(beta=beta_new)
        loss_at_beta = dpd_loss(ctx, at_beta)

        try:
            sigma_new = solve_sigma(ctx, at_beta, cfg.sigma_floor)
        except DegenerateScaleError:
            sigma_new = params.sigma
            degenerate = True
        candidate = at_beta.replace(sigma=sigma_new)
        loss_new = dpd_loss(ctx, candidate)
        if loss_new > loss_at_beta:
            log_old = np.log(params.sigma)
            accepted = False
            for _ in range(_MAX_HALVINGS):
                sigma_new = float(np.exp(0.5 * (np.log(sigma_new) + log_old)))
                candidate = at_beta.replace(sigma=sigma_new)
                loss_new = dpd_loss(ctx, candidate)
                if loss_new <= loss_at_beta:
                    accepted = True
                    break
            if not accepted:
                candidate = at_beta
                loss_new = loss_at_beta

        params = candidate
        trace.append(loss_new + float(np.sum(pen.value(np.abs(params.beta)))))
        loss_trace.append(loss_new)
        if abs(loss_new - loss_prev) < cfg.tol:
            converged = True
            loss_prev = loss_new
            break
        loss_prev = loss_new
        if params.sigma <= cfg.sigma_floor:
            # scale collapsed onto its floor (interpolating regime or
            # noiseless data); further alternation cannot move it back up
            degenerate = True
            break
        if ctx.p >= ctx.n - 1 and int(np.count_nonzero(params.beta)) >= ctx.n - 1:
            # saturated active set with p >= n: the objective is unbounded
            # below along exact interpolation, so only the collapsed basin
            # remains; stop instead of drifting toward it
            degenerate = True
            break

    if ctx.alpha > 0.0 and not degenerate:
        # a state whose own scale equation has a non-positive denominator
        # treats essentially every observation as outlying: flag it
        w_final = weights(ctx, params)
        if float(np.sum(w_final)) <= ctx.n * ctx.alpha / (1.0 + ctx.alpha) ** 1.5:
            degenerate = True

    return FitResult(
        params=params,
        active_set=ActiveSet.from_beta(params.beta),
        objective=trace[-1],
        outer_iters=outer,
        trace=trace,
        loss_trace=loss_trace,
        kkt=kkt_check(ctx, pen, params),
        converged=converged,
        cd_converged=cd_ok,
        degenerate_scale=degenerate,
    )


def kkt_check(
    ctx: ObjectiveContext,
    pen: Penalty,
    params: ModelParams,
    stationarity_tol: float = 1e-4,
    sigma_tol: float = 1e-4,
) -> KktReport:
    """First- and second-order certificate for a strict local minimizer."""
    alpha = ctx.alpha
    r = clamp_residuals(residuals(ctx.data, params))
    scale = (1.0 + alpha) / (ctx.n * params.sigma ** (alpha + 1.0))
    g = scale * (ctx.data.X.T @ psi1(ctx.model, alpha, r))

    beta = params.beta
    active = np.nonzero(beta)[0]
    inactive = np.setdiff1d(np.arange(ctx.p), active, assume_unique=True)

    if active.size:
        pstar = np.asarray(pen.deriv(np.abs(beta[active]))) * np.sign(beta[active])
        stationarity = float(np.max(np.abs(g[active] + pstar)))
    else:
        stationarity = 0.0

    if inactive.size:
        dual_margin = pen.rho - float(np.max(np.abs(g[inactive]))) / pen.lam
    else:
        dual_margin = pen.rho

    sigma_eq = abs(scale * ctx.n * float(np.mean(psi2(ctx.model, alpha, r))))

    if active.size:
        m = bordered_matrix(sigma_matrix(ctx, params), ctx.data.X, active) / ctx.n
        lam_min = float(np.linalg.eigvalsh(m)[0])
        second_margin = lam_min - pen.local_concavity(beta[active])
    else:
        second_margin = np.inf

    satisfied = (
        stationarity <= stationarity_tol
        and dual_margin > 0.0
        and sigma_eq <= sigma_tol
        and second_margin > 0.0
    )
    return KktReport(stationarity, dual_margin, sigma_eq, second_margin, satisfied)


@dataclass(frozen=True)
class OracleResult:
    params: ModelParams
    active_set: ActiveSet
    objective: float


def _minimize_on_support(ctx, pen, support, sigma_floor):
    """Dense minimization of the penalized objective over one support."""
    y = ctx.data.y
    s = len(support)
    log_floor = np.log(sigma_floor)

    def unpack(z):
        beta = np.zeros(ctx.p)
        beta[list(support)] = z[:s]
        return ModelParams(beta, float(np.exp(np.clip(z[s], log_floor, 20.0))))

    def obj(z):
        return penalized_objective(ctx, unpack(z), pen)

    starts = []
    sig0 = _mad_scale(y, sigma_floor)
    starts.append(np.concatenate([np.zeros(s), [np.log(sig0)]]))
    if s:
        Xs = ctx.data.X[:, list(support)]
        ls = np.linalg.lstsq(Xs, y, rcond=None)[0]
        resid = y - Xs @ ls
        sig_ls = max(float(np.std(resid)), 10.0 * sigma_floor)
        starts.append(np.concatenate([ls, [np.log(sig_ls)]]))

    best_z, best_val = None, np.inf
    for z0 in starts:
        res = optimize.minimize(obj, z0, method="L-BFGS-B")
        res = optimize.minimize(
            obj, res.x, method="Powell", options={"xtol": 1e-10, "ftol": 1e-12}
        )
        if res.fun < best_val:
            best_z, best_val = res.x, float(res.fun)
    return unpack(best_z), best_val


def oracle_minimize(
    ctx: ObjectiveContext, pen: Penalty, max_support: int | None = None
) -> OracleResult:
    """Global minimization by support enumeration; test oracle for p <= 12."""
    if ctx.p > 12:
        raise InstanceTooLargeError(f"oracle supports p <= 12, got p={ctx.p}")
    max_support = min(ctx.p, 10 if max_support is None else max_support)

    best_params, best_val = None, np.inf
    for size in range(max_support + 1):
        for support in itertools.combinations(range(ctx.p), size):
            params, val = _minimize_on_support(ctx, pen, support, 1e-8)
            if val < best_val:
                best_params, best_val = params, val

    beta = best_params.beta.copy()
    beta[np.abs(beta) < 1e-8] = 0.0
    snapped = best_params.replace(beta=beta)
    snapped_val = penalized_objective(ctx, snapped, pen)
    if snapped_val <= best_val + 1e-10:
        best_params, best_val = snapped, min(best_val, snapped_val)
    return OracleResult(
        params=best_params,
        active_set=ActiveSet.from_beta(best_params.beta),
        objective=best_val,
    )
