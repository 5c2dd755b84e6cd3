"""Seeded simulation harness: data generation, contamination, metrics and
replicated experiment tables.

All randomness flows through counter-based generators keyed by
(seed, replicate index), so replicates are reproducible independently and
in parallel; aggregation order is fixed, making whole tables byte-stable
regardless of the worker count.
"""

from __future__ import annotations

import concurrent.futures
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NormalErrorModel
from .model import Dataset, DpdConfig
from .objective import ObjectiveContext
from .solver import SolverConfig
from .tuning import default_lambda_grid, lambda_path

SETTING_SUPPORT = (1, 2, 4, 7, 11)  # 1-based positions of nonzero coefficients

CONTAMINATION_MODES = ("none", "y_outliers", "x_outliers")
X_OUTLIER_MODES = ("coords", "rows")

TABLE_COLUMNS = ("method", "alpha", "msee", "rmspe", "ee_sigma", "tp", "tn", "ms")


@dataclass(frozen=True)
class SimSpec:
    n: int = 100
    p: int = 500
    setting: str = "A"
    contamination: str = "none"
    contamination_rate: float = 0.10
    outlier_shift: float = 20.0
    noise_sd: float = 0.5
    replicates: int = 20
    seed: int = 0
    x_outlier_mode: str = "coords"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("need n >= 1 and p >= 1")
        if not (0.0 <= self.contamination_rate <= 1.0):
            raise ValueError("contamination rate must lie in [0, 1]")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if self.setting not in ("A", "B"):
            raise ValueError("setting must be 'A' or 'B'")
        if self.contamination not in CONTAMINATION_MODES:
            raise ValueError(f"contamination must be one of {CONTAMINATION_MODES}")
        if self.x_outlier_mode not in X_OUTLIER_MODES:
            raise ValueError(f"x_outlier_mode must be one of {X_OUTLIER_MODES}")


@dataclass(frozen=True)
class MetricRow:
    msee: float
    rmspe: float
    ee_sigma: float
    tp: float
    tn: float
    ms: int

    def __post_init__(self):
        if not (0.0 <= self.tp <= 1.0 and 0.0 <= self.tn <= 1.0):
            raise ValueError("tp and tn must lie in [0, 1]")
        if self.ms < 0:
            raise ValueError("model size must be >= 0")
        for name in ("msee", "rmspe", "ee_sigma"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based substream for one replicate."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(replicate,)))
    )


def gen_design(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Rows iid N(0, S) with S_ij = 0.5^|i-j|, sampled by the AR(1) recursion
    x_j = 0.5 x_{j-1} + sqrt(1 - 0.25) z_j (exact for this covariance)."""
    z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = z[:, 0]
    c = np.sqrt(1.0 - 0.25)
    for j in range(1, p):
        X[:, j] = 0.5 * X[:, j - 1] + c * z[:, j]
    return X


def gen_beta(setting: str, p: int) -> np.ndarray:
    if p < 11:
        raise ValueError(f"signal settings need p >= 11, got p={p}")
    beta = np.zeros(p)
    if setting == "A":
        for j in SETTING_SUPPORT:
            beta[j - 1] = float(j)
    elif setting == "B":
        values = {1: 1.5, 2: 0.5, 4: 1.0, 7: 1.5, 11: 1.0}
        for j, v in values.items():
            beta[j - 1] = v
    else:
        raise ValueError("setting must be 'A' or 'B'")
    return beta


def gen_response(
    X: np.ndarray, beta: np.ndarray, noise_sd: float, rng: np.random.Generator
) -> np.ndarray:
    if X.shape[1] != beta.shape[0]:
        raise ValueError("X and beta dimensions disagree")
    return X @ beta + noise_sd * rng.standard_normal(X.shape[0])


def contaminate(
    y: np.ndarray, X: np.ndarray, spec: SimSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Perturbed copies of (y, X) plus the contaminated sample indices."""
    n = y.shape[0]
    k = int(np.floor(spec.contamination_rate * n))
    y2, X2 = y.copy(), X.copy()
    if spec.contamination == "none" or k == 0:
        return y2, X2, np.empty(0, dtype=np.int64)
    if spec.contamination == "x_outliers" and spec.x_outlier_mode == "rows":
        # literal reading: the first k rows of X, every element shifted
        idx = np.arange(k)
        X2[idx, :] += spec.outlier_shift
        return y2, X2, idx
    idx = np.sort(rng.choice(n, size=k, replace=False))
    if spec.contamination == "y_outliers":
        y2[idx] += spec.outlier_shift
    else:
        ncols = min(10, X.shape[1])
        X2[np.ix_(idx, np.arange(ncols))] += spec.outlier_shift
    return y2, X2, idx


def metrics(
    beta_hat: np.ndarray,
    sigma_hat: float,
    beta0: np.ndarray,
    sigma0: float,
    X_test: np.ndarray,
    y_test: np.ndarray,
) -> MetricRow:
    p = beta0.shape[0]
    support_hat = beta_hat != 0
    support0 = beta0 != 0
    n_true = int(np.sum(support0))
    n_null = p - n_true
    tp = float(np.sum(support_hat & support0)) / n_true if n_true else 1.0
    tn = float(np.sum(~support_hat & ~support0)) / n_null if n_null else 1.0
    return MetricRow(
        msee=float(np.sum((beta_hat - beta0) ** 2)) / p,
        rmspe=float(np.linalg.norm(y_test - X_test @ beta_hat)),
        ee_sigma=abs(float(sigma_hat) - float(sigma0)),
        tp=tp,
        tn=tn,
        ms=int(np.sum(support_hat)),
    )


@dataclass(frozen=True)
class MethodConfig:
    alphas: tuple[float, ...] = (0.2,)
    penalty: str = "scad"
    a: float | None = None
    n_lambdas: int = 50
    lambda_min_ratio: float = 0.01
    init: str = "ransac_lasso"
    warm_start: bool = False
    passes: int = 2
    threads: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class ExperimentResult:
    spec: SimSpec
    method: MethodConfig
    rows: list[dict]                         # averaged, one per alpha
    per_replicate: dict[float, list[MetricRow]]
    failures: list[tuple[int, float, str]]   # (replicate, alpha, message)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TABLE_COLUMNS) + "\n")
        for row in self.rows:
            cells = []
            for col in TABLE_COLUMNS:
                v = row[col]
                cells.append(v if isinstance(v, str) else repr(float(v)))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "schema_version": 1,
            "spec": {
                "n": self.spec.n,
                "p": self.spec.p,
                "setting": self.spec.setting,
                "contamination": self.spec.contamination,
                "contamination_rate": self.spec.contamination_rate,
                "outlier_shift": self.spec.outlier_shift,
                "noise_sd": self.spec.noise_sd,
                "replicates": self.spec.replicates,
                "seed": self.spec.seed,
                "x_outlier_mode": self.spec.x_outlier_mode,
            },
            "rows": self.rows,
            "failures": [
                {"replicate": r, "alpha": a, "message": m} for r, a, m in self.failures
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def generate_replicate(spec: SimSpec, replicate: int):
    """Training data (contaminated), truth, and a clean test set."""
    rng = replicate_rng(spec.seed, replicate)
    X = gen_design(spec.n, spec.p, rng)
    beta0 = gen_beta(spec.setting, spec.p)
    y = gen_response(X, beta0, spec.noise_sd, rng)
    y2, X2, idx = contaminate(y, X, spec, rng)
    X_test = gen_design(spec.n, spec.p, rng)
    y_test = gen_response(X_test, beta0, spec.noise_sd, rng)
    return (y2, X2, idx, beta0, X_test, y_test)


def _run_one(spec: SimSpec, method: MethodConfig, replicate: int):
    y2, X2, _, beta0, X_test, y_test = generate_replicate(spec, replicate)
    data = Dataset(y2, X2)
    model = NormalErrorModel()
    out: dict[float, MetricRow | str] = {}
    for alpha in method.alphas:
        cfg = replace(
            method.solver, init=method.init, seed=spec.seed * 100003 + replicate
        )
        try:
            ctx = ObjectiveContext(data, model, DpdConfig(alpha))
            grid = default_lambda_grid(
                ctx,
                cfg,
                n_lambdas=method.n_lambdas,
                min_ratio=method.lambda_min_ratio,
                warm_start=method.warm_start,
            )
            tuned = lambda_path(ctx, method.penalty, grid, cfg, method.a)
            # continuation restarts: re-anchor the grid at the winner and
            # re-tune from it, so weak coordinates missed by a mediocre
            # starting point get a second chance to enter
            for _ in range(max(0, method.passes - 1)):
                cfg2 = replace(cfg, init="supplied", init_params=tuned.best_fit.params)
                grid2 = default_lambda_grid(
                    ctx,
                    cfg2,
                    n_lambdas=method.n_lambdas,
                    min_ratio=method.lambda_min_ratio,
                    warm_start=method.warm_start,
                )
                tuned = lambda_path(ctx, method.penalty, grid2, cfg2, method.a)
            best = tuned.best_fit
            out[alpha] = metrics(
                best.params.beta, best.params.sigma, beta0, spec.noise_sd, X_test, y_test
            )
        except Exception as exc:  # noqa: BLE001 - per-replicate failures are data
            out[alpha] = f"{type(exc).__name__}: {exc}"
    return out


def run_experiment(spec: SimSpec, method: MethodConfig) -> ExperimentResult:
    """Replicated experiment averaged per alpha; failures are excluded and
    reported with their replicate index."""
    reps = range(spec.replicates)
    if method.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=method.threads) as pool:
            results = list(pool.map(lambda r: _run_one(spec, method, r), reps))
    else:
        results = [_run_one(spec, method, r) for r in reps]

    per_alpha: dict[float, list[MetricRow]] = {a: [] for a in method.alphas}
    failures: list[tuple[int, float, str]] = []
    for rep, res in enumerate(results):
        for alpha in method.alphas:
            item = res[alpha]
            if isinstance(item, MetricRow):
                per_alpha[alpha].append(item)
            else:
                failures.append((rep, alpha, item))

    rows = []
    for alpha in method.alphas:
        got = per_alpha[alpha]
        if not got:
            continue
        rows.append(
            {
                "method": "dpd-ncv",
                "alpha": float(alpha),
                "msee": float(np.mean([m.msee for m in got])),
                "rmspe": float(np.mean([m.rmspe for m in got])),
                "ee_sigma": float(np.mean([m.ee_sigma for m in got])),
                "tp": float(np.mean([m.tp for m in got])),
                "tn": float(np.mean([m.tn for m in got])),
                "ms": float(np.mean([m.ms for m in got])),
            }
        )
    return ExperimentResult(spec, method, rows, per_alpha, failures)
