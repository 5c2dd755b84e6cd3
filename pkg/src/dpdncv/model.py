"""Core data containers: dataset, parameters, robustness configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Residuals are clamped at this magnitude before squaring so that the
# exponential weights underflow to 0 instead of overflowing.
RESID_CLAMP = 1e8


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent."""


def _as_float_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Response vector ``y`` (length n) and fixed design matrix ``X`` (n x p)."""

    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = _as_float_vector(self.y, "y")
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"X must be two-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but y has length {y.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError("need n >= 1 and p >= 1")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if self.column_names is not None:
            names = tuple(self.column_names)
            if len(names) != X.shape[1]:
                raise DimensionError("column_names length does not match p")
            object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Regression coefficients and error scale, the estimand (beta, sigma)."""

    beta: np.ndarray
    sigma: float

    def __post_init__(self):
        beta = _as_float_vector(self.beta, "beta")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta contains non-finite entries")
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0.0:
            raise ValueError(f"sigma must be strictly positive, got {sigma}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def replace(self, beta=None, sigma=None) -> "ModelParams":
        return ModelParams(
            self.beta if beta is None else beta,
            self.sigma if sigma is None else sigma,
        )


@dataclass(frozen=True)
class DpdConfig:
    """Robustness tuning parameter.

    ``alpha == 0`` selects the likelihood limit, implemented as a dedicated
    branch; formulas containing 1/alpha are never evaluated at small alpha.
    """

    alpha: float = 0.0

    def __post_init__(self):
        a = float(self.alpha)
        if not np.isfinite(a) or a < 0.0:
            raise ValueError(f"alpha must be >= 0, got {a}")
        object.__setattr__(self, "alpha", a)

    @property
    def likelihood_limit(self) -> bool:
        return self.alpha == 0.0


@dataclass(frozen=True)
class ActiveSet:
    """Indices of nonzero coefficients and their complement within {0..p-1}."""

    indices: tuple[int, ...]
    p: int

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        if any(j < 0 or j >= self.p for j in idx):
            raise ValueError("active indices out of range")
        if len(set(idx)) != len(idx):
            raise ValueError("active indices must be unique")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @classmethod
    def from_beta(cls, beta: np.ndarray) -> "ActiveSet":
        beta = np.asarray(beta)
        return cls(tuple(int(j) for j in np.nonzero(beta)[0]), beta.shape[0])

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def complement(self) -> tuple[int, ...]:
        active = set(self.indices)
        return tuple(j for j in range(self.p) if j not in active)


def residuals(data: Dataset, params: ModelParams) -> np.ndarray:
    """Standardized residuals r_i = (y_i - x_i' beta) / sigma."""
    if params.p != data.p:
        raise DimensionError(
            f"beta has length {params.p} but X has {data.p} columns"
        )
    return (data.y - data.X @ params.beta) / params.sigma


def clamp_residuals(r: np.ndarray) -> np.ndarray:
    return np.clip(r, -RESID_CLAMP, RESID_CLAMP)
