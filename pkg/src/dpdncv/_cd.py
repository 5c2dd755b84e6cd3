"""Cyclic coordinate descent kernel for the weighted lasso surrogate.

Solves

    min_b  kappa/(2n) * sum_i w_i (y_i - x_i'b)^2 + sum_j lin_j b_j + lam ||b||_1

by soft-thresholding, with an active-set strategy: full sweeps are only
used to detect newly activating coordinates, inner sweeps cycle over the
current nonzero set. Coordinates are updated in ascending index order and
exact zeros are produced by the threshold rule.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _sweep(X, w, resid, beta, a, kappa_over_n, lin, lam, mask, full):
    n, p = X.shape
    delta = 0.0
    count = 0
    for j in range(p):
        if not full and not mask[j]:
            continue
        aj = a[j]
        old = beta[j]
        if aj <= 0.0:
            new = 0.0
        else:
            dot = 0.0
            for i in range(n):
                dot += w[i] * X[i, j] * resid[i]
            b = kappa_over_n * dot + aj * old - lin[j]
            if b > lam:
                new = (b - lam) / aj
            elif b < -lam:
                new = (b + lam) / aj
            else:
                new = 0.0
        if new != old:
            d = new - old
            for i in range(n):
                resid[i] -= d * X[i, j]
            beta[j] = new
            mask[j] = new != 0.0
            ad = abs(d)
            if ad > delta:
                delta = ad
        if mask[j]:
            count += 1
    return delta, count


@njit(cache=True, nogil=True)
def cd_weighted_lasso(
    X, w, beta, resid, kappa_over_n, lin, lam, tol, max_passes, max_active=-1
):
    """Run CD in place on (beta, resid); returns (passes_used, converged).

    ``max_active`` < 0 means unlimited; otherwise the solve is abandoned
    (converged False) once the active set exceeds the cap, which callers
    use to cut short saturating solves that are headed for the degenerate
    interpolating regime.
    """
    n, p = X.shape
    a = np.empty(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            v = X[i, j]
            acc += w[i] * v * v
        a[j] = kappa_over_n * acc
    mask = np.empty(p, dtype=np.bool_)
    for j in range(p):
        mask[j] = beta[j] != 0.0
    cap = p if max_active < 0 else max_active

    passes = 0
    while passes < max_passes:
        delta, count = _sweep(X, w, resid, beta, a, kappa_over_n, lin, lam, mask, True)
        passes += 1
        if count > cap:
            return passes, False
        if delta < tol:
            return passes, True
        while passes < max_passes:
            delta, count = _sweep(
                X, w, resid, beta, a, kappa_over_n, lin, lam, mask, False
            )
            passes += 1
            if delta < tol:
                break
    # final full sweep decides convergence when the budget is exhausted
    delta, count = _sweep(X, w, resid, beta, a, kappa_over_n, lin, lam, mask, True)
    return max_passes, delta < tol and count <= cap
