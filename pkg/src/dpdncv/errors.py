"""Standardized error-density models and the psi / J kernel functions.

An error model is a univariate density ``f`` with zero mean and unit
variance (documented contract), exposing the log-derivative u = f'/f, its
derivative u', and the power-moment functionals

    M_f      = integral f(s)^(1+alpha) ds
    M[i, j]  = integral s^i u(s)^j f(s)^(1+alpha) ds      (i, j in 0..2)
    M*[i]    = integral s^i u'(s) f(s)^(1+alpha) ds       (i in 0..2)

The shipped ``NormalErrorModel`` has closed forms for everything; other
models fall back to adaptive quadrature on a truncated domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

_LOG_2PI = np.log(2.0 * np.pi)
_QUAD_RTOL = 1e-10
_TAIL_DENSITY_POW = 1e-16


@dataclass(frozen=True)
class ModelMoments:
    """All power-moment functionals of an error model at a given alpha."""

    alpha: float
    mf: float
    m: np.ndarray        # m[i, j], i,j in 0..2
    m_star: np.ndarray   # m_star[i], i in 0..2

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=np.float64))
        object.__setattr__(self, "m_star", np.asarray(self.m_star, dtype=np.float64))


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


class ErrorModel:
    """Pluggable standardized error density; subclasses supply f, u, u'."""

    def __init__(self):
        self._moment_cache: dict[float, ModelMoments] = {}

    # -- density interface ------------------------------------------------
    def pdf(self, s):
        raise NotImplementedError

    def log_pdf(self, s):
        return np.log(self.pdf(s))

    def u(self, s):
        """Log-derivative f'(s)/f(s)."""
        raise NotImplementedError

    def u_prime(self, s):
        raise NotImplementedError

    def pdf_pow(self, s, alpha: float):
        """f(s)**alpha, computed on the log scale for stability."""
        if alpha == 0.0:
            return np.ones_like(np.asarray(s, dtype=np.float64))
        return np.exp(alpha * self.log_pdf(s))

    # -- moments ----------------------------------------------------------
    def quadrature_tail(self, alpha: float) -> float:
        """Half-width T with f(T)^(1+alpha) below the underflow cutoff."""
        target = np.log(_TAIL_DENSITY_POW) / (1.0 + alpha)

        def g(t):
            return self.log_pdf(t) - target

        hi = 1.0
        while g(hi) > 0 and hi < 1e8:
            hi *= 2.0
        return float(optimize.brentq(g, 1e-12, hi))

    def _quad(self, integrand, tail: float) -> float:
        val, err = integrate.quad(
            integrand, -tail, tail, epsabs=0.0, epsrel=_QUAD_RTOL, limit=400
        )
        if err > max(abs(val), 1.0) * 1e-8:
            raise QuadratureError(
                f"quadrature tolerance not reached: value={val!r}, abserr={err!r}"
            )
        return val

    def moments(self, alpha: float) -> ModelMoments:
        alpha = float(alpha)
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        cached = self._moment_cache.get(alpha)
        if cached is None:
            cached = self._compute_moments(alpha)
            self._moment_cache[alpha] = cached
        return cached

    def _compute_moments(self, alpha: float) -> ModelMoments:
        tail = self.quadrature_tail(alpha)

        def fpow1(s):
            return np.exp((1.0 + alpha) * self.log_pdf(s))

        mf = self._quad(fpow1, tail)
        m = np.empty((3, 3))
        m_star = np.empty(3)
        for i in range(3):
            for j in range(3):
                m[i, j] = self._quad(
                    lambda s, i=i, j=j: (s ** i) * (self.u(s) ** j) * fpow1(s), tail
                )
            m_star[i] = self._quad(
                lambda s, i=i: (s ** i) * self.u_prime(s) * fpow1(s), tail
            )
        return ModelMoments(alpha=alpha, mf=mf, m=m, m_star=m_star)

    def mf(self, alpha: float) -> float:
        return self.moments(alpha).mf


class NormalErrorModel(ErrorModel):
    """Standard normal errors: u(s) = -s, u'(s) = -1, closed-form moments."""

    def pdf(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.exp(-0.5 * s * s - 0.5 * _LOG_2PI)

    def log_pdf(self, s):
        s = np.asarray(s, dtype=np.float64)
        return -0.5 * s * s - 0.5 * _LOG_2PI

    def u(self, s):
        return -np.asarray(s, dtype=np.float64)

    def u_prime(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.full_like(s, -1.0)

    def _compute_moments(self, alpha: float) -> ModelMoments:
        # f^(1+alpha) = mf * density of N(0, 1/(1+alpha)); moments of s^k
        # under that density give every functional in closed form.
        mf = (2.0 * np.pi) ** (-alpha / 2.0) / np.sqrt(1.0 + alpha)
        v = 1.0 / (1.0 + alpha)           # variance of the tilted normal
        mom = {0: 1.0, 1: 0.0, 2: v, 3: 0.0, 4: 3.0 * v * v}
        m = np.empty((3, 3))
        m_star = np.empty(3)
        for i in range(3):
            for j in range(3):
                m[i, j] = ((-1.0) ** j) * mf * mom[i + j]
            m_star[i] = -mf * mom[i]
        return ModelMoments(alpha=alpha, mf=mf, m=m, m_star=m_star)


def model_moments(model: ErrorModel, alpha: float) -> ModelMoments:
    """All moment functionals of ``model`` at robustness level ``alpha``."""
    return model.moments(alpha)


def psi1(model: ErrorModel, alpha: float, s):
    """Score kernel for the regression coefficients: u(s) f(s)^alpha."""
    s = np.asarray(s, dtype=np.float64)
    return model.u(s) * model.pdf_pow(s, alpha)


def psi2(model: ErrorModel, alpha: float, s):
    """Score kernel for the scale: (s u(s) + 1) f^alpha - alpha/(alpha+1) M_f."""
    s = np.asarray(s, dtype=np.float64)
    base = (s * model.u(s) + 1.0) * model.pdf_pow(s, alpha)
    if alpha == 0.0:
        return base
    return base - (alpha / (alpha + 1.0)) * model.mf(alpha)


def j_terms(model: ErrorModel, alpha: float, s):
    """Curvature kernels (J11, J12, J22); derivatives of the psi kernels.

    J11 = psi1', J12 = (1+alpha) psi1 + s psi1' and J22 = (1+alpha) psi2
    + s psi2', all expressible through u, u' and f^alpha.
    """
    s = np.asarray(s, dtype=np.float64)
    u = model.u(s)
    up = model.u_prime(s)
    fa = model.pdf_pow(s, alpha)
    j11 = (alpha * u * u + up) * fa
    j12 = ((1.0 + alpha) * u + alpha * s * u * u + s * up) * fa
    j22 = ((1.0 + alpha) * (1.0 + 2.0 * s * u) + alpha * s * s * u * u + s * s * up) * fa
    if alpha != 0.0:
        j22 = j22 - alpha * model.mf(alpha)
    return j11, j12, j22
