"""Gaussian, mixture, product-of-Gaussian and 1-D kernel density models."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NumericError

REGULARIZATION = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        cov = np.atleast_2d(cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def diag(cls, mean, variances) -> "GaussianModel":
        return cls(mean, np.diag(np.asarray(variances, dtype=float)))

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def chol(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance is not positive definite") from exc

    @cached_property
    def precision(self) -> np.ndarray:
        inv_l = np.linalg.inv(self.chol)
        return inv_l.T @ inv_l


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.asarray(self.weights, dtype=float)
        if len(comps) == 0 or w.shape != (len(comps),):
            raise ValueError("need one weight per component")
        if np.any(w < 0):
            raise ValueError("mixture weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("all components must share a dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ProductSpec:
    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if len(factors) < 2:
            raise ValueError("a product needs at least two factors")
        if len({f.dim for f in factors}) != 1:
            raise ValueError("all factors must share a dimension")
        object.__setattr__(self, "factors", factors)


def fit_gaussian(samples, regularize: float = REGULARIZATION, diagonal: bool = False) -> GaussianModel:
    """Maximum-likelihood Gaussian (covariance divided by n) plus ``regularize * I``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("cannot fit a Gaussian to zero samples")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    if diagonal:
        cov = np.diag(np.diag(cov))
    cov = 0.5 * (cov + cov.T) + regularize * np.eye(x.shape[1])
    return GaussianModel(mean, cov)


def gaussian_logpdf(m: GaussianModel, x) -> np.ndarray | float:
    """Exact log-density; ``x`` may be a single point or an (n, d) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if xs.shape[1] != m.dim:
        raise ValueError(f"point dimension {xs.shape[1]} does not match model dimension {m.dim}")
    chol = m.chol
    diag = np.diag(chol)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericError("singular covariance")
    # solve L z = (x - mu)
    z = np.linalg.solve(chol, (xs - m.mean).T)
    maha = np.sum(z * z, axis=0)
    out = -0.5 * (m.dim * _LOG_2PI + maha) - np.sum(np.log(diag))
    return float(out[0]) if single else out


def sample_gaussian(m: GaussianModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    z = rng.standard_normal((n, m.dim))
    return m.mean + z @ m.chol.T


def mixture_logpdf(mix: MixtureSpec, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    terms = []
    for w, c in zip(mix.weights, mix.components):
        with np.errstate(divide="ignore"):
            terms.append(np.log(w) + gaussian_logpdf(c, x))
    return np.logaddexp.reduce(np.array(terms), axis=0)


def sample_mixture(mix: MixtureSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points; returns ``(points, component_index)`` for provenance."""
    if n < 0:
        raise ValueError("n must be non-negative")
    idx = rng.choice(len(mix.components), size=n, p=mix.weights)
    out = np.empty((n, mix.components[0].dim))
    for k, comp in enumerate(mix.components):
        sel = np.flatnonzero(idx == k)
        if sel.size:
            out[sel] = sample_gaussian(comp, sel.size, rng)
    return out, idx


def product_of_gaussians(spec: ProductSpec | Sequence[GaussianModel]) -> GaussianModel:
    """Renormalized product of Gaussian densities.

    Precisions add and the mean is the precision-weighted average of the
    factor means. The product's normalizing constant is discarded.
    """
    if not isinstance(spec, ProductSpec):
        spec = ProductSpec(tuple(spec))
    dim = spec.factors[0].dim
    prec = np.zeros((dim, dim))
    info = np.zeros(dim)
    for f in spec.factors:
        p = f.precision
        if not np.all(np.isfinite(p)):
            raise NumericError("singular factor covariance")
        prec += p
        info += p @ f.mean
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericError("summed precision is not positive definite") from exc
    inv_l = np.linalg.inv(chol)
    cov = inv_l.T @ inv_l
    cov = 0.5 * (cov + cov.T)
    return GaussianModel(cov @ info, cov)


def scott_bandwidth(points) -> float:
    """Scott's rule ``std * n**(-1/5)``; falls back to 1.0 when undefined."""
    x = np.asarray(points, dtype=float)
    if x.size < 2:
        return 1.0
    std = float(np.std(x, ddof=1))
    if std <= 0 or not math.isfinite(std):
        return 1.0
    return std * x.size ** (-0.2)


class Kde1D:
    """Gaussian kernel density estimate over a fixed set of scalar points.

    ``bandwidth`` is ``"scott"`` or a positive float.
    """

    def __init__(self, points, bandwidth="scott"):
        self.points = np.asarray(points, dtype=float).ravel()
        if self.points.size == 0:
            raise ValueError("KDE needs at least one point")
        if isinstance(bandwidth, str):
            if bandwidth != "scott":
                raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
            self.h = scott_bandwidth(self.points)
        else:
            h = float(bandwidth)
            if not h > 0:
                raise ValueError("fixed bandwidth must be positive")
            self.h = h

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = (x[..., None] - self.points) / self.h
        dens = np.exp(-0.5 * u * u).sum(axis=-1) / (self.points.size * self.h * math.sqrt(2.0 * math.pi))
        return float(dens) if dens.ndim == 0 else dens


def kde1d(points, rule="scott") -> Kde1D:
    return Kde1D(points, rule)
