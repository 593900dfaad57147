"""Gaussian measures, affine maps and their pushforwards.

Sampling draws ``z`` from numpy's ``Generator(PCG64(seed)).standard_normal``
(ziggurat method) and returns ``theta + Sigma^{1/2} z`` with the symmetric
square root, so a given seed always yields the same matrix of draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatchError, SingularMatrixError
from .linalg_core import as_square, check_spd, spd_inv_sqrt, spd_sqrt


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """``N(mean, cov)`` with a nonsingular covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = check_spd(self.cov, "cov")
        if cov.shape[0] != mean.size:
            raise DimensionMismatchError(
                f"mean has length {mean.size} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def standard(cls, n):
        return cls(np.zeros(n), np.eye(n))

    @property
    def dim(self):
        return self.mean.size

    @cached_property
    def cov_sqrt(self):
        return spd_sqrt(self.cov)

    @cached_property
    def cov_inv_sqrt(self):
        return spd_inv_sqrt(self.cov)

    @cached_property
    def cov_inv(self):
        return np.linalg.inv(self.cov)

    @cached_property
    def logdet(self):
        return float(np.linalg.slogdet(self.cov)[1])

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["cov"], dtype=float))


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x -> linear @ x + shift`` with nonsingular ``linear``."""

    linear: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        A = as_square(self.linear, "linear")
        a = np.zeros(A.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float).reshape(-1)
        if a.size != A.shape[0]:
            raise DimensionMismatchError(f"shift has length {a.size}, linear part is {A.shape}")
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise SingularMatrixError("affine map requires a nonsingular linear part")
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "shift", a)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.zeros(n))

    @property
    def dim(self):
        return self.shift.size

    def apply(self, x):
        """Apply to a point ``(n,)`` or to rows of an ``(m, n)`` array."""
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.shift

    __call__ = apply

    def apply_inverse(self, y):
        y = np.asarray(y, dtype=float)
        return np.linalg.solve(self.linear, (y - self.shift).T).T

    def compose(self, inner):
        """``self o inner``: first ``inner``, then ``self``."""
        return AffineMap(self.linear @ inner.linear, self.linear @ inner.shift + self.shift)

    def inverse(self):
        Ainv = np.linalg.inv(self.linear)
        return AffineMap(Ainv, -Ainv @ self.shift)

    def to_dict(self):
        return {"A": self.linear.tolist(), "a": self.shift.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["A"], dtype=float), np.asarray(d["a"], dtype=float))


def _check_dim(g, n, what):
    if g.dim != n:
        raise DimensionMismatchError(f"{what} has dimension {n}, Gaussian has dimension {g.dim}")


def log_density(g, x):
    """Log density of ``g`` at a point, or at each row of a 2-d array."""
    x = np.asarray(x, dtype=float)
    _check_dim(g, x.shape[-1], "point")
    d = x - g.mean
    # Mahalanobis form through the symmetric inverse square root
    w = d @ g.cov_inv_sqrt
    maha = np.sum(w * w, axis=-1)
    return -0.5 * g.dim * np.log(2 * np.pi) - 0.5 * g.logdet - 0.5 * maha


def density(g, x):
    return np.exp(log_density(g, x))


def sample(g, count, seed):
    """``count`` i.i.d. draws from ``g`` as a ``(count, n)`` array."""
    if int(count) < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(count), g.dim))
    return z @ g.cov_sqrt + g.mean


def affine_pushforward(g, m):
    """Law of ``m(X)`` for ``X ~ g``: ``N(A theta + a, A Sigma A^T)``."""
    _check_dim(g, m.dim, "affine map")
    A = m.linear
    cov = A @ g.cov @ A.T
    return GaussianMeasure(A @ g.mean + m.shift, 0.5 * (cov + cov.T))


def whitening_map(g):
    """The affine map ``x -> Sigma^{-1/2} (x - theta)`` sending ``g`` to ``N(0, I)``."""
    W = g.cov_inv_sqrt
    return AffineMap(W, -W @ g.mean)
