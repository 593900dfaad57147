"""Monte-Carlo check that a transform pushes one Gaussian onto another.

``verify_pushforward`` samples the source, applies the transform and runs
moment gates plus Mardia's multivariate skewness and kurtosis tests.
``grid_density_oracle`` is an exact alternative for ``n <= 2``: on each
piece the map is orthogonal, so the image density is the source density
evaluated at the preimage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DimensionMismatchError, NonUnitJacobianError, UnsupportedDimensionError
from .gaussian import density, sample
from .identity_checks import PushforwardClaim
from .transform import PiecewiseSignOrthogonal


@dataclass(frozen=True, eq=False)
class VerificationPlan:
    claim: PushforwardClaim
    sample_count: int = 200_000
    seed: int = 0
    alpha: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.sample_count) < 1000:
            raise ValueError(f"sample_count must be at least 1000, got {self.sample_count}")


@dataclass
class VerificationReport:
    mean_ok: bool
    mean_dev: float
    mean_bound: float
    cov_ok: bool
    cov_dev: float
    cov_bound: float
    mardia_skewness: float
    mardia_skewness_p: float
    mardia_kurtosis: float
    mardia_kurtosis_p: float
    alpha: float
    sample_count: int
    verdict: str
    runtime: float = field(default=0.0, compare=False)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self, include_runtime=False):
        d = {k: getattr(self, k) for k in (
            "verdict", "mean_ok", "mean_dev", "mean_bound", "cov_ok", "cov_dev", "cov_bound",
            "mardia_skewness", "mardia_skewness_p", "mardia_kurtosis", "mardia_kurtosis_p",
            "alpha", "sample_count",
        )}
        if include_runtime:
            d["runtime"] = self.runtime
        return d


def mardia_test(Y):
    """Mardia's multivariate skewness and kurtosis tests.

    ``b1 = mean_{i,k} (z_i . z_k)^3`` is evaluated through the third-moment
    tensor ``M_abc = mean_i z_ia z_ib z_ic`` as ``sum M_abc^2``, which avoids
    the ``(N, N)`` Gram matrix. ``z`` is the data standardised with its own
    mean and biased covariance.

    Returns ``(b1, p_skew, b2, p_kurt)``: ``N b1 / 6`` against chi-square
    with ``n(n+1)(n+2)/6`` degrees of freedom, and
    ``(b2 - n(n+2)) / sqrt(8 n (n+2) / N)`` against a standard normal,
    two-sided.
    """
    Y = np.asarray(Y, dtype=float)
    N, n = Y.shape
    D = Y - Y.mean(axis=0)
    S = D.T @ D / N
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    Z = D @ (Q / np.sqrt(w)) @ Q.T
    pairs = (Z[:, :, None] * Z[:, None, :]).reshape(N, n * n)
    M3 = Z.T @ pairs / N
    b1 = float(np.sum(M3 * M3))
    r2 = np.sum(Z * Z, axis=1)
    b2 = float(np.mean(r2 * r2))
    df = n * (n + 1) * (n + 2) / 6.0
    p_skew = float(stats.chi2.sf(N * b1 / 6.0, df))
    z_kurt = (b2 - n * (n + 2)) / np.sqrt(8.0 * n * (n + 2) / N)
    p_kurt = float(2.0 * stats.norm.sf(abs(z_kurt)))
    return b1, p_skew, b2, p_kurt


def _apply(t, X):
    if hasattr(t, "apply"):
        return t.apply(X)
    return np.asarray(t(X), dtype=float)


def check_samples(images, claim, alpha=0.01):
    """Score already-transformed samples against ``claim.image``."""
    Y = np.asarray(images, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != claim.dim:
        raise DimensionMismatchError(f"image samples must be (N, {claim.dim}), got {Y.shape}")
    N, n = Y.shape
    target = claim.image
    mu = Y.mean(axis=0)
    band = 4.0 * np.sqrt(np.diag(target.cov) / N)
    mean_dev = float(np.max(np.abs(mu - target.mean) / band))
    mean_ok = bool(np.all(np.abs(mu - target.mean) <= band))
    D = Y - mu
    S = D.T @ D / (N - 1)
    cov_dev = float(np.linalg.norm(S - target.cov))
    cov_bound = float(4.0 * np.linalg.norm(target.cov) * np.sqrt(2.0 * (n + 1) / N))
    cov_ok = cov_dev <= cov_bound
    b1, p_skew, b2, p_kurt = mardia_test(Y)
    passed = mean_ok and cov_ok and p_skew >= alpha and p_kurt >= alpha
    return VerificationReport(
        mean_ok=mean_ok, mean_dev=mean_dev, mean_bound=1.0,
        cov_ok=bool(cov_ok), cov_dev=cov_dev, cov_bound=cov_bound,
        mardia_skewness=b1, mardia_skewness_p=p_skew,
        mardia_kurtosis=b2, mardia_kurtosis_p=p_kurt,
        alpha=alpha, sample_count=N,
        verdict="pass" if passed else "fail",
    )


def verify_pushforward(t, plan):
    """Sample ``plan.claim.source``, push through ``t`` and test against the claimed image.

    ``t`` is anything with a row-wise ``apply`` (affine or piecewise maps) or
    a plain callable on ``(N, n)`` arrays. The mean gate allows 4 standard
    errors per coordinate (``mean_dev`` is reported in those units); the
    covariance gate bounds the Frobenius error by
    ``4 ||Psi||_F sqrt(2 (n + 1) / N)``.
    """
    start = time.perf_counter()
    X = sample(plan.claim.source, plan.sample_count, plan.seed)
    Y = _apply(t, X)
    rep = check_samples(Y, plan.claim, plan.alpha)
    rep.runtime = time.perf_counter() - start
    return rep


def grid_density_oracle(t, source, claimed, resolution=None, skip_tol=1e-9):
    """Max ``|p_T(y) - p_claimed(y)|`` over a grid, ``p_T`` the exact image density.

    ``p_T(y) = p_source(T^{-1} y)`` because every piece is orthogonal. The
    grid covers ``[-6 s, 6 s]^n`` with ``s`` the largest standard deviation
    of either measure; nodes within ``skip_tol`` of a cell boundary are
    skipped. Default resolution is 2001 nodes for ``n = 1``, 401 per axis
    for ``n = 2``.
    """
    if not isinstance(t, PiecewiseSignOrthogonal):
        raise TypeError("grid_density_oracle needs a PiecewiseSignOrthogonal transform")
    n = t.dim
    if n > 2:
        raise UnsupportedDimensionError(f"grid oracle supports n <= 2, got n = {n}")
    if abs(t.jacobian - 1.0) > 1e-12:
        raise NonUnitJacobianError(f"transform has Jacobian {t.jacobian:.6g}, need 1")
    if source.dim != n or claimed.dim != n:
        raise DimensionMismatchError("source, claimed image and transform dimensions differ")
    if resolution is None:
        resolution = 2001 if n == 1 else 401
    sd = np.sqrt(max(np.max(np.linalg.eigvalsh(source.cov)), np.max(np.linalg.eigvalsh(claimed.cov))))
    axis = np.linspace(-6.0 * sd, 6.0 * sd, int(resolution))
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    Z = Y
    if t.psi0_sqrt is not None:
        Z = Z @ t._psi0_inv_sqrt.T
    keep = t.partition.boundary_distance(Z @ t.V) > skip_tol
    Y = Y[keep]
    p_img = density(source, t.apply_inverse(Y)) / t.jacobian
    p_claim = density(claimed, Y)
    return float(np.max(np.abs(p_img - p_claim)))
