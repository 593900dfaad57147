"""Small dense linear-algebra helpers.

SPD square roots, polar decomposition, characteristic polynomials and the
rank-one covariance perturbations ``I + eps * u u^T`` used to probe a
transform. Everything works on plain ``numpy`` arrays; validation helpers
raise the errors in :mod:`normpreserve.errors`.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import (
    DegeneratePerturbationError,
    NotOrthogonalError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    NotUnitVectorError,
    NumericalFailure,
    SingularMatrixError,
)

SYMMETRY_RTOL = 1e-12
ORTHOGONALITY_TOL = 1e-12
UNIT_TOL = 1e-12
TOL_RANK = 1e-6


def as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def check_spd(M, name="matrix"):
    """Validate ``M`` as symmetric positive definite and return it as an array.

    Symmetry is checked relative to the largest entry; positivity by the
    smallest eigenvalue.
    """
    M = as_square(M, name)
    scale = np.max(np.abs(M)) if M.size else 0.0
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric (max |M - M^T| = {asym:.3g})")
    try:
        w = np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition of {name} failed: {exc}") from exc
    if not np.all(w > 0):
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (min eigenvalue {w.min():.3g})"
        )
    return M


def check_orthogonal(Q, name="matrix", tol=ORTHOGONALITY_TOL):
    Q = as_square(Q, name)
    dev = np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0])))
    if dev > tol:
        raise NotOrthogonalError(f"{name} is not orthogonal (max |Q^T Q - I| = {dev:.3g})")
    return Q


def _eigh(M):
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc


def spd_sqrt(M):
    """Symmetric positive definite square root ``R`` with ``R @ R == M``."""
    M = check_spd(M)
    w, V = _eigh(M)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def spd_inv_sqrt(M):
    """``M^{-1/2}``, the inverse of :func:`spd_sqrt`."""
    M = check_spd(M)
    w, V = _eigh(M)
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def polar_decompose(A):
    """Left polar decomposition ``A = P @ Q``.

    ``P`` is symmetric positive definite and ``Q`` orthogonal. Computed from
    the SVD ``A = W S Z^T`` as ``P = W S W^T`` and ``Q = W Z^T``.

    Raises
    ------
    SingularMatrixError
        If ``|det A|`` is below ``1e-12`` times the natural scale
        ``||A||_2 ** n``.
    """
    A = as_square(A, "A")
    try:
        W, s, Zt = np.linalg.svd(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc
    if s[0] == 0.0 or np.prod(s / s[0]) <= 1e-12:
        raise SingularMatrixError("polar decomposition requires a nonsingular matrix")
    P = (W * s) @ W.T
    P = 0.5 * (P + P.T)
    return P, W @ Zt


def char_poly(M):
    """Coefficients of ``det(xI - M)`` in descending powers.

    Roots come from the eigenvalues of ``M``; the leading coefficient is
    exactly 1.
    """
    M = as_square(M)
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue computation failed: {exc}") from exc
    coeffs = np.poly(eig)
    coeffs = np.real(coeffs).astype(float)
    coeffs[0] = 1.0
    return coeffs


def _check_rank_one_args(epsilon, u):
    u = np.asarray(u, dtype=float).reshape(-1)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > UNIT_TOL:
        raise NotUnitVectorError(f"u must be a unit vector (||u|| = {norm!r})")
    epsilon = float(epsilon)
    if epsilon <= -1.0:
        raise NotPositiveDefiniteError(f"I + eps u u^T is not positive definite for eps = {epsilon}")
    if epsilon == 0.0:
        raise DegeneratePerturbationError("eps = 0 gives no perturbation")
    return epsilon, u


def rank_one_spd(epsilon, u):
    """``I + epsilon * u u^T`` for a unit vector ``u`` and ``epsilon > -1``."""
    epsilon, u = _check_rank_one_args(epsilon, u)
    return np.eye(u.size) + epsilon * np.outer(u, u)


def rank_one_inverse(epsilon, u):
    """Closed-form inverse ``I - eps/(1+eps) u u^T`` of :func:`rank_one_spd`."""
    epsilon, u = _check_rank_one_args(epsilon, u)
    return np.eye(u.size) - (epsilon / (1.0 + epsilon)) * np.outer(u, u)


def canonical_sign(v):
    """Flip ``v`` so its first nonzero coordinate is positive."""
    v = np.asarray(v, dtype=float)
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def extract_rank_one(M, tol_rank=TOL_RANK):
    """Recover ``(epsilon, u)`` from ``M = I + epsilon u u^T``.

    Returns ``None`` when ``M - I`` does not have exactly one eigenvalue of
    magnitude above ``tol_rank``. The unit vector is sign-normalised with
    :func:`canonical_sign`, since only ``u u^T`` is identified.
    """
    M = as_square(M)
    D = 0.5 * (M + M.T) - np.eye(M.shape[0])
    w, V = _eigh(D)
    big = np.abs(w) > tol_rank
    if np.count_nonzero(big) != 1:
        return None
    k = int(np.flatnonzero(big)[0])
    u = V[:, k] / np.linalg.norm(V[:, k])
    return float(w[k]), canonical_sign(u)


def sign_matrices(n):
    """All ``2**n`` sign vectors of length ``n`` (diagonals of the sign matrices)."""
    return [np.array(s, dtype=float) for s in itertools.product((1.0, -1.0), repeat=n)]


def random_orthogonal(n, rng):
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def random_spd(n, rng, cond=10.0):
    """Random SPD matrix with eigenvalues log-uniform in ``[1, cond]``, shuffled scale."""
    Q = random_orthogonal(n, rng)
    w = np.exp(rng.uniform(0.0, np.log(cond), size=n))
    M = (Q * w) @ Q.T
    return 0.5 * (M + M.T)
