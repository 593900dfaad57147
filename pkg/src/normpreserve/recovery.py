"""Recover a normality-preserving transform from Gaussian pushforward data.

Two settings:

* **affine** -- ``n + 1`` sources ``N(theta_j, I)`` whose means span the
  space, with images ``N(phi_j, Psi)``. The transform is forced to be
  ``x -> phi_0 + B^{-1} A (x - theta_0)`` where ``A`` stacks the rows
  ``(theta_j - theta_0)^T`` and ``B`` the rows ``(phi_j - phi_0)^T Psi^{-1}``.
* **piecewise** -- sources ``N(0, I)`` and ``N(0, I + eps_j u_j u_j^T)``.
  Each image covariance is ``I + eps_j v_j v_j^T``; stacking ``u_j`` and
  ``v_j`` as rows of ``A`` and ``C`` gives ``C T(x) = s(x) A x``, and the
  polar factors of ``A`` and ``C^{-1}`` are the orthogonal ``U`` and ``V``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    EstimationFailureError,
    InconsistentDataError,
    ModelMismatchError,
    NoIsometryError,
    NotInFamilyError,
)
from .gaussian import AffineMap
from .linalg_core import canonical_sign, check_spd, extract_rank_one, polar_decompose, spd_inv_sqrt

GRAM_TOL = 1e-6
NULL_GUARD = 1e-6
TOL_EPS = 0.1
# rank-one detection on *estimated* covariances; see RecoveryTolerances
TOL_RANK_ESTIMATED = 0.05
MIN_PAIRS = 10_000
REFINE_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class AffineRecoveryInput:
    thetas: np.ndarray
    phis: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        phis = np.atleast_2d(np.asarray(self.phis, dtype=float))
        n = thetas.shape[1]
        if thetas.shape != (n + 1, n) or phis.shape != (n + 1, n):
            raise DegenerateConfigurationError(
                f"need n+1 source and image means in dimension n; got {thetas.shape} and {phis.shape}"
            )
        psi = check_spd(self.psi, "psi")
        if psi.shape[0] != n:
            raise DegenerateConfigurationError(f"psi is {psi.shape[0]}x{psi.shape[0]}, expected {n}x{n}")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "psi", psi)

    @property
    def dim(self):
        return self.thetas.shape[1]

    def source_differences(self):
        return self.thetas[1:] - self.thetas[0]

    def image_differences(self):
        return self.phis[1:] - self.phis[0]


def _check_basis(rows, what):
    n = rows.shape[0]
    scale = float(np.max(np.linalg.norm(rows, axis=1)))
    det = abs(float(np.linalg.det(rows)))
    if scale == 0.0 or det <= 1e-10 * scale ** n:
        raise DegenerateConfigurationError(f"{what} do not form a basis (|det| = {det:.3g})")


def recover_affine(inp):
    """The unique affine map sending every ``theta_j`` to ``phi_j``.

    Raises
    ------
    DegenerateConfigurationError
        The source mean differences are not a basis.
    InconsistentDataError
        ``B`` is singular; with exact data it never is, so this flags bad
        estimates.
    """
    A = inp.source_differences()
    _check_basis(A, "source mean differences")
    B = np.linalg.solve(inp.psi, inp.image_differences().T).T
    s = np.linalg.svd(B, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise InconsistentDataError("image mean differences are degenerate (B is singular)")
    M = np.linalg.solve(B, A)
    return AffineMap(M, inp.phis[0] - M @ inp.thetas[0])


def isometry_certificate(inp, gram_tol=GRAM_TOL):
    """Orthogonal ``U`` with ``U (theta_i - theta_0) = Psi^{-1/2} (phi_i - phi_0)``.

    First checks that the two Gram matrices agree (distance preservation);
    then solves the orthogonal Procrustes problem through the polar factor of
    the cross-Gram matrix.
    """
    X = inp.source_differences()
    Y = inp.image_differences() @ spd_inv_sqrt(inp.psi)
    G_src = X @ X.T
    G_img = Y @ Y.T
    diff = np.abs(G_src - G_img)
    scale = 1.0 + float(np.max(np.abs(G_src)))
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
    if diff[worst] > gram_tol * scale:
        i, j = int(worst[0]) + 1, int(worst[1]) + 1
        raise NoIsometryError(
            f"Gram matrices disagree: worst pair (i, j) = ({i}, {j}) off by {diff[worst]:.3g}",
            worst_pair=(i, j), deviation=float(diff[worst]),
        )
    # cross-Gram sum_i y_i x_i^T; its orthogonal polar factor maximises tr(U^T Y^T X)
    _, U = polar_decompose(Y.T @ X)
    return U


def whiten_and_recover(thetas, phis, sigma, psi):
    """Affine recovery for sources ``N(theta_j, Sigma)`` with a common ``Sigma``.

    Recovers ``T'(x) = T(Sigma^{1/2} x)`` from the whitened means
    ``Sigma^{-1/2} theta_j`` and composes back with ``Sigma^{-1/2}``.
    """
    W = spd_inv_sqrt(sigma)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    inner = recover_affine(AffineRecoveryInput(thetas @ W, phis, psi))
    return AffineMap(inner.linear @ W, inner.shift)


def estimate_affine_input(thetas, image_samples):
    """Plug-in estimates: image means per dataset and the pooled image covariance."""
    phis = np.array([np.mean(Y, axis=0) for Y in image_samples])
    centred = np.concatenate([Y - Y.mean(axis=0) for Y in image_samples])
    dof = centred.shape[0] - len(image_samples)
    psi = centred.T @ centred / dof
    return AffineRecoveryInput(thetas, phis, 0.5 * (psi + psi.T))


@dataclass(frozen=True)
class RecoveryTolerances:
    """Tolerances for the piecewise pipeline.

    ``tol_rank`` separates the one genuine eigenvalue of ``Psi_hat - I``
    from sampling noise; with ``10^5`` pairs the noise eigenvalues are a few
    ``1e-3``, so ``0.05`` leaves a wide margin while still rejecting maps
    whose image covariance is not rank-one. ``refine_tol`` bounds the
    Frobenius distance of the pointwise fit ``W_j`` from ``v_j v_j^T``.
    """

    tol_eps: float = TOL_EPS
    tol_rank: float = TOL_RANK_ESTIMATED
    null_guard: float = NULL_GUARD
    residual_ratio: float = 1e-2
    holdout_ratio: float = 1e-2
    holdout_fraction: float = 0.99
    min_pairs: int = MIN_PAIRS
    refine_tol: float = REFINE_TOL


@dataclass(frozen=True, eq=False)
class PiecewiseRecoveryInput:
    """Probe covariances with their paired samples.

    ``sigmas[j]`` must be ``I + eps_j u_j u_j^T``; ``paired_samples[j]`` is a
    tuple ``(x, tx)`` of ``(m, n)`` arrays with ``x`` drawn from
    ``N(0, sigmas[j])``; ``identity_pairs`` likewise with ``x ~ N(0, I)``.
    """

    sigmas: tuple
    paired_samples: tuple
    identity_pairs: tuple

    @property
    def dim(self):
        return np.asarray(self.sigmas[0]).shape[0]


@dataclass
class PiecewiseRecovery:
    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    C: np.ndarray
    epsilons: np.ndarray
    epsilons_hat: np.ndarray
    us: np.ndarray
    vs_hat: np.ndarray
    signs: np.ndarray
    retained: np.ndarray
    holdout: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def predict(self, x, signs):
        """``V s U x`` row-wise for given sign patterns."""
        return (signs * (np.atleast_2d(x) @ self.U.T)) @ self.V.T

    def to_dict(self):
        return {
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "epsilons": self.epsilons.tolist(),
            "epsilons_hat": self.epsilons_hat.tolist(),
            "u": self.us.tolist(),
            "v_hat": self.vs_hat.tolist(),
        }


def sign_assignments(A, C, x, tx, null_guard=NULL_GUARD):
    """Per-pair sign patterns ``sign(v_j^T T x / u_j^T x)`` and residuals.

    Pairs with some ``|u_j^T x| < null_guard`` are dropped. Returns
    ``(signs, residuals, keep)`` where ``signs`` and ``residuals`` refer to
    the kept rows and ``keep`` is the boolean mask over the input rows.
    """
    Ax = np.atleast_2d(x) @ A.T
    Ctx = np.atleast_2d(tx) @ C.T
    keep = np.all(np.abs(Ax) >= null_guard, axis=1)
    Ax, Ctx = Ax[keep], Ctx[keep]
    signs = np.where(Ctx * Ax >= 0, 1.0, -1.0)
    residuals = np.linalg.norm(Ctx - signs * Ax, axis=1)
    return signs, residuals, keep


def _empirical_cov(Y):
    Yc = Y - Y.mean(axis=0)
    S = Yc.T @ Yc / (Y.shape[0] - 1)
    return 0.5 * (S + S.T)


def _vech_design(Y):
    """Rows ``vech(y y^T)`` with off-diagonal entries doubled, so ``row . vech(W) = y^T W y``."""
    n = Y.shape[1]
    i, j = np.triu_indices(n)
    weight = np.where(i == j, 1.0, 2.0)
    return Y[:, i] * Y[:, j] * weight, (i, j)


def refine_direction(u, x, tx):
    """Pointwise estimate of ``v`` from ``(v^T T x)^2 = (u^T x)^2``.

    The relation is linear in the symmetric matrix ``W = v v^T``; a least
    squares fit over all pairs gives ``W``, and ``v`` is its top unit
    eigenvector. Returns ``(v, W)`` with ``v`` sign-normalised.
    """
    X, (i, j) = _vech_design(np.asarray(tx, dtype=float))
    target = (np.asarray(x, dtype=float) @ u) ** 2
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    n = u.size
    W = np.zeros((n, n))
    W[i, j] = coef
    W[j, i] = coef
    w, Q = np.linalg.eigh(W)
    return canonical_sign(Q[:, -1]), W


def recover_piecewise(inp, tol=None):
    """Recover ``U``, ``V`` and per-sample sign patterns from paired samples.

    Steps: estimate each image covariance and read off ``(eps_hat_j, v_hat_j)``;
    sharpen ``v_hat_j`` with :func:`refine_direction` on the same pairs; stack ``A`` (rows ``u_j``) and ``C`` (rows ``v_hat_j``); assign a sign
    pattern to each identity pair; take ``U`` from ``A = H U`` and ``V`` from
    ``C^{-1} = V K`` (polar factors). The second half of the identity pairs is
    held out and must be reproduced by ``V s U x``.

    Raises
    ------
    NotInFamilyError
        A probe covariance or an estimated image covariance is not a rank-one
        perturbation of ``I``, ``eps_hat_j`` is too far from ``eps_j``, or the
        pointwise fit ``W_j`` is not ``v_j v_j^T``.
    EstimationFailureError
        The estimated ``v_hat_j`` are (numerically) linearly dependent.
    ModelMismatchError
        The residual or hold-out contract fails; ``diagnostics`` is attached.
    """
    tol = tol or RecoveryTolerances()
    n = inp.dim
    if len(inp.sigmas) != n or len(inp.paired_samples) != n:
        raise DegenerateConfigurationError(f"need {n} probe covariances and datasets, got {len(inp.sigmas)}")

    eps, us = [], []
    for j, S in enumerate(inp.sigmas):
        got = extract_rank_one(check_spd(S, f"sigmas[{j}]"))
        if got is None:
            raise NotInFamilyError(f"sigmas[{j}] is not of the form I + eps u u^T")
        eps.append(got[0])
        us.append(got[1])
    A = np.array(us)
    _check_basis(A, "probe directions u_j")

    eps_hat, vs, psi_hats, refine_angles = [], [], [], []
    for j, (x, tx) in enumerate(inp.paired_samples):
        tx = np.asarray(tx, dtype=float)
        if tx.shape[0] < tol.min_pairs:
            raise EstimationFailureError(f"dataset {j} has {tx.shape[0]} pairs, need {tol.min_pairs}")
        Psi = _empirical_cov(tx)
        psi_hats.append(Psi)
        got = extract_rank_one(Psi, tol_rank=tol.tol_rank)
        if got is None:
            w = np.linalg.eigvalsh(Psi - np.eye(n))
            raise NotInFamilyError(
                f"image covariance of dataset {j} is not a rank-one perturbation of I "
                f"(eigenvalues of Psi_hat - I: {np.round(w, 4).tolist()})"
            )
        if abs(got[0] - eps[j]) > tol.tol_eps:
            raise NotInFamilyError(
                f"dataset {j}: eps_hat = {got[0]:.4f} differs from eps = {eps[j]:.4f} by more than {tol.tol_eps}"
            )
        v, W = refine_direction(us[j], x, tx)
        miss = float(np.linalg.norm(W - np.outer(v, v)))
        if miss > tol.refine_tol:
            raise NotInFamilyError(
                f"dataset {j}: pairs do not satisfy (v^T T x)^2 = (u^T x)^2 for any unit v "
                f"(best fit is {miss:.3g} from rank one)"
            )
        eps_hat.append(got[0])
        vs.append(v)
        refine_angles.append(float(np.arccos(min(1.0, abs(float(v @ got[1]))))))
    C = np.array(vs)
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise EstimationFailureError("estimated directions v_hat_j are linearly dependent")

    x_id = np.asarray(inp.identity_pairs[0], dtype=float)
    tx_id = np.asarray(inp.identity_pairs[1], dtype=float)
    m = x_id.shape[0]
    if m < tol.min_pairs:
        raise EstimationFailureError(f"identity dataset has {m} pairs, need {tol.min_pairs}")
    half = m // 2
    signs, resid, keep = sign_assignments(A, C, x_id[:half], tx_id[:half], tol.null_guard)

    B = np.linalg.inv(C)
    _, U = polar_decompose(A)
    _, Vt = polar_decompose(B.T)
    V = Vt.T

    x_ho, tx_ho = x_id[half:], tx_id[half:]
    s_ho, _, keep_ho = sign_assignments(A, C, x_ho, tx_ho, tol.null_guard)
    x_ho, tx_ho = x_ho[keep_ho], tx_ho[keep_ho]
    pred = (s_ho * (x_ho @ U.T)) @ V.T
    err = np.linalg.norm(pred - tx_ho, axis=1)
    xnorm = np.linalg.norm(x_ho, axis=1)
    holdout_ok = err <= tol.holdout_ratio * xnorm

    median_resid = float(np.median(resid))
    median_norm = float(np.median(np.linalg.norm(x_id[:half][keep], axis=1)))
    cell_counts = {}
    for s in signs:
        key = "".join("+" if v > 0 else "-" for v in s)
        cell_counts[key] = cell_counts.get(key, 0) + 1
    diagnostics = {
        "epsilons": [float(e) for e in eps],
        "epsilons_hat": [float(e) for e in eps_hat],
        "refinement_angles": refine_angles,
        "residual_quantiles": {
            q: float(v) for q, v in zip(("50", "90", "99", "100"), np.percentile(resid, [50, 90, 99, 100]))
        },
        "median_residual": median_resid,
        "median_norm": median_norm,
        "retained": int(np.count_nonzero(keep)),
        "discarded": int(half - np.count_nonzero(keep)),
        "sign_cell_counts": dict(sorted(cell_counts.items())),
        "holdout_pairs": int(x_ho.shape[0]),
        "holdout_fraction_ok": float(np.mean(holdout_ok)) if holdout_ok.size else 0.0,
        "holdout_error_quantiles": {
            q: float(v) for q, v in zip(("50", "99", "100"), np.percentile(err / xnorm, [50, 99, 100]))
        },
    }
    rec = PiecewiseRecovery(
        U=U, V=V, A=A, C=C,
        epsilons=np.array(eps), epsilons_hat=np.array(eps_hat),
        us=A, vs_hat=C, signs=signs, retained=keep, holdout=keep_ho,
        diagnostics=diagnostics,
    )
    if median_resid > tol.residual_ratio * median_norm:
        raise ModelMismatchError(
            f"median residual {median_resid:.3g} exceeds {tol.residual_ratio} x median |x| ({median_norm:.3g})",
            diagnostics,
        )
    if diagnostics["holdout_fraction_ok"] < tol.holdout_fraction:
        raise ModelMismatchError(
            f"only {diagnostics['holdout_fraction_ok']:.4f} of held-out pairs are reproduced "
            f"(need {tol.holdout_fraction})",
            diagnostics,
        )
    return rec
