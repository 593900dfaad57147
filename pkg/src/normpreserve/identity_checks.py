"""Necessary conditions for a pair of Gaussian pushforward claims.

If one Borel automorphism sends ``N(theta_i, Sigma_i)`` to
``N(phi_i, Psi_i)`` for ``i = 1, 2``, then

1. ``Psi1^{1/2} Psi2^{-1} Psi1^{1/2}`` and ``Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2}``
   share a characteristic polynomial (hence ``|Sigma1|/|Sigma2| = |Psi1|/|Psi2|``);
2. a resolvent-type quadratic form in the mean differences agrees as a
   function of ``z``;
3. the Mahalanobis distance between the means is preserved;
4. the log-likelihood ratio is preserved pointwise, almost everywhere.

Each check returns ``(passed, deviation)`` so a failing claim can be
falsified without access to the transform.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ProbeAtPoleError, TooFewPairsError
from .gaussian import GaussianMeasure
from .linalg_core import char_poly

DEFAULT_PROBES = tuple(np.linspace(-0.4, 0.4, 11))
POLE_TOL = 1e-10
MIN_PAIRS = 100


@dataclass(frozen=True, eq=False)
class PushforwardClaim:
    """A claim that some transform sends ``source`` to ``image``."""

    source: GaussianMeasure
    image: GaussianMeasure

    def __post_init__(self):
        if self.source.dim != self.image.dim:
            raise DimensionMismatchError(
                f"source has dimension {self.source.dim}, image {self.image.dim}"
            )

    @property
    def dim(self):
        return self.source.dim

    def to_dict(self):
        return {"source": self.source.to_dict(), "image": self.image.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(GaussianMeasure.from_dict(d["source"]), GaussianMeasure.from_dict(d["image"]))


@dataclass(frozen=True, eq=False)
class ClaimPair:
    first: PushforwardClaim
    second: PushforwardClaim

    def __post_init__(self):
        if self.first.dim != self.second.dim:
            raise DimensionMismatchError(
                f"claims have dimensions {self.first.dim} and {self.second.dim}"
            )

    @property
    def dim(self):
        return self.first.dim

    def to_dict(self):
        return {"first": self.first.to_dict(), "second": self.second.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(PushforwardClaim.from_dict(d["first"]), PushforwardClaim.from_dict(d["second"]))


def _sandwich(g1, g2):
    # g1^{1/2} g2^{-1} g1^{1/2}
    R = g1.cov_sqrt
    M = R @ np.linalg.solve(g2.cov, R)
    return 0.5 * (M + M.T)


def check_charpoly(pair):
    p_img = char_poly(_sandwich(pair.first.image, pair.second.image))
    p_src = char_poly(_sandwich(pair.first.source, pair.second.source))
    dev = float(np.max(np.abs(p_img - p_src)))
    scale = float(max(np.max(np.abs(p_img)), np.max(np.abs(p_src))))
    return dev <= 1e-8 * (1.0 + scale), dev


def _resolvent_form(d, g1, g2, z):
    P2 = g2.cov_inv
    M = g1.cov_inv - z * P2
    det = np.linalg.det(M)
    if abs(det) <= POLE_TOL:
        raise ProbeAtPoleError(f"probe z = {z!r} is at a pole (|det| = {abs(det):.3g})", z=z)
    w = P2 @ d
    return float(w @ np.linalg.solve(M, w))


def resolvent_values(pair, probes=DEFAULT_PROBES):
    """Both sides of the resolvent identity at each probe, as two arrays."""
    dphi = pair.first.image.mean - pair.second.image.mean
    dtheta = pair.first.source.mean - pair.second.source.mean
    lhs = np.array([_resolvent_form(dphi, pair.first.image, pair.second.image, z) for z in probes])
    rhs = np.array([_resolvent_form(dtheta, pair.first.source, pair.second.source, z) for z in probes])
    return lhs, rhs


def check_resolvent(pair, probes=DEFAULT_PROBES):
    """Compare the two resolvent forms at finitely many ``z``.

    Both sides are rational in ``z`` with degree at most ``n``, so agreement
    at ``n + 1`` pole-free probes pins them; the default 11 probes cover
    ``n <= 10``.
    """
    lhs, rhs = resolvent_values(pair, probes)
    dev = float(np.max(np.abs(lhs - rhs)))
    mag = float(max(np.max(np.abs(lhs)), np.max(np.abs(rhs))))
    return dev <= 1e-8 * (1.0 + mag), dev


def mahalanobis_values(pair):
    dphi = pair.first.image.mean - pair.second.image.mean
    dtheta = pair.first.source.mean - pair.second.source.mean
    lhs = float(dphi @ np.linalg.solve(pair.second.image.cov, dphi))
    rhs = float(dtheta @ np.linalg.solve(pair.second.source.cov, dtheta))
    return lhs, rhs


def check_mahalanobis(pair):
    lhs, rhs = mahalanobis_values(pair)
    dev = abs(lhs - rhs)
    return dev <= 1e-10 * (1.0 + abs(rhs)), dev


def check_determinant_ratio(pair):
    """``|Sigma1|/|Sigma2|`` against ``|Psi1|/|Psi2|``, compared in log space."""
    log_src = pair.first.source.logdet - pair.second.source.logdet
    log_img = pair.first.image.logdet - pair.second.image.logdet
    dev = abs(float(np.expm1(log_img - log_src)))
    return dev <= 1e-10, dev


def _quad(X, g):
    D = X - g.mean
    W = D @ g.cov_inv_sqrt
    return np.sum(W * W, axis=1)


def density_identity_deviations(pair, x, tx):
    """Per-pair ``|lhs - rhs|`` and ``|rhs|`` for the pointwise log-ratio identity."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    if x.shape != tx.shape or x.shape[1] != pair.dim:
        raise DimensionMismatchError(
            f"paired samples must both be (m, {pair.dim}); got {x.shape} and {tx.shape}"
        )
    lhs = _quad(tx, pair.second.image) - _quad(tx, pair.first.image)
    rhs = _quad(x, pair.second.source) - _quad(x, pair.first.source)
    return np.abs(lhs - rhs), np.abs(rhs)


def check_density_identity(pair, x, tx):
    """Pointwise identity on sample pairs ``(x, T x)``.

    Passes when the 99th percentile of the absolute deviation is at most
    ``1e-8 * (1 + median |rhs|)``. Returns ``(passed, quantiles)`` where
    ``quantiles`` maps ``"50"``, ``"90"``, ``"99"``, ``"100"`` to deviations.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < MIN_PAIRS:
        raise TooFewPairsError(f"need at least {MIN_PAIRS} sample pairs, got {x.shape[0]}")
    dev, mag = density_identity_deviations(pair, x, tx)
    q = np.percentile(dev, [50, 90, 99, 100])
    quantiles = {k: float(v) for k, v in zip(("50", "90", "99", "100"), q)}
    return bool(quantiles["99"] <= 1e-8 * (1.0 + float(np.median(mag)))), quantiles


def corollary_screen(pair, eq_tol=1e-12, diff_tol=1e-8):
    """Cheap consequences of the charpoly and Mahalanobis identities.

    Equal source covariances force equal image covariances (violation
    ``"i"``); equal source means force equal image means (violation ``"ii"``).
    """
    out = []
    s1, s2 = pair.first.source, pair.second.source
    i1, i2 = pair.first.image, pair.second.image
    if np.max(np.abs(s1.cov - s2.cov)) <= eq_tol:
        d = float(np.max(np.abs(i1.cov - i2.cov)))
        if d > diff_tol:
            out.append({"violation": "i", "detail": f"equal source covariances but image covariances differ by {d:.3g}"})
    if np.max(np.abs(s1.mean - s2.mean)) <= eq_tol:
        d = float(np.max(np.abs(i1.mean - i2.mean)))
        if d > diff_tol:
            out.append({"violation": "ii", "detail": f"equal source means but image means differ by {d:.3g}"})
    return out


@dataclass
class IdentityReport:
    charpoly_pass: bool
    charpoly_dev: float
    resolvent_pass: bool
    resolvent_dev: float
    mahalanobis_pass: bool
    mahalanobis_dev: float
    det_pass: bool
    det_dev: float
    density_pass: bool | None = None
    density_quantiles: dict | None = None
    violations: list = field(default_factory=list)

    @property
    def all_pass(self):
        ok = self.charpoly_pass and self.resolvent_pass and self.mahalanobis_pass and self.det_pass
        if self.density_pass is not None:
            ok = ok and self.density_pass
        return ok and not self.violations

    def to_dict(self):
        d = asdict(self)
        d["all_pass"] = self.all_pass
        return d


def run_identity_checks(pair, x=None, tx=None, probes=DEFAULT_PROBES):
    """All checks on one claim pair; the pointwise check runs only with samples."""
    cp, cpd = check_charpoly(pair)
    rp, rpd = check_resolvent(pair, probes)
    mp, mpd = check_mahalanobis(pair)
    dp, dpd = check_determinant_ratio(pair)
    rep = IdentityReport(bool(cp), cpd, bool(rp), rpd, bool(mp), mpd, bool(dp), dpd,
                         violations=corollary_screen(pair))
    if x is not None:
        rep.density_pass, rep.density_quantiles = check_density_identity(pair, x, tx)
    return rep
