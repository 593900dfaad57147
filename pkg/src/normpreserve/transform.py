"""Piecewise sign-flip orthogonal maps ``x -> V s(x) U x``.

The cells are products of symmetric sets: in the rotated frame ``y = U x``
coordinate ``j`` keeps its sign when ``|y_j|`` lies in a finite union of
intervals and flips otherwise. Such maps preserve ``N(0, I)`` and send every
covariance whose rotated form commutes with the active sign patterns to a
single Gaussian. An optional pair ``(Sigma0^{1/2}, Psi0^{1/2})`` conjugates
the map into ``x -> Psi0^{1/2} V s U Sigma0^{-1/2} x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidPartitionError,
    NotPushforwardClosedError,
    UnsupportedMeanError,
)
from .gaussian import GaussianMeasure
from .linalg_core import (
    check_orthogonal,
    check_spd,
    random_orthogonal,
    rank_one_spd,
)

ADMISSIBILITY_TOL = 1e-10


def _parse_bound(b):
    if isinstance(b, str):
        if b.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise InvalidPartitionError(f"unknown interval bound {b!r}")
    return float(b)


def _dump_bound(b):
    return "inf" if math.isinf(b) else b


@dataclass(frozen=True)
class SymmetricProductPartition:
    """Per coordinate, the intervals ``[a, b)`` of ``|y_j|`` that keep the sign.

    ``plus[j]`` is a sorted tuple of disjoint ``(a, b)`` pairs with
    ``0 <= a < b <= inf``. Values of ``|y_j|`` outside the union flip sign.
    A value exactly on an endpoint counts as inside (a null-set convention
    that makes the map deterministic).
    """

    plus: tuple

    def __post_init__(self):
        coords = []
        for j, intervals in enumerate(self.plus):
            ivs = []
            for k, iv in enumerate(intervals):
                if len(iv) != 2:
                    raise InvalidPartitionError(f"coordinate {j}, interval {k}: expected [a, b]")
                a, b = _parse_bound(iv[0]), _parse_bound(iv[1])
                if not (0.0 <= a < b) or math.isnan(b):
                    raise InvalidPartitionError(
                        f"coordinate {j}, interval {k}: need 0 <= a < b, got [{a}, {b})"
                    )
                if ivs and a < ivs[-1][1]:
                    raise InvalidPartitionError(
                        f"coordinate {j}, interval {k}: intervals must be sorted and disjoint"
                    )
                ivs.append((a, b))
            coords.append(tuple(ivs))
        object.__setattr__(self, "plus", tuple(coords))

    @classmethod
    def trivial(cls, n):
        """Every coordinate keeps its sign everywhere."""
        return cls(tuple(((0.0, math.inf),) for _ in range(n)))

    @property
    def dim(self):
        return len(self.plus)

    def minus(self, j):
        """Complement of ``plus[j]`` in ``[0, inf)`` as a list of intervals."""
        out = []
        cursor = 0.0
        for a, b in self.plus[j]:
            if a > cursor:
                out.append((cursor, a))
            cursor = b
        if cursor < math.inf:
            out.append((cursor, math.inf))
        return tuple(out)

    def has_plus(self, j):
        return len(self.plus[j]) > 0

    def has_minus(self, j):
        return len(self.minus(j)) > 0

    def plus_mask(self, j, r):
        r = np.asarray(r)
        mask = np.zeros(r.shape, dtype=bool)
        for a, b in self.plus[j]:
            mask |= (r >= a) & (r <= b)
        return mask

    def signs(self, Y):
        """Sign pattern (+1/-1 floats) for each row of rotated points ``Y``."""
        Y = np.atleast_2d(Y)
        R = np.abs(Y)
        S = np.empty(Y.shape)
        for j in range(self.dim):
            S[:, j] = np.where(self.plus_mask(j, R[:, j]), 1.0, -1.0)
        return S

    def endpoints(self, j):
        """Finite, nonzero endpoints: the only places the sign can change."""
        pts = {x for iv in self.plus[j] for x in iv}
        return sorted(x for x in pts if 0.0 < x < math.inf)

    def boundary_distance(self, Y):
        """Per row, the smallest distance of any ``|y_j|`` to an endpoint."""
        Y = np.atleast_2d(Y)
        R = np.abs(Y)
        dist = np.full(Y.shape[0], np.inf)
        for j in range(self.dim):
            for e in self.endpoints(j):
                dist = np.minimum(dist, np.abs(R[:, j] - e))
        return dist

    def to_dict(self):
        return {
            "coords": [
                {"plus_intervals": [[_dump_bound(a), _dump_bound(b)] for a, b in ivs]}
                for ivs in self.plus
            ]
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(tuple(tuple(iv) for iv in c["plus_intervals"]) for c in d["coords"]))


@dataclass(frozen=True, eq=False)
class PiecewiseSignOrthogonal:
    U: np.ndarray
    V: np.ndarray
    partition: SymmetricProductPartition
    sigma0_sqrt: np.ndarray | None = None
    psi0_sqrt: np.ndarray | None = None

    def __post_init__(self):
        U = check_orthogonal(self.U, "U")
        V = check_orthogonal(self.V, "V")
        n = U.shape[0]
        if V.shape[0] != n or self.partition.dim != n:
            raise DimensionMismatchError(
                f"U is {n}x{n}, V is {V.shape[0]}x{V.shape[0]}, partition has {self.partition.dim} coordinates"
            )
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        for name in ("sigma0_sqrt", "psi0_sqrt"):
            M = getattr(self, name)
            if M is not None:
                M = check_spd(M, name)
                if M.shape[0] != n:
                    raise DimensionMismatchError(f"{name} is {M.shape[0]}x{M.shape[0]}, expected {n}x{n}")
                object.__setattr__(self, name, M)

    @property
    def dim(self):
        return self.U.shape[0]

    @property
    def is_pure(self):
        return self.sigma0_sqrt is None and self.psi0_sqrt is None

    @cached_property
    def _sigma0_inv_sqrt(self):
        # sigma0_sqrt holds Sigma0^{1/2}; its inverse square root is Sigma0^{-1/2}
        return np.linalg.inv(self.sigma0_sqrt)

    @cached_property
    def _psi0_inv_sqrt(self):
        return np.linalg.inv(self.psi0_sqrt)

    @property
    def jacobian(self):
        """Absolute Jacobian determinant, constant across cells."""
        det = 1.0
        if self.psi0_sqrt is not None:
            det *= abs(np.linalg.det(self.psi0_sqrt))
        if self.sigma0_sqrt is not None:
            det /= abs(np.linalg.det(self.sigma0_sqrt))
        return det

    def _whiten(self, X):
        return X if self.sigma0_sqrt is None else X @ self._sigma0_inv_sqrt.T

    def sign_of(self, x):
        """Sign pattern of the cell containing ``x`` (one row per point)."""
        X = np.asarray(x, dtype=float)
        S = self.partition.signs(self._whiten(np.atleast_2d(X)) @ self.U.T)
        return S[0] if X.ndim == 1 else S

    def apply(self, x):
        """Apply to a point ``(n,)`` or to each row of an ``(m, n)`` array."""
        X = np.asarray(x, dtype=float)
        Y = self._whiten(np.atleast_2d(X)) @ self.U.T
        out = (self.partition.signs(Y) * Y) @ self.V.T
        if self.psi0_sqrt is not None:
            out = out @ self.psi0_sqrt.T
        return out[0] if X.ndim == 1 else out

    __call__ = apply

    def apply_inverse(self, y):
        """Inverse map; ``|V^T y|`` fixes the cell because the cells are symmetric."""
        Y = np.asarray(y, dtype=float)
        Z = np.atleast_2d(Y)
        if self.psi0_sqrt is not None:
            Z = Z @ self._psi0_inv_sqrt.T
        Z = Z @ self.V
        out = (self.partition.signs(Z) * Z) @ self.U
        if self.sigma0_sqrt is not None:
            out = out @ self.sigma0_sqrt.T
        return out[0] if Y.ndim == 1 else out

    def to_dict(self):
        d = {
            "n": self.dim,
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "partition": self.partition.to_dict(),
        }
        if self.sigma0_sqrt is not None:
            d["sigma0_sqrt"] = self.sigma0_sqrt.tolist()
        if self.psi0_sqrt is not None:
            d["psi0_sqrt"] = self.psi0_sqrt.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        opt = {k: np.asarray(d[k], dtype=float) for k in ("sigma0_sqrt", "psi0_sqrt") if d.get(k) is not None}
        t = cls(
            np.asarray(d["U"], dtype=float),
            np.asarray(d["V"], dtype=float),
            SymmetricProductPartition.from_dict(d["partition"]),
            **opt,
        )
        if "n" in d and int(d["n"]) != t.dim:
            raise DimensionMismatchError(f"declared n = {d['n']} but matrices are {t.dim}x{t.dim}")
        return t


def positive_measure_signs(t):
    """Sign patterns whose cell has positive Lebesgue measure, in lexicographic (+ first) order."""
    part = t.partition
    choices = []
    for j in range(part.dim):
        opts = []
        if part.has_plus(j):
            opts.append(1.0)
        if part.has_minus(j):
            opts.append(-1.0)
        choices.append(opts)
    out = [np.array([])]
    for opts in choices:
        out = [np.append(s, o) for s in out for o in opts]
    return out


def exact_pushforward(t, source, tol=ADMISSIBILITY_TOL):
    """Exact image of a centred Gaussian under ``t``.

    The rotated, whitened covariance ``C = U Sigma0^{-1/2} Sigma Sigma0^{-1/2} U^T``
    must satisfy ``s C s == s' C s'`` for every pair of positive-measure
    patterns; the image is then ``N(0, P V s C s V^T P)`` with
    ``P = Psi0^{1/2}``.

    Raises
    ------
    UnsupportedMeanError
        If the source mean is not zero.
    NotPushforwardClosedError
        If two active patterns give different conjugates; the error carries
        both patterns.
    """
    if source.dim != t.dim:
        raise DimensionMismatchError(f"source has dimension {source.dim}, transform {t.dim}")
    if np.max(np.abs(source.mean)) > 1e-12:
        raise UnsupportedMeanError("piecewise pushforward is only closed-form for zero-mean sources")
    S = source.cov
    if t.sigma0_sqrt is not None:
        W = t._sigma0_inv_sqrt
        S = W @ S @ W.T
    C = t.U @ S @ t.U.T
    C = 0.5 * (C + C.T)
    signs = positive_measure_signs(t)
    ref_s = signs[0]
    ref = ref_s[:, None] * C * ref_s[None, :]
    scale = max(1.0, float(np.max(np.abs(C))))
    for s in signs[1:]:
        dev = float(np.max(np.abs(s[:, None] * C * s[None, :] - ref)))
        if dev > tol * scale:
            raise NotPushforwardClosedError(
                f"covariance is not pushforward-closed: sign patterns {_fmt(ref_s)} and {_fmt(s)} "
                f"give conjugates differing by {dev:.3g}",
                signs=ref_s, other_signs=s, deviation=dev,
            )
    img = t.V @ ref @ t.V.T
    if t.psi0_sqrt is not None:
        img = t.psi0_sqrt @ img @ t.psi0_sqrt.T
    return GaussianMeasure(np.zeros(t.dim), 0.5 * (img + img.T))


def is_admissible(t, cov, tol=ADMISSIBILITY_TOL):
    try:
        exact_pushforward(t, GaussianMeasure(np.zeros(t.dim), cov), tol=tol)
    except NotPushforwardClosedError:
        return False
    return True


def _fmt(s):
    return "(" + ",".join("+" if v > 0 else "-" for v in s) + ")"


@dataclass
class ImageCell:
    """``V F_s``: points ``y`` with ``|(V^T y)_j|`` in ``intervals[j]`` for all ``j``."""

    signs: np.ndarray
    V: np.ndarray
    intervals: tuple

    def contains(self, Y):
        Z = np.atleast_2d(Y) @ self.V
        mask = np.ones(Z.shape[0], dtype=bool)
        for j, ivs in enumerate(self.intervals):
            r = np.abs(Z[:, j])
            m = np.zeros_like(mask)
            for a, b in ivs:
                m |= (r >= a) & (r <= b)
            mask &= m
        return mask

    def to_dict(self):
        return {
            "signs": self.signs.astype(int).tolist(),
            "intervals": [[[_dump_bound(a), _dump_bound(b)] for a, b in ivs] for ivs in self.intervals],
        }


@dataclass
class ImageCells:
    cells: list
    points: int
    overlaps: int
    misses: int
    endpoint_hits: int
    mismatches: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.overlaps == 0 and self.misses == 0 and self.mismatches == 0

    def to_dict(self):
        return {
            "cells": [c.to_dict() for c in self.cells],
            "points": self.points,
            "overlaps": self.overlaps,
            "misses": self.misses,
            "endpoint_hits": self.endpoint_hits,
            "mismatches": self.mismatches,
            "ok": self.ok,
        }


def image_cells(t, count=100_000, seed=0):
    """Image cells ``V s U E_s = V F_s`` of the pure map, with a Monte-Carlo partition check.

    Each test point ``y`` is assigned to the cells whose preimage condition
    holds, i.e. ``sign_of(U^T s V^T y) == s``; this must agree with the
    direct ``V F_s`` description and hit exactly one cell. Points within
    ``1e-12`` of an endpoint are counted separately and not scored.
    """
    part = t.partition
    cells = []
    for s in positive_measure_signs(t):
        ivs = tuple(part.plus[j] if s[j] > 0 else part.minus(j) for j in range(t.dim))
        cells.append(ImageCell(s, t.V, ivs))

    rng = np.random.default_rng(seed)
    ends = [e for j in range(t.dim) for e in part.endpoints(j)]
    spread = max(1.0, 2.0 * max(ends)) if ends else 1.0
    Y = spread * rng.standard_normal((int(count), t.dim))
    near = part.boundary_distance(Y @ t.V) <= 1e-12
    Yc = Y[~near]

    hits = np.zeros(Yc.shape[0], dtype=int)
    mismatches = 0
    Z = Yc @ t.V
    for cell in cells:
        s = cell.signs
        # preimage under V s U, then test membership of E_s = U^T F_s
        pre = (s * Z) @ t.U
        in_pre = np.all(part.signs(pre @ t.U.T) == s, axis=1)
        mismatches += int(np.count_nonzero(in_pre != cell.contains(Yc)))
        hits += in_pre
    return ImageCells(
        cells=cells,
        points=int(count),
        overlaps=int(np.count_nonzero(hits > 1)),
        misses=int(np.count_nonzero(hits == 0)),
        endpoint_hits=int(np.count_nonzero(near)),
        mismatches=mismatches,
    )


def random_partition(n, rng, max_intervals=2, split_prob=1.0):
    """Random symmetric product partition; coordinate ``j`` is split with ``split_prob``."""
    coords = []
    for _ in range(n):
        if rng.uniform() >= split_prob:
            coords.append(((0.0, math.inf),))
            continue
        k = int(rng.integers(1, max_intervals + 1))
        cuts = np.sort(rng.uniform(0.2, 3.0, size=2 * k))
        ivs = []
        if rng.uniform() < 0.5:
            # start the plus set at the origin
            cuts[0] = 0.0
        for i in range(k):
            ivs.append((float(cuts[2 * i]), float(cuts[2 * i + 1])))
        coords.append(tuple(ivs))
    return SymmetricProductPartition(tuple(coords))


def random_piecewise(n, rng, **kwargs):
    """Random pure transform with Haar ``U``, ``V`` and a random split partition."""
    return PiecewiseSignOrthogonal(
        random_orthogonal(n, rng), random_orthogonal(n, rng), random_partition(n, rng, **kwargs)
    )


def probe_family(t, epsilons):
    """Admissible rank-one probes for ``t`` and their images.

    Uses ``u_j = U^T e_j`` (whitened frame) so that ``U Sigma_j U^T`` is
    diagonal. Returns ``(sigmas, psis, us, vs)`` with ``psis[j]`` the exact
    image covariance and ``vs[j] = V e_j``. For a conjugated transform the
    probes are coloured by ``Sigma0^{1/2}`` and the unit vectors refer to the
    whitened frame.
    """
    n = t.dim
    sigmas, psis, us, vs = [], [], [], []
    for j, eps in enumerate(epsilons):
        u = t.U[j, :].copy()
        S = rank_one_spd(eps, u)
        if t.sigma0_sqrt is not None:
            S = t.sigma0_sqrt @ S @ t.sigma0_sqrt.T
            S = 0.5 * (S + S.T)
        sigmas.append(S)
        psis.append(exact_pushforward(t, GaussianMeasure(np.zeros(n), S)).cov)
        us.append(u)
        vs.append(t.V[:, j].copy())
    return sigmas, psis, us, vs
