"""Seeded generators of claim pairs shared by unit and acceptance tests."""

import numpy as np

from normpreserve.gaussian import GaussianMeasure, affine_pushforward, sample
from normpreserve.identity_checks import ClaimPair, PushforwardClaim
from normpreserve.linalg_core import random_spd
from normpreserve.scenarios import random_affine
from normpreserve.transform import exact_pushforward, probe_family, random_piecewise

PAIRS = 2000
REL = 1e-3


def affine_case(seed, pairs=PAIRS):
    """Random affine map with two claims it satisfies, plus sample pairs ``(x, Tx)``."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = random_affine(n, rng)
    sources = [GaussianMeasure(rng.normal(scale=2.0, size=n), random_spd(n, rng)) for _ in range(2)]
    pair = ClaimPair(*(PushforwardClaim(g, affine_pushforward(g, m)) for g in sources))
    x = sample(sources[0], pairs, seed)
    return pair, x, m.apply(x)


def piecewise_case(seed, pairs=PAIRS):
    """Random piecewise transform with two admissible centred claims, plus sample pairs."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    t = random_piecewise(n, rng)
    eps = rng.uniform(0.5, 3.0) * rng.choice([-0.3, 1.0])
    S1 = probe_family(t, [eps])[0][0]
    S2 = t.U.T @ np.diag(rng.uniform(0.5, 3.0, size=n)) @ t.U
    S2 = 0.5 * (S2 + S2.T)
    sources = [GaussianMeasure(np.zeros(n), S) for S in (S1, S2)]
    pair = ClaimPair(*(PushforwardClaim(g, exact_pushforward(t, g)) for g in sources))
    x = sample(sources[0], pairs, seed)
    return pair, x, t.apply(x)


def _replace_image(pair, which, mean=None, cov=None):
    claims = [pair.first, pair.second]
    c = claims[which]
    img = GaussianMeasure(c.image.mean if mean is None else mean, c.image.cov if cov is None else cov)
    claims[which] = PushforwardClaim(c.source, img)
    return ClaimPair(*claims)


def perturb_charpoly(pair):
    P = pair.first.image.cov.copy()
    P[0, 0] += REL * np.max(np.abs(P))
    return _replace_image(pair, 0, cov=P)


def perturb_means(pair):
    """Stretch ``phi1 - phi2`` by ``1 + REL``; for equal means, shift ``phi1`` by ``REL``."""
    phi1, phi2 = pair.first.image.mean, pair.second.image.mean
    d = phi1 - phi2
    if np.linalg.norm(d) < 1e-12:
        d = np.zeros_like(d)
        d[0] = 1.0
        return _replace_image(pair, 0, mean=phi1 + REL * d)
    return _replace_image(pair, 0, mean=phi2 + (1 + REL) * d)


def perturb_det(pair):
    return _replace_image(pair, 1, cov=(1 + REL) * pair.second.image.cov)


def perturb_density(pair):
    return _replace_image(pair, 0, cov=(1 + REL) * pair.first.image.cov)
