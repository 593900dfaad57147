import numpy as np
import pytest

from normpreserve.errors import (
    DegenerateConfigurationError,
    EstimationFailureError,
    InconsistentDataError,
    ModelMismatchError,
    NoIsometryError,
    NotInFamilyError,
)
from normpreserve.gaussian import GaussianMeasure, sample
from normpreserve.linalg_core import random_orthogonal, random_spd, rank_one_spd, spd_sqrt
from normpreserve.recovery import (
    AffineRecoveryInput,
    PiecewiseRecoveryInput,
    estimate_affine_input,
    isometry_certificate,
    recover_affine,
    recover_piecewise,
    refine_direction,
    sign_assignments,
    whiten_and_recover,
)
from normpreserve.scenarios import random_affine, random_mean_configuration
from normpreserve.transform import (
    PiecewiseSignOrthogonal,
    SymmetricProductPartition,
    probe_family,
    random_piecewise,
)

PAIRS = 100_000


def exact_input(seed, n):
    rng = np.random.default_rng(seed)
    m = random_affine(n, rng)
    thetas = random_mean_configuration(n, rng)
    phis = thetas @ m.linear.T + m.shift
    return m, AffineRecoveryInput(thetas, phis, m.linear @ m.linear.T)


# --- affine -----------------------------------------------------------------

def test_recover_identity():
    thetas = np.vstack([np.zeros(3), np.eye(3)])
    rec = recover_affine(AffineRecoveryInput(thetas, thetas, np.eye(3)))
    np.testing.assert_allclose(rec.linear, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(rec.shift, np.zeros(3), atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_recover_exact(n):
    for seed in range(5):
        m, inp = exact_input(1000 * n + seed, n)
        rec = recover_affine(inp)
        assert np.linalg.norm(rec.linear - m.linear) <= 1e-10
        assert np.linalg.norm(rec.shift - m.shift) <= 1e-10
        np.testing.assert_allclose(rec.apply(inp.thetas), inp.phis, rtol=1e-8, atol=1e-8)


def test_recover_from_samples():
    n = 3
    rng = np.random.default_rng(77)
    m = random_affine(n, rng)
    thetas = random_mean_configuration(n, rng)
    images = [m.apply(sample(GaussianMeasure(th, np.eye(n)), PAIRS, 100 + k)) for k, th in enumerate(thetas)]
    rec = recover_affine(estimate_affine_input(thetas, images))
    assert np.linalg.norm(rec.linear - m.linear) <= 0.05
    assert np.linalg.norm(rec.shift - m.shift) <= 0.05


def test_recover_rejects_degenerate_sources():
    thetas = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateConfigurationError):
        recover_affine(AffineRecoveryInput(thetas, thetas, np.eye(2)))


def test_recover_rejects_singular_images():
    thetas = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    phis = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(InconsistentDataError):
        recover_affine(AffineRecoveryInput(thetas, phis, np.eye(2)))


def test_input_shape_validation():
    with pytest.raises(DegenerateConfigurationError):
        AffineRecoveryInput(np.zeros((2, 2)), np.zeros((3, 2)), np.eye(2))


def test_isometry_certificate_identity():
    thetas = random_mean_configuration(3, np.random.default_rng(0))
    U = isometry_certificate(AffineRecoveryInput(thetas, thetas, np.eye(3)))
    np.testing.assert_allclose(U, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_isometry_certificate_recovers_rotation(seed):
    rng = np.random.default_rng(seed)
    n = 4
    Q = random_orthogonal(n, rng)
    thetas = random_mean_configuration(n, rng)
    phis = rng.normal(size=n) + (thetas - thetas[0]) @ Q.T
    U = isometry_certificate(AffineRecoveryInput(thetas, phis, np.eye(n)))
    assert np.max(np.abs(U - Q)) <= 1e-10


def test_isometry_certificate_with_image_covariance():
    rng = np.random.default_rng(9)
    n = 3
    m, inp = exact_input(9, n)
    U = isometry_certificate(inp)
    X = inp.source_differences()
    Y = inp.image_differences() @ np.linalg.inv(spd_sqrt(inp.psi))
    scale = np.max(np.linalg.norm(X, axis=1))
    assert np.max(np.linalg.norm(X @ U.T - Y, axis=1)) <= 1e-8 * scale


def test_isometry_certificate_scaled_fails():
    thetas = random_mean_configuration(3, np.random.default_rng(1))
    phis = thetas[0] + 1.1 * (thetas - thetas[0])
    with pytest.raises(NoIsometryError) as info:
        isometry_certificate(AffineRecoveryInput(thetas, phis, np.eye(3)))
    i, j = info.value.worst_pair
    assert 1 <= i <= 3 and 1 <= j <= 3


def test_isometry_certificate_one_percent_gram_mismatch_fails():
    thetas = random_mean_configuration(3, np.random.default_rng(2))
    phis = thetas[0] + np.sqrt(1.01) * (thetas - thetas[0])
    with pytest.raises(NoIsometryError):
        isometry_certificate(AffineRecoveryInput(thetas, phis, np.eye(3)))


def test_whiten_identity_reduces_to_plain():
    m, inp = exact_input(4, 3)
    a = whiten_and_recover(inp.thetas, inp.phis, np.eye(3), inp.psi)
    b = recover_affine(inp)
    np.testing.assert_allclose(a.linear, b.linear, atol=1e-14)
    np.testing.assert_allclose(a.shift, b.shift, atol=1e-14)


def test_whiten_diagonal_exact():
    n = 2
    rng = np.random.default_rng(5)
    m = random_affine(n, rng)
    sigma = np.diag([4.0, 1.0])
    thetas = random_mean_configuration(n, rng)
    phis = thetas @ m.linear.T + m.shift
    psi = m.linear @ sigma @ m.linear.T
    rec = whiten_and_recover(thetas, phis, sigma, psi)
    assert np.linalg.norm(rec.linear - m.linear) <= 1e-10
    assert np.linalg.norm(rec.shift - m.shift) <= 1e-10


def test_whiten_random_from_samples():
    n = 3
    rng = np.random.default_rng(6)
    m = random_affine(n, rng)
    sigma = random_spd(n, rng, cond=4.0)
    thetas = random_mean_configuration(n, rng)
    images = [m.apply(sample(GaussianMeasure(th, sigma), PAIRS, 200 + k)) for k, th in enumerate(thetas)]
    est = estimate_affine_input(thetas, images)
    rec = whiten_and_recover(thetas, est.phis, sigma, est.psi)
    assert np.linalg.norm(rec.linear - m.linear) <= 0.05
    assert np.linalg.norm(rec.shift - m.shift) <= 0.05


# --- piecewise --------------------------------------------------------------

def simulate(t, sigmas, seed, pairs=PAIRS):
    n = t.dim
    seeds = np.random.SeedSequence(seed).spawn(n + 1)
    datasets = []
    for S, sd in zip(sigmas, seeds[:n]):
        x = sample(GaussianMeasure(np.zeros(n), S), pairs, sd)
        datasets.append((x, t.apply(x)))
    x = sample(GaussianMeasure.standard(n), pairs, seeds[n])
    return PiecewiseRecoveryInput(tuple(sigmas), tuple(datasets), (x, t.apply(x)))


def sign_flips(t, rec):
    """Per-coordinate sign ambiguity: ``u_j`` and ``v_hat_j`` are each fixed only up to sign."""
    return np.sign(np.sum(rec.vs_hat * t.V.T, axis=1)) * np.sign(np.sum(rec.us * t.U, axis=1))


def true_sign_agreement(t, rec, inp):
    """Fraction of retained pairs whose recovered pattern matches the true cell."""
    flip = sign_flips(t, rec)
    x = inp.identity_pairs[0][: len(inp.identity_pairs[0]) // 2][rec.retained]
    truth = t.sign_of(x)
    return float(np.mean(np.all(truth == flip * rec.signs, axis=1)))


def test_pure_orthogonal_map():
    rng = np.random.default_rng(10)
    t = PiecewiseSignOrthogonal(random_orthogonal(3, rng), random_orthogonal(3, rng),
                                SymmetricProductPartition.trivial(3))
    sigmas = probe_family(t, (2.0, -0.6, 3.0))[0]
    rec = recover_piecewise(simulate(t, sigmas, 11))
    VU = rec.V @ np.diag(sign_flips(t, rec)) @ rec.U
    assert np.linalg.norm(VU - t.V @ t.U) <= 1e-8
    assert len(rec.diagnostics["sign_cell_counts"]) == 1


def test_worked_example():
    part = SymmetricProductPartition((((0.0, 1.0),), ((0.0, np.inf),)))
    t = PiecewiseSignOrthogonal(np.eye(2), np.eye(2), part)
    sigmas = [np.diag([4.0, 1.0]), rank_one_spd(1.0, np.array([0.0, 1.0]))]
    inp = simulate(t, sigmas, 12)
    rec = recover_piecewise(inp)
    np.testing.assert_allclose(np.abs(rec.vs_hat), np.eye(2), atol=0.02)
    assert true_sign_agreement(t, rec, inp) >= 0.99
    assert rec.diagnostics["holdout_fraction_ok"] >= 0.99


@pytest.mark.parametrize("seed", range(3))
def test_random_transform(seed):
    t = random_piecewise(3, np.random.default_rng(seed))
    eps = (2.0, -0.6, 3.0)
    sigmas, _, _, vs = probe_family(t, eps)
    inp = simulate(t, sigmas, 100 + seed)
    rec = recover_piecewise(inp)
    assert np.all(np.abs(rec.epsilons_hat - eps) <= 0.05)
    cosines = np.abs(np.sum(rec.vs_hat * np.array(vs), axis=1))
    assert np.all(cosines >= 1 - 1e-10)
    assert true_sign_agreement(t, rec, inp) == 1.0
    assert rec.diagnostics["holdout_fraction_ok"] >= 0.99


def test_non_normality_preserving_map_rejected():
    class Bulge:
        dim = 3

        @staticmethod
        def apply(X):
            return X + 0.1 * X * np.linalg.norm(X, axis=1, keepdims=True)

    U = random_orthogonal(3, np.random.default_rng(3))
    sigmas = [rank_one_spd(e, U[j]) for j, e in enumerate((2.0, -0.6, 3.0))]
    with pytest.raises((NotInFamilyError, ModelMismatchError)):
        recover_piecewise(simulate(Bulge, sigmas, 13))


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_refine_direction_is_exact_in_family(n):
    rng = np.random.default_rng(30 + n)
    t = random_piecewise(n, rng)
    sigmas, _, us, vs = probe_family(t, rng.uniform(0.5, 3.0, size=n))
    x = sample(GaussianMeasure(np.zeros(n), sigmas[0]), 2000, 31)
    v, W = refine_direction(us[0], x, t.apply(x))
    assert abs(abs(v @ vs[0]) - 1) <= 1e-12
    np.testing.assert_allclose(W, np.outer(v, v), atol=1e-10)


def test_shuffled_pairs_rejected_by_pointwise_fit():
    # shuffling keeps every covariance rank-one but breaks (v^T T x)^2 = (u^T x)^2
    t = random_piecewise(3, np.random.default_rng(9))
    inp = simulate(t, probe_family(t, (2.0, -0.6, 3.0))[0], 20)
    perm = np.random.default_rng(21).permutation(PAIRS)
    shuffled = tuple((x, tx[perm]) for x, tx in inp.paired_samples)
    with pytest.raises(NotInFamilyError, match="rank one"):
        recover_piecewise(PiecewiseRecoveryInput(inp.sigmas, shuffled, inp.identity_pairs))


def test_probe_covariance_must_be_rank_one():
    t = random_piecewise(2, np.random.default_rng(4))
    inp = simulate(t, probe_family(t, (1.0, 2.0))[0], 14, pairs=10_000)
    bad = PiecewiseRecoveryInput((np.diag([2.0, 3.0]), inp.sigmas[1]), inp.paired_samples, inp.identity_pairs)
    with pytest.raises(NotInFamilyError):
        recover_piecewise(bad)


def test_too_few_pairs():
    t = random_piecewise(2, np.random.default_rng(5))
    inp = simulate(t, probe_family(t, (1.0, 2.0))[0], 15, pairs=5000)
    with pytest.raises(EstimationFailureError):
        recover_piecewise(inp)


def test_sign_ambiguity_invariance():
    t = random_piecewise(3, np.random.default_rng(6))
    sigmas, _, us, vs = probe_family(t, (2.0, -0.6, 3.0))
    x = sample(GaussianMeasure.standard(3), 5000, 16)
    A, C = np.array(us), np.array(vs)
    s0, r0, k0 = sign_assignments(A, C, x, t.apply(x))
    for j in range(3):
        C2 = C.copy()
        C2[j] *= -1
        s1, r1, k1 = sign_assignments(A, C2, x, t.apply(x))
        np.testing.assert_array_equal(k0, k1)
        np.testing.assert_allclose(r1, r0, atol=1e-15)
        expected = s0.copy()
        expected[:, j] *= -1
        np.testing.assert_array_equal(s1, expected)
        # covariance claims are blind to the flip
        np.testing.assert_allclose(np.outer(C2[j], C2[j]), np.outer(C[j], C[j]), atol=0)


def test_self_consistency_fixed_point():
    t = random_piecewise(3, np.random.default_rng(7))
    eps = (2.0, -0.6, 3.0)
    sigmas = probe_family(t, eps)[0]
    rec = recover_piecewise(simulate(t, sigmas, 17))
    t2 = PiecewiseSignOrthogonal(rec.U, rec.V, t.partition)
    rec2 = recover_piecewise(simulate(t2, sigmas, 18))
    np.testing.assert_allclose(rec2.U, rec.U, atol=1e-12)
    flip = np.sign(np.sum(rec2.vs_hat * rec.vs_hat, axis=1))
    assert np.max(np.abs(rec2.V * flip - rec.V)) <= 1e-8
    assert np.all(np.abs(rec2.epsilons_hat - rec.epsilons_hat) <= 0.1)


def test_recovery_is_deterministic():
    t = random_piecewise(2, np.random.default_rng(8))
    inp = simulate(t, probe_family(t, (2.0, 3.0))[0], 19, pairs=20_000)
    a, b = recover_piecewise(inp), recover_piecewise(inp)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.V, b.V)
    np.testing.assert_array_equal(a.signs, b.signs)
