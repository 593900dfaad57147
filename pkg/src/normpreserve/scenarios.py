"""End-to-end demo pipelines: construct, simulate, verify, recover, report.

Each scenario takes a seed and an output directory, writes every
intermediate artifact there and returns ``(ok, summary)``. All randomness
flows from ``numpy.random.SeedSequence(seed)``, so a rerun with the same
seed writes byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import NormPreserveError
from .gaussian import AffineMap, GaussianMeasure, affine_pushforward, sample
from .identity_checks import ClaimPair, PushforwardClaim, check_charpoly, run_identity_checks
from .io import write_json
from .linalg_core import random_orthogonal
from .mc_verify import VerificationPlan, verify_pushforward
from .recovery import (
    PiecewiseRecoveryInput,
    estimate_affine_input,
    recover_affine,
    recover_piecewise,
)
from .transform import positive_measure_signs, probe_family, random_piecewise

AFFINE_SAMPLES = 100_000
PIECEWISE_PAIRS = 100_000
VERIFY_SAMPLES = 200_000
PIECEWISE_EPSILONS = (2.0, -0.6, 3.0)


def _seeds(seed, k):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def _stage(name, ok, **info):
    return {"stage": name, "ok": bool(ok), **info}


def random_affine(n, rng):
    """Well-conditioned random affine map: ``Q1 diag(d) Q2`` with ``d`` in ``[0.5, 2]``."""
    d = np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=n))
    M = (random_orthogonal(n, rng) * d) @ random_orthogonal(n, rng)
    return AffineMap(M, rng.normal(scale=2.0, size=n))


def random_mean_configuration(n, rng, spread=3.0):
    """``n + 1`` means whose differences are a randomly rotated orthogonal frame of length ``spread``.

    Recovery error from estimated means scales with ``||A^{-1}||``, ``A``
    the matrix of differences; an orthogonal frame keeps it at ``1 / spread``.
    """
    theta0 = rng.normal(size=n)
    return np.vstack([theta0, theta0 + spread * random_orthogonal(n, rng)])


def affine_scenario(seed, out, n=3, samples=AFFINE_SAMPLES):
    out = Path(out)
    s_model, s_data, s_verify = _seeds(seed, 3)
    rng = np.random.default_rng(s_model)
    truth = random_affine(n, rng)
    thetas = random_mean_configuration(n, rng)
    write_json(out / "truth_affine.json", truth.to_dict())
    stages = []

    data_seeds = _seeds(s_data, n + 1)
    images = [truth.apply(sample(GaussianMeasure(th, np.eye(n)), samples, sd)) for th, sd in zip(thetas, data_seeds)]
    inp = estimate_affine_input(thetas, images)
    write_json(out / "estimated_means.json", {
        "thetas": thetas.tolist(), "phis_hat": inp.phis.tolist(), "psi_hat": inp.psi.tolist(),
        "samples_per_mean": samples,
    })

    claim = PushforwardClaim(GaussianMeasure(thetas[0], np.eye(n)),
                             affine_pushforward(GaussianMeasure(thetas[0], np.eye(n)), truth))
    rep = verify_pushforward(truth, VerificationPlan(claim, VERIFY_SAMPLES, s_verify))
    write_json(out / "verify_report.json", rep.to_dict())
    stages.append(_stage("verify", rep.passed, verdict=rep.verdict))

    claims = [PushforwardClaim(GaussianMeasure(th, np.eye(n)), affine_pushforward(GaussianMeasure(th, np.eye(n)), truth))
              for th in thetas[:2]]
    ident = run_identity_checks(ClaimPair(*claims))
    write_json(out / "identity_report.json", ident.to_dict())
    stages.append(_stage("identities", ident.all_pass))

    try:
        rec = recover_affine(inp)
        err_M = float(np.linalg.norm(rec.linear - truth.linear))
        err_c = float(np.linalg.norm(rec.shift - truth.shift))
        write_json(out / "recovered_affine.json", rec.to_dict())
        ok = err_M <= 0.05 and err_c <= 0.05
        stages.append(_stage("recover", ok, linear_error=err_M, shift_error=err_c, tolerance=0.05))
    except NormPreserveError as exc:
        stages.append(_stage("recover", False, error=str(exc)))
    return _finish(out, "affine-thm31", seed, stages)


def piecewise_scenario(seed, out, n=3, epsilons=PIECEWISE_EPSILONS, pairs=PIECEWISE_PAIRS):
    out = Path(out)
    s_model, s_verify, s_data = _seeds(seed, 3)
    rng = np.random.default_rng(s_model)
    t = random_piecewise(n, rng)
    sigmas, psis, us, vs = probe_family(t, epsilons)
    write_json(out / "transform.gpt.json", t.to_dict())
    write_json(out / "construct_summary.json", {
        "positive_measure_signs": [s.astype(int).tolist() for s in positive_measure_signs(t)],
        "sigmas": [S.tolist() for S in sigmas],
        "psis": [P.tolist() for P in psis],
    })
    stages = [_stage("construct", True, cells=len(positive_measure_signs(t)))]

    sources = [np.eye(n)] + sigmas
    images = [np.eye(n)] + psis
    reports = []
    for k, (S, P, sd) in enumerate(zip(sources, images, _seeds(s_verify, n + 1))):
        claim = PushforwardClaim(GaussianMeasure(np.zeros(n), S), GaussianMeasure(np.zeros(n), P))
        reports.append(verify_pushforward(t, VerificationPlan(claim, VERIFY_SAMPLES, sd)).to_dict())
    write_json(out / "verify_reports.json", reports)
    stages.append(_stage("verify", all(r["verdict"] == "pass" for r in reports),
                         verdicts=[r["verdict"] for r in reports]))

    data_seeds = _seeds(s_data, n + 1)
    datasets = []
    for S, sd in zip(sigmas, data_seeds[:n]):
        x = sample(GaussianMeasure(np.zeros(n), S), pairs, sd)
        datasets.append((x, t.apply(x)))
    x_id = sample(GaussianMeasure.standard(n), pairs, data_seeds[n])
    id_pairs = (x_id, t.apply(x_id))

    pair = ClaimPair(
        PushforwardClaim(GaussianMeasure.standard(n), GaussianMeasure.standard(n)),
        PushforwardClaim(GaussianMeasure(np.zeros(n), sigmas[0]), GaussianMeasure(np.zeros(n), psis[0])),
    )
    ident = run_identity_checks(pair, *id_pairs)
    write_json(out / "identity_report.json", ident.to_dict())
    stages.append(_stage("identities", ident.all_pass))

    try:
        rec = recover_piecewise(PiecewiseRecoveryInput(tuple(sigmas), tuple(datasets), id_pairs))
        write_json(out / "recovered_piecewise.json", rec.to_dict())
        write_json(out / "recovery_diagnostics.json", rec.diagnostics)
        stages.append(_stage("recover", True,
                             holdout_fraction_ok=rec.diagnostics["holdout_fraction_ok"],
                             median_residual=rec.diagnostics["median_residual"]))
    except NormPreserveError as exc:
        stages.append(_stage("recover", False, error=str(exc)))
    return _finish(out, "piecewise-thm44", seed, stages)


def cubic_map(X):
    """``(x1, x2, ...) -> (x1^3, x2, ...)``: variance-matched but not Gaussian."""
    Y = np.array(X, dtype=float, copy=True)
    Y[:, 0] = Y[:, 0] ** 3
    return Y


def falsifier(seed, out):
    """Claims a moment-matched cubic map preserves normality; both checks must refute it."""
    out = Path(out)
    (s_verify,) = _seeds(seed, 1)
    # E[z^6] = 15 and E[(2z)^6] = 960: the claims match second moments exactly
    pair = ClaimPair(
        PushforwardClaim(GaussianMeasure.standard(2), GaussianMeasure(np.zeros(2), np.diag([15.0, 1.0]))),
        PushforwardClaim(GaussianMeasure(np.zeros(2), np.diag([4.0, 1.0])),
                         GaussianMeasure(np.zeros(2), np.diag([960.0, 1.0]))),
    )
    write_json(out / "claims.json", pair.to_dict())
    cp_ok, cp_dev = check_charpoly(pair)
    ident = run_identity_checks(pair)
    write_json(out / "identity_report.json", ident.to_dict())
    stages = [_stage("identity-charpoly-refutes", not cp_ok, deviation=cp_dev)]

    rep = verify_pushforward(cubic_map, VerificationPlan(pair.first, VERIFY_SAMPLES, s_verify))
    write_json(out / "verify_report.json", rep.to_dict())
    kurtosis_refutes = rep.mardia_kurtosis_p < rep.alpha and not rep.passed
    stages.append(_stage("verify-kurtosis-refutes", kurtosis_refutes,
                         kurtosis_p=rep.mardia_kurtosis_p, verdict=rep.verdict))
    return _finish(out, "falsifier", seed, stages)


def _finish(out, name, seed, stages):
    ok = all(s["ok"] for s in stages)
    summary = {"scenario": name, "seed": seed, "ok": ok, "stages": stages}
    write_json(out / "summary.json", summary)
    return ok, summary


SCENARIOS = {
    "affine-thm31": affine_scenario,
    "piecewise-thm44": piecewise_scenario,
    "falsifier": falsifier,
}
