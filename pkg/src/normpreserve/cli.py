"""Command-line front end.

Exit codes: 0 everything passed, 2 a check or verification failed, 3 bad
input (unparseable file, invariant violation, dimension mismatch).

Every run writes ``manifest.json`` into the output directory. Replaying it
with ``normpreserve --manifest <dir>/manifest.json --out <new dir>``
reproduces the numeric outputs bit for bit.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    EstimationFailureError,
    InconsistentDataError,
    ModelMismatchError,
    NoIsometryError,
    NormPreserveError,
    NotInFamilyError,
    SchemaError,
)
from .gaussian import AffineMap, GaussianMeasure, sample
from .identity_checks import run_identity_checks
from .io import (
    RECOVER_SCHEMA,
    load_claim,
    load_claim_pair,
    load_gaussian,
    load_transform,
    parse_transform,
    read_csv,
    read_json,
    sha256_file,
    validate,
    write_csv,
    write_json,
)
from .mc_verify import VerificationPlan, check_samples, grid_density_oracle, verify_pushforward
from .recovery import (
    RecoveryTolerances,
    PiecewiseRecoveryInput,
    estimate_affine_input,
    recover_piecewise,
    whiten_and_recover,
)
from .scenarios import SCENARIOS
from .transform import PiecewiseSignOrthogonal, exact_pushforward, image_cells, positive_measure_signs

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 2, 3
# the data parsed fine but do not fit the model: a failed check, not bad input
RECOVERY_FAILURES = (NotInFamilyError, ModelMismatchError, EstimationFailureError, InconsistentDataError,
                     NoIsometryError)
TOLERANCE_KEYS = {f.name for f in fields(RecoveryTolerances)} | {"alpha", "admissibility_tol"}


class _Run:
    """Per-invocation context: output directory, seed, manifest bookkeeping."""

    def __init__(self, args, argv):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = {}
        self.tol = _parse_tolerances(args.tol_overrides)
        self.manifest = {
            "command": args.command,
            "argv": [a for a in argv],
            "seed": args.seed,
            "params": {k: v for k, v in vars(args).items() if k not in ("out", "manifest", "func")},
            "version": __version__,
        }

    def input(self, path):
        path = Path(path)
        if not path.exists():
            raise SchemaError("file not found", source=str(path))
        self.inputs[str(path)] = sha256_file(path)
        return path

    def path(self, name):
        p = (self.out / name).resolve()
        if self.out.resolve() not in p.parents:
            raise SchemaError(f"refusing to write outside output directory: {name}")
        return p

    def embedded(self):
        return {**self.manifest, "inputs": dict(sorted(self.inputs.items()))}

    def write(self, name, doc):
        write_json(self.path(name), {**doc, "manifest": self.embedded()})

    def finish(self):
        write_json(self.path("manifest.json"), {**self.embedded(), "output_dir": str(self.out)})


def _parse_tolerances(text):
    if not text:
        return {}
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"--tol-overrides is not valid JSON: {exc.msg}") from None
    if not isinstance(d, dict):
        raise SchemaError("--tol-overrides must be a JSON object")
    unknown = set(d) - TOLERANCE_KEYS
    if unknown:
        raise SchemaError(f"unknown tolerance keys: {sorted(unknown)}; known: {sorted(TOLERANCE_KEYS)}")
    return d


def _recovery_tolerances(run):
    known = {f.name for f in fields(RecoveryTolerances)}
    return replace(RecoveryTolerances(), **{k: v for k, v in run.tol.items() if k in known})


def cmd_construct(run):
    args = run.args
    doc = read_json(run.input(args.spec))
    t = parse_transform(doc, source=args.spec)
    summary = {}
    if isinstance(t, AffineMap):
        run.write("transform.affine.json", t.to_dict())
        summary = {"kind": "affine", "det": float(np.linalg.det(t.linear))}
    else:
        run.write("transform.gpt.json", t.to_dict())
        signs = positive_measure_signs(t)
        cells = image_cells(t, seed=run.args.seed)
        summary = {
            "kind": "piecewise",
            "positive_measure_signs": [s.astype(int).tolist() for s in signs],
            "cell_count": len(signs),
            "orthogonal_everywhere": len(signs) == 1 and t.is_pure,
            "image_partition": cells.to_dict(),
        }
        sigmas = doc.get("sigmas", [])
        if args.sigmas:
            sigmas = sigmas + read_json(run.input(args.sigmas))
        summary["pushforwards"] = []
        for S in sigmas:
            img = exact_pushforward(t, GaussianMeasure(np.zeros(t.dim), np.asarray(S, dtype=float)),
                                    **({"tol": run.tol["admissibility_tol"]} if "admissibility_tol" in run.tol else {}))
            summary["pushforwards"].append({"sigma": S, "psi": img.cov.tolist()})
    run.write("construct_summary.json", summary)
    return EXIT_OK


def cmd_apply(run):
    args = run.args
    t = load_transform(run.input(args.transform))
    X = read_csv(run.input(args.samples))
    if X.shape[1] != t.dim:
        raise SchemaError(f"expected {t.dim} columns, found {X.shape[1]}", source=args.samples, pointer="line 1")
    write_csv(run.path(args.output), t.apply(X))
    return EXIT_OK


def _verify_external(run, claim, alpha):
    # image samples produced elsewhere; the source side is the caller's responsibility
    Y = read_csv(run.input(run.args.transform), ncols=claim.dim)
    rep = check_samples(Y, claim, alpha)
    run.write("verify_report.json", rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(run):
    args = run.args
    claim = load_claim(run.input(args.claim))
    alpha = run.tol.get("alpha", args.alpha)
    if Path(args.transform).suffix == ".csv":
        return _verify_external(run, claim, alpha)
    t = load_transform(run.input(args.transform))
    if claim.dim != t.dim:
        raise SchemaError(f"claim has dimension {claim.dim}, transform {t.dim}", source=args.claim)
    plan = VerificationPlan(claim, args.samples, args.seed, alpha)
    rep = verify_pushforward(t, plan)
    doc = rep.to_dict()
    ok = rep.passed
    if isinstance(t, PiecewiseSignOrthogonal) and t.dim <= 2 and t.is_pure and not args.no_grid:
        dev = grid_density_oracle(t, claim.source, claim.image)
        doc["grid_density_deviation"] = dev
        doc["grid_ok"] = dev <= args.grid_tol
        ok = ok and doc["grid_ok"]
    run.write("verify_report.json", doc)
    write_json(run.path("timings.json"), {"verify_seconds": rep.runtime})
    if args.dump_samples:
        X = sample(claim.source, args.samples, args.seed)
        write_csv(run.path("transformed_samples.csv"), t.apply(X))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_identities(run):
    args = run.args
    pair = load_claim_pair(run.input(args.claims))
    x = tx = None
    if args.pairs:
        P = read_csv(run.input(args.pairs), ncols=2 * pair.dim)
        x, tx = P[:, : pair.dim], P[:, pair.dim:]
    rep = run_identity_checks(pair, x, tx)
    run.write("identity_report.json", rep.to_dict())
    return EXIT_OK if rep.all_pass else EXIT_FAIL


def _manifest_path(base, rel):
    p = Path(rel)
    return p if p.is_absolute() else base / p


def cmd_recover(run):
    try:
        return _recover(run)
    except RECOVERY_FAILURES as exc:
        doc = {"ok": False, "error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "diagnostics", None):
            doc["diagnostics"] = exc.diagnostics
        run.write("diagnostics.json", doc)
        print(f"recovery failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


def _recover(run):
    args = run.args
    mpath = run.input(args.manifest_file)
    doc = read_json(mpath)
    validate(doc, RECOVER_SCHEMA, str(mpath))
    base = mpath.parent
    sources = [load_gaussian(d["source"], f"{mpath}/datasets/{k}/source") for k, d in enumerate(doc["datasets"])]
    n = sources[0].dim
    if doc["mode"] == "affine":
        images = [read_csv(run.input(_manifest_path(base, d["samples"])), ncols=n) for d in doc["datasets"]]
        sigma = sources[0].cov
        for k, g in enumerate(sources):
            if np.max(np.abs(g.cov - sigma)) > 1e-12:
                raise SchemaError("affine mode needs a common source covariance", source=str(mpath),
                                  pointer=f"/datasets/{k}/source/cov")
        thetas = np.array([g.mean for g in sources])
        inp = estimate_affine_input(thetas, images)
        rec = whiten_and_recover(thetas, inp.phis, sigma, inp.psi)
        run.write("recovered.json", rec.to_dict())
        diag = {"phis_hat": inp.phis.tolist(), "psi_hat": inp.psi.tolist()}
        run.write("diagnostics.json", diag)
        return EXIT_OK
    if "identity" not in doc:
        raise SchemaError("piecewise mode needs an 'identity' dataset", source=str(mpath), pointer="/identity")
    pairs = []
    for d in doc["datasets"]:
        P = read_csv(run.input(_manifest_path(base, d["samples"])), ncols=2 * n)
        pairs.append((P[:, :n], P[:, n:]))
    P = read_csv(run.input(_manifest_path(base, doc["identity"]["samples"])), ncols=2 * n)
    inp = PiecewiseRecoveryInput(tuple(g.cov for g in sources), tuple(pairs), (P[:, :n], P[:, n:]))
    rec = recover_piecewise(inp, _recovery_tolerances(run))
    run.write("recovered.json", rec.to_dict())
    run.write("diagnostics.json", rec.diagnostics)
    return EXIT_OK


def cmd_demo(run):
    ok, summary = SCENARIOS[run.args.scenario](run.args.seed, run.out)
    for path in sorted(run.out.glob("*.json")):
        if path.name in ("manifest.json", "timings.json"):
            continue
        doc = read_json(path)
        write_json(path, {"result": doc, "manifest": run.embedded()} if isinstance(doc, list)
                   else {**doc, "manifest": run.embedded()})
    for stage in summary["stages"]:
        print(f"{stage['stage']:<28} {'ok' if stage['ok'] else 'FAILED'}")
    print(f"{summary['scenario']}: {'all stage contracts met' if ok else 'contract violated'}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="normpreserve", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0, help="RNG seed, recorded in every output (default: %(default)s)")
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    p.add_argument("--tol-overrides", default=None, help="JSON object overriding named tolerances")
    p.add_argument("--manifest", default=None, help="replay a run from its manifest.json")
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("construct", help="validate a transform spec and summarise it")
    c.add_argument("spec")
    c.add_argument("--sigmas", help="JSON list of covariance matrices to push forward")
    c.set_defaults(func=cmd_construct)

    c = sub.add_parser("apply", help="apply a transform to a CSV of samples")
    c.add_argument("transform")
    c.add_argument("samples")
    c.add_argument("--output", default="applied.csv")
    c.set_defaults(func=cmd_apply)

    c = sub.add_parser("verify", help="Monte-Carlo check of a pushforward claim")
    c.add_argument("transform", help="transform JSON, or a CSV of already-transformed source samples")
    c.add_argument("claim")
    c.add_argument("--samples", type=int, default=200_000)
    c.add_argument("--alpha", type=float, default=0.01)
    c.add_argument("--grid-tol", type=float, default=1e-10)
    c.add_argument("--no-grid", action="store_true", help="skip the exact grid oracle for n <= 2")
    c.add_argument("--dump-samples", action="store_true")
    c.set_defaults(func=cmd_verify)

    c = sub.add_parser("identities", help="check necessary identities for a claim pair")
    c.add_argument("claims")
    c.add_argument("--pairs", help="CSV of (x, Tx) rows, 2n columns")
    c.set_defaults(func=cmd_identities)

    c = sub.add_parser("recover", help="recover a transform from sample data")
    c.add_argument("manifest_file")
    c.set_defaults(func=cmd_recover)

    c = sub.add_parser("demo", help="run a reproducible end-to-end scenario")
    c.add_argument("scenario", choices=sorted(SCENARIOS))
    c.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        try:
            m = read_json(args.manifest)
            replay = list(m["argv"])
        except (NormPreserveError, KeyError, TypeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        out = args.out if "--out" in argv else m.get("output_dir", args.out)
        replay = ["--out", out] + _strip_out(replay)
        args = parser.parse_args(replay)
        argv = replay
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        run = _Run(args, _strip_out(argv))
        code = args.func(run)
        run.finish()
        return code
    except (NormPreserveError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _strip_out(argv):
    # the output directory is not part of a run's identity
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


if __name__ == "__main__":
    sys.exit(main())
