"""Command-line interface: ``evalsim simulate|fit|embed|elect|summary``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
Every command is a pure function of its inputs, options and seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .core import (Profile, ProfileFormatError, RandomSource, Scale, profile_to_csv,
                   read_profile_csv, validate_profile)
from .embedding import (EmbeddingProblem, evals_to_dissimilarities, refit_voter_distribution,
                        smacof)
from .errors import (DegenerateInit, DegenerateSample, DomainError, EvalsimError, ModelError,
                     NonConvergence, NotPositiveDefinite, ProfileValidationError,
                     SingularCovariance, SingularMatrix, TiesPresent, TooManyCandidates)
from .fitting import fit_pipeline, histogram_table, jitter_scores
from .generators import (LinearTruncated, Sigmoid, SpatialModel, generate, model_from_json,
                         positions_to_csv, spatial_generate)
from .rules import run_rule

__all__ = ["main", "build_parser", "DEFAULT_SEED"]

DEFAULT_SEED = 0

# Stream indices under the master seed, one per purpose.
STREAM_SIMULATE = 0
STREAM_JITTER = 1
STREAM_EMBED = 2
STREAM_REFIT = 3

_INPUT_ERRORS = (ModelError, DomainError, ProfileFormatError, ProfileValidationError,
                 TiesPresent, TooManyCandidates, OSError, json.JSONDecodeError)
_NUMERIC_ERRORS = (NonConvergence, DegenerateInit, SingularMatrix, SingularCovariance,
                   NotPositiveDefinite, DegenerateSample, FloatingPointError, np.linalg.LinAlgError)


class UsageError(EvalsimError):
    """Bad command-line value."""


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("EVALSIM_SEED")
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"EVALSIM_SEED must be an integer, got {env!r}") from None


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_profile(args, seed: int) -> Profile:
    transpose = getattr(args, "transpose", False)
    if getattr(args, "jitter", False):
        raw = read_profile_csv(args.input, K=100, transpose=transpose)
        scores = jitter_scores(raw.values, RandomSource(seed, STREAM_JITTER), top=100)
        return validate_profile(scores, Scale.continuous(), raw.candidate_names)
    return read_profile_csv(args.input, K=getattr(args, "K", None), transpose=transpose)


def _parse_link(spec: str | None):
    """``none``, ``linear:ell`` or ``sigmoid:lambda,beta``."""
    if spec is None or spec == "none":
        return None
    kind, _, params = spec.partition(":")
    try:
        vals = [float(x) for x in params.split(",")] if params else []
        if kind == "linear" and len(vals) == 1:
            return LinearTruncated(vals[0])
        if kind == "sigmoid" and len(vals) == 2:
            return Sigmoid(vals[0], vals[1])
    except ValueError:
        pass
    raise UsageError(f"bad --link {spec!r}; use none, linear:ell or sigmoid:lambda,beta")


def _parse_refit(spec: str):
    if spec == "gaussian":
        return "gaussian", 1
    if spec.startswith("mixture:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            k = 0
        if k >= 1:
            return "mixture", k
    raise UsageError(f"bad --refit {spec!r}; use gaussian or mixture:k")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def run_simulate(args) -> int:
    seed = _seed(args)
    with open(args.model, encoding="utf-8") as fh:
        obj = json.load(fh)
    model = model_from_json(obj)
    if args.voters < 1:
        raise UsageError(f"--voters must be positive, got {args.voters}")
    source = RandomSource(seed, STREAM_SIMULATE)
    if isinstance(model, SpatialModel):
        profile, pos = spatial_generate(model, args.voters, source, threads=args.threads)
        if args.positions:
            _write_text(args.positions, positions_to_csv(pos))
    else:
        if args.positions:
            raise UsageError("--positions only applies to spatial models")
        profile = generate(model, args.voters, source, threads=args.threads)
    _write_text(args.out, profile_to_csv(profile, transpose=args.transpose))
    return 0


def run_fit(args) -> int:
    seed = _seed(args)
    profile = _load_profile(args, seed)
    families = args.families.split(",") if args.families else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = fit_pipeline(profile, families=families, dependence=args.dependence,
                              B=args.B, G=args.G, alpha=args.alpha,
                              paper_estimator=args.paper_estimator)
    _write_text(args.out, _dump_json(report.to_json()))
    if args.hist is not None:
        if args.hist < 1:
            raise UsageError("--hist needs G >= 1")
        K = profile.scale.K if profile.scale.is_discrete else None
        lines = ["candidate\tlower\tupper\tcount\tdensity"]
        for c, name in enumerate(profile.candidate_names):
            for lo, hi, cnt, dens in histogram_table(profile.values[:, c], args.hist, K):
                lines.append(f"{name}\t{lo:.17g}\t{hi:.17g}\t{cnt}\t{dens:.17g}")
        _write_text(args.hist_out, "\n".join(lines) + "\n")
    return 0


def run_embed(args) -> int:
    seed = _seed(args)
    profile = _load_profile(args, seed)
    if args.d < 1:
        raise UsageError(f"--d must be >= 1, got {args.d}")
    link = _parse_link(args.link)
    delta, w = evals_to_dissimilarities(profile, link)
    problem = EmbeddingProblem(delta, w, args.d)
    sol = smacof(problem, init=args.init, max_iter=args.max_iter, eps=args.eps,
                 source=RandomSource(seed, STREAM_EMBED), n_init=args.n_init, nested=True)
    lines = ["point,kind," + ",".join(f"x_{k + 1}" for k in range(args.d))]
    for v, row in enumerate(sol.voter_positions.tolist()):
        lines.append(",".join([str(v + 1), "voter", *("%.17g" % x for x in row)]))
    for name, row in zip(profile.candidate_names, sol.candidate_positions.tolist()):
        lines.append(",".join([name, "candidate", *("%.17g" % x for x in row)]))
    _write_text(args.out, "\n".join(lines) + "\n")
    report = {"n": profile.n, "m": profile.m, "link": link.to_json() if link else None}
    report.update(sol.to_json())
    if args.refit:
        family, k = _parse_refit(args.refit)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dist = refit_voter_distribution(sol.voter_positions, family, k,
                                            RandomSource(seed, STREAM_REFIT))
        refit = dist.to_json()
        if family == "gaussian":
            refit = {"dist": "gaussian", "mean": dist.means[0].tolist(),
                     "covariance": dist.covariances[0].tolist()}
        refit["warnings"] = [str(c.message) for c in caught]
        report["refit"] = refit
    if args.report:
        _write_text(args.report, _dump_json(report))
    return 0


def run_elect(args) -> int:
    profile = _load_profile(args, _seed(args))
    result = run_rule(profile, args.rule)
    _write_text(args.out, _dump_json(result.to_json()))
    return 0


def run_summary(args) -> int:
    profile = _load_profile(args, _seed(args))
    X = profile.values.astype(float)
    cands = []
    for c, name in enumerate(profile.candidate_names):
        col = np.sort(X[:, c])
        cands.append({
            "candidate": name,
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if col.size > 1 else 0.0,
            "min": float(col[0]),
            "lower_median": float(col[(col.size - 1) // 2]),
            "max": float(col[-1]),
        })
    ties = int(np.sum(np.any(np.diff(np.sort(X, axis=1), axis=1) == 0, axis=1))) if profile.m > 1 else 0
    out = {"n": profile.n, "m": profile.m, "scale": profile.scale.to_json(),
           "voters_with_ties": ties, "candidates": cands}
    _write_text(args.out, _dump_json(out))
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_common(p, needs_input=True):
    if needs_input:
        p.add_argument("input", help="profile CSV (voters in rows)")
        p.add_argument("--transpose", action="store_true",
                       help="input has candidates in rows and voters in columns")
        p.add_argument("--K", type=int, default=None,
                       help="grade scale top; default inferred from the file")
        p.add_argument("--jitter", action="store_true",
                       help="treat input as 0..100 scores; add U(0,1) noise and divide by 101")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (overrides EVALSIM_SEED; default {DEFAULT_SEED})")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalsim", description="Evaluation-profile simulation and fitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a profile from a model JSON")
    _add_common(p, needs_input=False)
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--voters", "-n", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--transpose", action="store_true", help="write candidates in rows")
    p.add_argument("--positions", default=None, help="positions CSV for spatial models")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("fit", help="fit marginals, tests and dependence to a profile")
    _add_common(p)
    p.add_argument("--families", default=None, help="comma-separated marginal families")
    p.add_argument("--dependence", choices=("gaussian", "checkerboard"), default="gaussian")
    p.add_argument("--B", type=int, default=40, help="checkerboard bins per axis")
    p.add_argument("--G", type=int, default=40, help="histogram bins for continuous GOF")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--paper-estimator", action="store_true",
                   help="binomial p estimated as mean / (K + 1)")
    p.add_argument("--hist", type=int, default=None, metavar="G", help="emit per-candidate bin tables")
    p.add_argument("--hist-out", default=None, help="histogram TSV file (default stdout)")
    p.set_defaults(func=run_fit)

    p = sub.add_parser("embed", help="SMACOF unfolding of a profile")
    _add_common(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--link", default="none", help="none, linear:ell or sigmoid:lambda,beta")
    p.add_argument("--init", choices=("classical", "random"), default="classical")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--refit", default=None, help="gaussian or mixture:k")
    p.add_argument("--report", default=None, help="embedding report JSON")
    p.set_defaults(func=run_embed)

    p = sub.add_parser("elect", help="run a voting rule")
    _add_common(p)
    p.add_argument("--rule", required=True, help="range, mj or approval:t")
    p.set_defaults(func=run_elect)

    p = sub.add_parser("summary", help="per-candidate descriptive statistics")
    _add_common(p)
    p.set_defaults(func=run_summary)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, *_INPUT_ERRORS) as exc:
        print(f"evalsim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"evalsim {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
