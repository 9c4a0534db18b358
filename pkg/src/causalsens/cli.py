"""Command-line entry point.

Every command writes its output plus ``<out>.manifest.json`` recording the
argv, resolved options, seed and input hashes; ``replay`` re-runs a manifest.
Exit codes: 0 success, 1 computation error, 2 usage error. Errors are printed
to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

import numpy as np

from . import __version__
from .bayes import (
    DEFAULT_K,
    DEFAULT_MAX_DRAWS,
    DEFAULT_SAMPLES,
    DirichletPrior,
    TruncatedGaussianEpsPrior,
    bsv,
    fit_beta_means,
    fit_dirichlet,
    prior_from_dict,
    reversal_probability,
    seed_for,
    uniform_prior,
)
from .exceptions import IncompatiblePrior, SensitivityError
from .model import BaselineEstimate, DecisionSpec, fit_baseline, read_dataset
from .scenarios import EpsilonSubsetSpace, enumerate_spaces, parse_space, rank_spaces, spearman
from .simdata import SimConfig, default_config, simulate_observational, simulate_unbiased
from .worstcase import SolverOptions, worst_case


class UsageError(Exception):
    code = "usage"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(args, argv, inputs: List[str]) -> None:
    options = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "inputs": {p: _sha256(p) for p in inputs if p},
        "seed": getattr(args, "seed", None),
        "options": options,
        "version": __version__,
    }
    _write_json(args.out + ".manifest.json", manifest)


def _load_prior(arg: str, space):
    """``uniform``, ``trunc-gaussian-eps:SIGMA`` or a prior JSON file."""
    if arg == "uniform":
        if isinstance(space, EpsilonSubsetSpace):
            raise UsageError("--prior uniform is undefined on odds-ratio spaces")
        return uniform_prior(space)
    if arg.startswith("trunc-gaussian-eps"):
        _, _, sigma = arg.partition(":")
        return TruncatedGaussianEpsPrior(float(sigma) if sigma else 1.0)
    with open(arg) as fh:
        return prior_from_dict(json.load(fh))


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} requires an explicit --seed")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    _require_seed(args)
    if args.config is not None:
        cfg = SimConfig.from_json(args.config)
    else:
        cfg = default_config(args.preset)
    fn = simulate_unbiased if args.unbiased else simulate_observational
    data = fn(cfg, args.n, args.seed)
    data.to_csv(args.out)
    return [args.config]


def cmd_baseline(args):
    data = read_dataset(args.data)
    if args.swap_arms:
        data = data.swap_arms()
    fit_baseline(data, smoothing=args.smoothing).to_json(args.out)
    return [args.data]


def _solver_opts(args) -> SolverOptions:
    return SolverOptions(eta=args.eta, outer_iters=args.outer_iters,
                         tol_constraint=args.tol_constraint)


def cmd_worst_case(args):
    baseline = BaselineEstimate.from_json(args.baseline)
    space = parse_space(args.space, baseline)
    report = worst_case(space, spec=DecisionSpec(args.delta), opts=_solver_opts(args))
    _write_json(args.out, report.to_dict())
    return [args.baseline]


def cmd_bsv(args):
    _require_seed(args)
    baseline = BaselineEstimate.from_json(args.baseline)
    space = parse_space(args.space, baseline)
    prior = _load_prior(args.prior, space)
    report = bsv(space, prior, DecisionSpec(args.delta), m=args.samples,
                 n_max=args.max_draws, rng=args.seed, k=args.k or None)
    _write_json(args.out, report.to_dict())
    return [args.baseline, _prior_path(args.prior)]


def cmd_reversal(args):
    _require_seed(args)
    baseline = BaselineEstimate.from_json(args.baseline)
    space = parse_space(args.space, baseline)
    prior = _load_prior(args.prior, space)
    est = reversal_probability(space, prior, DecisionSpec(args.delta), args.k, args.seed)
    out = {"space": space.label, "prior": prior.to_dict(), "delta": args.delta,
           "seed": args.seed, **est.to_dict()}
    _write_json(args.out, out)
    return [args.baseline, _prior_path(args.prior)]


def _prior_path(arg):
    return arg if os.path.isfile(arg) else None


def cmd_fit_prior(args):
    rows = np.loadtxt(args.rows, delimiter=",", ndmin=2)
    if args.family == "dirichlet":
        prior = DirichletPrior(tuple(fit_dirichlet(rows)))
    else:
        prior = fit_beta_means(rows, precision=args.precision)
    _write_json(args.out, prior.to_dict())
    return [args.rows]


def _evaluate_space(job):
    """Worker for ``rank``; module level so it can run in a process pool."""
    baseline_dict, descriptor, criteria, delta, prior_arg, m, n_max, seed, opts = job
    baseline = BaselineEstimate.from_dict(baseline_dict)
    space = parse_space(descriptor, baseline)
    out = {"space": space.label, "dim": space.free_dim}
    spec = DecisionSpec(delta)
    if "worst" in criteria:
        out["worst"] = worst_case(space, spec=spec, opts=opts).value
    if "bsv" in criteria:
        prior = _load_prior(prior_arg, space)
        out["bsv"] = bsv(space, prior, spec, m=m, n_max=n_max,
                         rng=seed_for(seed, space.label)).bsv
    return out


def _fmt(v) -> str:
    return repr(float(v))


def cmd_rank(args):
    criteria = ["worst", "bsv"] if args.criterion == "both" else [args.criterion]
    if "bsv" in criteria:
        _require_seed(args)
    which, _, family = args.spaces.partition(":")
    sizes = {"all-singletons": 1, "all-pairs": 2, "all-triples": 3}
    if which not in sizes or family not in ("cov", "out", "eps"):
        raise UsageError(f"bad --spaces {args.spaces!r}")
    if "bsv" in criteria and family == "eps" and args.prior == "uniform":
        raise UsageError("--prior uniform is undefined on odds-ratio spaces")
    baseline = BaselineEstimate.from_json(args.baseline)
    spaces = enumerate_spaces(baseline, sizes[which], family)
    opts = _solver_opts(args)
    jobs = [(baseline.to_dict(), s.descriptor(), criteria, args.delta, args.prior,
             args.samples, args.max_draws, args.seed, opts) for s in spaces]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_evaluate_space, jobs))
    else:
        rows = [_evaluate_space(j) for j in jobs]

    ranks = {c: rank_spaces([(r["space"], r[c]) for r in rows]) for c in criteria}
    header = ["space"] + criteria + [f"rank_{c}" for c in criteria]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([r["space"]] + [_fmt(r[c]) for c in criteria]
                            + [ranks[c].position(r["space"]) for c in criteria])
        if len(criteria) == 2 and len(rows) >= 2:
            degenerate = any(len({r[c] for r in rows}) == 1 for c in criteria)
            rho = 0.0 if degenerate else spearman(ranks["worst"], ranks["bsv"])
            fh.write(f"# spearman,{_fmt(rho)}" + (",degenerate" if degenerate else "") + "\n")
    if args.plot_out:
        with open(args.plot_out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "series", "value"])
            for r in rows:
                for c in criteria:
                    writer.writerow([r["dim"], f"{c}:{r['space']}", _fmt(r[c])])
    return [args.baseline, _prior_path(args.prior)]


def cmd_replay(args):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    for path, digest in manifest["inputs"].items():
        if _sha256(path) != digest:
            raise UsageError(f"input {path} changed since the manifest was written")
    return main(manifest["argv"])


# ---------------------------------------------------------------------------
# parser


def _add_solver_flags(p):
    p.add_argument("--eta", type=float, default=SolverOptions.eta)
    p.add_argument("--outer-iters", type=int, default=SolverOptions.outer_iters)
    p.add_argument("--tol-constraint", type=float, default=SolverOptions.tol_constraint)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalsens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic observational dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="SimConfig JSON")
    src.add_argument("--preset", type=int, choices=(4, 6, 8), help="built-in generator")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--unbiased", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="fit per-cell baseline estimates")
    p.add_argument("--data", required=True)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--swap-arms", action="store_true", help="relabel treatment and control")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("worst-case", help="worst-case sensitivity for one space")
    p.add_argument("--baseline", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--delta", type=float, default=0.0)
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_worst_case)

    for name, func in (("bsv", cmd_bsv), ("reversal-prob", cmd_reversal)):
        p = sub.add_parser(name)
        p.add_argument("--baseline", required=True)
        p.add_argument("--space", required=True)
        p.add_argument("--prior", default="uniform")
        p.add_argument("--delta", type=float, default=0.0)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
        if name == "bsv":
            p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
            p.add_argument("--max-draws", type=int, default=DEFAULT_MAX_DRAWS)
            p.add_argument("--k", type=int, default=0,
                           help="also estimate the reversal probability from K draws")
        else:
            p.add_argument("--k", type=int, default=DEFAULT_K)
        p.set_defaults(func=func)

    p = sub.add_parser("fit-prior", help="fit an empirical prior to probability rows")
    p.add_argument("family", choices=("dirichlet", "beta-means"))
    p.add_argument("--rows", required=True)
    p.add_argument("--precision", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("rank", help="rank every space of a family")
    p.add_argument("--baseline", required=True)
    p.add_argument("--spaces", required=True,
                   help="all-singletons|all-pairs|all-triples:cov|out|eps")
    p.add_argument("--criterion", choices=("worst", "bsv", "both"), default="both")
    p.add_argument("--prior", default="uniform")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--max-draws", type=int, default=DEFAULT_MAX_DRAWS)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot-out")
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def _fail(code: int, payload: dict) -> int:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except UsageError as exc:
        return _fail(2, {"error": "usage", "message": str(exc)})
    except IncompatiblePrior as exc:
        return _fail(2, exc.to_dict())
    except SensitivityError as exc:
        return _fail(1, exc.to_dict())
    except (OSError, ValueError) as exc:
        return _fail(1, {"error": type(exc).__name__, "message": str(exc)})
    if args.command == "replay":
        return result
    _write_manifest(args, argv, [p for p in result if p])
    return 0


if __name__ == "__main__":
    sys.exit(main())
