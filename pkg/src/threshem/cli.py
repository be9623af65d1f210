"""Command-line entry point.

Exit status: 0 on success, 1 on domain errors (bad data or configuration),
2 on usage errors.  Every subcommand only wires files to library calls.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from . import dataio
from .bounds import compute_bounds
from .em import LearnConfig, learn
from .errors import ThreshEMError
from .estimators import count_complete, map_estimate, ml_estimate
from .inference import record_log_likelihood
from .model import PriorSpec, check_parameters
from .oracle import CompareConfig, compare_runs

_ALGOS = {"em": "em", "them": "threshold-em"}
_INITS = {"random": "random-simplex", "uniform": "uniform"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="threshem", description="Threshold EM for Bayesian-network CPTs with missing data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("learn", help="learn CPTs from a dataset")
    p.add_argument("--algo", choices=["em", "them", "ml", "map"], required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--init", choices=sorted(_INITS), default="random")
    p.add_argument("--m-step", choices=["ml", "mean"], default="ml", help="M-step estimator for em/them")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")

    p = sub.add_parser("bounds", help="compute per-parameter bound intervals")
    p.add_argument("--network", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="forward-sample complete records")
    p.add_argument("--network", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mask", help="hide cells completely at random")
    p.add_argument("--data", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("loglik", help="print the observed-data log-likelihood")
    p.add_argument("--network", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("compare", help="paired EM vs threshold-EM trials on synthetic data")
    p.add_argument("--network", required=True)
    p.add_argument("--records", type=int, default=200)
    p.add_argument("--rate", type=float, default=0.3716)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    return parser


def _in_file(path, parse, *args):
    """Run ``parse`` and prefix any domain error with the file it came from."""
    try:
        return parse(dataio.read_text(path), *args)
    except ThreshEMError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


def _load_network(path, need_params=False):
    structure, params = _in_file(path, dataio.parse_network)
    if need_params and params is None:
        raise ThreshEMError(f"{path}: network file has no cpts")
    return structure, params


def _load_data(path, structure):
    return _in_file(path, dataio.parse_dataset, structure)


def _cmd_learn(args) -> str:
    structure, _ = _load_network(args.network)
    data = _load_data(args.data, structure)
    prior = PriorSpec.uniform(structure, args.alpha)
    if args.algo in ("ml", "map"):
        if args.trace:
            raise UsageError("--trace applies to em and them only")
        stats = count_complete(structure, data)
        est = ml_estimate(stats) if args.algo == "ml" else map_estimate(stats, prior)
        dataio.write_atomic(args.out, dataio.serialize_network(structure, est.params))
        flagged = sum(int(f.sum()) for f in est.fallback)
        return f"{args.algo}: {len(data)} records, {flagged} empty rows set uniform -> {args.out}"

    config = LearnConfig(
        algorithm=_ALGOS[args.algo],
        max_iterations=args.max_iters,
        param_tolerance=args.tol,
        init=_INITS[args.init],
        seed=args.seed,
        m_step="ml" if args.m_step == "ml" else "posterior-mean",
        prior=prior,
    )
    result = learn(structure, data, config)
    comment = f"{config.algorithm} seed={args.seed} init={config.init} iterations={result.iterations_used}"
    dataio.write_atomic(args.out, dataio.serialize_network(structure, result.params, comment=comment))
    if args.trace:
        dataio.write_atomic(args.trace, dataio.serialize_table(dataio.TRACE_HEADER, result.trace))
    state = "converged" if result.converged else "stopped at the iteration limit"
    return (
        f"{config.algorithm}: {state} after {result.iterations_used} iterations, "
        f"observed log-likelihood {result.final_loglik:.6f} -> {args.out}"
    )


def _cmd_bounds(args) -> str:
    structure, _ = _load_network(args.network)
    data = _load_data(args.data, structure)
    bounds = compute_bounds(structure, data, PriorSpec.uniform(structure, args.alpha))
    dataio.write_atomic(args.out, dataio.serialize_bounds(structure, bounds))
    return f"bounds for {len(structure)} nodes from {len(data)} records -> {args.out}"


def _cmd_sample(args) -> str:
    structure, params = _load_network(args.network, need_params=True)
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    data = dataio.forward_sample(structure, params, args.n, args.seed)
    comments = [
        f"forward_sample n={args.n} seed={args.seed}",
        "stream: splitmix64, domain SAMP, one stream per record index, one draw per node in topological order",
    ]
    dataio.write_atomic(args.out, dataio.serialize_dataset(structure, data, comments))
    return f"sampled {args.n} records -> {args.out}"


def _cmd_mask(args) -> str:
    structure, _ = _load_network(args.network)
    data = _load_data(args.data, structure)
    masked = dataio.mask_mcar(data, args.rate, args.seed)
    comments = [
        f"mask_mcar rate={args.rate!r} seed={args.seed}",
        "stream: splitmix64, domain MASK, one stream per record index, one draw per cell in column order",
    ]
    dataio.write_atomic(args.out, dataio.serialize_dataset(structure, masked, comments))
    return f"missingness {dataio.missingness_rate(masked):.4f} -> {args.out}"


def _cmd_loglik(args) -> str:
    structure, params = _load_network(args.network, need_params=True)
    check_parameters(structure, params)
    data = _load_data(args.data, structure)
    total = sum(record_log_likelihood(structure, params, rec).loglik for rec in data.records)
    return "%.17g" % total


def _cmd_compare(args) -> str:
    structure, params = _load_network(args.network, need_params=True)
    config = CompareConfig(
        records=args.records,
        rate=args.rate,
        trials=args.trials,
        seed=args.seed,
        max_iterations=args.max_iters,
        param_tolerance=args.tol,
    )
    summary = compare_runs(structure, params, config)
    rows = [t.row() for t in summary.trials]
    dataio.write_atomic(args.out, dataio.serialize_table(dataio.SUMMARY_HEADER, rows))
    frac = summary.them_faster_fraction
    frac_text = "n/a" if frac is None else f"{frac:.2f}"
    return f"{len(rows)} trials; threshold EM needed fewer iterations in a fraction {frac_text} -> {args.out}"


_COMMANDS = {
    "learn": _cmd_learn,
    "bounds": _cmd_bounds,
    "sample": _cmd_sample,
    "mask": _cmd_mask,
    "loglik": _cmd_loglik,
    "compare": _cmd_compare,
}


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        print(_COMMANDS[args.command](args))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ThreshEMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())
