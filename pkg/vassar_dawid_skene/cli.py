"""Command-line entry point: ``dawid-skene <subcommand> [options]``.

Subcommands: simulate, exponent, aggregate, experiment, exact,
verify-sample-size. Results go to ``--out`` (or standard output); progress
and diagnostics go to standard error.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from .aggregate import (
    DEFAULT_MAX_ITERS,
    DEFAULT_SMOOTHING,
    DEFAULT_TOL,
    Rule,
    aggregate_labels,
)
from .exceptions import CrowdsourcingError
from .exponent import majority_vote_upper_bound, minimax_exponent
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ExplicitPoolSpec,
    OneCoinSpec,
    PoolSpec,
    exact_error,
    run_experiment,
    verify_sample_size,
)
from .io import (
    csv_text,
    json_text,
    label_matrix_text,
    read_json,
    read_label_matrix,
    read_pool,
    read_truth,
    truth_text,
    write_text,
)
from .model import generate_labels, remap_missing

logger = logging.getLogger(__name__)

PATH_OPTIONS = ("pool", "truth", "labels", "out", "sidecar", "config", "summary", "estimate")


@dataclass(frozen=True)
class CliInvocation:
    """A parsed command line: one subcommand, its flags and its file paths."""

    subcommand: str
    flags: Dict[str, Any]
    paths: Dict[str, Optional[Path]]

    def flag(self, name: str) -> Any:
        return self.flags.get(name)

    def path(self, name: str) -> Optional[Path]:
        return self.paths.get(name)

    @property
    def seed(self) -> int:
        seed = self.flags.get("seed")
        return 0 if seed is None else seed

    @property
    def threads(self) -> int:
        return self.flags.get("threads") or 1


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_text(out, text)


def _simulate(inv: CliInvocation) -> int:
    pool = read_pool(inv.path("pool"))
    truth = read_truth(inv.path("truth"))
    labels = generate_labels(pool, truth, inv.seed, inv.threads)
    _emit(label_matrix_text(labels), inv.path("out"))
    return 0


def _exponent(inv: CliInvocation) -> int:
    report = minimax_exponent(read_pool(inv.path("pool")), inv.threads)
    _emit(json_text(report.to_dict()), inv.path("out"))
    return 0


def _aggregate(inv: CliInvocation) -> int:
    rule = Rule.parse(inv.flag("rule"))
    pool = read_pool(inv.path("pool")) if inv.path("pool") else None
    observed = read_label_matrix(inv.path("labels"), pool.k if pool else inv.flag("k"))
    labels, k = remap_missing(observed)
    prior = None
    num_classes = None
    if k != observed.k:
        # The extra category marks a missing label, never a true one.
        num_classes = observed.k
        prior = [1.0 / observed.k] * observed.k + [0.0]

    started = time.perf_counter()
    outcome = aggregate_labels(
        rule, labels,
        pool=pool if rule is Rule.ORACLE else None,
        estimate=pool if rule is Rule.PLUGIN else None,
        smoothing=inv.flag("smoothing"),
        max_iters=inv.flag("max_iters"),
        tol=inv.flag("tol"),
        prior=prior,
        num_classes=num_classes,
    )
    runtime_ms = (time.perf_counter() - started) * 1000.0
    logger.debug("%s aggregated %d items in %.1f ms", rule.value, labels.n, runtime_ms)

    out = inv.path("out")
    _emit(truth_text(outcome.labels), out)
    sidecar: Dict[str, Any] = {"rule": rule.value}
    if outcome.iters is not None:
        sidecar["iters"] = outcome.iters
    if outcome.gamma_hat is not None:
        sidecar["gamma_hat"] = outcome.gamma_hat
        sidecar["signal_strength"] = outcome.signal_strength
    sidecar["runtime_ms"] = runtime_ms
    sidecar_path = inv.path("sidecar")
    if sidecar_path is None and out is not None:
        sidecar_path = out.with_name(out.name + ".json")
    if sidecar_path is not None:
        write_text(sidecar_path, json_text(sidecar))
    return 0


def _experiment(inv: CliInvocation) -> int:
    config_path = inv.path("config")
    config = ExperimentConfig.from_dict(read_json(config_path), config_path.parent,
                                        seed=inv.flag("seed"))
    result: ExperimentResult = run_experiment(config, inv.threads)
    out = inv.path("out")
    _emit(csv_text(result.csv_rows(), header=ExperimentResult.CSV_HEADER), out)
    summary = inv.path("summary")
    if summary is None and out is not None:
        summary = out.with_suffix(".summary.json")
    if summary is not None:
        write_text(summary, json_text(result.summary()))
    return 0


def _exact(inv: CliInvocation) -> int:
    pool = read_pool(inv.path("pool"))
    estimate = read_pool(inv.path("estimate")) if inv.path("estimate") else None
    rule = Rule.parse(inv.flag("rule"))
    true_label = inv.flag("true_label")
    bound = None
    if rule is Rule.ORACLE and pool.is_strictly_positive:
        bound = minimax_exponent(pool).upper_bound()
    elif rule is Rule.MV and pool.is_one_coin() and pool.is_strictly_positive:
        bound = majority_vote_upper_bound(pool.to_one_coin())
    result = {
        "rule": rule.value,
        "true_label": true_label,
        "exact_error": exact_error(pool, rule, true_label, estimate),
        "upper_bound": bound,
    }
    _emit(json_text(result), inv.path("out"))
    return 0


def _pool_spec(inv: CliInvocation) -> PoolSpec:
    if inv.path("pool"):
        return ExplicitPoolSpec(read_pool(inv.path("pool")))
    if inv.flag("one_coin"):
        return OneCoinSpec(p=tuple(inv.flag("one_coin")))
    return OneCoinSpec(p_range=tuple(inv.flag("p_range")), seed=inv.seed)


def _verify_sample_size(inv: CliInvocation) -> int:
    report = verify_sample_size(
        _pool_spec(inv),
        epsilon=inv.flag("epsilon"),
        trials=inv.flag("trials"),
        seed=inv.seed,
        n=inv.flag("n"),
        rule=inv.flag("rule"),
        class_prior=inv.flag("class_prior"),
        threads=inv.threads,
    )
    _emit(json_text(report.to_dict()), inv.path("out"))
    return 0


HANDLERS: Dict[str, Callable[[CliInvocation], int]] = {
    "simulate": _simulate,
    "exponent": _exponent,
    "aggregate": _aggregate,
    "experiment": _experiment,
    "exact": _exact,
    "verify-sample-size": _verify_sample_size,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="Root seed for all randomness (default: 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="Worker threads (default: available CPUs)")
    common.add_argument("--out", type=Path, default=None,
                        help="Output file (default: standard output)")
    common.add_argument("--verbose", action="store_true", help="Log debug details")

    parser = argparse.ArgumentParser(
        prog="dawid-skene",
        description="Dawid-Skene label aggregation and error-exponent experiments",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="Simulate worker labels")
    p.add_argument("--pool", type=Path, required=True, help="WorkerPool JSON")
    p.add_argument("--truth", type=Path, required=True, help="GroundTruth CSV")

    p = sub.add_parser("exponent", parents=[common], help="Compute I(pi) and diagnostics")
    p.add_argument("--pool", type=Path, required=True, help="WorkerPool JSON")

    p = sub.add_parser("aggregate", parents=[common], help="Aggregate observed labels")
    p.add_argument("--rule", choices=[rule.value for rule in Rule], required=True)
    p.add_argument("--labels", type=Path, required=True, help="LabelMatrix CSV")
    p.add_argument("--pool", type=Path, default=None,
                   help="True pool (oracle) or estimated pool (plugin)")
    p.add_argument("--k", type=int, default=None, help="Number of labels if no pool is given")
    p.add_argument("--sidecar", type=Path, default=None, help="JSON sidecar path")
    p.add_argument("--smoothing", type=float, default=DEFAULT_SMOOTHING)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("experiment", parents=[common], help="Run a Monte Carlo sweep")
    p.add_argument("--config", type=Path, required=True, help="ExperimentConfig JSON")
    p.add_argument("--summary", type=Path, default=None, help="JSON summary path")

    p = sub.add_parser("exact", parents=[common], help="Exact per-item error by enumeration")
    p.add_argument("--pool", type=Path, required=True, help="WorkerPool JSON")
    p.add_argument("--rule", choices=[Rule.MV.value, Rule.ORACLE.value, Rule.PLUGIN.value],
                   required=True)
    p.add_argument("--true-label", type=int, default=1)
    p.add_argument("--estimate", type=Path, default=None, help="Estimated pool for plugin")

    p = sub.add_parser("verify-sample-size", parents=[common],
                       help="Check the worker-count requirement by simulation")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--pool", type=Path, help="WorkerPool JSON")
    source.add_argument("--one-coin", type=float, nargs="+", metavar="P",
                        help="One-coin accuracies, repeated cyclically")
    source.add_argument("--p-range", type=float, nargs=2, metavar=("LO", "HI"),
                        help="Draw one-coin accuracies uniformly from [LO, HI]")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--rule", choices=[rule.value for rule in Rule], default=Rule.ORACLE.value)
    p.add_argument("--class-prior", type=float, nargs="+", metavar="P", default=None,
                   help="Prior the true labels are drawn from (default: uniform)")
    return parser


def parse_invocation(argv: Optional[List[str]] = None) -> CliInvocation:
    """Parse argv; argparse exits with status 2 on usage errors."""
    namespace = vars(build_parser().parse_args(argv))
    subcommand = namespace.pop("subcommand")
    paths = {name: namespace.pop(name) for name in PATH_OPTIONS if name in namespace}
    return CliInvocation(subcommand, namespace, paths)


def dispatch(invocation: CliInvocation) -> int:
    """
    Run the subcommand of an invocation.

    Returns:
        int: 0 on success, 1 on a validation, domain or input-file error
        (reported as one line on standard error).
    """
    handler = HANDLERS.get(invocation.subcommand)
    if handler is None:
        print(f"dawid-skene: unknown subcommand {invocation.subcommand!r}", file=sys.stderr)
        return 2
    try:
        return handler(invocation)
    except CrowdsourcingError as e:
        print(f"dawid-skene {invocation.subcommand}: error: {' '.join(str(e).split())}",
              file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    invocation = parse_invocation(argv)
    logging.basicConfig(
        level=logging.DEBUG if invocation.flag("verbose") else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    return dispatch(invocation)


if __name__ == "__main__":
    sys.exit(main())
