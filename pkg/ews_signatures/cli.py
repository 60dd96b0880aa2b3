"""Command-line entry point: `ews <command> ...`.

Commands:
    compute          EWS of a CSV path (final tensor or streaming features)
    dump-derivation  derivation block L^(k) of an operator
    dump-lncde       flattened linear CDE matrices
    experiment       expressivity or SDE learning experiments
    duffing          Jordan-chain memory coordinates of a scalar path
    selftest         oracle suites

Every output file X is written with a companion X.manifest.json. Exit codes: 0 ok,
1 computational failure, 2 usage error.
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from .display import _display_check, _display_line
from .duffing import DuffingParams, chain_table, velocity_reconstruction
from .ews_engine import build_lncde_matrices, scan_ews, substep_deviation
from .experiments import LEARNERS, TARGETS, load_config, run_expressivity, run_sde
from .flow_ops import OperatorPair, derivation_block
from .options import get_compute
from .path_model import PiecewiseLinearPath, ingest_csv
from .run_checks import SUITES, run_selftest
from .tensor_algebra import word_labels
from .timer import start_timer, time_elapsed
from .utils import _read_json, _sha256, _write_csv, _write_json

logger = logging.getLogger(__name__)

COMPUTATION_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError, AssertionError)


def _tool_version() -> str:
    """Installed package version, or "unknown" when running from a source tree."""
    try:
        return version("ews-signatures")
    except PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    """What produced an output file: enough to rerun it and check the result."""

    command: List[str]
    config: Dict[str, Any]
    seeds: List[int] = field(default_factory=list)
    version: str = field(default_factory=_tool_version)
    runtime: float = 0.0
    outputs: Dict[str, str] = field(default_factory=dict)

    def record(self, path: Path) -> None:
        """Stores the SHA-256 of an output file under its name."""
        self.outputs[path.name] = _sha256(path)

    def write(self, path: Path) -> Path:
        """Writes the manifest next to `path` as `<path>.manifest.json`."""
        return _write_json(asdict(self), path.with_name(path.name + ".manifest.json"))


def _matrix_json(matrix: np.ndarray) -> Dict[str, Any]:
    """Row-major matrix document: {"rows", "cols", "data"}."""
    return {"rows": matrix.shape[0], "cols": matrix.shape[1], "data": matrix.reshape(-1).tolist()}


def _parse_floats(text: str) -> List[float]:
    """argparse type for comma-separated numbers such as "0.5,0.3,0.8".

    Args:
        text: Raw option value.

    Returns:
        The numbers, in order.

    Raises:
        argparse.ArgumentTypeError: If any entry is not a number.
    """
    try:
        return [float(value) for value in text.split(",")]
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from error


def _square(values: Sequence[float], dim: int) -> np.ndarray:
    """Reshapes the row-major entries of --A into a dim x dim matrix.

    Raises:
        ValueError: If there are not exactly dim**2 entries.
    """
    if len(values) != dim * dim:
        raise ValueError(f"--A needs {dim * dim} entries for dimension {dim}, but received {len(values)}")
    return np.array(values, dtype=float).reshape(dim, dim)


# -----------------------
# Commands
# -----------------------


def _operator(args: argparse.Namespace, path: PiecewiseLinearPath) -> OperatorPair:
    """Operator pair selected by --signature, --efm or --operator.

    Args:
        args: Parsed `compute` arguments. Exactly one of the three options is set.
        path: Input path, which fixes the dimension of the signature operator.

    Returns:
        The operator pair to scan with.
    """
    if args.signature:
        return OperatorPair.zero(path.dim)
    if args.efm is not None:
        return OperatorPair.diagonal(args.efm)
    return OperatorPair.from_json(_read_json(args.operator))


def _compute(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews compute`: the final or streaming EWS of a CSV path, optionally with a convergence check.

    Args:
        args: Parsed `compute` arguments.
        manifest: Run manifest; the operator and substeps are recorded in its config.

    Returns:
        The written output files.
    """
    path = ingest_csv(args.input)
    op = _operator(args, path)
    substeps = args.substeps if args.substeps is not None else pd.get_option("ews.substeps")
    manifest.config.update({"operator": op.to_json(), "substeps": substeps})
    if args.stream:
        tensors = scan_ews(path, op, args.depth, substeps, mode="streaming")
        result = {
            "dim": op.dim,
            "depth": args.depth,
            "labels": word_labels(op.dim, args.depth),
            "times": path.times.tolist(),
            "rows": [tensor.flatten().tolist() for tensor in tensors],
        }
    else:
        result = scan_ews(path, op, args.depth, substeps).to_json()
    if args.check_convergence:
        deviation = substep_deviation(path, op, args.depth, substeps)
        result["convergence"] = {"substeps": substeps, "doubled": 2 * substeps, "max_relative_deviation": deviation}
        _display_line(f"M={substeps} vs {2 * substeps}: max relative deviation {deviation:.3e}", lead_in="🔁 Convergence")
    return [_write_json(result, args.out)]


def _dump_derivation(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews dump-derivation`: the level-`depth` derivation block of A."""
    A = _square(args.A, args.dim)
    return [_write_json(_matrix_json(derivation_block(A, args.depth)), args.out)]


def _dump_lncde(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews dump-lncde`: the block-diagonal generator L, its blocks, and the rho and M matrices.

    Returns:
        The written JSON file.
    """
    A = _square(args.A, args.dim)
    matrices = build_lncde_matrices(A, args.dim, args.depth)
    result = {
        "dim": args.dim,
        "depth": args.depth,
        "labels": word_labels(args.dim, args.depth),
        "L": _matrix_json(matrices.L),
        "L_blocks": [_matrix_json(derivation_block(A, k)) for k in range(args.depth + 1)],
        "rho": [_matrix_json(rho) for rho in matrices.rho],
        "M": [_matrix_json(M) for M in matrices.M],
    }
    return [_write_json(result, args.out)]


def _experiment(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews experiment`: trains the requested learners on the expressivity or SDE task.

    Args:
        args: Parsed `experiment` arguments. --threads overrides the config file.
        manifest: Run manifest; seeds and the training config are recorded in it.

    Returns:
        The report JSON and the predictions CSV written next to it.
    """
    config, sde_params = load_config(_read_json(args.config) if args.config else {})
    if args.threads:
        config = replace(config, threads=args.threads)
    manifest.seeds = list(config.seeds)
    manifest.config.update({"train": config.to_dict()})
    if args.task == "expressivity":
        learners = list(LEARNERS) if args.learner == "all" else [args.learner]
        reports, predictions = run_expressivity(args.target, learners, config)
    else:
        manifest.config["sde"] = asdict(sde_params)
        reports, predictions = run_sde(config, sde_params)
    result = {
        "task": args.task,
        "target": args.target if args.task == "expressivity" else None,
        "reports": {learner: report.to_json(include_runtime=False) for learner, report in reports.items()},
    }
    for learner, report in reports.items():
        _display_check(report.to_frame(), f"📊 {learner} learner RMSE by seed")
    out = Path(args.out)
    return [
        _write_json(result, out),
        _write_csv(predictions, out.with_name(out.stem + ".predictions.csv")),
    ]


def _duffing(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews duffing`: the EFM chain table of a scalar CSV path, or the built-in reconstruction demo.

    Args:
        args: Parsed `duffing` arguments.
        manifest: Run manifest; the demo parameters are recorded in it.

    Returns:
        The written table, if any.

    Raises:
        ValueError: If neither --demo nor both --input and --out are given, or the CSV is not scalar.
    """
    outputs = []
    if args.demo:
        demo = velocity_reconstruction(DuffingParams(), args.K, args.lambda_x, args.substeps)
        manifest.config["demo"] = asdict(DuffingParams())
        _display_line(
            f"max velocity error {demo['max_velocity_error']:.3e}, max position error {demo['max_position_error']:.3e}",
            lead_in="🌀 Duffing reconstruction",
        )
        if args.out:
            outputs.append(_write_csv(demo["table"], args.out))
        return outputs
    if not args.input or not args.out:
        raise ValueError("duffing needs --input and --out (or --demo)")
    path = ingest_csv(args.input)
    if path.dim != 2:
        raise ValueError(f"duffing expects one channel column after t, but the CSV has {path.dim - 1}")
    return [_write_csv(chain_table(path, args.lambda_x, args.K), args.out)]


def _selftest(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    """`ews selftest`: runs the chosen check suites. Writes nothing."""
    if not run_selftest(args.suite, args.seed):
        raise AssertionError("self-test failed")
    return []


# -----------------------
# Parser
# -----------------------


def _positive_int(text: str) -> int:
    """argparse type for integers >= 1."""
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    """argparse type for integers >= 0."""
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    """The `ews` parser with global --threads and --quiet flags and one subparser per command."""
    parser = argparse.ArgumentParser(prog="ews", description="Exponentially weighted signatures of piecewise-linear paths.")
    parser.add_argument("--threads", type=_non_negative_int, default=0, help="Worker cap (0 = all cores).")
    parser.add_argument("--quiet", action="store_true", help="Suppress progress and result display.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    compute = commands.add_parser("compute", help="EWS of a CSV path.")
    compute.add_argument("--input", required=True, help="CSV with header t,x1,...,xd.")
    compute.add_argument("--depth", type=_non_negative_int, required=True)
    kind = compute.add_mutually_exclusive_group(required=True)
    kind.add_argument("--operator", help="Operator JSON {A, B, structure}.")
    kind.add_argument("--efm", type=_parse_floats, help="Comma-separated diagonal rates.")
    kind.add_argument("--signature", action="store_true", help="Classical signature (A = 0).")
    compute.add_argument("--stream", action="store_true", help="Emit the EWS at every knot.")
    compute.add_argument("--substeps", type=_positive_int)
    compute.add_argument("--check-convergence", action="store_true", help="Rerun at twice the sub-steps.")
    compute.add_argument("--out", required=True)
    compute.set_defaults(handler=_compute)

    for name, handler, help_text in (
        ("dump-derivation", _dump_derivation, "Derivation block L^(k) of A."),
        ("dump-lncde", _dump_lncde, "Flattened linear CDE matrices for B = I."),
    ):
        dump = commands.add_parser(name, help=help_text)
        dump.add_argument("--dim", type=_positive_int, required=True)
        dump.add_argument("--depth", type=_non_negative_int, required=True)
        dump.add_argument("--A", type=_parse_floats, required=True, help="Row-major entries of A.")
        dump.add_argument("--out", required=True)
        dump.set_defaults(handler=handler)

    experiment = commands.add_parser("experiment", help="Learning experiments.")
    experiment.add_argument("task", choices=["expressivity", "sde"])
    experiment.add_argument("--target", choices=TARGETS, default="ews")
    experiment.add_argument("--learner", choices=[*LEARNERS, "all"], default="all")
    experiment.add_argument("--config", help="JSON of TrainConfig fields, with an optional 'sde' section.")
    experiment.add_argument("--out", required=True)
    experiment.set_defaults(handler=_experiment)

    duffing = commands.add_parser("duffing", help="Jordan-chain memory coordinates.")
    duffing.add_argument("--lambda-x", type=float, default=0.5)
    duffing.add_argument("--K", type=_non_negative_int, default=4)
    duffing.add_argument("--input", help="CSV with header t,x.")
    duffing.add_argument("--out")
    duffing.add_argument("--demo", action="store_true", help="Velocity reconstruction of a forced Duffing oscillator.")
    duffing.add_argument("--substeps", type=_positive_int)
    duffing.set_defaults(handler=_duffing)

    selftest = commands.add_parser("selftest", help="Run the oracle suites.")
    selftest.add_argument("--suite", action="append", choices=list(SUITES))
    selftest.add_argument("--seed", type=int, default=0)
    selftest.set_defaults(handler=_selftest)
    return parser


def main(argv: Union[Sequence[str], None] = None) -> int:
    """Runs one command.

    Returns:
        0 on success, 1 on a computational failure. Usage errors exit with 2 from argparse.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    with pd.option_context("ews.threads", args.threads, "ews.verbose", not args.quiet):
        manifest = RunManifest(command=argv, config=dict(get_compute()))
        start = start_timer()
        try:
            outputs = args.handler(args, manifest)
        except COMPUTATION_ERRORS as error:
            logger.debug("Command failed", exc_info=True)
            print(f"ews: error: {error}", file=sys.stderr)
            return 1
        manifest.runtime = time_elapsed(start)
        for output in outputs:
            manifest.record(output)
        for output in outputs:
            manifest.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
