"""
mendkit command line: dataset generation, training, restoration, meshes, reports.

    python -m apps.cli.cli gen-data --config run.json --workdir work
    python -m apps.cli.cli train --set train.epochs=200
    python -m apps.cli.cli infer --jobs 4
    python -m apps.cli.cli ttt --jobs 4
    python -m apps.cli.cli eval && python -m apps.cli.cli report
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

import numpy as np
import scipy
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from rich.text import Text

from apps.cli.ablate import ablation_table, run_ablation
from core.observability.setup import configure_observability, default_run_name
from core.runtime.errors import DataError, MendError, MissingArtifactError, UsageError
from core.schemas.config import RunConfig, ShapeClass
from core.schemas.contracts import CHECKPOINT_FORMAT_VERSION, DATASET_FORMAT_VERSION, RESULT_FORMAT_VERSION, MethodTag, StageResult
from fracture.dataset import SAMPLE_VERSION
from orchestrator.pipeline import Pipeline
from workers.evaluate.worker import DISPLAY_SCALE, MethodSummary, aggregate, load_records

VERSION = "0.1.0"
SEED_ENV = "MENDKIT_SEED"

stderr = Console(stderr=True)
stdout = Console()


def _load_env_file(path: Path) -> None:
    """KEY=value lines into os.environ; variables already set win."""
    if not path.exists():
        return
    for raw_line in path.read_text(encoding="utf-8").splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("export "):
            line = line[len("export ") :].lstrip()
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            continue
        if value and value[0] in ("'", '"') and value[-1:] == value[:1]:
            value = value[1:-1]
        else:
            value = value.split("#", 1)[0].rstrip()
        os.environ.setdefault(key, value)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors here exit with 1
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _parse_override(text: str) -> tuple[List[str], Any]:
    path, sep, raw = text.partition("=")
    if not sep or not path.strip():
        raise UsageError(f"--set expects a.b=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip().split("."), value


def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for text in overrides:
        keys, value = _parse_override(text)
        node = document
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise UsageError(f"--set {text}: '{key}' is not a section")
            node = child
        node[keys[-1]] = value
    return document


def load_config(path: Optional[Path], overrides: Sequence[str] = (), env: Optional[Dict[str, str]] = None) -> RunConfig:
    """Config file, then ``--set`` overrides, then the seed from the environment."""
    env = os.environ if env is None else env
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path, "config file")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(document, dict):
            raise UsageError(f"{path}: expected a JSON object")
    apply_overrides(document, overrides)
    seed = env.get(SEED_ENV)
    if seed:
        try:
            document["seed"] = int(seed)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer, got {seed!r}") from exc
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise UsageError(f"invalid configuration:\n{exc}") from exc


def version_text() -> str:
    return "\n".join(
        [
            f"mendkit {VERSION}",
            f"python {platform.python_version()}, numpy {np.__version__}, scipy {scipy.__version__}",
            f"formats: dataset manifest v{DATASET_FORMAT_VERSION}, samples v{SAMPLE_VERSION}, "
            f"checkpoint v{CHECKPOINT_FORMAT_VERSION}, result v{RESULT_FORMAT_VERSION}",
        ]
    )


def summary_table(summaries: Sequence[MethodSummary], title: str = "Chamfer distance (x1e4)") -> Table:
    table = Table(title=title)
    for column in ("class", "method", "n", "mean", "median", "R mean", "R median", "outliers"):
        table.add_column(column, justify="left" if column in ("class", "method") else "right")

    def fmt(value: Optional[float]) -> str:
        return "-" if value is None else f"{value * DISPLAY_SCALE:.3f}"

    for s in summaries:
        table.add_row(
            s.class_name,
            s.method.value,
            str(s.n),
            fmt(s.mean),
            fmt(s.median),
            fmt(s.restoration_mean),
            fmt(s.restoration_median),
            "[yellow]dominated[/]" if s.outlier_dominated else "",
        )
    return table


def _print_results(results: Sequence[StageResult]) -> None:
    for result in results:
        stderr.print(f"{result.status.value:<8} {result.log_output}")


# --- subcommands ---------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace, config: RunConfig) -> None:
    if args.obj:
        config = config.model_copy(update={"data": config.data.model_copy(update={"class_name": ShapeClass.OBJ, "obj_path": str(args.obj)})})
    _print_results([_pipeline(args, config).gen_data()])


def cmd_train(args: argparse.Namespace, config: RunConfig) -> None:
    # training is single-job
    _print_results([Pipeline(config, args.workdir, force=args.force).train(resume=args.resume)])


def cmd_infer(args: argparse.Namespace, config: RunConfig) -> None:
    _print_results([_pipeline(args, config).restore(MethodTag.INFERENCE_ONLY)])


def cmd_ttt(args: argparse.Namespace, config: RunConfig) -> None:
    if config.ttt.epochs == 0:
        raise UsageError("ttt needs ttt.epochs > 0")
    _print_results([_pipeline(args, config).restore(MethodTag.WITH_TTT)])


def cmd_mesh(args: argparse.Namespace, config: RunConfig) -> None:
    _print_results([_pipeline(args, config).mesh(args.instance or None, args.resolution)])


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> None:
    _print_results([_pipeline(args, config).evaluate()])


def cmd_report(args: argparse.Namespace, config: RunConfig) -> None:
    pipeline = _pipeline(args, config)
    summaries = aggregate(load_records(pipeline.paths.results), outlier_ratio=config.eval.outlier_ratio)
    stdout.print(summary_table(summaries))


def cmd_ablate(args: argparse.Namespace, config: RunConfig) -> None:
    rows = run_ablation(config, args.workdir, dims=args.dims or None, jobs=args.jobs, force=args.force)
    stdout.print(ablation_table(rows))


def _pipeline(args: argparse.Namespace, config: RunConfig) -> Pipeline:
    return Pipeline(config, args.workdir, jobs=args.jobs, force=args.force)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="RunConfig JSON file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="A.B=VALUE", help="Dotted config override (repeatable)")
    common.add_argument("--workdir", type=Path, default=Path("work"), help="Work directory (default: ./work)")
    common.add_argument("--jobs", type=int, default=1, help="Parallel instances for gen-data/infer/ttt")
    common.add_argument("--force", action="store_true", help="Rerun stages even when their inputs are unchanged")
    common.add_argument("--run-name", help="Name of the observability event log")
    common.add_argument("--verbose", action="store_true", help="Show debug events")

    parser = _Parser(prog="mendkit", description="Volumetric shape restoration with test-time training")
    parser.add_argument("--version", action="store_true", help="Print build info and format versions")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="Generate a fractured shape dataset")
    p.add_argument("--obj", type=Path, help="Build the dataset from one watertight OBJ mesh")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="Train decoders and training latents")
    p.add_argument("--resume", action="store_true", help="Continue from checkpoint/last")
    p.set_defaults(func=cmd_train)

    sub.add_parser("infer", parents=[common], help="Latent-only restoration of the test split").set_defaults(func=cmd_infer)
    sub.add_parser("ttt", parents=[common], help="Restoration with test-time training").set_defaults(func=cmd_ttt)

    p = sub.add_parser("mesh", parents=[common], help="Export ground-truth and decoded meshes")
    p.add_argument("--instance", action="append", default=[], help="Instance id (repeatable; default: all)")
    p.add_argument("--resolution", type=int, help="Grid resolution (default: eval.resolution)")
    p.set_defaults(func=cmd_mesh)

    sub.add_parser("eval", parents=[common], help="Write report.csv and cumulative curves").set_defaults(func=cmd_eval)
    sub.add_parser("report", parents=[common], help="Print the Chamfer distance table").set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", parents=[common], help="Sweep latent dimensions d_C = d_B")
    p.add_argument("--dim", dest="dims", type=int, action="append", default=[], help="Latent dimension (repeatable; default: ablate.dims)")
    p.set_defaults(func=cmd_ablate)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, dispatch and map failures to exit codes; returns the code."""
    try:
        args = build_parser().parse_args(argv)
        if args.version:
            stdout.print(version_text(), highlight=False)
            return 0
        if not args.command:
            raise UsageError("missing subcommand; see --help")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        config = load_config(args.config, args.overrides)
        configure_observability(args.run_name or default_run_name(args.command), verbose=args.verbose)
        args.func(args, config)
    except KeyboardInterrupt:
        stderr.print("Aborted.")
        return 130
    except MendError as exc:
        stderr.print(Text.assemble(("error", "bold red"), f" ({type(exc).__name__}): {exc}"))
        return exc.exit_code
    except OSError as exc:
        stderr.print(Text.assemble(("error", "bold red"), f" ({type(exc).__name__}): {exc}"))
        return DataError.exit_code
    return 0


def main(argv: Optional[Sequence[str]] = None) -> None:
    _load_env_file(Path.cwd() / ".env")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
