"""
Latent-dimension sweep: train, restore and score one model per d_C = d_B.

All dimensions share one generated dataset; each gets its own work directory
``<workdir>/ablate/dim_<d>/``. The sweep writes ``<workdir>/ablation.csv``.
"""
from __future__ import annotations

import csv
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from rich.table import Table

from core.observability.emitter import emit_runtime_event
from core.runtime.errors import ParameterError
from core.schemas.config import RunConfig
from core.schemas.contracts import MethodTag
from models.checkpoint import load_checkpoint
from orchestrator.pipeline import Pipeline
from workers.evaluate.worker import DISPLAY_SCALE, aggregate, load_records

ABLATION_NAME = "ablation.csv"
ABLATION_COLUMNS = ["dim", "n_params", "n_macs", "method", "n", "mean_cd_x1e4", "median_cd_x1e4"]


@dataclass(frozen=True)
class AblationRow:
    dim: int
    n_params: int
    n_macs: int
    method: MethodTag
    n: int
    mean: float
    median: float

    def as_csv(self) -> dict:
        return {
            "dim": str(self.dim),
            "n_params": str(self.n_params),
            "n_macs": str(self.n_macs),
            "method": self.method.value,
            "n": str(self.n),
            "mean_cd_x1e4": f"{self.mean * DISPLAY_SCALE:.6f}",
            "median_cd_x1e4": f"{self.median * DISPLAY_SCALE:.6f}",
        }


def with_latent_dim(config: RunConfig, dim: int) -> RunConfig:
    if dim < 1:
        raise ParameterError(f"latent dimension must be >= 1, got {dim}")
    document = config.model_dump(mode="json")
    document["model"].update(latent_dim_c=dim, latent_dim_b=dim)
    return RunConfig.model_validate(document)


def run_dim(config: RunConfig, workdir: Path, dataset_dir: Path, *, jobs: int = 1, force: bool = False) -> AblationRow:
    dim = config.model.latent_dim_c
    pipeline = Pipeline(config, Path(workdir) / "ablate" / f"dim_{dim}", jobs=jobs, force=force, dataset_dir=dataset_dir)
    method = MethodTag.WITH_TTT if config.ttt.epochs > 0 else MethodTag.INFERENCE_ONLY
    pipeline.train()
    pipeline.restore(method)
    model = load_checkpoint(pipeline.paths.best, requires_grad=False).model
    n_params, n_macs = model.count_params(), model.count_macs()
    summaries = [s for s in aggregate(load_records(pipeline.paths.results)) if s.method is method]
    if not summaries:
        raise ParameterError(f"dim {dim}: no {method.value} results")
    summary = summaries[0]
    row = AblationRow(dim=dim, n_params=n_params, n_macs=n_macs, method=method, n=summary.n, mean=summary.mean, median=summary.median)
    emit_runtime_event(
        runtime="ablate",
        event_type="dim_done",
        payload={"dim": dim, "n_params": n_params, "n_macs": n_macs, "mean": summary.mean, "median": summary.median},
    )
    return row


def write_ablation(rows: Sequence[AblationRow], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(row.as_csv() for row in rows)
    return path


def run_ablation(
    config: RunConfig,
    workdir: Path,
    *,
    dims: Optional[Sequence[int]] = None,
    jobs: int = 1,
    force: bool = False,
) -> List[AblationRow]:
    dims = list(dims) if dims else list(config.ablate.dims)
    if not dims:
        raise ParameterError("ablation needs at least one latent dimension")
    base = Pipeline(config, workdir, jobs=jobs, force=force)
    base.gen_data()
    rows = [run_dim(with_latent_dim(config, d), workdir, base.paths.dataset, jobs=jobs, force=force) for d in sorted(set(dims))]
    write_ablation(rows, Path(workdir) / ABLATION_NAME)
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> Table:
    table = Table(title="Latent dimension ablation (CD x1e4)")
    for column in ("dim", "params", "MACs", "method", "n", "mean", "median"):
        table.add_column(column, justify="left" if column == "method" else "right")
    best = min(rows, key=lambda r: r.mean) if rows else None
    for row in rows:
        style = "bold" if row is best else None
        table.add_row(
            str(row.dim),
            f"{row.n_params:,}",
            f"{row.n_macs:,}",
            row.method.value,
            str(row.n),
            f"{row.mean * DISPLAY_SCALE:.3f}",
            f"{row.median * DISPLAY_SCALE:.3f}",
            style=style,
        )
    return table


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Same as ``mendkit ablate``."""
    from apps.cli.cli import main as cli_main

    cli_main(["ablate", *(sys.argv[1:] if argv is None else argv)])


if __name__ == "__main__":
    main()
