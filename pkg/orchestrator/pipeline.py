"""
Stage sequencing over one work directory.

    <workdir>/dataset/                manifest.json + samples/*.occs
    <workdir>/checkpoint/             best/, last/, train_log.csv
    <workdir>/results/<method>/<id>/  result.json + OBJ meshes
    <workdir>/meshes/<id>/            exported ground-truth and decoded meshes
    <workdir>/report/                 report.csv, report_restoration.csv, curves_<class>.svg

Every stage fingerprints its settings and input files; an unchanged stage
whose outputs still exist is reported as SKIPPED without running.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from autodiff.tape import precision
from core.observability.emitter import emit_runtime_event
from core.runtime.errors import MissingArtifactError, ParameterError
from core.schemas.config import RunConfig
from core.schemas.contracts import MethodTag, Split, StageResult, StageStatus, StageTask
from fracture.dataset import MANIFEST_NAME, read_dataset
from geometry.obj_io import write_obj
from models.checkpoint import META_NAME, Checkpoint, load_checkpoint, load_latent_pair
from models.latents import LatentPair
from orchestrator.stage_cache import StageCache, fingerprint
from workers.evaluate.worker import evaluate_results
from workers.gen_data.worker import generate_dataset
from workers.restore.worker import LATENTS_NAME, MESH_NAMES, extract_restoration, restore_split, result_dir
from workers.train.worker import BEST_DIR, train_class


@dataclass(frozen=True)
class WorkPaths:
    root: Path
    shared_dataset: Optional[Path] = None

    @property
    def dataset(self) -> Path:
        return self.shared_dataset or self.root / "dataset"

    @property
    def checkpoint(self) -> Path:
        return self.root / "checkpoint"

    @property
    def best(self) -> Path:
        return self.checkpoint / BEST_DIR

    @property
    def results(self) -> Path:
        return self.root / "results"

    @property
    def meshes(self) -> Path:
        return self.root / "meshes"

    @property
    def report(self) -> Path:
        return self.root / "report"

    def method_results(self, method: MethodTag) -> Path:
        return self.results / method.value


class Pipeline:
    def __init__(
        self,
        config: RunConfig,
        workdir: Path,
        *,
        jobs: int = 1,
        force: bool = False,
        dataset_dir: Optional[Path] = None,
    ) -> None:
        if jobs < 1:
            raise ParameterError("--jobs must be >= 1")
        self.config = config
        self.paths = WorkPaths(Path(workdir), Path(dataset_dir) if dataset_dir is not None else None)
        self.paths.root.mkdir(parents=True, exist_ok=True)
        self.cache = StageCache(self.paths.root)
        self.jobs = jobs
        self.force = force

    def _settings(self, *sections: str) -> Dict[str, Any]:
        dumped = json.loads(self.config.model_dump_json())
        out = {"seed": self.config.seed, "precision": self.config.precision}
        out.update({name: dumped[name] for name in sections})
        return out

    def _run(
        self,
        stage: str,
        key: str,
        settings: Dict[str, Any],
        inputs: Sequence[Path],
        outputs: Sequence[Path],
        fn: Callable[[], Any],
    ) -> StageResult:
        task = StageTask(stage=stage, key=key)
        stamp = fingerprint(settings, inputs)
        if not self.force and self.cache.is_fresh(stage, key, stamp):
            return StageResult(task_id=task.task_id, key=key, status=StageStatus.SKIPPED, log_output=f"{stage} up to date")
        started = time.perf_counter()
        emit_runtime_event(runtime="pipeline", event_type="stage_started", payload={"stage": stage, "key": key})
        with precision(self.config.precision):
            payload = fn()
        log = f"{stage} finished in {time.perf_counter() - started:.1f}s"
        self.cache.record(stage, key, stamp, outputs, log)
        emit_runtime_event(runtime="pipeline", event_type="stage_finished", payload={"stage": stage, "key": key})
        return StageResult(
            task_id=task.task_id,
            key=key,
            status=StageStatus.SUCCESS,
            log_output=log,
            artifacts_path=str(outputs[0]) if outputs else None,
            payload=payload,
        )

    def _require(self, path: Path, what: str) -> None:
        if not path.exists():
            raise MissingArtifactError(path, what)

    # --- stages -------------------------------------------------------------

    def gen_data(self) -> StageResult:
        inputs = [Path(self.config.data.obj_path)] if self.config.data.obj_path else []
        return self._run(
            "gen-data",
            self.config.data.class_name.value,
            self._settings("data"),
            inputs,
            [self.paths.dataset / MANIFEST_NAME],
            lambda: generate_dataset(self.config, self.paths.dataset, jobs=self.jobs),
        )

    def train(self, *, resume: bool = False) -> StageResult:
        self._require(self.paths.dataset / MANIFEST_NAME, "dataset manifest")
        sections = ("model", "train", "infer", "ttt") if self.config.train.fairness_offset else ("model", "train", "infer")
        return self._run(
            "train",
            "model",
            self._settings(*sections),
            [self.paths.dataset],
            [self.paths.best / META_NAME],
            lambda: train_class(read_dataset(self.paths.dataset, eager=False), self.config, self.paths.checkpoint, resume=resume),
        )

    def restore(self, method: MethodTag) -> StageResult:
        self._require(self.paths.dataset / MANIFEST_NAME, "dataset manifest")
        self._require(self.paths.best / META_NAME, "checkpoint")
        sections = ("infer", "eval", "ttt") if method is MethodTag.WITH_TTT else ("infer", "eval")
        inputs = [self.paths.dataset / MANIFEST_NAME, self.paths.best]
        reuse = method is MethodTag.WITH_TTT and self._inference_fresh()

        def run() -> Any:
            dataset = read_dataset(self.paths.dataset, eager=False)
            model = load_checkpoint(self.paths.best, requires_grad=False).model
            instances = [dataset.instance(iid) for iid in dataset.ids(Split.TEST)]
            if not instances:
                raise ParameterError("dataset has no test instances")
            return restore_split(model, instances, self.config, self.paths.results, method=method, jobs=self.jobs, reuse_inference=reuse)

        return self._run(method.value, "test", self._settings(*sections), inputs, [self.paths.method_results(method)], run)

    def _inference_fresh(self) -> bool:
        inputs = [self.paths.dataset / MANIFEST_NAME, self.paths.best]
        record = self.cache.lookup(MethodTag.INFERENCE_ONLY.value, "test")
        return record is not None and record.fingerprint == fingerprint(self._settings("infer", "eval"), inputs)

    def mesh(self, instance_ids: Optional[Sequence[str]] = None, resolution: Optional[int] = None) -> StageResult:
        """Export ground-truth C/F/R meshes, plus decoded meshes for instances with trained latents."""
        self._require(self.paths.dataset / MANIFEST_NAME, "dataset manifest")
        res = resolution or self.config.eval.resolution
        key = "all" if not instance_ids else "-".join(sorted(instance_ids))

        def run() -> List[Path]:
            dataset = read_dataset(self.paths.dataset, eager=False)
            ids = list(instance_ids) if instance_ids else dataset.ids()
            unknown = sorted(set(ids) - set(dataset.ids()))
            if unknown:
                raise ParameterError(f"unknown instance ids: {', '.join(unknown)}")
            checkpoint = load_checkpoint(self.paths.best, requires_grad=False) if (self.paths.best / META_NAME).exists() else None
            written = []
            for iid in ids:
                instance = dataset.instance(iid)
                folder = self.paths.meshes / iid
                for part, name in (("C", "complete"), ("F", "fractured"), ("R", "restoration")):
                    written.append(write_obj(instance.part_mesh(part, res), folder / "gt" / MESH_NAMES[name]))
                latents = self._decoded_latents(checkpoint, iid) if checkpoint is not None else None
                if latents is not None:
                    meshes = extract_restoration(checkpoint.model, latents, res, instance_id=iid)
                    for part, mesh in meshes.items():
                        written.append(write_obj(mesh, folder / "decoded" / MESH_NAMES[part]))
            return written

        inputs = [self.paths.dataset / MANIFEST_NAME, self.paths.best, self.paths.method_results(MethodTag.INFERENCE_ONLY)]
        return self._run("mesh", key, {**self._settings(), "resolution": res}, inputs, [self.paths.meshes], run)

    def _decoded_latents(self, checkpoint: Checkpoint, instance_id: str) -> Optional[LatentPair]:
        """Training latents from the checkpoint, else latents stored by an inference-only run."""
        if instance_id in checkpoint.latents:
            return checkpoint.latents[instance_id]
        stored = result_dir(self.paths.results, MethodTag.INFERENCE_ONLY, instance_id) / LATENTS_NAME
        if not stored.exists():
            return None
        mc = checkpoint.meta.model
        return load_latent_pair(stored, instance_id, mc.latent_dim_c, mc.latent_dim_b, checkpoint.meta.dtype)

    def evaluate(self) -> StageResult:
        self._require(self.paths.results, "results directory")
        ev = self.config.eval
        return self._run(
            "eval",
            "report",
            self._settings("eval"),
            [self.paths.results],
            [self.paths.report / "report.csv"],
            lambda: evaluate_results(self.paths.results, self.paths.report, n_thresholds=ev.curve_thresholds, outlier_ratio=ev.outlier_ratio),
        )

    def run_all(self) -> List[StageResult]:
        """gen-data, train, inference-only, with-ttt (when enabled) and eval."""
        results = [self.gen_data(), self.train(), self.restore(MethodTag.INFERENCE_ONLY)]
        if self.config.ttt.epochs > 0:
            results.append(self.restore(MethodTag.WITH_TTT))
        results.append(self.evaluate())
        return results
