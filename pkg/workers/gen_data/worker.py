"""
Dataset generation for one shape class: shapes, fractures, labelled samples, splits.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from core.observability.emitter import emit_runtime_event, emit_warning
from core.runtime.errors import FractureError
from core.runtime.retry import MAX_FRACTURE_RETRIES, RetriesExhausted, retry_with_fresh_draws
from core.runtime.rng import substream
from core.schemas.config import BreakKind, RunConfig
from core.schemas.contracts import DatasetManifest, InstanceRecord, StageTask
from fracture.breaks import FractureResult, fracture
from fracture.dataset import assign_splits, sample_file_name, write_dataset
from fracture.instance import ShapeInstance
from fracture.samples import OccupancySampleSet, sample_points
from fracture.shapes import ClassSpec, ProceduralShape, gen_class
from workers.common.pool import run_pool

RUNTIME = "gen_data"


@dataclass
class GeneratedInstance:
    instance: ShapeInstance
    fracture: FractureResult
    samples: OccupancySampleSet


def instance_ids(class_name: str, count: int) -> List[str]:
    return [f"{class_name}_{k:04d}" for k in range(count)]


def generate_instance(
    instance_id: str,
    shape: ProceduralShape,
    config: RunConfig,
    seed: int,
    attempts: int = MAX_FRACTURE_RETRIES,
) -> Optional[GeneratedInstance]:
    """Fracture and label one shape; None when every attempt misses the band."""
    data = config.data
    class_name = data.class_name.value

    def attempt(k: int) -> GeneratedInstance:
        rng = substream(seed, "fracture", instance_id, k)
        kind = data.break_kind.value
        if data.break_kind is BreakKind.MIXED:
            kind = "plane" if rng.random() < 0.5 else "ellipsoid"
        result = fracture(shape.solid, data.band.bounds, rng, kind=kind, n_mc=data.fracture_mc_points)
        instance = ShapeInstance(instance_id, class_name, shape, result.break_set, result.estimate.fraction)
        samples = sample_points(instance, data.n_uniform, data.n_surface, data.surface_sigma, substream(seed, "samples", instance_id, k))
        samples.require_both_parts(instance_id)
        return GeneratedInstance(instance, result, samples)

    try:
        generated = retry_with_fresh_draws(attempt, attempts, retry_on=(FractureError,), runtime=RUNTIME)
    except RetriesExhausted as exc:
        emit_warning(runtime=RUNTIME, event_type="instance_skipped", payload={"instance": instance_id, "error": str(exc.last)})
        return None
    emit_runtime_event(
        runtime=RUNTIME,
        event_type="instance_generated",
        payload={"instance": instance_id, "fraction": generated.fracture.estimate.fraction, "records": len(generated.samples)},
    )
    return generated


def generate_dataset(
    config: RunConfig,
    out_dir: Path,
    *,
    name: Optional[str] = None,
    jobs: int = 1,
    seed: Optional[int] = None,
) -> DatasetManifest:
    """Generate, split and write a class dataset; fails when too many instances are skipped."""
    seed = config.seed if seed is None else seed
    data = config.data
    class_name = data.class_name.value
    spec = ClassSpec.from_config(data)
    shapes = gen_class(spec, data.count, substream(seed, "shapes"))
    ids = instance_ids(class_name, data.count)
    by_id = dict(zip(ids, shapes))

    def handler(task: StageTask) -> Optional[GeneratedInstance]:
        return generate_instance(task.key, by_id[task.key], config, seed)

    results = run_pool([StageTask(stage=RUNTIME, key=iid) for iid in ids], handler, jobs)
    generated: Dict[str, GeneratedInstance] = {r.key: r.payload for r in results if r.payload is not None}
    skipped = sorted(set(ids) - set(generated))
    if len(skipped) > data.max_skip_fraction * data.count:
        raise FractureError(
            f"{len(skipped)} of {data.count} {class_name} instances never reached band {data.band.value}; "
            f"limit is {data.max_skip_fraction:.0%}"
        )
    if not generated:
        raise FractureError(f"no {class_name} instance could be fractured")

    splits = assign_splits(generated, substream(seed, "splits"))
    split_of = {iid: split for split, members in splits.items() for iid in members}
    records = []
    for iid in sorted(generated):
        item = generated[iid]
        records.append(
            InstanceRecord(
                instance_id=iid,
                file=sample_file_name(iid),
                split=split_of[iid],
                measured_fraction=item.fracture.estimate.fraction,
                fraction_stderr=item.fracture.estimate.stderr,
                n_records=len(item.samples),
                shape=item.instance.shape.params,
                break_set=item.fracture.break_set.descriptor(),
            )
        )
    manifest = DatasetManifest(
        name=name or f"{class_name}-{data.band.value}",
        class_name=data.class_name,
        band=data.band,
        band_bounds=data.band.bounds,
        seed=seed,
        splits=splits,
        instances=records,
        skipped=skipped,
    )
    write_dataset(manifest, {iid: g.samples for iid, g in generated.items()}, out_dir)
    emit_runtime_event(
        runtime=RUNTIME,
        event_type="dataset_written",
        payload={"name": manifest.name, "instances": len(records), "skipped": len(skipped), "path": str(out_dir)},
    )
    return manifest
