"""
Restoration of test instances.

Per instance: latent-only inference against the fractured occupancy, a frozen
pseudo-restoration target, optional test-time training of every weight, then
iso-surface extraction and Chamfer scoring. The base model is read-only here;
test-time training always works on a clone.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from autodiff import ops
from autodiff.optim import Adam, ParamGroup
from autodiff.tape import Tape, Tensor
from core.observability.emitter import emit_runtime_event, emit_warning
from core.runtime.errors import DegenerateInputError, MissingArtifactError, NumericError, ParameterError, ResultFormatError
from core.runtime.rng import substream
from core.schemas.config import InferenceConfig, RunConfig, TTTConfig
from core.schemas.contracts import InstanceResult, LossBreakdown, MethodTag, StageTask
from fracture.instance import ShapeInstance
from geometry.chamfer import chamfer_distance
from geometry.isosurface import VoxelGrid, marching_cubes
from geometry.mesh import TriangleMesh
from geometry.obj_io import write_obj
from geometry.sampling import surface_sample
from models.checkpoint import load_latent_pair, save_latent_pair
from models.decoder import OccupancyPrediction, RestorationModel, param_groups
from models.latents import LatentPair, draw_latent
from workers.common.pool import run_pool
from workers.train.losses import fracture_loss, restoration_loss

RUNTIME = "restore"
# Chamfer distance charged when the predicted surface is empty.
EMPTY_MESH_CD = 1.0
RESULT_NAME = "result.json"
LATENTS_NAME = "latents.bin"
MESH_NAMES = {"complete": "complete.obj", "fractured": "fractured.obj", "restoration": "restoration.obj"}


@dataclass
class QuerySet:
    """Query points with the observed fractured occupancy o_F."""

    points: np.ndarray
    o_f: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index: np.ndarray) -> "QuerySet":
        return QuerySet(self.points[index], self.o_f[index])


@dataclass
class PseudoRestoration:
    points: np.ndarray
    o_r: np.ndarray

    @property
    def size(self) -> int:
        return int(self.o_r.sum())


@dataclass
class InferenceOutcome:
    latents: LatentPair
    breakdown: LossBreakdown
    history: List[float] = field(default_factory=list)


@dataclass
class TTTOutcome:
    model: RestorationModel
    latents: LatentPair
    breakdown: LossBreakdown
    history: List[float] = field(default_factory=list)


@dataclass
class RestorationMeshes:
    complete: TriangleMesh
    fractured: TriangleMesh
    restoration: TriangleMesh

    def items(self):
        return (("complete", self.complete), ("fractured", self.fractured), ("restoration", self.restoration))


def build_query_set(
    instance: ShapeInstance,
    n_uniform: int,
    n_surface: int,
    sigma: float,
    rng: np.random.Generator,
) -> QuerySet:
    """Uniform cube points plus jittered samples on the fractured part's surface."""
    if n_uniform + n_surface < 1:
        raise ParameterError("query set needs at least one point")
    parts = [rng.random((n_uniform, 3))]
    if n_surface:
        near = instance.surface_points("F", n_surface, rng)
        if sigma > 0:
            near = near + rng.normal(scale=sigma, size=near.shape)
        parts.append(np.clip(near, 0.0, 1.0))
    points = np.concatenate(parts).astype(np.float32).astype(np.float64)
    return QuerySet(points, instance.occupancy("F", points))


def box_distance(points: np.ndarray, o_f: np.ndarray, inflate: float) -> np.ndarray:
    """Distance to the bounding box of the occupied fractured samples, grown by ``inflate``."""
    occupied = points[np.asarray(o_f).astype(bool)]
    lo = occupied.min(axis=0) - inflate
    hi = occupied.max(axis=0) + inflate
    gap = np.maximum(np.maximum(lo - points, points - hi), 0.0)
    return np.linalg.norm(gap, axis=1)


def fracture_regularizer(prediction: OccupancyPrediction, d_box: np.ndarray, config: InferenceConfig) -> Tensor:
    """Keeps the predicted restoration non-empty and near the input fracture."""
    mean_r = ops.mean(prediction.o_r)
    nonempty = ops.relu(ops.sub(config.nonempty_margin, mean_r))
    prox = ops.mean(ops.mul(prediction.o_r, Tensor(d_box.reshape(-1, 1))))
    return ops.add(ops.scale(nonempty, config.lambda_nonempty), ops.scale(prox, config.lambda_prox))


def _frozen(model: RestorationModel) -> RestorationModel:
    if any(p.requires_grad for p in model.parameters().values()):
        return model.clone(requires_grad=False)
    return model


def _inference_breakdown(model, latents, query, d_box, config) -> LossBreakdown:
    prediction = model.predict(latents, query.points)
    l_f = fracture_loss(prediction, query.o_f).item()
    l_reg = fracture_regularizer(prediction, d_box, config).item()
    return LossBreakdown(l_f=l_f, l_reg=l_reg, total=l_f + l_reg)


def infer_latents(
    model: RestorationModel,
    query: QuerySet,
    config: InferenceConfig,
    rng: np.random.Generator,
    *,
    instance_id: str = "test",
    steps: Optional[int] = None,
) -> InferenceOutcome:
    """Optimize (z_C, z_B) from a fresh draw against L_F + L_reg; weights stay fixed."""
    if len(query) == 0:
        raise ParameterError("latent inference needs a non-empty query set")
    if not query.o_f.any():
        raise DegenerateInputError(f"{instance_id}: fractured labels are all zero")
    if query.o_f.all():
        raise DegenerateInputError(f"{instance_id}: fractured labels are all one")
    frozen = _frozen(model)
    mc = frozen.config
    latents = draw_latent(instance_id, mc.latent_dim_c, mc.latent_dim_b, mc.latent_sigma, rng)
    d_box = box_distance(query.points, query.o_f, config.prox_inflate)
    optimizer = Adam([ParamGroup("latents", latents.params(), config.lr_latent)])
    n_steps = config.steps if steps is None else steps
    history: List[float] = []
    for step in range(n_steps):
        optimizer.zero_grad()
        try:
            with Tape() as tape:
                prediction = frozen.predict(latents, query.points)
                loss = ops.add(fracture_loss(prediction, query.o_f), fracture_regularizer(prediction, d_box, config))
            tape.backward(loss)
            optimizer.step()
        except NumericError as exc:
            raise NumericError(f"{instance_id}: latent inference step {step}: {exc}") from exc
        history.append(loss.item())
    breakdown = _inference_breakdown(frozen, latents, query, d_box, config)
    emit_runtime_event(
        runtime=RUNTIME,
        event_type="inference_done",
        payload={"instance": instance_id, "steps": n_steps, "l_f": breakdown.l_f, "l_reg": breakdown.l_reg},
    )
    return InferenceOutcome(latents=latents, breakdown=breakdown, history=history)


def build_pseudo_restoration(o_c_pred: np.ndarray, o_f: np.ndarray, tau: float, points: Optional[np.ndarray] = None) -> PseudoRestoration:
    """o_R̂ = 1 where the predicted complete shape reaches ``tau`` and the input is empty."""
    o_c_pred = np.asarray(o_c_pred).reshape(-1)
    o_f = np.asarray(o_f).reshape(-1)
    if o_c_pred.shape != o_f.shape:
        raise ParameterError("pseudo-restoration needs predictions on the fractured query points")
    o_r = ((o_c_pred >= tau) & (o_f == 0)).astype(np.uint8)
    return PseudoRestoration(points=points if points is not None else np.zeros((0, 3)), o_r=o_r)


def _ttt_breakdown(model, latents, query, pseudo, alpha) -> LossBreakdown:
    prediction = model.predict(latents, query.points)
    l_f = fracture_loss(prediction, query.o_f).item()
    l_r = restoration_loss(prediction, pseudo.o_r).item()
    return LossBreakdown(l_f=l_f, l_r=l_r, total=l_f + alpha * l_r)


def ttt_finetune(
    model: RestorationModel,
    latents: LatentPair,
    query: QuerySet,
    pseudo: PseudoRestoration,
    config: TTTConfig,
    rng: np.random.Generator,
    *,
    instance_id: str = "test",
) -> TTTOutcome:
    """Finetune both decoders and both codes on L_F + alpha * L_R for this instance only.

    Adam starts from fresh moments. Pseudo-labels stay fixed for the whole run.
    """
    if len(pseudo.o_r) != len(query):
        raise ParameterError("pseudo-restoration labels do not match the query set")
    tuned = model.clone(requires_grad=True)
    codes = latents.copy(requires_grad=True)
    optimizer = Adam(param_groups(tuned, {instance_id: codes}, config.lr_net, config.lr_latent))
    history: List[float] = []
    for epoch in range(config.epochs):
        if config.resample_per_epoch and config.points_per_epoch < len(query):
            index = np.sort(rng.choice(len(query), size=config.points_per_epoch, replace=False))
        else:
            index = np.arange(len(query))
        optimizer.zero_grad()
        try:
            with Tape() as tape:
                prediction = tuned.predict(codes, query.points[index])
                l_f = fracture_loss(prediction, query.o_f[index])
                l_r = restoration_loss(prediction, pseudo.o_r[index])
                loss = ops.add(l_f, ops.scale(l_r, config.alpha))
            tape.backward(loss)
            optimizer.step()
        except NumericError as exc:
            raise NumericError(f"{instance_id}: test-time training epoch {epoch}: {exc}") from exc
        history.append(loss.item())
    breakdown = _ttt_breakdown(tuned, codes, query, pseudo, config.alpha)
    emit_runtime_event(
        runtime=RUNTIME,
        event_type="ttt_done",
        payload={"instance": instance_id, "epochs": config.epochs, "l_f": breakdown.l_f, "l_r": breakdown.l_r},
    )
    return TTTOutcome(model=tuned, latents=codes, breakdown=breakdown, history=history)


def extract_restoration(
    model: RestorationModel,
    latents: LatentPair,
    resolution: int,
    *,
    instance_id: str = "test",
) -> RestorationMeshes:
    """Marching cubes of o_C, o_F and o_R at 0.5 over the unit cube."""
    points = VoxelGrid.lattice(resolution)
    values = model.evaluate(latents, points)
    spacing = 1.0 / (resolution - 1)
    meshes = {}
    for part, key in (("complete", "o_c"), ("fractured", "o_f"), ("restoration", "o_r")):
        grid = VoxelGrid(values[key].reshape(resolution, resolution, resolution), np.zeros(3), spacing)
        meshes[part] = marching_cubes(grid, 0.5)
        if meshes[part].is_empty():
            emit_warning(
                runtime=RUNTIME,
                event_type="empty_isosurface",
                payload={"instance": instance_id, "part": part, "resolution": resolution},
            )
    return RestorationMeshes(**meshes)


def mesh_chamfer(mesh: TriangleMesh, reference: np.ndarray, n: int, rng: np.random.Generator) -> float:
    """CD between ``n`` samples of ``mesh`` and ``reference``; EMPTY_MESH_CD for an empty mesh."""
    if mesh.is_empty() or not mesh.total_area() > 0:
        return EMPTY_MESH_CD
    return chamfer_distance(surface_sample(mesh, n, rng), reference)


def _fit(model: RestorationModel, latents: LatentPair, query: QuerySet) -> float:
    return fracture_loss(model.predict(latents, query.points), query.o_f).item()


def result_dir(out_dir: Path, method: MethodTag, instance_id: str) -> Path:
    return Path(out_dir) / method.value / instance_id


def load_result(path: Path) -> InstanceResult:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "result")
    try:
        return InstanceResult.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ResultFormatError(f"{path}: {exc.errors()[0]['msg']}") from exc


def _cached_inference(model: RestorationModel, out_dir: Path, instance_id: str) -> Optional[InferenceOutcome]:
    folder = result_dir(out_dir, MethodTag.INFERENCE_ONLY, instance_id)
    if not (folder / RESULT_NAME).exists() or not (folder / LATENTS_NAME).exists():
        return None
    mc = model.config
    dtype = str(next(iter(model.parameters().values())).data.dtype)
    latents = load_latent_pair(folder / LATENTS_NAME, instance_id, mc.latent_dim_c, mc.latent_dim_b, dtype)
    return InferenceOutcome(latents=latents, breakdown=load_result(folder / RESULT_NAME).inference)


def restore_instance(
    model: RestorationModel,
    instance: ShapeInstance,
    config: RunConfig,
    out_dir: Path,
    *,
    method: MethodTag = MethodTag.WITH_TTT,
    seed: Optional[int] = None,
    reuse_inference: bool = False,
) -> InstanceResult:
    """Full pipeline for one test instance; writes ``result.json`` and three OBJ meshes.

    With ``reuse_inference`` a test-time training run starts from the latents
    an earlier inference-only run stored next to its result.
    """
    seed = config.seed if seed is None else seed
    iid = instance.instance_id
    infer_cfg, ttt_cfg, eval_cfg = config.infer, config.ttt, config.eval
    timings: Dict[str, float] = {}

    query = build_query_set(
        instance, infer_cfg.query_uniform, infer_cfg.query_surface, infer_cfg.query_sigma, substream(seed, "query", iid)
    )
    n_held = infer_cfg.heldout_points
    heldout = build_query_set(instance, n_held // 2, n_held - n_held // 2, infer_cfg.query_sigma, substream(seed, "heldout", iid))

    started = time.perf_counter()
    outcome = _cached_inference(model, out_dir, iid) if reuse_inference and method is MethodTag.WITH_TTT else None
    if outcome is None:
        outcome = infer_latents(model, query, infer_cfg, substream(seed, "latent-init", iid), instance_id=iid)
    timings["inference"] = time.perf_counter() - started

    final_model, final_latents = model, outcome.latents
    l_f_pre = _fit(model, outcome.latents, query)
    heldout_pre = _fit(model, outcome.latents, heldout)
    ttt_breakdown = None
    pseudo_points = 0
    if method is MethodTag.WITH_TTT and ttt_cfg.epochs > 0:
        started = time.perf_counter()
        o_c_pred = model.evaluate(outcome.latents, query.points)["o_c"]
        pseudo = build_pseudo_restoration(o_c_pred, query.o_f, ttt_cfg.tau, query.points)
        pseudo_points = pseudo.size
        tuned = ttt_finetune(model, outcome.latents, query, pseudo, ttt_cfg, substream(seed, "ttt", iid), instance_id=iid)
        final_model, final_latents, ttt_breakdown = tuned.model, tuned.latents, tuned.breakdown
        timings["ttt"] = time.perf_counter() - started

    started = time.perf_counter()
    meshes = extract_restoration(final_model, final_latents, eval_cfg.resolution, instance_id=iid)
    n = eval_cfg.surface_samples
    gt_c = instance.surface_points("C", n, substream(seed, "gt", "C", iid))
    gt_r = instance.surface_points("R", n, substream(seed, "gt", "R", iid))
    cd_c = mesh_chamfer(meshes.complete, gt_c, n, substream(seed, "pred", "C", iid))
    cd_r = mesh_chamfer(meshes.restoration, gt_r, n, substream(seed, "pred", "R", iid))
    timings["evaluate"] = time.perf_counter() - started

    folder = result_dir(out_dir, method, iid)
    mesh_files = {}
    for part, mesh in meshes.items():
        write_obj(mesh, folder / MESH_NAMES[part])
        mesh_files[part] = MESH_NAMES[part]
    if method is MethodTag.INFERENCE_ONLY:
        save_latent_pair(folder / LATENTS_NAME, outcome.latents)

    result = InstanceResult(
        instance_id=iid,
        class_name=instance.class_name,
        method=method,
        seed=seed,
        cd_complete=cd_c,
        cd_restoration=cd_r,
        inference=outcome.breakdown,
        ttt=ttt_breakdown,
        l_f_pre_ttt=l_f_pre,
        l_f_post_ttt=_fit(final_model, final_latents, query),
        heldout_l_f_pre=heldout_pre,
        heldout_l_f_post=_fit(final_model, final_latents, heldout),
        pseudo_restoration_points=pseudo_points,
        meshes=mesh_files,
        timings=timings,
    )
    (folder / RESULT_NAME).write_text(result.model_dump_json(indent=2) + "\n", encoding="utf-8")
    emit_runtime_event(
        runtime=RUNTIME,
        event_type="instance_restored",
        payload={"instance": iid, "method": method.value, "cd_complete": cd_c, "cd_restoration": cd_r},
    )
    return result


def restore_split(
    model: RestorationModel,
    instances: Sequence[ShapeInstance],
    config: RunConfig,
    out_dir: Path,
    *,
    method: MethodTag,
    jobs: int = 1,
    reuse_inference: bool = False,
) -> List[InstanceResult]:
    """Restore every instance; instances fan out across ``jobs`` threads."""
    by_id = {inst.instance_id: inst for inst in instances}
    tasks = [StageTask(stage=method.value, key=iid) for iid in sorted(by_id)]

    def handler(task: StageTask) -> InstanceResult:
        return restore_instance(model, by_id[task.key], config, out_dir, method=method, reuse_inference=reuse_inference)

    return [r.payload for r in run_pool(tasks, handler, jobs)]
