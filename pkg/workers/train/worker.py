"""
Joint training of both decoders and the per-instance latent codes of one class.

Every epoch draws from its own substream (instance order, point subsets and
dropout masks), so a resumed run repeats exactly what an uninterrupted run
would have done.
"""
from __future__ import annotations

import csv
import math
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from autodiff.optim import Adam
from autodiff.tape import Tape
from core.observability.emitter import emit_runtime_event
from core.runtime.errors import NumericError, ParameterError
from core.runtime.rng import substream
from core.schemas.config import RunConfig
from core.schemas.contracts import EpochLosses, Split, TrainProgress
from fracture.dataset import Dataset
from fracture.instance import ShapeInstance
from geometry.isosurface import VoxelGrid, marching_cubes
from models.checkpoint import META_NAME, Checkpoint, load_checkpoint, save_checkpoint
from models.decoder import RestorationModel, init_model, param_groups
from models.latents import LatentPair, init_latents
from workers.restore.worker import build_query_set, infer_latents, mesh_chamfer
from workers.train.losses import loss_terms

RUNTIME = "train"
BEST_DIR = "best"
LAST_DIR = "last"
LOG_NAME = "train_log.csv"
LOG_COLUMNS = ["epoch", "L_C", "L_B", "L_F", "L_R", "total", "val_CD", "wall_seconds"]


def fair_training_budget(
    budget: int,
    ttt_epochs: int,
    n_test: int,
    *,
    ttt_points: Optional[int] = None,
    step_points: Optional[int] = None,
) -> int:
    """Training steps left after paying for test-time training on ``n_test`` instances.

    One TTT epoch costs ``ttt_points / step_points`` training steps (1 when
    either is omitted). The result never drops below zero.
    """
    if budget < 0 or ttt_epochs < 0 or n_test < 0:
        raise ParameterError("budget, ttt_epochs and n_test must be >= 0")
    ratio = 1.0
    if ttt_points and step_points:
        ratio = ttt_points / step_points
    return max(0, budget - math.ceil(ttt_epochs * n_test * ratio))


def _effective_budget(config: RunConfig, n_test: int) -> Optional[int]:
    train = config.train
    if train.iteration_budget is None:
        return None
    if not train.fairness_offset:
        return train.iteration_budget
    ttt = config.ttt
    ttt_points = ttt.points_per_epoch if ttt.resample_per_epoch else config.infer.query_uniform + config.infer.query_surface
    return fair_training_budget(
        train.iteration_budget,
        ttt.epochs,
        n_test,
        ttt_points=ttt_points,
        step_points=train.instances_per_step * train.points_per_instance,
    )


def complete_chamfer(
    model: RestorationModel,
    latents: LatentPair,
    instance: ShapeInstance,
    resolution: int,
    n_surface: int,
    seed: int,
) -> float:
    """CD between the predicted complete mesh and ground-truth complete surface samples."""
    grid_points = VoxelGrid.lattice(resolution)
    o_c = model.evaluate(latents, grid_points)["o_c"]
    mesh = marching_cubes(VoxelGrid(o_c.reshape((resolution,) * 3), np.zeros(3), 1.0 / (resolution - 1)), 0.5)
    reference = instance.surface_points("C", n_surface, substream(seed, "val-gt", instance.instance_id))
    return mesh_chamfer(mesh, reference, n_surface, substream(seed, "val-pred", instance.instance_id))


def validate(model: RestorationModel, instances: Sequence[ShapeInstance], config: RunConfig, seed: Optional[int] = None) -> float:
    """Mean complete-shape CD after a short latent-only inference per instance."""
    if not instances:
        raise ParameterError("validation needs at least one instance")
    seed = config.seed if seed is None else seed
    frozen = model.clone(requires_grad=False)
    infer, train = config.infer, config.train
    scores = []
    for instance in instances:
        iid = instance.instance_id
        query = build_query_set(instance, infer.query_uniform, infer.query_surface, infer.query_sigma, substream(seed, "val-query", iid))
        outcome = infer_latents(frozen, query, infer, substream(seed, "val-init", iid), instance_id=iid, steps=train.val_steps)
        scores.append(complete_chamfer(frozen, outcome.latents, instance, train.val_resolution, train.val_surface_samples, seed))
    return float(np.mean(scores))


def _draw_points(n_available: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(n_available, size=n, replace=n_available < n)


def _read_log(path: Path, before_epoch: int) -> List[Dict[str, str]]:
    if not path.exists():
        return []
    with path.open(newline="", encoding="utf-8") as handle:
        return [row for row in csv.DictReader(handle) if int(row["epoch"]) < before_epoch]


def _write_log(path: Path, rows: List[Dict[str, str]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=LOG_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _log_row(losses: EpochLosses) -> Dict[str, str]:
    return {
        "epoch": str(losses.epoch),
        "L_C": f"{losses.l_c:.8g}",
        "L_B": f"{losses.l_b:.8g}",
        "L_F": f"{losses.l_f:.8g}",
        "L_R": f"{losses.l_r:.8g}",
        "total": f"{losses.total:.8g}",
        "val_CD": "" if losses.val_cd is None else f"{losses.val_cd:.8g}",
        "wall_seconds": f"{losses.wall_seconds:.3f}",
    }


def train_class(
    dataset: Dataset,
    config: RunConfig,
    out_dir: Path,
    *,
    resume: bool = False,
    seed: Optional[int] = None,
) -> Checkpoint:
    """Train on the dataset's train split; returns the best-validation checkpoint.

    Writes ``best/`` and ``last/`` checkpoint directories and ``train_log.csv``
    under ``out_dir``. Validation runs every ``val_period`` epochs and on the
    closing epoch. Without validation instances the last state is also the
    best one.
    """
    seed = config.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ids = dataset.ids(Split.TRAIN)
    if not train_ids:
        raise ParameterError(f"dataset {dataset.manifest.name} has no training instances")
    val_instances = [dataset.instance(iid) for iid in dataset.ids(Split.VAL)]
    samples = {iid: dataset.samples(iid) for iid in train_ids}
    mc, tc = config.model, config.train

    if resume and (out_dir / LAST_DIR / META_NAME).exists():
        state = load_checkpoint(out_dir / LAST_DIR, requires_grad=True, with_optimizer=True)
        model, latents = state.model, state.latents
        progress, history = state.meta.progress.model_copy(), list(state.meta.history)
        optimizer = Adam(param_groups(model, latents, tc.lr_net, tc.lr_latent))
        if state.optimizer_state is not None:
            optimizer.load_state_dict(state.optimizer_state)
        emit_runtime_event(runtime=RUNTIME, event_type="resumed", payload={"epoch": progress.epoch, "steps": progress.steps})
    else:
        model = init_model(mc.latent_dim_c, mc.latent_dim_b, seed, mc)
        latents = init_latents(train_ids, mc.latent_dim_c, mc.latent_dim_b, mc.latent_sigma, substream(seed, "latents"))
        progress, history = TrainProgress(), []
        optimizer = Adam(param_groups(model, latents, tc.lr_net, tc.lr_latent))

    emit_runtime_event(
        runtime=RUNTIME,
        event_type="model_built",
        payload={"params": model.count_params(), "macs_per_point": model.count_macs(), "train_instances": len(train_ids)},
    )
    budget = _effective_budget(config, len(dataset.ids(Split.TEST)))
    log_path = out_dir / LOG_NAME
    log_rows = _read_log(log_path, progress.epoch) if resume else []

    def checkpoint(target: str) -> None:
        save_checkpoint(
            out_dir / target,
            model,
            latents,
            seed=seed,
            progress=progress,
            history=history,
            optimizer=optimizer if target == LAST_DIR else None,
        )

    if progress.epoch == 0:
        checkpoint(BEST_DIR)

    while progress.epoch < tc.epochs and not progress.stopped_early:
        if budget is not None and progress.steps >= budget:
            emit_runtime_event(runtime=RUNTIME, event_type="budget_exhausted", payload={"steps": progress.steps, "budget": budget})
            break
        epoch = progress.epoch
        started = time.perf_counter()
        rng = substream(seed, "epoch", epoch)
        order = [train_ids[i] for i in rng.permutation(len(train_ids))]
        sums = np.zeros(4)
        n_steps = 0
        for start in range(0, len(order), tc.instances_per_step):
            if budget is not None and progress.steps >= budget:
                break
            batch_ids = order[start : start + tc.instances_per_step]
            picks = [_draw_points(len(samples[iid]), tc.points_per_instance, rng) for iid in batch_ids]
            points = [samples[iid].points[p] for iid, p in zip(batch_ids, picks)]
            o_c = np.concatenate([samples[iid].o_c[p] for iid, p in zip(batch_ids, picks)])
            o_b = np.concatenate([samples[iid].o_b[p] for iid, p in zip(batch_ids, picks)])
            optimizer.zero_grad()
            try:
                with Tape() as tape:
                    prediction = model.predict_batch([latents[iid] for iid in batch_ids], points, training=True, rng=rng)
                    terms = loss_terms(prediction, o_c, o_b)
                    loss = terms.total
                tape.backward(loss)
                optimizer.step()
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, instances {', '.join(batch_ids)}: {exc}") from exc
            values = terms.values()
            sums += [values["l_c"], values["l_b"], values["l_f"], values["l_r"]]
            n_steps += 1
            progress.steps += 1
        if n_steps == 0:
            break
        mean = sums / n_steps
        record = EpochLosses(
            epoch=epoch,
            l_c=float(mean[0]),
            l_b=float(mean[1]),
            l_f=float(mean[2]),
            l_r=float(mean[3]),
            total=float(mean.sum()),
        )
        progress.epoch = epoch + 1
        emit_runtime_event(runtime=RUNTIME, event_type="epoch", payload={"epoch": epoch, "total": record.total, "steps": progress.steps})

        # the closing epoch is always scored so best/ never lags the run
        final = progress.epoch >= tc.epochs or (budget is not None and progress.steps >= budget)
        if val_instances and (progress.epoch % tc.val_period == 0 or final):
            record.val_cd = validate(model, val_instances, config, seed)
            improved = progress.best_val_cd is None or record.val_cd < progress.best_val_cd
            if improved:
                progress.best_val_cd, progress.best_epoch, progress.rounds_since_best = record.val_cd, epoch, 0
            else:
                progress.rounds_since_best += 1
            emit_runtime_event(
                runtime=RUNTIME,
                event_type="validation_round",
                payload={"epoch": epoch, "val_cd": record.val_cd, "best": progress.best_val_cd, "improved": improved},
            )
            if progress.rounds_since_best >= tc.patience:
                progress.stopped_early = True
                emit_runtime_event(runtime=RUNTIME, event_type="early_stop", payload={"epoch": epoch, "best_epoch": progress.best_epoch})
        else:
            improved = not val_instances

        record.wall_seconds = time.perf_counter() - started
        history.append(record)
        log_rows.append(_log_row(record))
        _write_log(log_path, log_rows)
        if improved:
            checkpoint(BEST_DIR)

    _write_log(log_path, log_rows)
    checkpoint(LAST_DIR)
    return load_checkpoint(out_dir / BEST_DIR, requires_grad=False)
