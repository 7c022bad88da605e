"""
Checkpoint directory I/O.

    checkpoint.json   CheckpointMeta: architecture, dtype, seed, layout tables,
                      train progress and loss history
    params.bin        network parameters, layer order, little-endian
    latents.bin       z_C then z_B per instance, sorted instance-id order
    optimizer.bin     Adam first/second moments (optional, for resume)

Arrays are written in the model's own precision (``<f4`` or ``<f8``) so a
save/load round-trip is bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from autodiff.optim import Adam
from autodiff.tape import Tensor
from core.runtime.errors import CheckpointFormatError, MissingArtifactError
from core.schemas.contracts import (
    CHECKPOINT_FORMAT_VERSION,
    CheckpointMeta,
    EpochLosses,
    LayoutEntry,
    TrainProgress,
)
from models.decoder import RestorationModel
from models.latents import LatentPair

META_NAME = "checkpoint.json"
PARAMS_NAME = "params.bin"
LATENTS_NAME = "latents.bin"
OPTIMIZER_NAME = "optimizer.bin"

_WIRE = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    model: RestorationModel
    latents: Dict[str, LatentPair]
    meta: CheckpointMeta
    optimizer_state: Optional[Dict[str, object]] = field(default=None, repr=False)

    @property
    def progress(self) -> TrainProgress:
        return self.meta.progress


def _pack(arrays: Sequence[Tuple[str, np.ndarray]], wire: str) -> Tuple[bytes, List[LayoutEntry]]:
    layout, chunks, offset = [], [], 0
    for name, arr in arrays:
        layout.append(LayoutEntry(name=name, shape=list(arr.shape), offset=offset))
        chunks.append(np.ascontiguousarray(arr, dtype=wire).tobytes())
        offset += int(arr.size)
    return b"".join(chunks), layout


def _unpack(blob: bytes, layout: Sequence[LayoutEntry], wire: str, path: Path) -> Dict[str, np.ndarray]:
    itemsize = np.dtype(wire).itemsize
    total = sum(int(np.prod(e.shape, dtype=np.int64)) for e in layout)
    if len(blob) != total * itemsize:
        raise CheckpointFormatError(f"{path}: expected {total * itemsize} bytes from layout table, got {len(blob)}")
    flat = np.frombuffer(blob, dtype=wire)
    native = np.dtype(wire).newbyteorder("=")
    out = {}
    for entry in layout:
        n = int(np.prod(entry.shape, dtype=np.int64))
        out[entry.name] = flat[entry.offset : entry.offset + n].reshape(entry.shape).astype(native)
    return out


def save_checkpoint(
    path: Path,
    model: RestorationModel,
    latents: Mapping[str, LatentPair],
    *,
    seed: int,
    progress: Optional[TrainProgress] = None,
    history: Sequence[EpochLosses] = (),
    optimizer: Optional[Adam] = None,
) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    dtype = str(next(iter(params.values())).data.dtype)
    wire = _WIRE[dtype]

    blob, layout = _pack([(k, p.data) for k, p in params.items()], wire)
    (root / PARAMS_NAME).write_bytes(blob)

    ids = sorted(latents)
    latent_arrays = []
    for iid in ids:
        latent_arrays.append((f"{iid}.z_c", latents[iid].z_c.data))
        latent_arrays.append((f"{iid}.z_b", latents[iid].z_b.data))
    blob, _ = _pack(latent_arrays, wire)
    (root / LATENTS_NAME).write_bytes(blob)

    optimizer_layout: List[LayoutEntry] = []
    counters: Dict[str, Dict[str, object]] = {}
    if optimizer is not None:
        state = optimizer.state_dict()
        arrays = state["arrays"]
        blob, optimizer_layout = _pack([(k, arrays[k]) for k in sorted(arrays)], wire)
        (root / OPTIMIZER_NAME).write_bytes(blob)
        counters = state["counters"]
    elif (root / OPTIMIZER_NAME).exists():
        (root / OPTIMIZER_NAME).unlink()

    meta = CheckpointMeta(
        model=model.config,
        dtype=dtype,
        seed=seed,
        layout=layout,
        latent_ids=ids,
        progress=progress or TrainProgress(),
        history=list(history),
        has_optimizer=optimizer is not None,
        optimizer_layout=optimizer_layout,
        optimizer_counters=counters,
    )
    (root / META_NAME).write_text(meta.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return root


def read_meta(path: Path) -> CheckpointMeta:
    meta_path = Path(path) / META_NAME
    if not meta_path.exists():
        raise MissingArtifactError(meta_path, "checkpoint")
    try:
        meta = CheckpointMeta.model_validate_json(meta_path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise CheckpointFormatError(f"{meta_path}: {exc.errors()[0]['msg']}") from exc
    if meta.format_version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(f"{meta_path}: unsupported checkpoint format version {meta.format_version}")
    return meta


def _read_blob(path: Path, what: str) -> bytes:
    if not path.exists():
        raise MissingArtifactError(path, what)
    return path.read_bytes()


def load_checkpoint(path: Path, *, requires_grad: bool = True, with_optimizer: bool = False) -> Checkpoint:
    root = Path(path)
    meta = read_meta(root)
    wire = _WIRE[meta.dtype]

    model = RestorationModel(meta.model)
    arrays = _unpack(_read_blob(root / PARAMS_NAME, "checkpoint parameters"), meta.layout, wire, root / PARAMS_NAME)
    expected = {d.key(i, k) for d in model.decoders for i in range(d.n_layers) for k in ("weight", "bias")}
    if set(arrays) != expected:
        raise CheckpointFormatError(f"{root}: layout table does not match the configured architecture")
    for decoder in model.decoders:
        for i, spec in enumerate(decoder.specs):
            w, b = arrays[decoder.key(i, "weight")], arrays[decoder.key(i, "bias")]
            if w.shape != (spec.fan_in, spec.fan_out) or b.shape != (spec.fan_out,):
                raise CheckpointFormatError(f"{root}: layer {decoder.key(i, 'weight')} has shape {w.shape}")
            for kind, arr in (("weight", w), ("bias", b)):
                key = decoder.key(i, kind)
                decoder.params[key] = Tensor(arr, requires_grad=requires_grad, name=key, dtype=meta.dtype)

    d_c, d_b = meta.model.latent_dim_c, meta.model.latent_dim_b
    latent_layout, offset = [], 0
    for iid in meta.latent_ids:
        latent_layout.append(LayoutEntry(name=f"{iid}.z_c", shape=[d_c], offset=offset))
        latent_layout.append(LayoutEntry(name=f"{iid}.z_b", shape=[d_b], offset=offset + d_c))
        offset += d_c + d_b
    flat = _unpack(_read_blob(root / LATENTS_NAME, "checkpoint latents"), latent_layout, wire, root / LATENTS_NAME)
    latents = {
        iid: LatentPair(
            iid,
            Tensor(flat[f"{iid}.z_c"], requires_grad=requires_grad, name=f"{iid}.z_c", dtype=meta.dtype),
            Tensor(flat[f"{iid}.z_b"], requires_grad=requires_grad, name=f"{iid}.z_b", dtype=meta.dtype),
        )
        for iid in meta.latent_ids
    }

    optimizer_state = None
    if with_optimizer and meta.has_optimizer:
        moments = _unpack(
            _read_blob(root / OPTIMIZER_NAME, "optimizer state"), meta.optimizer_layout, wire, root / OPTIMIZER_NAME
        )
        optimizer_state = {"arrays": moments, "counters": meta.optimizer_counters}
    return Checkpoint(model=model, latents=latents, meta=meta, optimizer_state=optimizer_state)


def save_latent_pair(path: Path, pair: LatentPair) -> Path:
    """One instance's inferred codes, same wire layout as ``latents.bin``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wire = _WIRE[str(pair.z_c.data.dtype)]
    blob, _ = _pack([("z_c", pair.z_c.data), ("z_b", pair.z_b.data)], wire)
    path.write_bytes(blob)
    return path


def load_latent_pair(path: Path, instance_id: str, d_c: int, d_b: int, dtype: str = "float32") -> LatentPair:
    path = Path(path)
    layout = [LayoutEntry(name="z_c", shape=[d_c], offset=0), LayoutEntry(name="z_b", shape=[d_b], offset=d_c)]
    flat = _unpack(_read_blob(path, "inferred latents"), layout, _WIRE[dtype], path)
    return LatentPair.from_arrays(instance_id, flat["z_c"], flat["z_b"])
