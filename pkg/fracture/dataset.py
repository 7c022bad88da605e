"""
On-disk dataset: ``manifest.json`` plus one ``.occs`` sample file per instance.

Sample file layout (little-endian): a 16-byte header (magic ``OCCS``, u16
version, u16 reserved, u64 record count) followed by 16-byte records of three
float32 coordinates, u8 o_C, u8 o_B and two pad bytes.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from core.runtime.errors import DatasetFormatError, MissingArtifactError
from core.schemas.contracts import DATASET_FORMAT_VERSION, DatasetManifest, Split
from fracture.instance import ShapeInstance
from fracture.samples import OccupancySampleSet

MAGIC = b"OCCS"
SAMPLE_VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("x", "<f4", (3,)), ("o_c", "u1"), ("o_b", "u1"), ("pad", "u1", (2,))])
MANIFEST_NAME = "manifest.json"
SAMPLES_DIR = "samples"

assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 16


def encode_samples(samples: OccupancySampleSet) -> bytes:
    records = np.zeros(len(samples), dtype=RECORD_DTYPE)
    records["x"] = samples.points
    records["o_c"] = samples.o_c
    records["o_b"] = samples.o_b
    return HEADER.pack(MAGIC, SAMPLE_VERSION, 0, len(samples)) + records.tobytes()


def decode_samples(blob: bytes, path: object = None) -> OccupancySampleSet:
    if len(blob) < HEADER.size:
        raise DatasetFormatError(f"truncated header: expected {HEADER.size} bytes, got {len(blob)}", path=path, offset=len(blob))
    magic, version, reserved, count = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path=path, offset=0)
    if version != SAMPLE_VERSION:
        raise DatasetFormatError(f"unsupported sample format version {version}, expected {SAMPLE_VERSION}", path=path, offset=4)
    if reserved != 0:
        raise DatasetFormatError(f"reserved header field is {reserved}, expected 0", path=path, offset=6)
    expected = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(blob) != expected:
        kind = "truncated records" if len(blob) < expected else "trailing bytes"
        raise DatasetFormatError(
            f"{kind}: expected {expected} bytes for {count} records, got {len(blob)}",
            path=path,
            offset=min(len(blob), expected),
        )
    records = np.frombuffer(blob, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    bad = np.flatnonzero((records["o_c"] > 1) | (records["o_b"] > 1))
    if bad.size:
        raise DatasetFormatError("non-binary occupancy label", path=path, offset=HEADER.size + int(bad[0]) * RECORD_DTYPE.itemsize + 12)
    return OccupancySampleSet(records["x"].copy(), records["o_c"].copy(), records["o_b"].copy())


def write_samples(samples: OccupancySampleSet, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_samples(samples))
    return path


def read_samples(path: Path) -> OccupancySampleSet:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "sample file")
    return decode_samples(path.read_bytes(), path)


def split_sizes(n: int) -> Tuple[int, int, int]:
    """70/15/15 split sizes; the test split takes the rounding remainder."""
    n_train = int(round(0.70 * n))
    n_val = int(round(0.15 * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def assign_splits(instance_ids: Iterable[str], rng: np.random.Generator) -> Dict[Split, List[str]]:
    ids = sorted(instance_ids)
    order = rng.permutation(len(ids))
    n_train, n_val, _ = split_sizes(len(ids))
    shuffled = [ids[i] for i in order]
    return {
        Split.TRAIN: sorted(shuffled[:n_train]),
        Split.VAL: sorted(shuffled[n_train : n_train + n_val]),
        Split.TEST: sorted(shuffled[n_train + n_val :]),
    }


def sample_file_name(instance_id: str) -> str:
    return f"{SAMPLES_DIR}/{instance_id}.occs"


def write_dataset(manifest: DatasetManifest, samples: Dict[str, OccupancySampleSet], path: Path) -> Path:
    """Write every sample file listed in the manifest, then the manifest itself."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for record in manifest.instances:
        write_samples(samples[record.instance_id], root / record.file)
    (root / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return root


def read_manifest(path: Path) -> DatasetManifest:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingArtifactError(manifest_path, "dataset manifest")
    try:
        manifest = DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DatasetFormatError(f"invalid manifest: {exc.errors()[0]['msg']}", path=manifest_path) from exc
    if manifest.format_version != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset format version {manifest.format_version}, expected {DATASET_FORMAT_VERSION}",
            path=manifest_path,
        )
    return manifest


class Dataset:
    """A dataset directory opened for reading; sample files load on first use."""

    def __init__(self, root: Path, manifest: DatasetManifest) -> None:
        self.root = Path(root)
        self.manifest = manifest
        self._samples: Dict[str, OccupancySampleSet] = {}

    def ids(self, split: Optional[Split] = None) -> List[str]:
        return [r.instance_id for r in self.manifest.records(split)]

    def samples(self, instance_id: str) -> OccupancySampleSet:
        if instance_id not in self._samples:
            record = self.manifest.record(instance_id)
            self._samples[instance_id] = read_samples(self.root / record.file)
        return self._samples[instance_id]

    def instance(self, instance_id: str) -> ShapeInstance:
        return ShapeInstance.from_record(self.manifest.record(instance_id), self.manifest.class_name.value)


def read_dataset(path: Path, *, eager: bool = True) -> Dataset:
    dataset = Dataset(Path(path), read_manifest(path))
    if eager:
        for iid in dataset.ids():
            dataset.samples(iid)
    return dataset
