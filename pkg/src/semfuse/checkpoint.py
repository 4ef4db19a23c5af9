"""Versioned binary checkpoint container.

Layout: 8-byte magic ``SFCKPT01``, a little-endian uint64 header length, a
JSON header (sorted keys) describing config, schedule, phase cursors and the
array manifest, then the raw C-order bytes of every array in manifest order.
The format is deliberately timestamp-free so identical runs produce
byte-identical files. Stored state (parameters, unified rows, Adam moments
and step counters, epoch cursors) suffices to resume a run bit-identically.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import ModelConfig, MultiViewModel
from .training import ModelOptimizer, TrainSchedule

MAGIC = b"SFCKPT01"
VERSION = 1


def _array_entries(model: MultiViewModel, optimizer: ModelOptimizer | None):
    entries = [(name, p) for name, p in model.named_params()]
    entries.append(("unified", model.unified))
    if optimizer is not None:
        for name, _ in model.named_params():
            st = optimizer.states[name]
            entries.append((f"adam.{name}.m", st.m))
            entries.append((f"adam.{name}.v", st.v))
        entries.append(("adam.unified.m", optimizer.h_m))
        entries.append(("adam.unified.v", optimizer.h_v))
        entries.append(("adam.unified.t", optimizer.h_t))
    return entries


def save_checkpoint(path, model: MultiViewModel, schedule: TrainSchedule,
                    dataset_name: str, phase: str, pretrain_done: int,
                    joint_done: int, optimizer: ModelOptimizer | None = None) -> None:
    entries = _array_entries(model, optimizer)
    header = {
        "version": VERSION,
        "config": dataclasses.asdict(model.config),
        "schedule": dataclasses.asdict(schedule),
        "dataset_name": dataset_name,
        "n_samples": model.n_samples,
        "phase": phase,
        "pretrain_done": int(pretrain_done),
        "joint_done": int(joint_done),
        "adam_t": ({name: optimizer.states[name].t for name, _ in model.named_params()}
                   if optimizer is not None else {}),
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": str(a.dtype)}
                   for n, a in entries],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in entries:
            fh.write(np.ascontiguousarray(a).tobytes())


@dataclasses.dataclass
class Checkpoint:
    model: MultiViewModel
    schedule: TrainSchedule
    dataset_name: str
    phase: str
    pretrain_done: int
    joint_done: int
    arrays: dict
    adam_t: dict


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    if header["version"] != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header['version']}")
    offset = 16 + hlen
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        arrays[spec["name"]] = np.frombuffer(raw[offset:offset + nbytes], dtype=dtype)\
            .reshape(spec["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: trailing bytes after array payload")

    config = ModelConfig(**header["config"])
    schedule = TrainSchedule(**header["schedule"])
    model = MultiViewModel(config, header["n_samples"], seed=schedule.seed)
    for name, param in model.named_params():
        np.copyto(param, arrays[name])
    np.copyto(model.unified, arrays["unified"])
    return Checkpoint(model=model, schedule=schedule,
                      dataset_name=header["dataset_name"], phase=header["phase"],
                      pretrain_done=header["pretrain_done"],
                      joint_done=header["joint_done"],
                      arrays=arrays, adam_t=header["adam_t"])
