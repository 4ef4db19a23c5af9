"""Multi-view dataset ingestion, normalization, batching, and a synthetic generator.

On-disk contract (documented in the README):
  * manifest: JSON with fields name, k, views [{path, dim}], labels (optional),
    normalization ("minmax" | "zscore" | "none"); paths are relative to the
    manifest file.
  * feature files: CSV, one sample per row, comma-separated decimal floats,
    optional header auto-detected by a non-numeric first row.
  * label file: one zero-based integer per line.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .rng import substream

log = logging.getLogger(__name__)

NORMALIZATION_MODES = ("minmax", "zscore", "none")


@dataclass
class MultiViewDataset:
    """Aligned feature matrices over the same samples; immutable after load."""

    views: list[np.ndarray]
    labels: np.ndarray | None
    name: str
    k: int

    def __post_init__(self):
        if len(self.views) < 1:
            raise DataError("dataset needs at least one view")
        n = self.views[0].shape[0]
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise DataError(f"view {i} is not a matrix")
            if v.shape[0] != n:
                raise DataError(f"row-count mismatch: view 0 has {n} rows, view {i} has {v.shape[0]}")
            if not np.isfinite(v).all():
                raise DataError(f"view {i} contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DataError(f"labels have length {self.labels.size}, expected {n}")
            if self.labels.min(initial=0) < 0 or (self.labels >= self.k).any():
                bad = int(np.argmax((self.labels < 0) | (self.labels >= self.k)))
                raise DataError(f"label {self.labels[bad]} at sample {bad} outside 0..{self.k - 1}")
            present = np.unique(self.labels)
            if present.size < self.k:
                missing = sorted(set(range(self.k)) - set(present.tolist()))
                log.warning("dataset %s: classes %s have no samples", self.name, missing)

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]


@dataclass
class SynthSpec:
    """Parameters of the synthetic separable multi-view benchmark."""

    n_samples: int = 600
    m: int = 2
    k: int = 3
    view_dims: list[int] = field(default_factory=lambda: [16, 12])
    separation: float = 10.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.separation <= 0:
            raise ConfigError("separation must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")
        if self.k < 2 or self.m < 1 or self.n_samples < self.k:
            raise ConfigError("need k >= 2, m >= 1 and at least k samples")
        if len(self.view_dims) != self.m:
            raise ConfigError(f"view_dims has {len(self.view_dims)} entries for m={self.m}")
        latent = max(2, self.k - 1)
        for d in self.view_dims:
            if d < latent:
                raise ConfigError(f"view dimension {d} is below the generator latent size {latent}")


def _parse_csv_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                bad = next(c for c in cells if not _is_float(c))
                raise DataError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(values)}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    a = np.array(rows, dtype=np.float64)
    if not np.isfinite(a).all():
        r, c = np.argwhere(~np.isfinite(a))[0]
        raise DataError(f"{path}: non-finite value at row {r + 1}, column {c + 1}")
    return a


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _parse_labels(path: Path, k: int) -> np.ndarray:
    if not path.exists():
        raise DataError(f"label file not found: {path}")
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer label {line!r}") from None
            if value < 0 or value >= k:
                raise DataError(f"{path}:{lineno}: label {value} outside 0..{k - 1}")
            labels.append(value)
    return np.array(labels, dtype=np.int64)


def load_dataset(manifest_path, apply_normalization: bool = True) -> MultiViewDataset:
    """Load and validate a dataset from its manifest.

    Normalization declared in the manifest is applied unless disabled.
    """
    mpath = Path(manifest_path)
    if not mpath.exists():
        raise DataError(f"manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{mpath}: invalid JSON ({exc})") from None
    for key in ("k", "views"):
        if key not in manifest:
            raise DataError(f"{mpath}: missing required field {key!r}")
    k = int(manifest["k"])
    base = mpath.parent
    views = []
    for i, spec in enumerate(manifest["views"]):
        a = _parse_csv_matrix(base / spec["path"])
        declared = int(spec["dim"])
        if a.shape[1] != declared:
            raise DataError(f"{base / spec['path']}: has {a.shape[1]} columns, manifest declares {declared}")
        views.append(a)
    labels = None
    if manifest.get("labels"):
        labels = _parse_labels(base / manifest["labels"], k)
    dataset = MultiViewDataset(views=views, labels=labels,
                               name=str(manifest.get("name", mpath.stem)), k=k)
    mode = manifest.get("normalization", "minmax")
    if mode not in NORMALIZATION_MODES:
        raise DataError(f"{mpath}: unknown normalization mode {mode!r}")
    if apply_normalization and mode != "none":
        log.info("dataset %s: applying %s normalization", dataset.name, mode)
        dataset = normalize(dataset, mode)
    return dataset


def normalize(dataset: MultiViewDataset, mode: str) -> MultiViewDataset:
    """Per-column normalization applied independently to each view.

    minmax maps every column to [0,1]; zscore standardizes; constant
    (or zero-variance) columns map to all zeros in both modes.
    """
    if mode not in NORMALIZATION_MODES:
        raise ConfigError(f"unknown normalization mode {mode!r}")
    if mode == "none":
        return dataset
    out = []
    for v in dataset.views:
        if mode == "minmax":
            lo = v.min(axis=0)
            span = v.max(axis=0) - lo
            safe = np.where(span > 0, span, 1.0)
            scaled = (v - lo) / safe
            scaled[:, span == 0] = 0.0
        else:
            mu = v.mean(axis=0)
            sd = v.std(axis=0)
            safe = np.where(sd > 0, sd, 1.0)
            scaled = (v - mu) / safe
            scaled[:, sd == 0] = 0.0
        out.append(scaled)
    return MultiViewDataset(views=out, labels=dataset.labels, name=dataset.name, k=dataset.k)


def _simplex_centers(k: int, latent_dim: int, separation: float) -> np.ndarray:
    """k cluster centers with all pairwise distances equal to ``separation``."""
    verts = np.eye(k) - 1.0 / k  # regular simplex, pairwise distance sqrt(2)
    _, _, vt = np.linalg.svd(verts, full_matrices=False)
    coords = verts @ vt[: k - 1].T
    centers = np.zeros((k, latent_dim))
    centers[:, : k - 1] = coords * (separation / np.sqrt(2.0))
    return centers


def synth_multiview(spec: SynthSpec) -> MultiViewDataset:
    """Deterministic synthetic dataset with ground-truth labels.

    Latent cluster centers sit on a regular simplex with pairwise distance
    ``separation``; each sample adds isotropic latent noise, then every view
    applies its own random full-rank affine map plus per-view noise.
    """
    rng = substream(spec.seed, "synth")
    latent_dim = max(2, spec.k - 1)
    centers = _simplex_centers(spec.k, latent_dim, spec.separation)
    labels = np.arange(spec.n_samples, dtype=np.int64) % spec.k
    latent = centers[labels]
    if spec.noise > 0:
        latent = latent + spec.noise * rng.standard_normal(latent.shape)
    views = []
    for d in spec.view_dims:
        # orthonormal columns give an isometric embedding, so view-space
        # cluster distances equal the requested separation
        basis, _ = np.linalg.qr(rng.standard_normal((d, latent_dim)))
        offset = rng.standard_normal(d)
        x = latent @ basis.T + offset
        if spec.noise > 0:
            x = x + spec.noise * rng.standard_normal(x.shape)
        views.append(x)
    return MultiViewDataset(views=views, labels=labels, name=f"synth-{spec.seed}", k=spec.k)


def batch_iter(n_samples: int, batch_size: int, seed: int, epoch: int,
               shuffle: bool = True, stream: str = "shuffle_joint") -> list[np.ndarray]:
    """Seeded permutation of sample indices chunked into batches.

    The permutation depends only on (seed, epoch); the final short chunk is
    kept, callers decide whether to skip it.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if shuffle:
        order = substream(seed, stream, epoch).permutation(n_samples)
    else:
        order = np.arange(n_samples)
    return [order[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def write_dataset(dataset: MultiViewDataset, out_dir, normalization: str = "minmax") -> Path:
    """Write views, labels, and manifest under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = []
    for i, v in enumerate(dataset.views):
        name = f"view{i}.csv"
        with open(out / name, "w", encoding="utf-8") as fh:
            for row in v:
                fh.write(",".join(repr(float(x)) for x in row))
                fh.write("\n")
        views.append({"path": name, "dim": int(v.shape[1])})
    manifest = {"name": dataset.name, "k": int(dataset.k), "views": views,
                "normalization": normalization}
    if dataset.labels is not None:
        with open(out / "labels.txt", "w", encoding="utf-8") as fh:
            for y in dataset.labels:
                fh.write(f"{int(y)}\n")
        manifest["labels"] = "labels.txt"
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath
