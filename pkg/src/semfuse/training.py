"""Two-phase optimization: autoencoder pretraining, unified-representation
initialization, then the joint objective over all trainable tensors.

Each phase shuffles with its own counter-based stream, so runs are bitwise
reproducible from (dataset, config, schedule, seed) alone. Unified rows are
first-class parameters: a mini-batch step touches only the rows it drew.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import MultiViewDataset, batch_iter
from .errors import ConfigError, NumericError
from .model import (ModelConfig, MultiViewModel, ablation_variant, encode,
                    init_unified, reconstruction_loss, total_loss)
from .nn import AdamState, adam_step

log = logging.getLogger(__name__)

__all__ = ["TrainSchedule", "EpochRecord", "TrainReport", "ModelOptimizer",
           "pretrain", "initialize_h", "joint_train", "run_training", "ablation_variant"]


@dataclass
class TrainSchedule:
    pretrain_epochs: int = 200
    joint_epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.pretrain_epochs < 0 or self.joint_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class EpochRecord:
    phase: str
    epoch: int           # 1-based within its phase
    rec: float
    deg: float
    sem: float
    total: float
    seconds: float


@dataclass
class TrainReport:
    history: list[EpochRecord] = field(default_factory=list)
    seed: int = 0
    model: MultiViewModel | None = None


class ModelOptimizer:
    """Adam over every network tensor plus per-row state for the unified rows."""

    def __init__(self, model: MultiViewModel, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.states = {name: AdamState.for_param(p, lr=lr, beta1=beta1, beta2=beta2,
                                                 epsilon=epsilon)
                       for name, p in model.named_params()}
        self.h_m = np.zeros_like(model.unified)
        self.h_v = np.zeros_like(model.unified)
        self.h_t = np.zeros(model.n_samples, dtype=np.int64)

    def _step_group(self, prefix: str, i: int, net, grads) -> None:
        for l, ((w, b), (dw, db)) in enumerate(zip(net.layers, grads)):
            adam_step(w, dw, self.states[f"{prefix}{i}.W{l}"])
            adam_step(b, db, self.states[f"{prefix}{i}.b{l}"])

    def step_autoencoders(self, model: MultiViewModel, enc_grads, dec_grads) -> None:
        for i in range(model.m):
            self._step_group("enc", i, model.encoders[i], enc_grads[i])
            self._step_group("dec", i, model.decoders[i], dec_grads[i])

    def step_all(self, model: MultiViewModel, grads, rows: np.ndarray) -> None:
        self.step_autoencoders(model, grads.encoders, grads.decoders)
        for i in range(model.m):
            self._step_group("deg", i, model.degraders[i], grads.degraders[i])
        for l, ((w, b), (dw, db)) in enumerate(zip(model.classifier.layers, grads.classifier)):
            adam_step(w, dw, self.states[f"cls.W{l}"])
            adam_step(b, db, self.states[f"cls.b{l}"])
        self.step_unified_rows(model, rows, grads.h_batch)

    def step_unified_rows(self, model: MultiViewModel, rows: np.ndarray,
                          grad_rows: np.ndarray) -> None:
        t = self.h_t[rows] + 1
        self.h_t[rows] = t
        m = self.beta1 * self.h_m[rows] + (1.0 - self.beta1) * grad_rows
        v = self.beta2 * self.h_v[rows] + (1.0 - self.beta2) * (grad_rows * grad_rows)
        self.h_m[rows] = m
        self.h_v[rows] = v
        tcol = t[:, None].astype(np.float64)
        m_hat = m / (1.0 - self.beta1 ** tcol)
        v_hat = v / (1.0 - self.beta2 ** tcol)
        model.unified[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _weighted_epoch(values: list[tuple[float, int]]) -> float:
    total = sum(v * n for v, n in values)
    count = sum(n for _, n in values)
    return total / count if count else float("nan")


def pretrain(model: MultiViewModel, dataset: MultiViewDataset,
             schedule: TrainSchedule,
             optimizer: ModelOptimizer | None = None) -> list[EpochRecord]:
    """Train only the per-view autoencoders on the reconstruction objective."""
    opt = optimizer or ModelOptimizer(model, lr=schedule.learning_rate)
    bs = min(schedule.batch_size, dataset.n_samples)
    records = []
    for epoch in range(schedule.pretrain_epochs):
        start = time.perf_counter()
        losses = []
        batches = batch_iter(dataset.n_samples, bs, schedule.seed, epoch,
                             shuffle=schedule.shuffle, stream="shuffle_pretrain")
        for bi, idx in enumerate(batches):
            views_b = [v[idx] for v in dataset.views]
            value, enc_g, dec_g, _ = reconstruction_loss(model, views_b)
            if not np.isfinite(value):
                raise NumericError(f"non-finite reconstruction loss at pretrain "
                                   f"epoch {epoch + 1}, batch {bi + 1}")
            opt.step_autoencoders(model, enc_g, dec_g)
            losses.append((value, idx.size))
        rec = _weighted_epoch(losses)
        records.append(EpochRecord("pretrain", epoch + 1, rec, 0.0, 0.0, rec,
                                   time.perf_counter() - start))
    return records


def initialize_h(model: MultiViewModel, dataset: MultiViewDataset) -> None:
    """Set each unified row to the mean of that sample's latent codes."""
    z_list = [encode(model, i, v) for i, v in enumerate(dataset.views)]
    model.unified[:] = init_unified(z_list)


def joint_train(model: MultiViewModel, dataset: MultiViewDataset,
                schedule: TrainSchedule, checkpoint_dir=None,
                checkpoint_every: int = 25) -> list[EpochRecord]:
    """Optimize the full objective; unified rows step only when drawn.

    Batches smaller than max(2, k) (the trailing shuffle chunk) are skipped
    with a warning because the contrastive columns need that many rows.
    """
    cfg = model.config
    min_batch = max(2, cfg.k)
    bs = min(schedule.batch_size, dataset.n_samples)
    if bs < min_batch:
        raise ConfigError(f"batch_size {bs} is below max(2, k) = {min_batch}")
    opt = ModelOptimizer(model, lr=schedule.learning_rate)
    records = []
    for epoch in range(schedule.joint_epochs):
        start = time.perf_counter()
        parts = {"rec": [], "deg": [], "sem": []}
        batches = batch_iter(dataset.n_samples, bs, schedule.seed, epoch,
                             shuffle=schedule.shuffle, stream="shuffle_joint")
        for bi, idx in enumerate(batches):
            if idx.size < min_batch:
                log.warning("skipping joint epoch %d batch %d: %d rows < %d",
                            epoch + 1, bi + 1, idx.size, min_batch)
                continue
            views_b = [v[idx] for v in dataset.views]
            breakdown, grads = total_loss(model, views_b, model.unified[idx])
            if not np.isfinite(breakdown.total):
                raise NumericError(f"non-finite loss at joint epoch {epoch + 1}, "
                                   f"batch {bi + 1}")
            opt.step_all(model, grads, idx)
            parts["rec"].append((breakdown.rec, idx.size))
            parts["deg"].append((breakdown.deg, idx.size))
            parts["sem"].append((breakdown.sem, idx.size))
        rec = _weighted_epoch(parts["rec"])
        deg = _weighted_epoch(parts["deg"])
        sem = _weighted_epoch(parts["sem"])
        total = cfg.rec_weight * rec + cfg.lambda1 * deg + cfg.lambda2 * sem
        records.append(EpochRecord("joint", epoch + 1, rec, deg, sem, total,
                                   time.perf_counter() - start))
        if checkpoint_dir is not None and (epoch + 1) % checkpoint_every == 0:
            from .checkpoint import save_checkpoint
            save_checkpoint(checkpoint_dir / f"checkpoint_joint_ep{epoch + 1:04d}.bin",
                            model, schedule, dataset.name, phase="joint",
                            pretrain_done=schedule.pretrain_epochs,
                            joint_done=epoch + 1, optimizer=opt)
    return records


def run_training(dataset: MultiViewDataset, config: ModelConfig,
                 schedule: TrainSchedule, checkpoint_dir=None) -> TrainReport:
    """Full pipeline: pretrain, initialize the unified rows, joint train."""
    model = MultiViewModel(config, dataset.n_samples, seed=schedule.seed)
    report = TrainReport(seed=schedule.seed, model=model)
    report.history.extend(pretrain(model, dataset, schedule))
    if checkpoint_dir is not None:
        from .checkpoint import save_checkpoint
        save_checkpoint(checkpoint_dir / "checkpoint_pretrain.bin", model, schedule,
                        dataset.name, phase="pretrain",
                        pretrain_done=schedule.pretrain_epochs, joint_done=0)
    initialize_h(model, dataset)
    report.history.extend(joint_train(model, dataset, schedule,
                                      checkpoint_dir=checkpoint_dir))
    if checkpoint_dir is not None:
        from .checkpoint import save_checkpoint
        save_checkpoint(checkpoint_dir / "checkpoint_final.bin", model, schedule,
                        dataset.name, phase="final",
                        pretrain_done=schedule.pretrain_epochs,
                        joint_done=schedule.joint_epochs)
    return report


def write_history_csv(path, history: list[EpochRecord]) -> None:
    """Loss history in the documented (epoch, phase, rec, deg, sem, total) schema."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "phase", "rec", "deg", "sem", "total"])
        for r in history:
            writer.writerow([r.epoch, r.phase, repr(r.rec), repr(r.deg),
                             repr(r.sem), repr(r.total)])
