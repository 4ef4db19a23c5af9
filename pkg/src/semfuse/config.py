"""Flat run configuration.

File format: one ``key = value`` pair per line, ``#`` comments, blank lines
ignored. Keys are dotted; lists are comma-separated. Precedence is
command line > config file > defaults. Every command echoes the resolved
configuration into its output directory so a run reproduces from its
artifacts alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .evaluate import EvalProtocol
from .model import ModelConfig
from .training import TrainSchedule


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip() != ""]


def _parse_float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip() != ""]


def _parse_str_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip() != ""]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    dataset: str = ""
    out: str = ""
    seed: int = 0
    ablation: str = "full"
    checkpoint: str = ""

    model_latent_dim: int = 64
    model_encoder_hidden: list[int] = field(default_factory=lambda: [256, 128])
    model_degrader_hidden: list[int] = field(default_factory=lambda: [128])
    model_classifier_hidden: list[int] = field(default_factory=lambda: [128])
    model_lambda1: float = 1.0
    model_lambda2: float = 1.0
    model_tau: float = 0.5
    model_rec_weight: float = 1.0
    model_degradation_stop_grad: bool = True

    train_pretrain_epochs: int = 200
    train_joint_epochs: int = 100
    train_batch_size: int = 256
    train_learning_rate: float = 1e-3
    train_shuffle: bool = True

    eval_cluster_trials: int = 10
    eval_split_trials: int = 30
    eval_split_fractions: list[float] = field(default_factory=lambda: [0.8, 0.5, 0.2])
    eval_knn_k: int = 5
    eval_kmeans_restarts: int = 10
    eval_kmeans_max_iters: int = 300
    eval_variants: list[str] = field(default_factory=lambda: ["h"])

    synth_n: int = 600
    synth_m: int = 2
    synth_k: int = 3
    synth_view_dims: list[int] = field(default_factory=lambda: [16, 12])
    synth_separation: float = 10.0
    synth_noise: float = 1.0
    synth_normalization: str = "minmax"

    def to_model_config(self, input_dims: list[int], k: int) -> ModelConfig:
        return ModelConfig(
            input_dims=input_dims, k=k, latent_dim=self.model_latent_dim,
            encoder_hidden=list(self.model_encoder_hidden),
            degrader_hidden=list(self.model_degrader_hidden),
            classifier_hidden=list(self.model_classifier_hidden),
            lambda1=self.model_lambda1, lambda2=self.model_lambda2,
            tau=self.model_tau, rec_weight=self.model_rec_weight,
            degradation_stop_grad=self.model_degradation_stop_grad)

    def to_schedule(self) -> TrainSchedule:
        return TrainSchedule(
            pretrain_epochs=self.train_pretrain_epochs,
            joint_epochs=self.train_joint_epochs,
            batch_size=self.train_batch_size,
            learning_rate=self.train_learning_rate,
            seed=self.seed, shuffle=self.train_shuffle)

    def to_protocol(self) -> EvalProtocol:
        return EvalProtocol(
            cluster_trials=self.eval_cluster_trials,
            split_trials=self.eval_split_trials,
            split_fractions=tuple(self.eval_split_fractions),
            knn_k=self.eval_knn_k, kmeans_restarts=self.eval_kmeans_restarts,
            kmeans_max_iters=self.eval_kmeans_max_iters, seed=self.seed)


def _field_parser(f):
    if f.type in ("int", int):
        return int
    if f.type in ("float", float):
        return float
    if f.type in ("bool", bool):
        return _parse_bool
    if f.type in ("str", str):
        return str
    if "int" in str(f.type):
        return _parse_int_list
    if "float" in str(f.type):
        return _parse_float_list
    return _parse_str_list


def _key_of(field_name: str) -> str:
    for prefix in ("model_", "train_", "eval_", "synth_"):
        if field_name.startswith(prefix):
            return prefix[:-1] + "." + field_name[len(prefix):]
    return field_name


KEY_TO_FIELD = {_key_of(f.name): f for f in fields(RunConfig)}


def set_key(cfg: RunConfig, key: str, raw_value: str) -> None:
    if key not in KEY_TO_FIELD:
        raise ConfigError(f"unknown configuration key {key!r}")
    f = KEY_TO_FIELD[key]
    try:
        setattr(cfg, f.name, _field_parser(f)(raw_value))
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for {key}: {raw_value!r} ({exc})") from None


def load_config_file(cfg: RunConfig, path) -> None:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        set_key(cfg, key.strip(), value.strip())


def serialize(cfg: RunConfig) -> str:
    lines = []
    for key in sorted(KEY_TO_FIELD):
        lines.append(f"{key} = {_fmt(getattr(cfg, KEY_TO_FIELD[key].name))}")
    return "\n".join(lines) + "\n"


def echo_config(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config_resolved.txt"
    path.write_text(serialize(cfg), encoding="utf-8")
    return path
