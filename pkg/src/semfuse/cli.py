"""Command-line entry point: synth | train | eval | gradcheck | sweep.

Exit codes are a stable contract: 0 success, 1 usage/config error,
2 data or IO error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .checkpoint import load_checkpoint
from .data import SynthSpec, load_dataset, synth_multiview, write_dataset
from .errors import ConfigError, DataError, NumericError
from .evaluate import (evaluate_representation, fusion_baseline, metric_rows,
                       write_embedding_csv, write_metrics_csv)
from .gradcheck import check_all_terms
from .model import ablation_variant, encode
from .training import run_training, write_history_csv

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one configuration key (repeatable)")
    sub.add_argument("--out", help="output directory (all files go here)")
    sub.add_argument("--seed", type=int, help="master seed")


def _resolve(args, flag_keys: dict) -> cfgmod.RunConfig:
    cfg = cfgmod.RunConfig()
    if args.config:
        cfgmod.load_config_file(cfg, args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        cfgmod.set_key(cfg, key.strip(), value.strip())
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfgmod.set_key(cfg, key, str(value))
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if not cfg.out:
        raise ConfigError("an output directory is required (--out or 'out' key)")
    return cfg


def cmd_synth(args) -> int:
    cfg = _resolve(args, {"n": "synth.n", "m": "synth.m", "k": "synth.k",
                          "view_dims": "synth.view_dims",
                          "separation": "synth.separation", "noise": "synth.noise",
                          "normalization": "synth.normalization"})
    out = Path(cfg.out)
    cfgmod.echo_config(cfg, out)
    spec = SynthSpec(n_samples=cfg.synth_n, m=cfg.synth_m, k=cfg.synth_k,
                     view_dims=list(cfg.synth_view_dims),
                     separation=cfg.synth_separation, noise=cfg.synth_noise,
                     seed=cfg.seed)
    dataset = synth_multiview(spec)
    manifest = write_dataset(dataset, out, normalization=cfg.synth_normalization)
    print(f"wrote {dataset.n_samples} samples x {dataset.m} views to {manifest}")
    return 0


def _train_once(cfg: cfgmod.RunConfig, out: Path | None):
    if not cfg.dataset:
        raise ConfigError("a dataset manifest is required (--dataset or 'dataset' key)")
    dataset = load_dataset(cfg.dataset)
    model_cfg = ablation_variant(cfg.ablation)(
        cfg.to_model_config(dataset.dims, dataset.k))
    schedule = cfg.to_schedule()
    report = run_training(dataset, model_cfg, schedule, checkpoint_dir=out)
    return dataset, report


def cmd_train(args) -> int:
    cfg = _resolve(args, {"dataset": "dataset",
                          "pretrain_epochs": "train.pretrain_epochs",
                          "joint_epochs": "train.joint_epochs",
                          "batch_size": "train.batch_size",
                          "lambda1": "model.lambda1", "lambda2": "model.lambda2",
                          "tau": "model.tau", "ablation": "ablation"})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.echo_config(cfg, out)
    dataset, report = _train_once(cfg, out)
    write_history_csv(out / "history.csv", report.history)
    if report.history:
        last = report.history[-1]
        print(f"finished {len(report.history)} epochs; "
              f"last {last.phase} total = {last.total:.6f}")
    else:
        print("finished 0 epochs (empty schedule)")
    print(f"history: {out / 'history.csv'}")
    print(f"checkpoint: {out / 'checkpoint_final.bin'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"checkpoint": "checkpoint", "dataset": "dataset",
                          "variants": "eval.variants"})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.echo_config(cfg, out)
    if not cfg.checkpoint:
        raise ConfigError("--checkpoint is required")
    if not cfg.dataset:
        raise ConfigError("--dataset is required")
    ckpt = load_checkpoint(cfg.checkpoint)
    dataset = load_dataset(cfg.dataset)
    model = ckpt.model
    if dataset.dims != model.config.input_dims:
        raise DataError(f"dataset dims {dataset.dims} do not match checkpoint "
                        f"dims {model.config.input_dims}")
    if dataset.n_samples != model.n_samples:
        raise DataError(f"dataset has {dataset.n_samples} samples, checkpoint "
                        f"holds {model.n_samples} unified rows")
    if dataset.labels is None:
        raise DataError("evaluation requires a labeled dataset")
    protocol = cfg.to_protocol()
    z_list = None
    rows = []
    for variant in cfg.eval_variants:
        if variant == "h":
            rep = model.unified
        elif variant in ("concat", "average"):
            if z_list is None:
                z_list = [encode(model, i, v) for i, v in enumerate(dataset.views)]
            rep = fusion_baseline(z_list, variant)
        else:
            raise ConfigError(f"unknown variant {variant!r} (use h, concat, average)")
        report = evaluate_representation(rep, dataset.labels, dataset.k, protocol)
        rows.extend(metric_rows(dataset.name, variant, report))
        write_embedding_csv(out / f"embeddings_{variant}.csv", rep, dataset.labels)
    write_metrics_csv(out / "metrics.csv", rows)
    for row in rows:
        print(f"{row[1]:>8s}  {row[2]:<14s} mean={float(row[3]):.4f} std={float(row[4]):.4f}")
    print(f"metrics: {out / 'metrics.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _resolve(args, {})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.echo_config(cfg, out)
    results = check_all_terms(seed=cfg.seed, n_seeds=args.seeds,
                              lambda2=cfg.model_lambda2,
                              stop_grad=cfg.model_degradation_stop_grad,
                              inject_sign_error=args.inject_sign_error)
    tolerance = 1e-4
    failed = []
    lines = []
    for term, res in results.items():
        if res is None:
            lines.append(f"{term:>6s}: skipped (weight is zero)")
            continue
        status = "ok" if res.max_rel_err < tolerance else "FAIL"
        lines.append(f"{term:>6s}: max rel err {res.max_rel_err:.3e} at "
                     f"{res.worst_name}{list(res.worst_index)} [{status}]")
        if res.max_rel_err >= tolerance:
            failed.append((term, res))
    text = "\n".join(lines)
    print(text)
    (out / "gradcheck.txt").write_text(text + "\n", encoding="utf-8")
    if failed:
        term, res = failed[0]
        print(f"gradient check failed for {term}: worst coordinate "
              f"{res.worst_name}{list(res.worst_index)} "
              f"(analytic {res.analytic:.6e}, numeric {res.numeric:.6e})",
              file=sys.stderr)
        raise NumericError("analytic gradients disagree with finite differences")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args, {"dataset": "dataset"})
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.echo_config(cfg, out)
    grids = {"lambda1": [float(x) for x in args.lambda1_grid.split(",")],
             "lambda2": [float(x) for x in args.lambda2_grid.split(",")],
             "tau": [float(x) for x in args.tau_grid.split(",")]}
    rows = []
    for l1, l2, tau in itertools.product(grids["lambda1"], grids["lambda2"], grids["tau"]):
        cell = dataclasses.replace(cfg, model_lambda1=l1, model_lambda2=l2, model_tau=tau)
        try:
            dataset, report = _train_once(cell, None)
            m = report.model
            rep = evaluate_representation(m.unified, dataset.labels, dataset.k,
                                          cell.to_protocol())
            for name, s in rep.clustering.items():
                rows.append([l1, l2, tau, name, repr(s.mean), "ok"])
            for frac, s in rep.classification.items():
                label = f"knn_acc_{int(round(frac * 100))}_{int(round((1 - frac) * 100))}"
                rows.append([l1, l2, tau, label, repr(s.mean), "ok"])
            print(f"cell lambda1={l1} lambda2={l2} tau={tau}: "
                  f"nmi={rep.clustering['nmi'].mean:.4f}")
        except Exception as exc:  # record and continue with the next cell
            log.warning("sweep cell (%s, %s, %s) failed: %s", l1, l2, tau, exc)
            rows.append([l1, l2, tau, "", "", f"failed: {type(exc).__name__}"])
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda1", "lambda2", "tau", "metric", "value", "status"])
        writer.writerows(rows)
    print(f"sweep: {out / 'sweep.csv'}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="semfuse",
                     description="Unified multi-view representation learning")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic multi-view dataset")
    _add_common(p)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--m", type=int, help="number of views")
    p.add_argument("--k", type=int, help="number of classes")
    p.add_argument("--view-dims", dest="view_dims", help="comma list, one per view")
    p.add_argument("--separation", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--normalization", choices=["minmax", "zscore", "none"])
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train", help="pretrain, initialize, and jointly train")
    _add_common(p)
    p.add_argument("--dataset", help="dataset manifest path")
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--joint-epochs", dest="joint_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--ablation", choices=["full", "no_sem", "no_rec"])
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="evaluate a trained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint file from train")
    p.add_argument("--dataset", help="dataset manifest path")
    p.add_argument("--variants", help="comma list from h, concat, average")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=20, help="number of random instances")
    p.add_argument("--inject-sign-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = subs.add_parser("sweep", help="grid sweep over loss weights and temperature")
    _add_common(p)
    p.add_argument("--dataset", help="dataset manifest path")
    p.add_argument("--lambda1-grid", default="1.0")
    p.add_argument("--lambda2-grid", default="1.0")
    p.add_argument("--tau-grid", default="0.5")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
