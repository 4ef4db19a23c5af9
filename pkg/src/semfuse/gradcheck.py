"""Finite-difference verification of every loss term on tiny random instances.

For each random seed this builds a model small enough to probe exhaustively
(batch <= 8, feature dims <= 6, k <= 3) and compares analytic gradients of
the reconstruction, degradation, semantic, and total objectives against
central differences. Under stop-gradient (the default) the degradation
target codes are frozen at the evaluation point, matching the defined
gradient semantics; with stop-gradient disabled the probed function is the
plain end-to-end objective.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import (ModelConfig, MultiViewModel, degradation_loss,
                    degradation_value, encode, reconstruction_loss,
                    reconstruction_value, semantic_value, total_loss)
from .nn import GradCheckResult, finite_diff_check
from .rng import substream


def build_tiny_instance(seed: int, lambda1: float = 0.7, lambda2: float = 1.3,
                        tau: float = 0.35, stop_grad: bool = True):
    """Random small model, per-view batches, and unified rows for probing.

    The probe point is deliberately generic: biases are perturbed off zero
    (zero biases leave dead rows sitting exactly on the ReLU kink, where
    central differences disagree with the subgradient) and weights are
    widened so gradient coordinates stay above the finite-difference noise
    floor at step 1e-6.
    """
    rng = substream(seed, "gradcheck")
    k = int(rng.integers(2, 4))
    latent = int(rng.integers(2, 4))
    dims = [int(rng.integers(3, 7)) for _ in range(2)]
    batch = int(rng.integers(max(3, k), 7))
    cfg = ModelConfig(input_dims=dims, k=k, latent_dim=latent,
                      encoder_hidden=[4], degrader_hidden=[3],
                      classifier_hidden=[3], lambda1=lambda1, lambda2=lambda2,
                      tau=tau, degradation_stop_grad=stop_grad)
    model = MultiViewModel(cfg, n_samples=batch, rng=rng)
    for _, p in model.named_params():
        if p.ndim == 1:
            p += rng.uniform(-0.3, 0.3, size=p.shape)
        else:
            p *= 1.5
    views = [0.5 * rng.standard_normal((batch, d)) for d in dims]
    z = [encode(model, i, x) for i, x in enumerate(views)]
    h = sum(z) / len(z) + 0.3 * rng.standard_normal((batch, latent))
    return model, views, h


def _select(model: MultiViewModel, groups: set[str]):
    named = [(n, p) for n, p in model.named_params() if n[:3] in groups]
    return [n for n, _ in named], [p for _, p in named]


def _check(model, names, tensors, grads, value_fn, h=None, d_h=None,
           step: float = 1e-6) -> GradCheckResult:
    params = list(tensors)
    all_grads = list(grads)
    all_names = list(names)
    if h is not None:
        params.append(h)
        all_grads.append(d_h)
        all_names.append("unified")
    originals = [p.copy() for p in tensors]

    def loss_fn(work):
        for target, src in zip(tensors, work[: len(tensors)]):
            np.copyto(target, src)
        h_cur = work[len(tensors)] if h is not None else None
        return value_fn(h_cur)

    try:
        return finite_diff_check(loss_fn, params, all_grads, step=step, names=all_names)
    finally:
        for target, orig in zip(tensors, originals):
            np.copyto(target, orig)


def _flatten_mlp_grads(names, grad_lists):
    """Order per-layer (dW, db) grads to match named_params order for a group."""
    flat = []
    for grads in grad_lists:
        for dw, db in grads:
            flat.append(dw)
            flat.append(db)
    assert len(flat) == len(names)
    return flat


def check_reconstruction(model, views, inject_sign_error: bool = False) -> GradCheckResult:
    names, tensors = _select(model, {"enc", "dec"})
    _, enc_g, dec_g, _ = reconstruction_loss(model, views)
    enc_names = [n for n in names if n.startswith("enc")]
    dec_names = [n for n in names if n.startswith("dec")]
    grads = (_flatten_mlp_grads(enc_names, enc_g) + _flatten_mlp_grads(dec_names, dec_g))
    if inject_sign_error:
        grads[0] = -grads[0]
    return _check(model, names, tensors,
                  grads, lambda _h: reconstruction_value(model, views))


def check_degradation(model, views, h) -> GradCheckResult:
    z_frozen = [encode(model, i, x) for i, x in enumerate(views)]
    names, tensors = _select(model, {"deg"})
    _, deg_g, d_h, _ = degradation_loss(model, z_frozen, h, stop_grad=True)
    grads = _flatten_mlp_grads(names, deg_g)
    return _check(model, names, tensors, grads,
                  lambda h_cur: degradation_value(model, z_frozen, h_cur),
                  h=h, d_h=d_h)


def check_semantic(model, views, h) -> GradCheckResult:
    # isolate the semantic term by zeroing the other weights
    cfg = replace(model.config, rec_weight=0.0, lambda1=0.0, lambda2=1.0)
    _, grads = total_loss(model, views, h, config=cfg)
    names, tensors = _select(model, {"enc", "cls"})
    enc_names = [n for n in names if n.startswith("enc")]
    cls_names = [n for n in names if n.startswith("cls")]
    flat = (_flatten_mlp_grads(enc_names, grads.encoders)
            + _flatten_mlp_grads(cls_names, [grads.classifier]))
    return _check(model, names, tensors, flat,
                  lambda h_cur: semantic_value(model, views, h_cur),
                  h=h, d_h=grads.h_batch)


def check_total(model, views, h) -> GradCheckResult:
    cfg = model.config
    _, grads = total_loss(model, views, h)
    names, tensors = _select(model, {"enc", "dec", "deg", "cls"})
    by_group = {"enc": grads.encoders, "dec": grads.decoders, "deg": grads.degraders,
                "cls": [grads.classifier]}
    flat = []
    for group in ("enc", "dec", "deg", "cls"):
        group_names = [n for n in names if n.startswith(group)]
        flat.extend(_flatten_mlp_grads(group_names, by_group[group]))
    if cfg.degradation_stop_grad:
        z_frozen = [encode(model, i, x) for i, x in enumerate(views)]

        def value_fn(h_cur):
            return (cfg.rec_weight * reconstruction_value(model, views)
                    + cfg.lambda1 * degradation_value(model, z_frozen, h_cur)
                    + cfg.lambda2 * semantic_value(model, views, h_cur))
    else:
        def value_fn(h_cur):
            z_live = [encode(model, i, x) for i, x in enumerate(views)]
            return (cfg.rec_weight * reconstruction_value(model, views)
                    + cfg.lambda1 * degradation_value(model, z_live, h_cur)
                    + cfg.lambda2 * semantic_value(model, views, h_cur))
    return _check(model, names, tensors, flat, value_fn, h=h, d_h=grads.h_batch)


def check_all_terms(seed: int = 0, n_seeds: int = 20, lambda1: float = 0.7,
                    lambda2: float = 1.3, tau: float = 0.5, stop_grad: bool = True,
                    inject_sign_error: bool = False) -> dict:
    """Worst finite-difference result per loss term across ``n_seeds`` instances.

    A term whose weight is zero is reported as None (skipped).
    """
    worst = {"rec": None, "deg": None, "sem": None, "total": None}

    def keep(term, res):
        if worst[term] is None or res.max_rel_err > worst[term].max_rel_err:
            worst[term] = res

    for s in range(seed, seed + n_seeds):
        model, views, h = build_tiny_instance(s, lambda1=lambda1, lambda2=lambda2,
                                              tau=tau, stop_grad=stop_grad)
        keep("rec", check_reconstruction(model, views,
                                         inject_sign_error=inject_sign_error))
        keep("deg", check_degradation(model, views, h))
        if lambda2 > 0:
            keep("sem", check_semantic(model, views, h))
        keep("total", check_total(model, views, h))
    return worst
