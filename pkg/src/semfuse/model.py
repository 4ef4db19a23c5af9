"""Multi-view model: per-view autoencoders, degradation networks, a shared
classifier, and a learnable unified representation, with every loss term's
gradient derived by hand.

The objective is ``total = rec_weight*rec + lambda1*deg + lambda2*sem``:
per-view reconstruction, degradation of the unified representation toward
each view's latent code, and a semantic-consistency term that contrasts
class-probability columns across all view heads plus the unified head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, UsageError
from .nn import Mlp, mlp_backward, mlp_forward
from .rng import substream

# Floor for cosine denominators; softmax columns can vanish early in training.
EPS_NORM = 1e-12
# Floor for probabilities inside p*log(p), encoding the 0*log(0)=0 convention.
EPS_PROB = 1e-12

MlpGrads = list[tuple[np.ndarray, np.ndarray]]


@dataclass
class ModelConfig:
    """Dimensions and loss weights for one model instance.

    ``input_dims`` has one entry per view; the unified representation shares
    the latent dimensionality because it is initialized as a mean of latent
    codes and fed through the same classifier.
    """

    input_dims: list[int]
    k: int
    latent_dim: int = 64
    encoder_hidden: list[int] = field(default_factory=lambda: [256, 128])
    degrader_hidden: list[int] = field(default_factory=lambda: [128])
    classifier_hidden: list[int] = field(default_factory=lambda: [128])
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 0.5
    rec_weight: float = 1.0
    degradation_stop_grad: bool = True

    def __post_init__(self):
        self.input_dims = [int(d) for d in self.input_dims]
        if len(self.input_dims) < 2:
            raise ConfigError("need at least two views")
        if any(d < 1 for d in self.input_dims):
            raise ConfigError("view dimensions must be positive")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be positive")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be nonnegative")

    @property
    def m(self) -> int:
        return len(self.input_dims)


@dataclass
class LossBreakdown:
    rec: float
    deg: float
    sem: float
    total: float
    rec_per_view: list[float] = field(default_factory=list)


@dataclass
class ModelGrads:
    """Gradients for every trainable tensor touched by one batch."""

    encoders: list[MlpGrads]
    decoders: list[MlpGrads]
    degraders: list[MlpGrads]
    classifier: MlpGrads
    h_batch: np.ndarray


class MultiViewModel:
    """All trainable state; owned by a single training run."""

    def __init__(self, config: ModelConfig, n_samples: int, seed: int = 0,
                 rng: np.random.Generator | None = None):
        if n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if rng is None:
            rng = substream(seed, "init")
        self.config = config
        self.n_samples = int(n_samples)
        d = config.latent_dim
        self.encoders = [Mlp([di, *config.encoder_hidden, d], rng=rng)
                         for di in config.input_dims]
        self.decoders = [Mlp([d, *reversed(config.encoder_hidden), di], rng=rng)
                         for di in config.input_dims]
        self.degraders = [Mlp([d, *config.degrader_hidden, d], rng=rng)
                          for _ in config.input_dims]
        self.classifier = Mlp([d, *config.classifier_hidden, config.k],
                              output_activation="softmax", rng=rng)
        self.unified = np.zeros((self.n_samples, d))

    @property
    def m(self) -> int:
        return self.config.m

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        """All network parameters in a fixed order (excludes the unified rows)."""
        out = []
        groups = [("enc", self.encoders), ("dec", self.decoders), ("deg", self.degraders)]
        for prefix, nets in groups:
            for i, net in enumerate(nets):
                for l, (w, b) in enumerate(net.layers):
                    out.append((f"{prefix}{i}.W{l}", w))
                    out.append((f"{prefix}{i}.b{l}", b))
        for l, (w, b) in enumerate(self.classifier.layers):
            out.append((f"cls.W{l}", w))
            out.append((f"cls.b{l}", b))
        return out


def encode(model: MultiViewModel, view_index: int, x_batch) -> np.ndarray:
    """Latent codes of one view's batch; pure, parameters untouched."""
    z, _ = mlp_forward(model.encoders[view_index], x_batch)
    return z


def classify(model: MultiViewModel, r_batch) -> np.ndarray:
    """Row-stochastic pseudo-label matrix from the shared classifier."""
    q, _ = mlp_forward(model.classifier, r_batch)
    return q


def init_unified(z_per_view: list[np.ndarray]) -> np.ndarray:
    """Per-sample mean of latent codes, accumulated in view-index order."""
    if len(z_per_view) < 2:
        raise ConfigError("unified initialization needs at least two views")
    first = np.asarray(z_per_view[0], dtype=np.float64)
    acc = first.copy()
    for z in z_per_view[1:]:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != first.shape:
            raise ShapeError(f"latent shapes differ across views: {z.shape} vs {first.shape}")
        acc += z
    acc /= len(z_per_view)
    return acc


# ---------------------------------------------------------------------------
# Semantic-consistency contrastive loss over class-probability columns.
# ---------------------------------------------------------------------------

def column_cosine(qa, qb, c: int, w: int) -> float:
    """Cosine similarity between column ``c`` of ``qa`` and column ``w`` of ``qb``."""
    a = np.asarray(qa, dtype=np.float64)[:, c]
    b = np.asarray(qb, dtype=np.float64)[:, w]
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + EPS_NORM))


def _cosine_matrix(qa: np.ndarray, qb: np.ndarray):
    na = np.linalg.norm(qa, axis=0)
    nb = np.linalg.norm(qb, axis=0)
    denom = na[:, None] * nb[None, :] + EPS_NORM
    return (qa.T @ qb) / denom, denom, na, nb


def _norm_scaled(q: np.ndarray, dn: np.ndarray, n: np.ndarray) -> np.ndarray:
    # dL/dq[:,c] += dn_c * q[:,c] / n_c, guarding vanished columns
    scale = np.divide(dn, n, out=np.zeros_like(dn), where=n > 0)
    return q * scale[None, :]


def _pair_terms(qa: np.ndarray, qb: np.ndarray, tau: float):
    s_aa, d_aa, na, _ = _cosine_matrix(qa, qa)
    s_ab, d_ab, _, nb = _cosine_matrix(qa, qb)
    e_aa = np.exp(s_aa / tau)
    e_ab = np.exp(s_ab / tau)
    denom = e_aa.sum(axis=1) + e_ab.sum(axis=1) - np.exp(1.0 / tau)
    if np.any(denom <= 0):
        raise NumericError("contrastive denominator not positive; "
                           "a class-probability column has collapsed")
    f = np.diag(e_ab) / denom
    value = float(np.sum(np.log(denom) - np.diag(s_ab) / tau))
    return value, f, (s_aa, d_aa, e_aa, s_ab, d_ab, e_ab, denom, na, nb)


def _check_pair(qa, qb, tau):
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    if tau <= 0:
        raise ConfigError("temperature must be positive")
    if qa.ndim != 2 or qa.shape != qb.shape:
        raise ShapeError(f"pseudo-label matrices must share shape, got {qa.shape} vs {qb.shape}")
    if qa.shape[0] < 2:
        raise UsageError("contrastive columns need a batch of at least 2 rows")
    return qa, qb


def contrastive_f_values(qa, qb, tau: float) -> np.ndarray:
    """The per-class ratio inside the pair loss; lies in (0,1] for stochastic inputs."""
    qa, qb = _check_pair(qa, qb, tau)
    _, f, _ = _pair_terms(qa, qb, tau)
    return f


def pairwise_contrastive_loss(qa, qb, tau: float):
    """Contrastive loss between two heads' column sets, with gradients.

    Returns ``(value, d_qa, d_qb)``. The loss is asymmetric in its arguments:
    only the first head's within-head similarities enter the denominator.
    """
    qa, qb = _check_pair(qa, qb, tau)
    value, _, parts = _pair_terms(qa, qb, tau)
    s_aa, d_aa, e_aa, s_ab, d_ab, e_ab, denom, na, nb = parts
    k = qa.shape[1]

    w_aa = e_aa / (tau * denom[:, None])
    w_ab = e_ab / (tau * denom[:, None])
    w_ab[np.diag_indices(k)] -= 1.0 / tau

    # within-head similarities: both cosine arguments are columns of qa
    dg = w_aa / d_aa
    d_qa = qa @ (dg + dg.T)
    m_aa = w_aa * s_aa / d_aa
    dna = -((m_aa * na[None, :]).sum(axis=1) + (m_aa * na[:, None]).sum(axis=0))
    d_qa += _norm_scaled(qa, dna, na)

    # cross-head similarities: rows index qa columns, columns index qb columns
    dg = w_ab / d_ab
    d_qa += qb @ dg.T
    d_qb = qa @ dg
    m_ab = w_ab * s_ab / d_ab
    dna = -(m_ab * nb[None, :]).sum(axis=1)
    dnb = -(m_ab * na[:, None]).sum(axis=0)
    d_qa += _norm_scaled(qa, dna, na)
    d_qb += _norm_scaled(qb, dnb, nb)
    return value, d_qa, d_qb


def mean_label_entropy_penalty(q_list: list[np.ndarray]) -> float:
    """Negative entropy of each head's batch-mean class distribution, summed.

    Bounded in [-(heads)*ln(k), 0]; the minimum is attained exactly at
    uniform mean distributions, the maximum when each head puts all mass
    on one class.
    """
    value = 0.0
    for q in q_list:
        p = np.maximum(np.asarray(q, dtype=np.float64).mean(axis=0), EPS_PROB)
        value += float(np.sum(p * np.log(p)))
    return value


def semantic_loss(q_list: list[np.ndarray], tau: float):
    """Semantic-consistency loss over all heads, with per-head gradients.

    ``q_list`` holds one row-stochastic matrix per view head plus one for the
    unified representation, all over the same batch rows. The value is the
    scaled sum of pairwise contrastive losses over ordered head pairs plus
    the mean-label entropy penalty.
    """
    heads = len(q_list)
    if heads < 2:
        raise UsageError("semantic loss needs at least two heads")
    qs = [np.asarray(q, dtype=np.float64) for q in q_list]
    shape = qs[0].shape
    if any(q.shape != shape for q in qs):
        raise ShapeError("all heads must share the same batch and class count")
    batch, k = shape
    scale = 1.0 / (2.0 * k)

    value = 0.0
    grads = [np.zeros_like(q) for q in qs]
    for a in range(heads):
        for b in range(heads):
            if a == b:
                continue
            v, dqa, dqb = pairwise_contrastive_loss(qs[a], qs[b], tau)
            value += scale * v
            grads[a] += scale * dqa
            grads[b] += scale * dqb

    for i, q in enumerate(qs):
        p = q.mean(axis=0)
        clamped = np.maximum(p, EPS_PROB)
        value += float(np.sum(clamped * np.log(clamped)))
        dp = np.where(p > EPS_PROB, np.log(clamped) + 1.0, 0.0)
        grads[i] += dp[None, :] / batch
    return value, grads


# ---------------------------------------------------------------------------
# Reconstruction and degradation terms (per-batch means).
# ---------------------------------------------------------------------------

def _check_batch(model: MultiViewModel, views: list[np.ndarray]) -> int:
    if len(views) != model.m:
        raise ShapeError(f"expected {model.m} views, got {len(views)}")
    batch = views[0].shape[0]
    for i, x in enumerate(views):
        if x.shape != (batch, model.config.input_dims[i]):
            raise ShapeError(f"view {i} batch has shape {x.shape}, expected "
                             f"({batch}, {model.config.input_dims[i]})")
    return batch


def reconstruction_loss(model: MultiViewModel, views: list[np.ndarray]):
    """Mean squared reconstruction error over the batch, summed over views.

    Returns ``(value, enc_grads, dec_grads, per_view)``.
    """
    batch = _check_batch(model, views)
    enc_grads, dec_grads, per_view = [], [], []
    for i, x in enumerate(views):
        z, enc_tape = mlp_forward(model.encoders[i], x)
        x_hat, dec_tape = mlp_forward(model.decoders[i], z)
        r = x_hat - x
        per_view.append(float((r * r).sum() / batch))
        dgrads, dz = mlp_backward(model.decoders[i], dec_tape, (2.0 / batch) * r)
        egrads, _ = mlp_backward(model.encoders[i], enc_tape, dz)
        enc_grads.append(egrads)
        dec_grads.append(dgrads)
    return float(sum(per_view)), enc_grads, dec_grads, per_view


def reconstruction_value(model: MultiViewModel, views: list[np.ndarray]) -> float:
    batch = _check_batch(model, views)
    value = 0.0
    for i, x in enumerate(views):
        z, _ = mlp_forward(model.encoders[i], x)
        x_hat, _ = mlp_forward(model.decoders[i], z)
        value += float(((x_hat - x) ** 2).sum() / batch)
    return value


def degradation_loss(model: MultiViewModel, z_per_view: list[np.ndarray],
                     h_batch: np.ndarray, stop_grad: bool = True):
    """Mean squared error of degraded unified rows against each view's codes.

    The latent codes are targets; with ``stop_grad`` (the default) they carry
    no gradient, so the term trains only the degraders and the unified rows.
    Returns ``(value, deg_grads, d_h, d_z)`` where ``d_z`` entries are None
    under stop-gradient.
    """
    batch = h_batch.shape[0]
    value = 0.0
    deg_grads, d_z = [], []
    d_h = np.zeros_like(h_batch)
    for i, z in enumerate(z_per_view):
        if z.shape != h_batch.shape:
            raise ShapeError(f"view {i} codes {z.shape} do not match unified rows {h_batch.shape}")
        g_hat, tape = mlp_forward(model.degraders[i], h_batch)
        r = g_hat - z
        value += float((r * r).sum() / batch)
        grads, dh = mlp_backward(model.degraders[i], tape, (2.0 / batch) * r)
        deg_grads.append(grads)
        d_h += dh
        d_z.append(None if stop_grad else (2.0 / batch) * (z - g_hat))
    return value, deg_grads, d_h, d_z


def degradation_value(model: MultiViewModel, z_per_view: list[np.ndarray],
                      h_batch: np.ndarray) -> float:
    batch = h_batch.shape[0]
    value = 0.0
    for i, z in enumerate(z_per_view):
        g_hat, _ = mlp_forward(model.degraders[i], h_batch)
        value += float(((g_hat - z) ** 2).sum() / batch)
    return value


def semantic_value(model: MultiViewModel, views: list[np.ndarray],
                   h_batch: np.ndarray, tau: float | None = None) -> float:
    """Semantic loss recomputed from raw inputs (used by the gradient oracle)."""
    qs = [classify(model, encode(model, i, x)) for i, x in enumerate(views)]
    qs.append(classify(model, h_batch))
    value, _ = semantic_loss(qs, model.config.tau if tau is None else tau)
    return value


# ---------------------------------------------------------------------------
# Total objective.
# ---------------------------------------------------------------------------

def _scaled(grads: MlpGrads, scale: float) -> MlpGrads:
    return [(scale * dw, scale * db) for dw, db in grads]


def total_loss(model: MultiViewModel, views: list[np.ndarray], h_batch: np.ndarray,
               config: ModelConfig | None = None):
    """Full objective on one batch with gradients for every trainable tensor.

    Encoder gradients accumulate every path that reaches the latent codes:
    the decoders, the shared classifier, and (only when stop-gradient is
    disabled) the degradation residuals. The unified rows receive gradient
    from the degraders and from their own classifier head.
    Returns ``(LossBreakdown, ModelGrads)``.
    """
    cfg = model.config if config is None else config
    batch = _check_batch(model, views)
    if h_batch.shape != (batch, cfg.latent_dim):
        raise ShapeError(f"unified rows have shape {h_batch.shape}, expected "
                         f"({batch}, {cfg.latent_dim})")

    z_list, enc_tapes = [], []
    for i, x in enumerate(views):
        z, tape = mlp_forward(model.encoders[i], x)
        z_list.append(z)
        enc_tapes.append(tape)
    d_z = [np.zeros_like(z) for z in z_list]

    rec_per_view, dec_grads = [], []
    for i, x in enumerate(views):
        x_hat, tape = mlp_forward(model.decoders[i], z_list[i])
        r = x_hat - x
        rec_per_view.append(float((r * r).sum() / batch))
        grads, dz = mlp_backward(model.decoders[i], tape, (2.0 / batch) * r)
        dec_grads.append(_scaled(grads, cfg.rec_weight))
        d_z[i] += cfg.rec_weight * dz
    rec = float(sum(rec_per_view))

    deg = 0.0
    deg_grads = []
    d_h = np.zeros_like(h_batch)
    for i, z in enumerate(z_list):
        g_hat, tape = mlp_forward(model.degraders[i], h_batch)
        r = g_hat - z
        deg += float((r * r).sum() / batch)
        grads, dh = mlp_backward(model.degraders[i], tape, (2.0 / batch) * r)
        deg_grads.append(_scaled(grads, cfg.lambda1))
        d_h += cfg.lambda1 * dh
        if not cfg.degradation_stop_grad:
            d_z[i] += cfg.lambda1 * (2.0 / batch) * (z - g_hat)

    q_heads, cls_tapes = [], []
    for z in z_list + [h_batch]:
        q, tape = mlp_forward(model.classifier, z)
        q_heads.append(q)
        cls_tapes.append(tape)
    sem, d_q = semantic_loss(q_heads, cfg.tau)

    cls_grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.classifier.layers]
    for head, (tape, dq) in enumerate(zip(cls_tapes, d_q)):
        grads, din = mlp_backward(model.classifier, tape, dq)
        cls_grads = [(gw + cfg.lambda2 * dw, gb + cfg.lambda2 * db)
                     for (gw, gb), (dw, db) in zip(cls_grads, grads)]
        if head < model.m:
            d_z[head] += cfg.lambda2 * din
        else:
            d_h += cfg.lambda2 * din

    enc_grads = [mlp_backward(model.encoders[i], enc_tapes[i], d_z[i])[0]
                 for i in range(model.m)]

    total = cfg.rec_weight * rec + cfg.lambda1 * deg + cfg.lambda2 * sem
    breakdown = LossBreakdown(rec=rec, deg=deg, sem=sem, total=total,
                              rec_per_view=rec_per_view)
    grads = ModelGrads(encoders=enc_grads, decoders=dec_grads,
                       degraders=deg_grads, classifier=cls_grads, h_batch=d_h)
    return breakdown, grads


def ablation_variant(mode: str):
    """Config transformer for the ablations: 'full', 'no_sem', or 'no_rec'.

    ``no_rec`` removes the reconstruction term from the joint objective only;
    autoencoder pretraining is unaffected.
    """
    if mode == "full":
        return lambda cfg: cfg
    if mode == "no_sem":
        return lambda cfg: replace(cfg, lambda2=0.0)
    if mode == "no_rec":
        return lambda cfg: replace(cfg, rec_weight=0.0)
    raise ConfigError(f"unknown ablation mode {mode!r}")
