"""Dense MLP kernels with hand-derived gradients, Adam, and a finite-difference oracle.

Everything is double precision. The network graph is fixed and small, so
backpropagation is written out analytically instead of relying on an
autodiff framework; a central-difference checker verifies every loss term
against these gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, UsageError

_ACTIVATIONS = ("identity", "relu", "softmax")


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _check_finite(a: np.ndarray, context: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise NumericError(f"non-finite values in {context}")
    return a


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max-shift for stability.

    Every output row is nonnegative and sums to 1 (within 1e-9).
    """
    a = _check_finite(_as_matrix(m, "softmax input"), "softmax input")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class GradTape:
    """Cached intermediates of one forward pass; consumed by exactly one backward."""

    __slots__ = ("net", "x", "pre", "post", "used")

    def __init__(self, net: "Mlp", x: np.ndarray, pre: list, post: list):
        self.net = net
        self.x = x
        self.pre = pre    # affine outputs per layer
        self.post = post  # activations per layer (post[-1] is the net output)
        self.used = False


class Mlp:
    """Fully connected network: affine layers with ReLU on hidden layers.

    The output layer applies ``output_activation``: "identity" for
    encoders/decoders/degraders, "softmax" for the shared classifier
    ("relu" is also accepted for single-layer test rigs). Parameters are
    ``layers``: a list of (W, b) with W of shape (d_in, d_out).
    """

    def __init__(self, dims: list[int], output_activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if len(dims) < 2:
            raise ShapeError("an Mlp needs at least input and output dims")
        if output_activation not in _ACTIVATIONS:
            raise ShapeError(f"unknown output activation {output_activation!r}")
        self.output_activation = output_activation
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            if rng is None:
                w = np.zeros((d_in, d_out))
            else:
                bound = np.sqrt(6.0 / (d_in + d_out))
                w = rng.uniform(-bound, bound, size=(d_in, d_out))
            self.layers.append((w, np.zeros(d_out)))

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def param_arrays(self) -> list[np.ndarray]:
        """Flat view of all parameter tensors, weights and biases interleaved."""
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out


def mlp_forward(net: Mlp, x) -> tuple[np.ndarray, GradTape]:
    """Forward pass returning the output batch and a tape for one backward pass."""
    a = _as_matrix(x, "Mlp input")
    if a.shape[1] != net.input_dim:
        raise ShapeError(f"input has {a.shape[1]} columns, net expects {net.input_dim}")
    if a.shape[0] < 1:
        raise ShapeError("batch must contain at least one row")
    pre, post = [], []
    h = a
    last = len(net.layers) - 1
    for idx, (w, b) in enumerate(net.layers):
        z = h @ w + b
        pre.append(z)
        if idx < last:
            h = np.maximum(z, 0.0)
        elif net.output_activation == "relu":
            h = np.maximum(z, 0.0)
        elif net.output_activation == "softmax":
            h = softmax_rows(z)
        else:
            h = z
        post.append(h)
    _check_finite(h, "Mlp output")
    return h, GradTape(net, a, pre, post)


def mlp_backward(net: Mlp, tape: GradTape, d_out) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate ``d_out`` through the taped forward pass.

    Returns per-layer (dW, db) grads and the gradient with respect to the input.
    The tape is single-use; reusing it raises UsageError.
    """
    if tape.used:
        raise UsageError("gradient tape already consumed; rerun the forward pass")
    if tape.net is not net:
        raise UsageError("tape belongs to a different network")
    tape.used = True
    g = _as_matrix(d_out, "output gradient")
    if g.shape != tape.post[-1].shape:
        raise ShapeError(f"gradient shape {g.shape} != output shape {tape.post[-1].shape}")

    last = len(net.layers) - 1
    if net.output_activation == "softmax":
        y = tape.post[-1]
        g = y * (g - (g * y).sum(axis=1, keepdims=True))
    elif net.output_activation == "relu":
        g = g * (tape.pre[last] > 0.0)

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore[list-item]
    for idx in range(last, -1, -1):
        inp = tape.x if idx == 0 else tape.post[idx - 1]
        grads[idx] = (inp.T @ g, g.sum(axis=0))
        g = g @ net.layers[idx][0].T
        if idx > 0:
            g = g * (tape.pre[idx - 1] > 0.0)
    return grads, g


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter tensor."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float = 1e-3, beta1: float = 0.9,
                  beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``param`` in place."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(f"param {param.shape}, grad {grad.shape}, state {state.m.shape} disagree")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class GradCheckResult:
    """Outcome of a finite-difference comparison over a parameter set."""

    max_rel_err: float
    worst_name: str = ""
    worst_index: tuple = ()
    analytic: float = 0.0
    numeric: float = 0.0


def finite_diff_check(loss_fn, params: list[np.ndarray], grads: list[np.ndarray],
                      step: float = 1e-6, names: list[str] | None = None) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params)`` must return a scalar for any perturbed copy of the
    parameter list; ``grads`` are the analytic gradients at the given point.
    The relative error denominator is floored at 1e-8 to avoid 0/0.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if len(params) != len(grads):
        raise ShapeError("params and grads must align")
    if names is None:
        names = [f"param{i}" for i in range(len(params))]
    worst = GradCheckResult(max_rel_err=0.0)
    work = [np.array(p, dtype=np.float64) for p in params]
    for pi, (p, g) in enumerate(zip(work, grads)):
        flat_p = p.ravel()
        flat_g = np.asarray(g, dtype=np.float64).ravel()
        if flat_p.size != flat_g.size:
            raise ShapeError(f"grad shape mismatch for {names[pi]}")
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + step
            f_plus = float(loss_fn(work))
            flat_p[j] = orig - step
            f_minus = float(loss_fn(work))
            flat_p[j] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite loss while probing {names[pi]}[{j}]")
            numeric = (f_plus - f_minus) / (2.0 * step)
            analytic = flat_g[j]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if err > worst.max_rel_err:
                worst = GradCheckResult(err, names[pi], np.unravel_index(j, p.shape),
                                        analytic, numeric)
    return worst
