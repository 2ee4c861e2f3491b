"""Self-normalizing MLP with exact gradients, Adam, weighted-MSE and CORAL losses.

Weights are stored as ``(fan_in, fan_out)`` arrays so a layer computes ``x @ W + b``.
Layers are indexed 1..L in the public API (L = 5 for the canonical topology).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Standardizer
from .errors import (DimensionMismatch, EmptyMask, InsufficientBatch, MissingReference,
                     SchemaMismatch)

CANONICAL_DIMS = (196, 200, 200, 100, 100, 95)
SELU_ALPHA = 1.673
SELU_LAMBDA = 1.050
SELU_ALPHA_FULL = 1.6732632423543772
SELU_LAMBDA_FULL = 1.0507009873554805
CHECKPOINT_SCHEMA = "1"


def selu(x, alpha=SELU_ALPHA, lam=SELU_LAMBDA):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, lam * x, lam * alpha * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x, alpha=SELU_ALPHA, lam=SELU_LAMBDA):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, lam, lam * alpha * np.exp(np.minimum(x, 0.0)))


@dataclass
class Network:
    layer_dims: tuple
    weights: list
    biases: list
    selu_alpha: float = SELU_ALPHA
    selu_lambda: float = SELU_LAMBDA
    standardizer: Standardizer | None = None
    coral_reference: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    # when set, the output layer predicts gain relative to the G0 input and predict() adds it back
    gain_offset: bool = False

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Network":
        return Network(
            layer_dims=tuple(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            selu_alpha=self.selu_alpha, selu_lambda=self.selu_lambda,
            standardizer=self.standardizer,
            coral_reference=None if self.coral_reference is None else self.coral_reference.copy(),
            metadata=copy.deepcopy(self.metadata), gain_offset=self.gain_offset)

    def predict(self, X_raw) -> np.ndarray:
        """Gain predictions for raw (unstandardized) feature vectors."""
        raw = np.atleast_2d(np.asarray(X_raw, dtype=np.float64))
        X = self.standardizer.apply(raw) if self.standardizer is not None else raw
        out = forward(self, X)[0]
        return out + raw[:, :1] if self.gain_offset else out


def init_network(rng: np.random.Generator, dims=CANONICAL_DIMS, *, full_precision_selu=False) -> Network:
    """Weights ~ N(0, 1/fan_in), zero biases."""
    dims = tuple(int(d) for d in dims)
    weights = [rng.normal(0.0, 1.0, (a, b)) / np.sqrt(a) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    alpha, lam = (SELU_ALPHA_FULL, SELU_LAMBDA_FULL) if full_precision_selu else (SELU_ALPHA, SELU_LAMBDA)
    return Network(dims, weights, biases, alpha, lam)


@dataclass
class ForwardCache:
    pre: list      # pre-activations z_1..z_L
    acts: list     # acts[0] is the input, acts[l] = selu(z_l) for hidden l


def forward(net: Network, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.layer_dims[0]:
        raise DimensionMismatch(f"expected {net.layer_dims[0]} input features, got {X.shape[1]}")
    acts, pre = [X], []
    h = X
    last = net.n_layers - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        pre.append(z)
        h = z if l == last else selu(z, net.selu_alpha, net.selu_lambda)
        if l != last:
            acts.append(h)
    return h, ForwardCache(pre, acts)


def last_hidden(net: Network, X) -> np.ndarray:
    return forward(net, X)[1].acts[-1]


def weighted_mse(pred, meas, mask) -> float:
    """Batch mean of per-record MSE over active channels."""
    pred, meas = np.atleast_2d(pred), np.atleast_2d(meas)
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    n_active = mask.sum(axis=1)
    if np.any(n_active == 0):
        raise EmptyMask("every record needs at least one active channel")
    sq = np.where(mask, (pred - meas) ** 2, 0.0)
    return float(np.mean(sq.sum(axis=1) / n_active))


def batch_covariance(F) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    n = F.shape[0]
    if n < 2:
        raise InsufficientBatch("covariance needs at least two rows")
    # shift by the first row before centering so identical rows cancel exactly
    Fs = F - F[0]
    Fc = Fs - Fs.mean(axis=0)
    C = Fc.T @ Fc / (n - 1)
    return 0.5 * (C + C.T)


def coral_penalty(C_S, C_T, d: int | None = None) -> float:
    """Squared Frobenius distance scaled by 1/(4 d^2); the weight lambda is applied by the caller."""
    C_S, C_T = np.asarray(C_S), np.asarray(C_T)
    if C_S.shape != C_T.shape or C_S.ndim != 2 or C_S.shape[0] != C_S.shape[1]:
        raise DimensionMismatch(f"covariances differ in shape: {C_S.shape} vs {C_T.shape}")
    d = C_S.shape[0] if d is None else d
    diff = C_S - C_T
    return float(np.sum(diff * diff) / (4.0 * d * d))


@dataclass
class LossBreakdown:
    weighted_mse: float
    coral: float
    total: float
    lambda_coral: float


@dataclass
class LossSpec:
    lambda_coral: float = 0.0
    coral_reference: np.ndarray | None = None


@dataclass
class Gradients:
    weights: list
    biases: list

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.weights + self.biases)))


def backward(net: Network, X, Y, mask, loss: LossSpec | None = None,
             cache: ForwardCache | None = None) -> tuple[Gradients, LossBreakdown]:
    """Exact gradients of weighted MSE plus the optional CORAL term on the last hidden layer."""
    loss = loss or LossSpec()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if cache is None:
        pred, cache = forward(net, X)
    else:
        pred = cache.pre[-1]
    Y = np.atleast_2d(Y)
    maskb = np.atleast_2d(np.asarray(mask, dtype=bool))
    if Y.shape != pred.shape or maskb.shape != pred.shape:
        raise DimensionMismatch(f"targets {Y.shape} / mask {maskb.shape} vs predictions {pred.shape}")
    n = pred.shape[0]
    n_active = maskb.sum(axis=1)
    if np.any(n_active == 0):
        raise EmptyMask("every record needs at least one active channel")
    err = np.where(maskb, pred - Y, 0.0)
    mse = float(np.mean(np.sum(err * err, axis=1) / n_active))

    coral = 0.0
    dF = None
    if loss.lambda_coral != 0.0:
        if loss.coral_reference is None:
            raise MissingReference("CORAL term requested without a reference covariance")
        F = cache.acts[-1]
        d = F.shape[1]
        C_T = batch_covariance(F)
        coral = coral_penalty(loss.coral_reference, C_T, d)
        G = (C_T - loss.coral_reference) / (2.0 * d * d)
        dF = loss.lambda_coral * (2.0 / (n - 1)) * (F - F.mean(axis=0)) @ G

    L = net.n_layers
    gW, gb = [None] * L, [None] * L
    dZ = (2.0 / n) * err / n_active[:, None]
    for l in range(L - 1, -1, -1):
        gW[l] = cache.acts[l].T @ dZ
        gb[l] = dZ.sum(axis=0)
        if l == 0:
            break
        dA = dZ @ net.weights[l].T
        if l == L - 1 and dF is not None:
            dA = dA + dF
        dZ = dA * selu_grad(cache.pre[l - 1], net.selu_alpha, net.selu_lambda)
    total = mse + loss.lambda_coral * coral
    return Gradients(gW, gb), LossBreakdown(mse, coral, total, loss.lambda_coral)


def loss_value(net: Network, X, Y, mask, loss: LossSpec | None = None) -> float:
    loss = loss or LossSpec()
    pred, cache = forward(net, X)
    total = weighted_mse(pred, Y, mask)
    if loss.lambda_coral != 0.0:
        total += loss.lambda_coral * coral_penalty(loss.coral_reference, batch_covariance(cache.acts[-1]))
    return total


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(net: Network, **hyper) -> AdamState:
    return AdamState([np.zeros_like(w) for w in net.weights], [np.zeros_like(w) for w in net.weights],
                     [np.zeros_like(b) for b in net.biases], [np.zeros_like(b) for b in net.biases],
                     **hyper)


def clip_gradients(grads: Gradients, clip: float | None) -> Gradients:
    """Global L2-norm clipping; returns ``grads`` untouched when within the threshold."""
    if clip is None:
        return grads
    norm = grads.global_norm()
    if norm <= clip:
        return grads
    s = clip / norm
    return Gradients([g * s for g in grads.weights], [g * s for g in grads.biases])


def adam_step(net: Network, state: AdamState, grads: Gradients, lrs, clip: float | None = 1.0):
    """Clip, then apply one Adam update in place with a learning rate per weight layer."""
    if np.isscalar(lrs):
        lrs = [float(lrs)] * net.n_layers
    if len(lrs) != net.n_layers:
        raise DimensionMismatch(f"{len(lrs)} learning rates for {net.n_layers} layers")
    grads = clip_gradients(grads, clip)
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for l, lr in enumerate(lrs):
        for p, g, m, v in ((net.weights[l], grads.weights[l], state.m_w[l], state.v_w[l]),
                           (net.biases[l], grads.biases[l], state.m_b[l], state.v_b[l])):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if lr:
                p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net, state


def _dims(net_or_dims):
    return tuple(net_or_dims.layer_dims if isinstance(net_or_dims, Network) else net_or_dims)


def param_count(net_or_dims) -> int:
    d = _dims(net_or_dims)
    return int(sum(a * b + b for a, b in zip(d[:-1], d[1:])))


def flop_count(net_or_dims) -> int:
    """Two FLOPs per multiply-add plus one per bias addition; activations not counted."""
    d = _dims(net_or_dims)
    return int(sum(2 * a * b + b for a, b in zip(d[:-1], d[1:])))


# checkpoint serialization -------------------------------------------------------------

def _emit(obj, out: list):
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        out.append(json.dumps(obj if not isinstance(obj, np.bool_) else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError("non-finite number in checkpoint")
        out.append(format(x, ".17g"))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_exact(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    out = []
    _emit(obj, out)
    return "".join(out)


def network_to_dict(net: Network) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA,
        "layer_dims": list(net.layer_dims),
        "selu_alpha": net.selu_alpha,
        "selu_lambda": net.selu_lambda,
        "weights": net.weights,
        "biases": net.biases,
        "standardizer": None if net.standardizer is None else net.standardizer.to_dict(),
        "coral_reference": net.coral_reference,
        "metadata": _sorted(net.metadata),
        "gain_offset": bool(net.gain_offset),
    }


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sorted(v) for v in obj]
    return obj


def network_from_dict(d: dict) -> Network:
    if str(d.get("schema_version")) != CHECKPOINT_SCHEMA:
        raise SchemaMismatch(f"checkpoint schema {d.get('schema_version')!r}, expected {CHECKPOINT_SCHEMA!r}")
    dims = tuple(int(x) for x in d["layer_dims"])
    weights = [np.asarray(w, dtype=np.float64).reshape(a, b)
               for w, a, b in zip(d["weights"], dims[:-1], dims[1:])]
    biases = [np.asarray(b, dtype=np.float64).reshape(n) for b, n in zip(d["biases"], dims[1:])]
    std = d.get("standardizer")
    ref = d.get("coral_reference")
    return Network(dims, weights, biases, float(d["selu_alpha"]), float(d["selu_lambda"]),
                   None if std is None else Standardizer.from_dict(std),
                   None if ref is None else np.asarray(ref, dtype=np.float64),
                   d.get("metadata") or {}, bool(d.get("gain_offset", False)))


def save_checkpoint(net: Network, path) -> Path:
    path = Path(path)
    path.write_text(dumps_exact(network_to_dict(net)) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
