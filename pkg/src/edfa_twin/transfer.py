"""Few-shot transfer of a trained network onto a new device.

Homogeneous transfer fine-tunes on one fully loaded shot per gain setting with an
exponential layer-wise learning rate.  Heterogeneous transfer (mismatched feature sets,
e.g. Booster/Preamp <-> ILA) adds a CORAL penalty that pulls the covariance of the target
batch's last hidden layer toward a reference covariance stored with the source network.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyShots, InsufficientData, MissingFullLoad, MissingReference
from .grid import ConfigClass
from .nn import LossSpec, Network, adam_step, backward, batch_covariance, init_adam, last_hidden
from .train import standardized_features, training_targets


class Mode(str, enum.Enum):
    HOMO = "homo"
    HETERO = "hetero"


@dataclass(frozen=True)
class HomoTlConfig:
    shots_per_gain_setting: int = 1
    epochs: int = 10_000
    alpha0: float = 1e-3
    theta: float = -1.0
    clip: float = 1.0

    def __post_init__(self):
        if self.shots_per_gain_setting < 1 or self.epochs < 0 or self.alpha0 <= 0:
            raise ValueError(f"invalid homogeneous transfer config {self}")


@dataclass(frozen=True)
class HeteroTlConfig:
    shots_per_gain_setting: int = 48
    epochs: int = 10_000
    output_lr: float = 1e-2
    layer_ratio: float = 0.1
    halving_period: int = 2_000
    lambda_coral: float = 0.4
    reference_batch: int = 128
    clip: float = 1.0

    def __post_init__(self):
        if self.reference_batch < 2:
            raise ValueError("reference_batch must be >= 2")
        if self.shots_per_gain_setting < 1 or self.epochs < 0 or self.output_lr <= 0 \
                or self.halving_period < 1 or self.lambda_coral < 0:
            raise ValueError(f"invalid heterogeneous transfer config {self}")


def layer_lr(mode, l: int, L: int, epoch: int, cfg) -> float:
    """Learning rate of weight layer ``l`` (1-based, ``L`` = output layer) at ``epoch``."""
    if not 1 <= l <= L:
        raise ValueError(f"layer {l} outside 1..{L}")
    if Mode(mode) is Mode.HOMO:
        return cfg.alpha0 * 10.0 ** (cfg.theta * (L - l))
    return cfg.output_lr * cfg.layer_ratio ** (L - l) * 0.5 ** (epoch // cfg.halving_period)


def _layer_lrs(mode, L, epoch, cfg):
    return [layer_lr(mode, l, L, epoch, cfg) for l in range(1, L + 1)]


def reference_covariance(net: Network, X_std, n: int = 128, rng: np.random.Generator | None = None):
    """Covariance of the last hidden layer over ``n`` randomly chosen (standardized) vectors."""
    X_std = np.asarray(X_std, dtype=np.float64)
    if X_std.shape[0] < n:
        raise InsufficientData(f"{X_std.shape[0]} vectors available, {n} needed for the reference")
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = np.sort(rng.choice(X_std.shape[0], size=n, replace=False))
    return batch_covariance(last_hidden(net, X_std[idx]))


def attach_reference(net: Network, records, n: int = 128, rng: np.random.Generator | None = None):
    """Return a copy of ``net`` carrying the CORAL reference computed from ``records``."""
    out = net.copy()
    out.coral_reference = reference_covariance(net, standardized_features(net, records), n, rng)
    return out


def tl_shot_sampler(records, mode, shots: int, rng: np.random.Generator) -> list:
    """Per gain setting: the fully loaded record plus, for hetero, ``shots - 1`` Random-class records."""
    mode = Mode(mode)
    if shots < 1:
        raise EmptyShots("at least one shot per gain setting is required")
    out = []
    for g in sorted({r.gain_target_db for r in records}):
        members = [r for r in records if r.gain_target_db == g]
        full = [r for r in members if r.n_active == r.mask.size]
        if not full:
            raise MissingFullLoad(f"gain {g} dB has no fully loaded record")
        if mode is Mode.HOMO:
            picked = [full[int(rng.integers(len(full)))] for _ in range(shots)] if shots > 1 else [full[0]]
        else:
            pool = [r for r in members if r.config_class is ConfigClass.RANDOM and r.n_active != r.mask.size]
            if len(pool) < shots - 1:
                raise InsufficientData(f"gain {g} dB: {len(pool)} Random records, {shots - 1} needed")
            idx = np.sort(rng.choice(len(pool), size=shots - 1, replace=False))
            picked = [full[0]] + [pool[i] for i in idx]
        out += picked
    return out


def _prepare(source: Network, shots):
    if not shots:
        raise EmptyShots("no target records to transfer on")
    net = source.copy()
    X = standardized_features(net, shots)
    Y, M = training_targets(net, shots)
    return net, X, Y, M


def homogeneous_transfer(source: Network, shots, cfg: HomoTlConfig = HomoTlConfig(),
                         rng: np.random.Generator | None = None, *, log=None) -> Network:
    """Full-batch fine-tuning with ``alpha0 * 10**(theta * (L - l))`` per layer."""
    net, X, Y, M = _prepare(source, shots)
    state = init_adam(net)
    lrs = _layer_lrs(Mode.HOMO, net.n_layers, 0, cfg)
    for epoch in range(cfg.epochs):
        grads, lb = backward(net, X, Y, M)
        adam_step(net, state, grads, lrs, cfg.clip)
        if log is not None:
            log("transfer", None, epoch, lb.total)
    net.metadata = dict(net.metadata, transfer="homo", transfer_target=shots[0].device_id,
                        transfer_shots=len(shots), transfer_epochs=cfg.epochs)
    return net


def heterogeneous_transfer(source: Network, shots, cfg: HeteroTlConfig = HeteroTlConfig(),
                           rng: np.random.Generator | None = None, *, log=None,
                           trace: list | None = None) -> Network:
    """Weighted MSE plus ``lambda * CORAL`` against the source's stored reference covariance.

    Each epoch is one Adam step on the whole shot set, or on a random ``reference_batch``-sized
    subset when there are more shots than that.  ``trace`` collects per-epoch LossBreakdowns.
    """
    if cfg.lambda_coral != 0 and source.coral_reference is None:
        raise MissingReference("source checkpoint carries no CORAL reference covariance")
    net, X, Y, M = _prepare(source, shots)
    rng = rng if rng is not None else np.random.default_rng(0)
    loss = LossSpec(cfg.lambda_coral, source.coral_reference if cfg.lambda_coral else None)
    state = init_adam(net)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        if n > cfg.reference_batch:
            idx = np.sort(rng.choice(n, size=cfg.reference_batch, replace=False))
            xb, yb, mb = X[idx], Y[idx], M[idx]
        else:
            xb, yb, mb = X, Y, M
        grads, lb = backward(net, xb, yb, mb, loss)
        adam_step(net, state, grads, _layer_lrs(Mode.HETERO, net.n_layers, epoch, cfg), cfg.clip)
        if trace is not None:
            trace.append(lb)
        if log is not None:
            log("transfer", None, epoch, lb.total)
    net.metadata = dict(net.metadata, transfer="hetero", transfer_target=shots[0].device_id,
                        transfer_shots=len(shots), transfer_epochs=cfg.epochs,
                        lambda_coral=cfg.lambda_coral)
    return net
