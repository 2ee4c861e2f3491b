"""Greedy layer-wise denoising pretraining followed by supervised fine-tuning."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import SENTINEL, feature_matrix, fit_standardizer, target_matrix
from .errors import InsufficientData
from .grid import ConfigClass
from .nn import (CANONICAL_DIMS, LossSpec, Network, adam_step, backward, init_adam, init_network,
                 selu)


@dataclass(frozen=True)
class PretrainConfig:
    samples_per_gain_setting: int = 512
    epochs_per_layer: int = 1800
    lr: float = 1e-3
    noise_std: float = 0.1
    clip: float = 1.0

    def __post_init__(self):
        if min(self.samples_per_gain_setting, self.epochs_per_layer) <= 0 or self.lr <= 0 \
                or self.noise_std < 0:
            raise ValueError(f"invalid pretraining config {self}")


@dataclass(frozen=True)
class FinetuneConfig:
    labeled_count: int = 256
    epochs: int = 1200
    lr: float = 1e-3
    batch_size: int = 32
    clip: float = 1.0
    head_init_scale: float = 0.1

    def __post_init__(self):
        if self.labeled_count <= 0 or self.epochs < 0 or self.lr <= 0 or self.batch_size <= 0 \
                or self.head_init_scale < 0:
            raise ValueError(f"invalid fine-tuning config {self}")


class ProgressLog:
    """Collects ``{stage, layer, epoch, loss}`` events; optionally streams them as JSON lines."""

    def __init__(self, stream=None, every: int = 1):
        self.events = []
        self.stream = stream
        self.every = max(1, int(every))

    def __call__(self, stage: str, layer, epoch: int, loss: float):
        event = {"stage": stage, "layer": layer, "epoch": epoch, "loss": float(loss)}
        self.events.append(event)
        if self.stream is not None and (epoch % self.every == 0):
            self.stream.write(json.dumps(event) + "\n")

    def losses(self, stage: str, layer=None) -> list:
        return [e["loss"] for e in self.events
                if e["stage"] == stage and (layer is None or e["layer"] == layer)]

    def stages(self, stage: str = "pretrain") -> list:
        seen = []
        for e in self.events:
            if e["stage"] == stage and e["layer"] not in seen:
                seen.append(e["layer"])
        return seen


def _noop(*_args):
    pass


def pretrain_layer(net: Network, H, l: int, cfg: PretrainConfig, rng: np.random.Generator,
                   log=None) -> tuple[Network, np.ndarray]:
    """Train hidden layer ``l`` (0-based) as a denoising autoencoder encoder on its clean input ``H``.

    Returns a copy of ``net`` with only layer ``l`` changed, and the clean input of layer ``l + 1``.
    Sentinel entries of the raw input are neither corrupted nor scored.
    """
    log = log or _noop
    net = net.copy()
    fan_in, fan_out = net.layer_dims[l], net.layer_dims[l + 1]
    ae = Network((fan_in, fan_out, fan_in),
                 [net.weights[l].copy(), rng.normal(0.0, 1.0, (fan_out, fan_in)) / np.sqrt(fan_out)],
                 [net.biases[l].copy(), np.zeros(fan_in)],
                 net.selu_alpha, net.selu_lambda)
    keep = H != SENTINEL if l == 0 else np.ones(H.shape, dtype=bool)
    state = init_adam(ae)
    for epoch in range(cfg.epochs_per_layer):
        noisy = np.where(keep, H + cfg.noise_std * rng.normal(0.0, 1.0, H.shape), H)
        grads, lb = backward(ae, noisy, H, keep, LossSpec())
        adam_step(ae, state, grads, cfg.lr, cfg.clip)
        log("pretrain", l + 1, epoch, lb.weighted_mse)
    net.weights[l] = ae.weights[0]
    net.biases[l] = ae.biases[0]
    return net, selu(H @ net.weights[l] + net.biases[l], net.selu_alpha, net.selu_lambda)


def pretrain_layerwise(X, cfg: PretrainConfig, rng: np.random.Generator, *, dims=CANONICAL_DIMS,
                       log=None, net: Network | None = None) -> Network:
    """Greedy stacked denoising pretraining of every hidden layer, bottom up.

    ``X`` holds standardized vectors.  Each stage reconstructs the clean output of the frozen
    layers below through a throwaway linear decoder.  The output layer keeps its random
    initialization.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise InsufficientData("pretraining needs at least two vectors")
    net = net.copy() if net is not None else init_network(rng, dims)
    H = X
    for l in range(net.n_layers - 1):
        net, H = pretrain_layer(net, H, l, cfg, rng, log)
    return net


def finetune_supervised(net: Network, X, Y, mask, cfg: FinetuneConfig, rng: np.random.Generator,
                        *, log=None) -> Network:
    """Adam + weighted MSE + global-norm clipping over shuffled mini-batches; all layers train."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise InsufficientData("no labeled records for fine-tuning")
    log = log or _noop
    net = net.copy()
    state = init_adam(net)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, lb = backward(net, X[idx], Y[idx], mask[idx])
            adam_step(net, state, grads, cfg.lr, cfg.clip)
            total += lb.weighted_mse * len(idx)
        log("finetune", None, epoch, total / n)
    return net


def training_targets(net: Network, records) -> tuple[np.ndarray, np.ndarray]:
    """Targets in the network's output space (gain, or gain minus G0 for offset networks)."""
    Y, M = target_matrix(records)
    if net.gain_offset:
        g0 = np.array([r.gain_target_db for r in records])[:, None]
        Y = np.where(M > 0, Y - g0, 0.0)
    return Y, M


def init_output_head(net: Network, Y, mask, scale: float) -> None:
    """Start the output layer near the per-channel mean target.

    A full-size random head adds a ~1 dB random function that few labeled records cannot
    cancel away from the training points.
    """
    counts = mask.sum(axis=0)
    mean = np.where(counts > 0, (Y * mask).sum(axis=0) / np.maximum(counts, 1), 0.0)
    net.biases[-1] = mean
    net.weights[-1] = net.weights[-1] * scale


def select_pretrain_records(records, per_setting: int, rng: np.random.Generator) -> list:
    out = []
    for g in sorted({r.gain_target_db for r in records}):
        members = [r for r in records if r.gain_target_db == g]
        if len(members) < per_setting:
            raise InsufficientData(f"gain {g} dB: {len(members)} records, {per_setting} requested")
        idx = np.sort(rng.choice(len(members), size=per_setting, replace=False))
        out += [members[i] for i in idx]
    return out


def select_labeled_records(records, count: int, rng: np.random.Generator) -> list:
    """All fully loaded records first, topped up with Random-class records."""
    full = [r for r in records if r.n_active == r.mask.size]
    pool = [r for r in records if r.config_class is ConfigClass.RANDOM and r.n_active != r.mask.size]
    if len(full) >= count:
        idx = np.sort(rng.choice(len(full), size=count, replace=False))
        return [full[i] for i in idx]
    need = count - len(full)
    if len(pool) < need:
        raise InsufficientData(f"{len(full) + len(pool)} labeled candidates, {count} requested")
    idx = np.sort(rng.choice(len(pool), size=need, replace=False))
    return full + [pool[i] for i in idx]


def train_direct(train_records, pretrain_cfg: PretrainConfig = PretrainConfig(),
                 finetune_cfg: FinetuneConfig = FinetuneConfig(), seed: int = 0, *,
                 skip_pretrain: bool = False, gain_offset: bool = True, dims=CANONICAL_DIMS,
                 log=None) -> Network:
    """Standardizer fit, optional layer-wise pretraining, then supervised fine-tuning."""
    if not train_records:
        raise InsufficientData("empty training set")
    ss = np.random.SeedSequence(seed)
    init_rng, pre_rng, pick_rng, ft_rng = (np.random.default_rng(s) for s in ss.spawn(4))
    standardizer = fit_standardizer(feature_matrix(train_records))
    net = init_network(init_rng, dims)
    if not skip_pretrain:
        unlabeled = select_pretrain_records(train_records, pretrain_cfg.samples_per_gain_setting, pick_rng)
        net = pretrain_layerwise(standardizer.apply(feature_matrix(unlabeled)), pretrain_cfg, pre_rng,
                                 log=log, net=net)
    labeled = select_labeled_records(train_records, finetune_cfg.labeled_count, pick_rng)
    net.gain_offset = gain_offset
    Y, M = training_targets(net, labeled)
    init_output_head(net, Y, M, finetune_cfg.head_init_scale)
    net = finetune_supervised(net, standardizer.apply(feature_matrix(labeled)), Y, M, finetune_cfg,
                              ft_rng, log=log)
    net.standardizer = standardizer
    first = train_records[0]
    net.metadata = {
        "source_device": first.device_id,
        "kind": first.kind.value,
        "gain_settings": sorted({r.gain_target_db for r in train_records}),
        "training": "direct" if not skip_pretrain else "direct-no-pretrain",
        "pretrained": not skip_pretrain,
        "gain_offset": gain_offset,
        "seed": int(seed),
        "pretrain": asdict(pretrain_cfg),
        "finetune": asdict(finetune_cfg),
    }
    return net


def standardized_features(net: Network, records) -> np.ndarray:
    X = feature_matrix(records)
    return net.standardizer.apply(X) if net.standardizer is not None else X


__all__ = ["PretrainConfig", "FinetuneConfig", "ProgressLog", "pretrain_layer", "pretrain_layerwise",
           "finetune_supervised", "train_direct", "select_labeled_records",
           "select_pretrain_records", "standardized_features", "training_targets",
           "init_output_head"]
