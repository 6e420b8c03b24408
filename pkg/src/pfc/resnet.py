"""Small fully connected residual network trained from scratch with numpy.

The network is x0 = relu(W_in x + b_in), x_{l+1} = x_l + relu(W_l x_l + b_l)
for L residual blocks at constant width, and logits = W_out x_L + b_out,
trained by mini-batch SGD with heavy-ball momentum, coupled weight decay,
and a step learning-rate schedule on the softmax cross entropy.

Training records per-epoch loss and accuracy on the full training set and,
at a configurable epoch stride, a snapshot of all post-activation layer
outputs [x0 .. xL] as a LayerStack together with collapse metrics per
layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DivergenceError, FeatureSet, LayerStack
from .etf import EtfFrame, build_etf
from .metrics import PfcReport, measure


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``lr_decay_epochs`` lists the 1-indexed epochs at which the learning
    rate is multiplied by ``lr_decay_factor`` (taking effect from that
    epoch on).  ``record_stride`` controls how often layer snapshots are
    taken; the final epoch is always recorded.
    """

    num_blocks: int = 6
    width: int = 64
    input_dim: int = 16
    num_classes: int = 4
    per_class: int = 256
    epochs: int = 300
    batch_size: int = 128
    lr: float = 0.01
    lr_decay_factor: float = 0.1
    lr_decay_epochs: tuple[int, ...] = (100, 200)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_biases: bool = True
    seed: int = 0
    record_stride: int = 25

    def __post_init__(self):
        if min(self.num_blocks, self.width, self.input_dim, self.per_class,
               self.epochs, self.batch_size, self.record_stride) < 1:
            raise ValueError("structural sizes must all be >= 1")
        if self.num_classes < 2:
            raise ValueError(f"need num_classes >= 2, got {self.num_classes}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_decay_factor <= 0:
            raise ValueError("lr_decay_factor must be positive")
        decays = tuple(int(e) for e in self.lr_decay_epochs)
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ValueError("lr_decay_epochs must be strictly increasing")
        if decays and (decays[0] < 1 or decays[-1] > self.epochs):
            raise ValueError("lr_decay_epochs must lie within 1..epochs")
        object.__setattr__(self, "lr_decay_epochs", decays)

    def learning_rate(self, epoch: int) -> float:
        """Stepped learning rate in effect during a 1-indexed epoch."""
        drops = int(np.searchsorted(self.lr_decay_epochs, epoch, side="right"))
        return self.lr * self.lr_decay_factor**drops


@dataclass(frozen=True)
class TrainTrace:
    """Per-epoch history, periodic layer snapshots, and final parameters."""

    config: TrainConfig
    losses: np.ndarray
    accuracies: np.ndarray
    snapshot_epochs: tuple[int, ...]
    snapshots: tuple[LayerStack, ...]
    reports: tuple[tuple[PfcReport, ...], ...]
    params: dict = field(repr=False, default_factory=dict)


def init_params(config: TrainConfig) -> dict:
    """Seeded parameter dictionary: Kaiming-scaled Gaussian weights
    (std = sqrt(2 / fan_in)) and zero biases."""
    rng = np.random.default_rng([config.seed, 0])
    w, d = config.width, config.input_dim
    params = {
        "w_in": rng.standard_normal((w, d)) * np.sqrt(2.0 / d),
        "b_in": np.zeros(w),
    }
    for l in range(config.num_blocks):
        params[f"w_block_{l}"] = rng.standard_normal((w, w)) * np.sqrt(2.0 / w)
        params[f"b_block_{l}"] = np.zeros(w)
    params["w_out"] = rng.standard_normal((config.num_classes, w)) * np.sqrt(2.0 / w)
    params["b_out"] = np.zeros(config.num_classes)
    return params


def _forward_cache(params: dict, x: np.ndarray, num_blocks: int):
    preacts = []
    a = params["w_in"] @ x + params["b_in"][:, None]
    preacts.append(a)
    features = [np.maximum(a, 0.0)]
    for l in range(num_blocks):
        a = params[f"w_block_{l}"] @ features[-1] + params[f"b_block_{l}"][:, None]
        preacts.append(a)
        features.append(features[-1] + np.maximum(a, 0.0))
    logits = params["w_out"] @ features[-1] + params["b_out"][:, None]
    return logits, features, preacts


def resnet_forward(params: dict, x: np.ndarray, num_blocks: int):
    """Logits (K x B) and the post-activation features [x0 .. xL] for a
    batch of input columns."""
    logits, features, _ = _forward_cache(params, x, num_blocks)
    return logits, features


def ce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross entropy over batch columns."""
    shifted = logits - logits.max(axis=0, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(shifted), axis=0))
    true_logit = shifted[labels, np.arange(logits.shape[1])]
    return float(np.mean(logsumexp - true_logit))


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=0) == labels))


def resnet_backward(params: dict, x: np.ndarray, labels: np.ndarray, num_blocks: int):
    """Loss, accuracy, and gradient dict for one batch of input columns."""
    logits, features, preacts = _forward_cache(params, x, num_blocks)
    batch = x.shape[1]
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=0, keepdims=True)
    cols = np.arange(batch)
    loss = float(np.mean(np.log(e.sum(axis=0)) - shifted[labels, cols]))
    acc = float(np.mean(np.argmax(logits, axis=0) == labels))

    dz = probs.copy()
    dz[labels, cols] -= 1.0
    dz /= batch

    grads = {
        "w_out": dz @ features[-1].T,
        "b_out": dz.sum(axis=1),
    }
    dx = params["w_out"].T @ dz
    for l in range(num_blocks - 1, -1, -1):
        da = dx * (preacts[l + 1] > 0.0)
        grads[f"w_block_{l}"] = da @ features[l].T
        grads[f"b_block_{l}"] = da.sum(axis=1)
        dx = dx + params[f"w_block_{l}"].T @ da
    da = dx * (preacts[0] > 0.0)
    grads["w_in"] = da @ x.T
    grads["b_in"] = da.sum(axis=1)
    return loss, acc, grads


def train(
    config: TrainConfig,
    data: FeatureSet,
    labels: np.ndarray | None = None,
    target: EtfFrame | None = None,
) -> TrainTrace:
    """Train on a class-contiguous feature set and record collapse metrics.

    Weight decay is added to the raw gradient before the momentum update
    (coupled decay); batches are drawn from a fresh per-epoch permutation
    seeded by (config.seed, epoch), so runs are reproducible.

    Raises:
        DivergenceError: if the full-set loss becomes non-finite.
    """
    if (data.num_classes, data.per_class, data.dim) != (
        config.num_classes,
        config.per_class,
        config.input_dim,
    ):
        raise ValueError(
            "data shape "
            f"(K={data.num_classes}, n={data.per_class}, d={data.dim}) does not "
            f"match config (K={config.num_classes}, n={config.per_class}, "
            f"d={config.input_dim})"
        )
    full_labels = data.labels()
    if labels is not None and not np.array_equal(labels, full_labels):
        raise ValueError("labels must be class-contiguous: 0..K-1 each repeated n times")
    if target is None:
        target = build_etf(config.num_classes, config.width, seed=config.seed)

    x_full = data.features
    params = init_params(config)
    velocity = {name: np.zeros_like(value) for name, value in params.items()}

    losses = np.empty(config.epochs)
    accuracies = np.empty(config.epochs)
    snapshot_epochs: list[int] = []
    snapshots: list[LayerStack] = []
    reports: list[tuple[PfcReport, ...]] = []

    num_samples = data.num_samples
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate(epoch)
        order = np.random.default_rng([config.seed, epoch]).permutation(num_samples)
        # overflow here is the divergence case the isfinite check reports
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, num_samples, config.batch_size):
                batch_idx = order[start : start + config.batch_size]
                _, _, grads = resnet_backward(
                    params, x_full[:, batch_idx], full_labels[batch_idx],
                    config.num_blocks,
                )
                for name, theta in params.items():
                    g = grads[name]
                    if config.weight_decay > 0.0 and (
                        config.decay_biases or not name.startswith("b_")
                    ):
                        g = g + config.weight_decay * theta
                    velocity[name] = config.momentum * velocity[name] + g
                    params[name] = theta - lr * velocity[name]

            logits, features = resnet_forward(params, x_full, config.num_blocks)
            loss = ce_loss(logits, full_labels)
        if not np.isfinite(loss):
            raise DivergenceError(f"training loss became non-finite at epoch {epoch}")
        losses[epoch - 1] = loss
        accuracies[epoch - 1] = accuracy(logits, full_labels)

        if epoch % config.record_stride == 0 or epoch == config.epochs:
            layer_sets = tuple(
                FeatureSet(f, config.num_classes, config.per_class) for f in features
            )
            stack = LayerStack(layer_sets, epoch=epoch)
            snapshot_epochs.append(epoch)
            snapshots.append(stack)
            reports.append(tuple(measure(fs, target) for fs in layer_sets))

    return TrainTrace(
        config=config,
        losses=losses,
        accuracies=accuracies,
        snapshot_epochs=tuple(snapshot_epochs),
        snapshots=tuple(snapshots),
        reports=tuple(reports),
        params=params,
    )
