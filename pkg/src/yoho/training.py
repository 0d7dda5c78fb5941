"""Loss, Adam with L2 decay, early stopping and the epoch loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import LogMelExample, MaskParams, spec_augment
from .losses import yoho_loss, yoho_loss_and_grad  # noqa: F401  (re-exported)
from .network import YohoModel, forward_backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    early_stop_min_delta: float = 0.1
    early_stop_patience: int = 5
    l2_lambda: float = 0.001
    max_epochs: int = 100
    seed: int = 0
    augment: bool = True
    presence_weight: float = 1.0
    regression_weight: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-7
    # re-estimate batch-norm statistics on the training set before each validation pass
    bn_recalibrate: bool = True

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.early_stop_patience < 1 or self.max_epochs < 0:
            raise ValueError(f"invalid training configuration: {self}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stop_reason: str = "max-epochs"
    best_epoch: int | None = None

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {
            "epochs": [{"train_loss": t, "val_loss": v} for t, v in zip(self.train_loss, self.val_loss)],
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainHistory":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls([e["train_loss"] for e in doc["epochs"]], [e["val_loss"] for e in doc["epochs"]],
                   doc["stop_reason"], doc["best_epoch"])


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def decays(name: str) -> bool:
    """L2 applies to convolution kernels only, never to batch-norm or biases."""
    return name.endswith("/kernel")


def adam_step(weights: dict, gradients: dict, state: AdamState, lr: float, l2_lambda: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
    """One Adam update in place; L2 enters as ``2 * l2_lambda * w`` added to the gradient."""
    for name, g in gradients.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, w in weights.items():
        g = gradients[name]
        if l2_lambda and decays(name):
            g = g + 2.0 * l2_lambda * w
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype, copy=False)
    return weights, state


class EarlyStopping:
    """Stop after ``patience`` epochs without beating the reference loss by more
    than ``min_delta``. The best weights are tracked separately as the plain
    minimum of the validation loss."""

    def __init__(self, min_delta: float = 0.1, patience: int = 5):
        self.min_delta = min_delta
        self.patience = patience
        self.reference = math.inf
        self.wait = 0
        self.best_loss = math.inf
        self.best_epoch = None

    def update(self, val_loss: float, epoch: int) -> bool:
        """Record one epoch (1-based); returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
        if val_loss < self.reference - self.min_delta:
            self.reference = val_loss
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


def _as_arrays(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        return dataset
    xs, ys = zip(*dataset) if dataset else ((), ())
    xs = [x.values if isinstance(x, LogMelExample) else np.asarray(x) for x in xs]
    if not xs:
        return np.zeros((0, 40, 257)), np.zeros((0, 9, 9))
    return np.stack(xs), np.stack([np.asarray(y) for y in ys])


def evaluate_loss(model: YohoModel, dataset, cfg: TrainConfig = TrainConfig(), batch_size: int = 64) -> float:
    x, y = _as_arrays(dataset)
    was_training = model.training
    model.eval()
    total = 0.0
    try:
        for i in range(0, len(x), batch_size):
            pred = model.forward(x[i:i + batch_size])
            loss, _ = yoho_loss_and_grad(pred, y[i:i + batch_size], cfg.presence_weight, cfg.regression_weight)
            total += loss * len(pred)
    finally:
        model.training = was_training
    return total / len(x)


def train(model: YohoModel, train_set, val_set, cfg: TrainConfig = TrainConfig(),
          mask_params: MaskParams = MaskParams(), on_epoch=None):
    """Fit ``model`` and return it with the best-validation weights restored.

    Datasets are ``(features, targets)`` arrays of shape (N, 40, 257) and
    (N, 9, 9), or sequences of (example, grid) pairs.
    """
    x_train, y_train = _as_arrays(train_set)
    x_val, y_val = _as_arrays(val_set)
    if len(x_train) == 0:
        raise ValueError("empty training set")
    if len(x_val) == 0:
        raise ValueError("empty validation set")
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return model, history

    state = AdamState()
    stopper = EarlyStopping(cfg.early_stop_min_delta, cfg.early_stop_patience)
    best_state = None
    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(x_train))
        model.train()
        total = 0.0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb = x_train[idx]
            if cfg.augment:
                xb = np.stack([spec_augment(LogMelExample(x, 0.0), rng, mask_params).values for x in xb])
            dropout_rng = np.random.default_rng([cfg.seed, epoch, bi])
            loss, grads = forward_backward(model, xb, y_train[idx], rng=dropout_rng,
                                           presence_weight=cfg.presence_weight,
                                           regression_weight=cfg.regression_weight)
            adam_step(model.named_parameters(), grads, state, cfg.learning_rate, cfg.l2_lambda,
                      cfg.beta1, cfg.beta2, cfg.adam_eps)
            total += loss * len(idx)
        if cfg.bn_recalibrate:
            model.calibrate(x_train, cfg.batch_size)
        model.eval()
        train_loss = total / len(x_train)
        val_loss = evaluate_loss(model, (x_val, y_val), cfg)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        stop = stopper.update(val_loss, epoch)
        if stopper.best_epoch == epoch:
            best_state = [(name, value.copy()) for name, value in model.state()]
        log.info("epoch %d: train %.5f val %.5f", epoch, train_loss, val_loss)
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        if stop:
            history.stop_reason = "early-stop"
            break
    history.best_epoch = stopper.best_epoch
    if best_state is not None:
        for name, value in best_state:
            model.set_tensor(name, value)
    model.eval()
    return model, history
