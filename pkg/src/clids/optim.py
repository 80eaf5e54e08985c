"""Adam (and a plain-SGD baseline) plus the epoch-level training loop.

Optimizers operate on a dict of named parameter arrays and update them in
place; gradients arrive as a matching dict from ``ModelGraph.loss_and_grad``.
The loop shuffles each epoch with a stream derived from (seed, epoch), so a
run is a pure function of its config and inputs, and always keeps the
last-epoch model — no early stopping, no best-checkpoint tracking.
"""

from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .errors import EmptyDataset, InvalidConfig, ShapeMismatch

__all__ = ["Adam", "SGD", "TrainConfig", "TrainReport", "train", "dataset_pass"]


class Adam:
    """Standard Adam with bias correction.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(
                    f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


class SGD:
    """Plain gradient descent baseline; mostly useful in tests."""

    def __init__(self, lr=1e-3):
        self.lr = float(lr)

    def step(self, params, grads):
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(
                    f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            p -= self.lr * g


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def validate(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0.0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise InvalidConfig(f"betas must lie in [0, 1), got "
                                f"{self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        return self

    def to_json_obj(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }


@dataclass
class TrainReport:
    """Per-epoch trajectories; index i is epoch i+1."""

    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    def epoch_rows(self):
        rows = []
        for i in range(len(self.train_loss)):
            rows.append({
                "epoch": i + 1,
                "train_loss": self.train_loss[i],
                "train_accuracy": self.train_accuracy[i],
                "val_loss": self.val_loss[i],
                "val_accuracy": self.val_accuracy[i],
            })
        return rows


def dataset_pass(graph, ds, batch_size):
    """Infer-mode mean loss and accuracy over a whole dataset."""
    total_loss = 0.0
    correct = 0
    n = ds.features.shape[0]
    if n == 0:
        raise EmptyDataset("cannot evaluate an empty dataset")
    for xb, yb in data_mod.batches(ds, batch_size, shuffle_seed=None):
        loss, probs = graph.loss_and_probs(xb, yb, train=False)
        total_loss += loss * xb.shape[0]
        correct += int((probs.argmax(axis=1) == yb.argmax(axis=1)).sum())
    return total_loss / n, correct / n


def train(graph, train_ds, val_ds, cfg):
    """Mini-batch Adam for cfg.epochs epochs; returns a TrainReport.

    Train loss/accuracy are accumulated from the train-mode batches as
    training progresses (so epoch 1 reflects a moving model); validation
    metrics come from a clean infer-mode pass after each epoch.
    """
    cfg.validate()
    n_train = train_ds.features.shape[0]
    if n_train == 0:
        raise EmptyDataset("training split is empty")
    if val_ds.features.shape[0] == 0:
        raise EmptyDataset("validation split is empty")

    params = graph.named_parameters()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               epsilon=cfg.epsilon)
    report = TrainReport()

    for epoch in range(cfg.epochs):
        if cfg.shuffle:
            shuffle_seed = int(
                np.random.SeedSequence([cfg.seed, epoch]).generate_state(1)[0])
        else:
            shuffle_seed = None
        epoch_loss = 0.0
        epoch_correct = 0
        for xb, yb in data_mod.batches(train_ds, cfg.batch_size, shuffle_seed):
            loss, grads, probs = graph.loss_and_grad(xb, yb)
            opt.step(params, grads)
            epoch_loss += loss * xb.shape[0]
            epoch_correct += int((probs.argmax(axis=1) == yb.argmax(axis=1)).sum())
        report.train_loss.append(epoch_loss / n_train)
        report.train_accuracy.append(epoch_correct / n_train)
        vl, va = dataset_pass(graph, val_ds, cfg.batch_size)
        report.val_loss.append(vl)
        report.val_accuracy.append(va)
    return report
