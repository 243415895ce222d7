"""Optimizers, learning-rate schedules, and early stopping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class OptimizerConfig:
    """Everything the training loop needs besides the data.

    scheduler: 'none', 'step' (multiply lr by sched_factor every sched_period
    epochs) or 'plateau' (multiply once per sched_patience consecutive epochs
    without improvement of the monitored loss). early_stop_patience halts
    training after that many consecutive epochs without improvement and
    restores the best parameters.
    """

    kind: str = "adam"  # adam | rmsprop
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.99
    eps: float = 1e-8
    scheduler: str = "none"  # none | step | plateau
    sched_period: int = 20
    sched_patience: int = 10
    sched_factor: float = 0.1
    early_stop_patience: Optional[int] = None
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.scheduler not in ("none", "step", "plateau"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.sched_factor < 1.0:
            raise ValueError("scheduler factor must be in (0, 1)")
        if self.sched_period < 1 or self.sched_patience < 1:
            raise ValueError("scheduler period/patience must be >= 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


class Adam:
    """Adam with bias correction; the first step has magnitude ~lr."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class RMSprop:
    """Plain (uncentered) RMSprop."""

    def __init__(self, params, lr: float, rho: float = 0.99, eps: float = 1e-8):
        self.lr = float(lr)
        self.rho, self.eps = rho, eps
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.v):
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


def make_optimizer(cfg: OptimizerConfig, params):
    if cfg.kind == "adam":
        return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return RMSprop(params, cfg.learning_rate, cfg.rho, cfg.eps)


class StepDecay:
    """lr *= factor at the end of every `period`-th epoch."""

    def __init__(self, period: int, factor: float):
        self.period, self.factor = period, factor

    def on_epoch_end(self, opt, epoch: int, monitored: float) -> None:
        if epoch % self.period == 0:
            opt.lr *= self.factor


class PlateauDecay:
    """lr *= factor exactly once per `patience` consecutive non-improving epochs."""

    def __init__(self, patience: int, factor: float):
        self.patience, self.factor = patience, factor
        self.best = np.inf
        self.stale = 0

    def on_epoch_end(self, opt, epoch: int, monitored: float) -> None:
        if monitored < self.best:
            self.best = monitored
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                opt.lr *= self.factor
                self.stale = 0


class _NoSchedule:
    def on_epoch_end(self, opt, epoch: int, monitored: float) -> None:
        pass


def make_scheduler(cfg: OptimizerConfig):
    if cfg.scheduler == "step":
        return StepDecay(cfg.sched_period, cfg.sched_factor)
    if cfg.scheduler == "plateau":
        return PlateauDecay(cfg.sched_patience, cfg.sched_factor)
    return _NoSchedule()


class EarlyStopping:
    """Stop after `patience` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, monitored: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if monitored < self.best:
            self.best = monitored
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience
