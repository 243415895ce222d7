"""Seeded training loop with scheduling, early stopping, and history.

The loop is generic over the batch structure: callers supply a factory that,
given a seeded rng, yields step closures. Each closure computes one
optimization step's (loss, parameter gradients) for the current network, so
supervised batches and multi-forward composite losses (triplets) share the
same machinery. Training is a single logical thread; with a fixed seed and
data order the resulting parameters are bit-identical between runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError
from .layers import Network
from .optim import EarlyStopping, OptimizerConfig, make_optimizer, make_scheduler


@dataclass
class TrainHistory:
    """Per-epoch log: (epoch, mean train loss, monitored val loss, lr)."""

    rows: list = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0

    def append(self, epoch, train_loss, val_loss, lr):
        self.rows.append((epoch, float(train_loss), float(val_loss), float(lr)))

    def final_val_loss(self) -> float:
        return self.rows[-1][2] if self.rows else float("nan")

    def to_csv(self, sink) -> None:
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "w", newline="") as f:
                self.to_csv(f)
            return
        w = csv.writer(sink)
        w.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in self.rows:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])


def train(net: Network, make_epoch, cfg: OptimizerConfig, val_fn=None) -> TrainHistory:
    """Run the optimization loop.

    make_epoch(rng) -> iterable of step closures; each closure(net) returns
    (loss, grads) for one batch. val_fn(net) -> float supplies the monitored
    loss for the scheduler and early stopping; without it the epoch's mean
    training loss is monitored. When early stopping is configured, the best
    parameters seen are restored at the end.
    """
    opt = make_optimizer(cfg, net.params)
    sched = make_scheduler(cfg)
    stopper = EarlyStopping(cfg.early_stop_patience) if cfg.early_stop_patience else None
    history = TrainHistory()
    best_snap = None
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x7A17)))

    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for batch_idx, step in enumerate(make_epoch(rng)):
            loss, grads = step(net)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {batch_idx}"
                )
            opt.step(net.params, grads)
            losses.append(loss)

        train_loss = float(np.mean(losses)) if losses else float("nan")
        monitored = float(val_fn(net)) if val_fn is not None else train_loss
        history.append(epoch, train_loss, monitored, opt.lr)

        if stopper is not None:
            improved = monitored < stopper.best
            stop = stopper.update(epoch, monitored)
            if improved:
                best_snap = net.snapshot()
            if stop:
                history.stopped_early = True
                break
        sched.on_epoch_end(opt, epoch, monitored)

    history.best_epoch = stopper.best_epoch if stopper is not None else len(history.rows)
    if best_snap is not None:
        net.restore(best_snap)
    return history


def supervised_epoch_factory(x: np.ndarray, y: np.ndarray, loss_fn, batch_size: int):
    """Epoch factory for plain (inputs, targets) training.

    loss_fn(pred, target_batch) -> (loss, dpred). Batches reshuffle every
    epoch from the loop's seeded rng.
    """
    n = x.shape[0]

    def make_epoch(rng):
        order = rng.permutation(n)
        steps = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]

            def step(net, idx=idx):
                pred, caches = net.forward_cached(x[idx])
                loss, dpred = loss_fn(pred, y[idx])
                grads = net.backward(dpred, caches)
                return loss, grads

            steps.append(step)
        return steps

    return make_epoch


def numerical_gradients(net: Network, loss_closure, h: float = 1e-6):
    """Central-difference gradients of loss_closure() w.r.t. every parameter.

    Slow by construction; used to validate the analytic backward passes.
    """
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        flat = p.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_closure()
            flat[i] = orig - h
            lo = loss_closure()
            flat[i] = orig
            gf[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads
