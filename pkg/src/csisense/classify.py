"""Closed-set device classification on RF-fingerprint features.

The temporal split mirrors the measurement protocol: per device, samples are
sorted by timestamp and the central 12.5% becomes the same-day test set; a
separately recorded dataset (next day) is used for testing only. A compact
convolutional ResNet with a softmax head is trained with categorical
cross-entropy; the scheduler and early stopping monitor the validation loss
computed on the same-day test set, exactly as in the measurement campaign
(optimistic model selection, kept for fidelity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .features import extract_rffi_features
from .model import Dataset
from .nn import OptimizerConfig, categorical_ce, conv_resnet, train
from .nn.layers import Network
from .nn.train import TrainHistory
from . import synth

SAME_DAY_TEST_FRACTION = 0.125
DEFAULT_CHANNELS = 16
DEFAULT_BLOCKS = 3


@dataclass(frozen=True)
class ClassSplit:
    """Index sets into the same-day dataset (train / same-day test) and,
    optionally, into a next-day dataset used wholly for testing."""

    train: np.ndarray
    same_day_test: np.ndarray
    next_day_test: Optional[np.ndarray] = None


def split_dev_class(ds: Dataset, next_day: Optional[Dataset] = None) -> ClassSplit:
    """Per device: center 12.5% of the time-sorted samples to test, rest to train.

    Every sample needs a device_id; devices with fewer than 8 samples cannot
    produce a non-empty center block and are rejected.
    """
    ids = []
    for i, s in enumerate(ds.samples):
        if s.device_id is None:
            raise DataError(f"sample {i} lacks a device_id")
        ids.append(s.device_id)
    ids = np.asarray(ids)
    ts = ds.timestamps()

    train_idx, test_idx = [], []
    for dev in np.unique(ids):
        member = np.flatnonzero(ids == dev)
        member = member[np.argsort(ts[member], kind="stable")]
        n = len(member)
        if n < 8:
            raise ValueError(f"device {dev} has only {n} samples; need >= 8")
        n_test = int(np.floor(SAME_DAY_TEST_FRACTION * n))
        start = (n - n_test) // 2
        center = member[start : start + n_test]
        test_idx.append(center)
        train_idx.append(np.setdiff1d(member, center, assume_unique=True))

    split = ClassSplit(
        train=np.sort(np.concatenate(train_idx)),
        same_day_test=np.sort(np.concatenate(test_idx)),
        next_day_test=np.arange(len(next_day)) if next_day is not None else None,
    )
    return split


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row = true label, column = predicted (trained) label.

    Rows exist for every label observed in the test set, including devices the
    classifier was never trained on; those rows are excluded from accuracy.
    """

    counts: np.ndarray
    true_labels: tuple
    predicted_labels: tuple

    def accuracy(self) -> float:
        """Accuracy over test samples whose true label is a trained class."""
        correct = 0
        total = 0
        for i, lab in enumerate(self.true_labels):
            row = self.counts[i]
            if lab in self.predicted_labels:
                j = self.predicted_labels.index(lab)
                correct += int(row[j])
                total += int(row.sum())
        return correct / total if total else float("nan")

    def row_fraction(self, true_label, predicted_label) -> float:
        """Fraction of one true class assigned to one predicted class."""
        i = self.true_labels.index(true_label)
        j = self.predicted_labels.index(predicted_label)
        row_sum = self.counts[i].sum()
        return float(self.counts[i, j] / row_sum) if row_sum else float("nan")

    def normalized(self) -> np.ndarray:
        """Row-normalized percentages."""
        sums = self.counts.sum(axis=1, keepdims=True)
        return 100.0 * self.counts / np.maximum(sums, 1)

    def to_csv_rows(self, normalized: bool = False):
        data = self.normalized() if normalized else self.counts
        head = ["true\\pred"] + [str(p) for p in self.predicted_labels]
        rows = [head]
        for lab, row in zip(self.true_labels, data):
            rows.append([str(lab)] + [repr(float(v)) if normalized else str(int(v)) for v in row])
        return rows


@dataclass
class ClassifierModel:
    """Trained device classifier: network plus the label order of its head."""

    net: Network
    classes: tuple
    history: Optional[TrainHistory] = None

    def predict_logits(self, features: np.ndarray) -> np.ndarray:
        return self.net.forward(_to_nn_input(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Predicted device ids (argmax over the trained classes)."""
        logits = self.predict_logits(features)
        return np.asarray(self.classes)[np.argmax(logits, axis=1)]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        z = self.predict_logits(features)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def _to_nn_input(features: np.ndarray) -> np.ndarray:
    """(N, S, D, 2) RFFI features -> (N, 2, S, D) with re/im as channels."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 4 or f.shape[-1] != 2:
        raise ValueError("expected RFFI features of shape (N, S, D, 2)")
    return f.transpose(0, 3, 1, 2)


def classifier_config(seed: int = 0, max_epochs: int = 400) -> OptimizerConfig:
    """Training schedule: RMSprop at lr 1e-3, batch 32, at most 400 epochs,
    plateau decay x0.2 after 10 stale epochs, early stop after 30."""
    return OptimizerConfig(
        kind="rmsprop",
        learning_rate=1e-3,
        scheduler="plateau",
        sched_patience=10,
        sched_factor=0.2,
        early_stop_patience=30,
        batch_size=32,
        max_epochs=max_epochs,
        seed=seed,
    )


def train_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    val_features: np.ndarray,
    val_labels: np.ndarray,
    opt_cfg: Optional[OptimizerConfig] = None,
    channels: int = DEFAULT_CHANNELS,
    blocks: int = DEFAULT_BLOCKS,
    seed: int = 0,
) -> ClassifierModel:
    """Fit the convolutional ResNet on (N, S, D, 2) features.

    The validation set drives the plateau scheduler and early stopping; per
    the measurement protocol it is the same-day test set.
    """
    labels = np.asarray(labels)
    classes = tuple(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise ValueError("need at least two device classes")
    for c in classes:
        if not np.any(labels == c):
            raise DataError(f"class {c} has no training samples")
    y = np.searchsorted(np.asarray(classes), labels)

    x = _to_nn_input(features)
    xv = _to_nn_input(val_features)
    yv = np.searchsorted(np.asarray(classes), np.asarray(val_labels))
    cfg = classifier_config(seed) if opt_cfg is None else opt_cfg

    net = conv_resnet(2, channels, blocks, len(classes), input_hw=x.shape[2:], seed=seed)

    n = x.shape[0]

    def make_epoch(rng):
        order = rng.permutation(n)
        steps = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]

            def step(network, idx=idx):
                logits, caches = network.forward_cached(x[idx])
                loss, dlogits = categorical_ce(logits, y[idx])
                return loss, network.backward(dlogits, caches)

            steps.append(step)
        return steps

    def val_fn(network):
        return categorical_ce(network.forward(xv), yv)[0]

    history = train(net, make_epoch, cfg, val_fn=val_fn)
    return ClassifierModel(net=net, classes=classes, history=history)


def evaluate_classifier(
    model: ClassifierModel, features: np.ndarray, true_labels: np.ndarray
):
    """Confusion matrix over all observed true labels plus accuracy.

    Devices absent from training get a confusion row but do not enter the
    accuracy denominator.
    """
    true_labels = np.asarray(true_labels)
    pred = model.predict(features)
    observed = tuple(int(c) for c in np.unique(true_labels))
    counts = np.zeros((len(observed), len(model.classes)), dtype=np.int64)
    for t, p in zip(true_labels, pred):
        counts[observed.index(int(t)), model.classes.index(int(p))] += 1
    cm = ConfusionMatrix(counts, observed, model.classes)
    return cm, cm.accuracy()


@dataclass(frozen=True)
class NextDayConfig:
    """Knobs for the synthetic next-day surrogate.

    Fingerprints are reused unchanged (device identity persists); scatterers
    and trajectories re-randomize, and exactly one ORU gets a fixed smooth
    receive-chain change, mimicking a re-wired radio unit plus a slightly
    rearranged environment.
    """

    fingerprints: tuple
    seed: int = 1
    perturbed_oru: int = 0
    scatterer_count: int = synth.DEFAULT_NUM_SCATTERERS
    target_snr_db: Optional[float] = 28.0
    duration: Optional[float] = None
    motion: Optional[synth.MotionConfig] = None


def next_day_perturbation(ds: Dataset, cfg: NextDayConfig) -> Dataset:
    """Generate the next-day surrogate for a same-day classification dataset."""
    meta = ds.meta
    per_device = len(ds) // max(len(cfg.fingerprints), 1)
    duration = (
        cfg.duration if cfg.duration is not None else per_device * meta.sample_period
    )
    motion = cfg.motion or synth.MotionConfig(kind="random_waypoint", speed=1.0, seed=cfg.seed)
    scatterers = synth.make_scatterers(meta, cfg.scatterer_count, seed=cfg.seed)
    response = synth.make_oru_response(meta.num_subcarriers, seed=cfg.seed)
    return synth.gen_dataset(
        meta,
        motion,
        scatterers,
        cfg.fingerprints,
        cfg.target_snr_db,
        seed=cfg.seed,
        duration=duration,
        labels="device",
        oru_response=response,
        perturbed_oru=cfg.perturbed_oru,
    )


def rffi_fisher_ratio(features: np.ndarray, labels: np.ndarray) -> float:
    """Between-class over within-class dispersion of RFFI features.

    A ratio above 1 means device identity moves the features more than the
    wireless channel does, which is what makes location-insensitive
    classification possible.
    """
    f = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    mus = np.stack([f[labels == c].mean(axis=0) for c in classes])
    within = float(
        np.mean([np.mean(np.sum((f[labels == c] - mus[i]) ** 2, axis=1))
                 for i, c in enumerate(classes)])
    )
    pair_d2 = [
        np.sum((mus[i] - mus[j]) ** 2)
        for i in range(len(classes))
        for j in range(i + 1, len(classes))
    ]
    between = float(np.mean(pair_d2))
    return between / within if within > 0 else float("inf")
