"""Supervised neural positioning with a probability-map head.

Ground-truth positions become Gaussian probability maps over a regular grid;
an MLP with one sigmoid output per grid point is trained against them with
mean-reduced binary cross-entropy. At inference the outputs are renormalized
into a probability map and decoded with the posterior mean, which also gives
a positioning variance estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .features import extract_pos_features
from .model import Dataset
from .nn import OptimizerConfig, bce_mean, mlp, supervised_epoch_factory, train
from .nn.train import TrainHistory

DEFAULT_HIDDEN = (512, 512, 512)


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice of candidate positions covering the area."""

    points: np.ndarray  # (G, dim)
    pitch: float
    area_min: np.ndarray
    area_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "area_min", np.asarray(self.area_min, dtype=np.float64))
        object.__setattr__(self, "area_max", np.asarray(self.area_max, dtype=np.float64))
        if self.pitch <= 0:
            raise ValueError("grid pitch must be positive")
        if len(self.points) < 4:
            raise ValueError("grid needs at least 4 points")
        if np.any(self.points < self.area_min) or np.any(self.points > self.area_max):
            raise ValueError("grid points must lie inside the area bounds")

    @classmethod
    def cover(cls, area_min, area_max, pitch: float) -> "GridSpec":
        """Lattice with spacing `pitch`, cell-centered inside the area."""
        lo = np.asarray(area_min, dtype=np.float64)
        hi = np.asarray(area_max, dtype=np.float64)
        axes = [np.arange(lo[d] + pitch / 2.0, hi[d], pitch) for d in range(len(lo))]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(points, pitch, lo, hi)

    def __len__(self):
        return len(self.points)


def make_gt_map(position, grid: GridSpec, sigma: float) -> np.ndarray:
    """Gaussian probability map around a position, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = np.sum((grid.points - np.asarray(position, dtype=np.float64)) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * sigma**2))
    return w / w.sum()


def make_gt_maps(positions, grid: GridSpec, sigma: float) -> np.ndarray:
    """(N, G) stack of ground-truth maps."""
    pos = np.asarray(positions, dtype=np.float64)
    d2 = np.sum((pos[:, None, :] - grid.points[None, :, :]) ** 2, axis=2)
    w = np.exp(-d2 / (2.0 * sigma**2))
    return w / w.sum(axis=1, keepdims=True)


def posterior_mean(prob_map: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Probability-weighted mean of the grid points (inside their hull)."""
    w = np.asarray(prob_map, dtype=np.float64)
    return w @ grid.points / w.sum()


def posterior_variance(prob_map: np.ndarray, grid: GridSpec) -> float:
    """Mean squared distance from the posterior mean, in m^2."""
    w = np.asarray(prob_map, dtype=np.float64)
    w = w / w.sum()
    mean = w @ grid.points
    return float(w @ np.sum((grid.points - mean) ** 2, axis=1))


def decode_maps(raw_outputs: np.ndarray, grid: GridSpec):
    """Network outputs -> (positions (N, dim), variances (N,)).

    Outputs are clipped to be non-negative and renormalized per sample; a
    degenerate all-zero output decodes to the grid centroid.
    """
    w = np.clip(np.asarray(raw_outputs, dtype=np.float64), 0.0, None)
    sums = w.sum(axis=1, keepdims=True)
    n_pts = len(grid)
    w = np.where(sums > 0, w / np.where(sums > 0, sums, 1.0), 1.0 / n_pts)
    means = w @ grid.points
    diffs = grid.points[None, :, :] - means[:, None, :]
    variances = np.sum(w * np.sum(diffs**2, axis=2), axis=1)
    return means, variances


@dataclass
class PositionerModel:
    """Trained positioning network plus its decoding grid."""

    net: object
    grid: GridSpec
    sigma: float
    history: Optional[TrainHistory] = None

    def predict(self, features: np.ndarray):
        """(N, F) features -> (positions, variances)."""
        return decode_maps(self.net.forward(features), self.grid)


def positioning_config(seed: int = 0) -> OptimizerConfig:
    """Training schedule for the positioning network: Adam, lr 1e-4, batch 10,
    50 epochs, step decay x0.1 every 20 epochs."""
    return OptimizerConfig(
        kind="adam",
        learning_rate=1e-4,
        scheduler="step",
        sched_period=20,
        sched_factor=0.1,
        batch_size=10,
        max_epochs=50,
        seed=seed,
    )


def train_positioner(
    train_ds: Dataset,
    grid: GridSpec,
    opt_cfg: Optional[OptimizerConfig] = None,
    hidden=DEFAULT_HIDDEN,
    sigma: Optional[float] = None,
    seed: int = 0,
    features: Optional[np.ndarray] = None,
) -> PositionerModel:
    """Fit the probability-map MLP on a position-labelled dataset.

    `sigma` defaults to one grid pitch, which keeps the BCE targets
    non-degenerate and the posterior-mean decoding sub-pitch accurate.
    Precomputed features may be passed to avoid re-extraction.
    """
    if any(s.position is None for s in train_ds.samples):
        raise DataError("positioning training requires position labels on every sample")
    x = extract_pos_features(train_ds) if features is None else features
    sigma = grid.pitch if sigma is None else sigma
    y = make_gt_maps(train_ds.positions(), grid, sigma)

    cfg = positioning_config(seed) if opt_cfg is None else opt_cfg
    net = mlp(x.shape[1], hidden, len(grid), out_activation="sigmoid", seed=seed)
    # Start the sigmoid head at the average target map instead of 0.5: the
    # per-point priors are ~1/G, and dragging every output bias there would
    # otherwise consume most of the optimization budget at small step sizes.
    prior = np.clip(y.mean(axis=0), 1e-9, 1.0 - 1e-9)
    net.layers[-1].b[:] = np.log(prior / (1.0 - prior))
    history = train(net, supervised_epoch_factory(x, y, bce_mean, cfg.batch_size), cfg)
    return PositionerModel(net=net, grid=grid, sigma=sigma, history=history)


def error_stats(errors: np.ndarray) -> dict:
    """Mean / median / 95th percentile (linear interpolation) of a sample of
    absolute errors, plus the count."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        return {"mean": float("nan"), "median": float("nan"), "p95": float("nan"), "n": 0}
    return {
        "mean": float(np.mean(e)),
        "median": float(np.percentile(e, 50, method="linear")),
        "p95": float(np.percentile(e, 95, method="linear")),
        "n": int(e.size),
    }


def eval_positioning(model: PositionerModel, test_sets: dict, features: Optional[dict] = None):
    """Evaluate on named datasets.

    Returns (metrics dict per set, per-sample rows). Rows carry (set name,
    timestamp, true position, estimate, error, variance) for CSV export.
    """
    metrics = {}
    rows = []
    for name, ds in test_sets.items():
        x = extract_pos_features(ds) if features is None or name not in features else features[name]
        est, var = model.predict(x)
        true = ds.positions()
        err = np.linalg.norm(est - true, axis=1)
        metrics[name] = error_stats(err)
        for s, t, e, r, v in zip(ds.samples, true, est, err, var):
            rows.append((name, s.timestamp, *t, *e, float(r), float(v)))
    return metrics, rows
