"""Self-supervised channel charting.

Triplets are mined from timestamps alone: for each anchor, one sample close
in time and one far in time (but not too far). The triplet-only variant
trains a 2-D embedding that preserves neighborhoods; the real-world variant
adds a receive-power bilateration hinge against the known ORU positions plus
a quadratic bounding-box penalty, which grounds the chart in actual
coordinates. Chart quality is scored with the rank-based continuity and
trustworthiness metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import extract_chart_features, receive_powers_db
from .model import Dataset
from .nn import (
    OptimizerConfig,
    bbox_loss,
    bilateration_loss,
    mlp,
    train,
    triplet_loss,
)
from .nn.train import TrainHistory
from .positioning import error_stats

DEFAULT_HIDDEN = (256, 256)
DEFAULT_T_CLOSE = 1.0
DEFAULT_T_FAR = 30.0
DEFAULT_TRIPLET_MARGIN = 1.0
DEFAULT_POWER_MARGIN_DB = 13.0
DEFAULT_LOSS_WEIGHTS = {"triplet": 1.0, "bilateration": 1.0, "bbox": 10.0}


@dataclass(frozen=True)
class TripletMiningResult:
    """Mined triplets as an (M, 3) index array [anchor, close, far] plus the
    number of anchors skipped for lack of candidates."""

    triplets: np.ndarray
    skipped_anchors: int


def mine_triplets(
    timestamps,
    t_close: float = DEFAULT_T_CLOSE,
    t_far: float = DEFAULT_T_FAR,
    per_anchor: int = 1,
    seed: int = 0,
) -> TripletMiningResult:
    """Sample triplets per anchor from the time windows.

    close: 0 < |dt| <= t_close; far: t_close < |dt| <= t_far. Anchors without
    a candidate on either side are skipped and counted. Deterministic per
    seed.
    """
    if t_close >= t_far:
        raise ValueError("t_close must be smaller than t_far")
    if per_anchor < 1:
        raise ValueError("per_anchor must be >= 1")
    ts = np.asarray(timestamps, dtype=np.float64)
    n = len(ts)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x731)))
    rows = []
    skipped = 0
    for a in range(n):
        lo_c = np.searchsorted(ts, ts[a] - t_close, side="left")
        hi_c = np.searchsorted(ts, ts[a] + t_close, side="right")
        lo_f = np.searchsorted(ts, ts[a] - t_far, side="left")
        hi_f = np.searchsorted(ts, ts[a] + t_far, side="right")
        close = np.concatenate([np.arange(lo_c, a), np.arange(a + 1, hi_c)])
        far = np.concatenate([np.arange(lo_f, lo_c), np.arange(hi_c, hi_f)])
        if close.size == 0 or far.size == 0:
            skipped += 1
            continue
        for _ in range(per_anchor):
            rows.append((a, rng.choice(close), rng.choice(far)))
    trip = np.array(rows, dtype=np.int64) if rows else np.empty((0, 3), dtype=np.int64)
    return TripletMiningResult(trip, skipped)


@dataclass
class ChartModel:
    """Trained chart embedding network plus its configuration."""

    net: object
    variant: str
    taps: int
    loss_weights: dict
    history: Optional[TrainHistory] = None

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.net.forward(features)


def chart_config(variant: str, seed: int = 0) -> OptimizerConfig:
    """Training schedules for the two variants: Adam at lr 1e-3 with step
    decay x0.1; 300 epochs / batch 100 / decay every 200 for triplet-only,
    200 epochs / batch 256 / decay every 50 for real-world coordinates."""
    if variant == "triplet_only":
        return OptimizerConfig(
            kind="adam", learning_rate=1e-3, scheduler="step", sched_period=200,
            sched_factor=0.1, batch_size=100, max_epochs=300, seed=seed,
        )
    if variant == "real_world":
        return OptimizerConfig(
            kind="adam", learning_rate=1e-3, scheduler="step", sched_period=50,
            sched_factor=0.1, batch_size=256, max_epochs=200, seed=seed,
        )
    raise ValueError(f"unknown charting variant {variant!r}")


def triplets_per_anchor(variant: str) -> int:
    return 1 if variant == "triplet_only" else 2


def train_chart(
    train_ds: Dataset,
    variant: str = "triplet_only",
    opt_cfg: Optional[OptimizerConfig] = None,
    hidden=DEFAULT_HIDDEN,
    taps: int = 25,
    t_close: float = DEFAULT_T_CLOSE,
    t_far: float = DEFAULT_T_FAR,
    triplet_margin: float = DEFAULT_TRIPLET_MARGIN,
    power_margin_db: float = DEFAULT_POWER_MARGIN_DB,
    loss_weights: Optional[dict] = None,
    seed: int = 0,
    features: Optional[np.ndarray] = None,
) -> ChartModel:
    """Fit the 2-D chart MLP on delay-domain features.

    triplet_only minimizes the triplet hinge alone. real_world adds the
    bilateration and bounding-box terms (applied to the anchor embeddings)
    with the configured weights; it needs the ORU positions and per-sample
    receive powers, both taken from the dataset.
    """
    cfg = chart_config(variant, seed) if opt_cfg is None else opt_cfg
    weights = dict(DEFAULT_LOSS_WEIGHTS if loss_weights is None else loss_weights)
    x = extract_chart_features(train_ds, taps) if features is None else features
    mined = mine_triplets(
        train_ds.timestamps(), t_close, t_far, triplets_per_anchor(variant), seed=seed
    )
    trip = mined.triplets
    if len(trip) == 0:
        raise ValueError("no valid triplets; check the time windows against the dataset span")

    real_world = variant == "real_world"
    if real_world:
        powers = receive_powers_db(train_ds)
        oru_pos = train_ds.meta.oru_positions
        lo, hi = train_ds.meta.area_min, train_ds.meta.area_max

    def make_epoch(rng):
        order = rng.permutation(len(trip))
        steps = []
        for start in range(0, len(trip), cfg.batch_size):
            batch = trip[order[start : start + cfg.batch_size]]

            def step(net, batch=batch):
                ia, ic, if_ = batch[:, 0], batch[:, 1], batch[:, 2]
                za, ca = net.forward_cached(x[ia])
                zc, cc = net.forward_cached(x[ic])
                zf, cf = net.forward_cached(x[if_])
                t_loss, dza, dzc, dzf = triplet_loss(za, zc, zf, triplet_margin)
                loss = weights.get("triplet", 1.0) * t_loss
                dza = weights.get("triplet", 1.0) * dza
                if real_world:
                    b_loss, db = bilateration_loss(za, oru_pos, powers[ia], power_margin_db)
                    x_loss, dx = bbox_loss(za, lo, hi)
                    loss += weights["bilateration"] * b_loss + weights["bbox"] * x_loss
                    dza = dza + weights["bilateration"] * db + weights["bbox"] * dx
                grads_a = net.backward(dza, ca)
                grads_c = net.backward(weights.get("triplet", 1.0) * dzc, cc)
                grads_f = net.backward(weights.get("triplet", 1.0) * dzf, cf)
                grads = [ga + gc + gf for ga, gc, gf in zip(grads_a, grads_c, grads_f)]
                return loss, grads

            steps.append(step)
        return steps

    net = mlp(x.shape[1], hidden, 2, out_activation="linear", seed=seed)
    history = train(net, make_epoch, cfg)
    return ChartModel(net=net, variant=variant, taps=taps, loss_weights=weights, history=history)


def _neighbor_ranks(positions: np.ndarray):
    """Stable distance ordering per point, self excluded.

    Returns (order, rank) where order[i] lists the other points by distance
    from i (ties by index) and rank[i, j] is j's 1-based position in that
    ordering.
    """
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    n = positions.shape[0]
    rank = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    rank[rows, order] = np.arange(1, n + 1)[None, :]
    return order, rank


def continuity_trustworthiness(true_positions, chart_positions, k: int):
    """Rank-based chart quality: (continuity, trustworthiness) in [0, 1].

    Trustworthiness penalizes points that appear among the K nearest chart
    neighbors without being true neighbors, weighted by how far down the true
    ranking they sit; continuity swaps the roles of the two spaces. Both are
    1 for any rank-preserving embedding.
    """
    true_pos = np.asarray(true_positions, dtype=np.float64)
    chart_pos = np.asarray(chart_positions, dtype=np.float64)
    n = len(true_pos)
    if len(chart_pos) != n:
        raise ValueError("position sets must have equal length")
    if not 1 <= k < n:
        raise ValueError(f"K must satisfy 1 <= K < N (got K={k}, N={n})")

    order_t, rank_t = _neighbor_ranks(true_pos)
    order_c, rank_c = _neighbor_ranks(chart_pos)
    knn_t = order_t[:, :k]
    knn_c = order_c[:, :k]

    norm = 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0))

    def penalty(knn_a, knn_b, rank_b):
        # sum over points in knn_a but not knn_b of (rank_b - K)
        total = 0
        for i in range(n):
            extra = np.setdiff1d(knn_a[i], knn_b[i], assume_unique=True)
            if extra.size:
                total += int(np.sum(rank_b[i, extra] - k))
        return total

    tw = 1.0 - norm * penalty(knn_c, knn_t, rank_t)
    ct = 1.0 - norm * penalty(knn_t, knn_c, rank_c)
    return float(ct), float(tw)


def bbox_violation_rate(chart_positions, area_min, area_max) -> float:
    """Fraction of chart points outside the axis-aligned box."""
    z = np.asarray(chart_positions, dtype=np.float64)
    inside = np.all((z >= np.asarray(area_min)) & (z <= np.asarray(area_max)), axis=1)
    return float(1.0 - np.mean(inside))


def default_k(n: int, fraction: float = 0.05) -> int:
    """Neighborhood size for CT/TW: 5% of the evaluated set by default."""
    return max(1, int(np.floor(fraction * n)))


def eval_chart(
    model: ChartModel,
    test_sets: dict,
    with_error: bool = False,
    k: Optional[int] = None,
    features: Optional[dict] = None,
):
    """CT/TW (and absolute-error stats for real-world charts) per test set.

    Returns (metrics dict, per-sample rows (set, index, timestamp, chart x/y,
    true x/y) for CSV export).
    """
    metrics = {}
    rows = []
    for name, ds in test_sets.items():
        x = extract_chart_features(ds, model.taps) if features is None or name not in features else features[name]
        z = model.predict(x)
        true = ds.positions()
        kk = default_k(len(ds)) if k is None else k
        ct, tw = continuity_trustworthiness(true, z, kk)
        entry = {"ct": ct, "tw": tw, "k": kk, "n": len(ds)}
        if with_error:
            err = np.linalg.norm(z - true[:, : z.shape[1]], axis=1)
            entry.update(error_stats(err))
            entry["bbox_violations"] = bbox_violation_rate(
                z, ds.meta.area_min, ds.meta.area_max
            )
        metrics[name] = entry
        for i, (s, zt, tt) in enumerate(zip(ds.samples, z, true)):
            rows.append((name, i, s.timestamp, *zt, *tt))
    return metrics, rows
