"""Loss functions with analytic gradients.

Each returns (value, gradient[s] w.r.t. its prediction inputs), mean-reduced
over the batch so gradients compose directly with Network.backward.
"""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-12


def bce_mean(pred: np.ndarray, target: np.ndarray):
    """Binary cross-entropy, mean over all elements.

    Predictions are clamped to [eps, 1-eps] before the logs, so saturated
    sigmoids never produce non-finite values.
    """
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    t = np.asarray(target, dtype=np.float64)
    loss = -np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    grad = (p - t) / (p * (1.0 - p)) / p.size
    return float(loss), grad


def categorical_ce(logits: np.ndarray, classes: np.ndarray):
    """Softmax cross-entropy on logits, mean over the batch.

    Stabilized by max subtraction; gradient is (softmax - onehot) / N.
    """
    z = np.asarray(logits, dtype=np.float64)
    idx = np.asarray(classes, dtype=np.int64)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(n), idx]))
    p = np.exp(shifted - logsumexp[:, None])
    grad = p
    grad[np.arange(n), idx] -= 1.0
    return loss, grad / n


def _safe_unit(d: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero (hinge subgradient)."""
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    return np.where(n > 0, d / np.where(n > 0, n, 1.0), 0.0)


def triplet_loss(z_a: np.ndarray, z_c: np.ndarray, z_f: np.ndarray, margin: float = 1.0):
    """Hinge on chart distances: mean of max(0, |a-c| - |a-f| + margin).

    Pulls the temporally close sample nearer to its anchor than the far one.
    Returns (loss, dz_a, dz_c, dz_f).
    """
    ac = z_a - z_c
    af = z_a - z_f
    d_ac = np.linalg.norm(ac, axis=1)
    d_af = np.linalg.norm(af, axis=1)
    viol = d_ac - d_af + margin
    active = viol > 0
    n = z_a.shape[0]
    loss = float(np.sum(viol[active]) / n)

    u_ac = _safe_unit(ac)
    u_af = _safe_unit(af)
    m = (active.astype(np.float64) / n)[:, None]
    dz_a = m * (u_ac - u_af)
    dz_c = -m * u_ac
    dz_f = m * u_af
    return loss, dz_a, dz_c, dz_f


def bilateration_loss(z: np.ndarray, oru_positions: np.ndarray, powers_db: np.ndarray,
                      margin_db: float = 13.0):
    """Receive-power ranking hinge, mean over the batch.

    For every ordered ORU pair (b, b') whose receive powers differ by more
    than margin_db, the chart point must sit closer to the stronger ORU:
    each active pair contributes max(0, |z - p_b| - |z - p_b'|).
    Returns (loss, dz).
    """
    z = np.asarray(z, dtype=np.float64)
    p = np.asarray(oru_positions, dtype=np.float64)
    n, o = powers_db.shape[0], p.shape[0]
    diff = z[:, None, :] - p[None, :, :]  # (N, O, dim)
    dist = np.linalg.norm(diff, axis=2)  # (N, O)
    unit = _safe_unit(diff)

    total = 0.0
    dz = np.zeros_like(z)
    for b in range(o):
        for bp in range(o):
            if b == bp:
                continue
            active = (powers_db[:, b] - powers_db[:, bp]) > margin_db
            if not np.any(active):
                continue
            gap = dist[:, b] - dist[:, bp]
            hinge = active & (gap > 0)
            total += float(np.sum(gap[hinge]))
            dz[hinge] += unit[hinge, b] - unit[hinge, bp]
    return total / n, dz / n


def bbox_loss(z: np.ndarray, area_min, area_max):
    """Quadratic penalty outside the axis-aligned box, mean over the batch.

    Per sample: sum over dims of max(0, min - z)^2 + max(0, z - max)^2;
    exactly zero anywhere inside. Returns (loss, dz).
    """
    z = np.asarray(z, dtype=np.float64)
    lo = np.asarray(area_min, dtype=np.float64)
    hi = np.asarray(area_max, dtype=np.float64)
    below = np.maximum(lo - z, 0.0)
    above = np.maximum(z - hi, 0.0)
    n = z.shape[0]
    loss = float(np.sum(below**2 + above**2) / n)
    dz = 2.0 * (above - below) / n
    return loss, dz
