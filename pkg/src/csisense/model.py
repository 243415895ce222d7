"""Shared data model: scenario geometry, CSI samples, and datasets.

All positions are meters in a right-handed local frame whose origin sits at
the lower corner of the measurement area. Areas and positions may be 2-D or
3-D; every pipeline defaults to 2-D. All types are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioMeta:
    """Radio and geometry parameters of one measurement scenario.

    Defaults mirror the full-scale deployment: four radio units (ORUs) with
    four antennas each, three DMRS symbols per uplink slot, 3276 active
    subcarriers at 30 kHz spacing on a 3.45 GHz carrier, one slot every
    20 ms, and a 3.5 m x 3.5 m area with the ORUs just outside its corners.
    """

    num_orus: int = 4
    antennas_per_oru: int = 4
    num_dmrs: int = 3
    num_subcarriers: int = 3276
    subcarrier_spacing: float = 30e3
    carrier_frequency: float = 3.45e9
    sample_period: float = 0.02
    area_min: np.ndarray = field(default=(0.0, 0.0))
    area_max: np.ndarray = field(default=(3.5, 3.5))
    oru_positions: np.ndarray = field(
        default=((-0.5, -0.5), (4.0, -0.5), (-0.5, 4.0), (4.0, 4.0))
    )

    def __post_init__(self):
        object.__setattr__(self, "area_min", _frozen_array(self.area_min, np.float64))
        object.__setattr__(self, "area_max", _frozen_array(self.area_max, np.float64))
        object.__setattr__(
            self, "oru_positions", _frozen_array(self.oru_positions, np.float64)
        )
        if self.num_orus < 2:
            raise ValueError("need at least 2 ORUs")
        if self.antennas_per_oru < 1 or self.num_dmrs < 1:
            raise ValueError("antennas_per_oru and num_dmrs must be >= 1")
        if self.num_subcarriers < 12 or self.num_subcarriers % 12 != 0:
            raise ValueError("num_subcarriers must be a positive multiple of 12 (PRB granularity)")
        if self.subcarrier_spacing <= 0 or self.carrier_frequency <= 0:
            raise ValueError("spacing and carrier frequency must be positive")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        dim = self.area_min.shape[0]
        if dim not in (2, 3) or self.area_max.shape != (dim,):
            raise ValueError("area corners must both be 2-D or 3-D points")
        if not np.all(self.area_min < self.area_max):
            raise ValueError("area_min must be strictly below area_max componentwise")
        if self.oru_positions.shape != (self.num_orus, dim):
            raise ValueError("oru_positions must be one point per ORU, matching the area dimension")
        for i in range(self.num_orus):
            for j in range(i + 1, self.num_orus):
                if np.array_equal(self.oru_positions[i], self.oru_positions[j]):
                    raise ValueError(f"ORU positions {i} and {j} coincide")

    @property
    def dim(self) -> int:
        return self.area_min.shape[0]

    @property
    def csi_shape(self) -> tuple:
        return (
            self.num_orus,
            self.antennas_per_oru,
            self.num_dmrs,
            self.num_subcarriers,
        )

    def __eq__(self, other):
        if not isinstance(other, ScenarioMeta):
            return NotImplemented
        return (
            self.num_orus == other.num_orus
            and self.antennas_per_oru == other.antennas_per_oru
            and self.num_dmrs == other.num_dmrs
            and self.num_subcarriers == other.num_subcarriers
            and self.subcarrier_spacing == other.subcarrier_spacing
            and self.carrier_frequency == other.carrier_frequency
            and self.sample_period == other.sample_period
            and np.array_equal(self.area_min, other.area_min)
            and np.array_equal(self.area_max, other.area_max)
            and np.array_equal(self.oru_positions, other.oru_positions)
        )


@dataclass(frozen=True, eq=False)
class CsiSample:
    """One decoded uplink slot: CSI tensor plus identifiers and labels.

    csi has shape (ORU, antenna, DMRS, subcarrier) in linear amplitude and is
    stored complex64 to match the on-disk container exactly. noise_var holds
    one linear per-ORU noise power. position/orientation are optional labels;
    device_id identifies the transmitter class where known. rnti is the
    session identifier and is deliberately independent of device_id.
    """

    timestamp: float
    rnti: int
    csi: np.ndarray
    noise_var: np.ndarray
    device_id: Optional[int] = None
    position: Optional[np.ndarray] = None
    orientation: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "csi", _frozen_array(self.csi, np.complex64))
        object.__setattr__(self, "noise_var", _frozen_array(self.noise_var, np.float32))
        if self.position is not None:
            object.__setattr__(self, "position", _frozen_array(self.position, np.float32))
        if self.orientation is not None:
            object.__setattr__(self, "orientation", _frozen_array(self.orientation, np.float32))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered sequence of shape-consistent CSI samples plus metadata."""

    meta: ScenarioMeta
    samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples], dtype=np.float64)

    def positions(self) -> np.ndarray:
        """Stacked float64 positions; raises if any sample is unlabelled."""
        pos = [s.position for s in self.samples]
        if any(p is None for p in pos):
            raise ValueError("dataset contains samples without position labels")
        return np.array(pos, dtype=np.float64)

    def device_ids(self) -> np.ndarray:
        ids = [s.device_id for s in self.samples]
        if any(d is None for d in ids):
            raise ValueError("dataset contains samples without device_id labels")
        return np.array(ids, dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.meta, tuple(self.samples[int(i)] for i in indices))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_dataset: ok, or the list of violations found."""

    issues: tuple

    @property
    def ok(self) -> bool:
        return len(self.issues) == 0

    def __str__(self):
        if self.ok:
            return "pass"
        return "fail:\n  " + "\n  ".join(self.issues)


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Check every dataset invariant and report violations with sample indices."""
    issues = []
    meta = ds.meta
    shape = meta.csi_shape

    for i, s in enumerate(ds.samples):
        if s.csi.shape != shape:
            issues.append(f"csi shape {s.csi.shape} != {shape} at index {i}")
            continue
        if not np.all(np.isfinite(s.csi.view(np.float32))):
            issues.append(f"non-finite csi at index {i}")
        if s.noise_var.shape != (meta.num_orus,):
            issues.append(f"noise_var shape {s.noise_var.shape} != ({meta.num_orus},) at index {i}")
        elif not np.all(np.isfinite(s.noise_var)) or np.any(s.noise_var < 0):
            issues.append(f"invalid noise_var at index {i}")
        if s.position is not None:
            if s.position.shape != (meta.dim,):
                issues.append(f"position dimension mismatch at index {i}")
            elif not np.all(np.isfinite(s.position)):
                issues.append(f"non-finite position at index {i}")
        if s.orientation is not None:
            if s.orientation.shape != (4,):
                issues.append(f"orientation must be a quaternion at index {i}")
            elif abs(float(np.linalg.norm(s.orientation.astype(np.float64))) - 1.0) > 1e-3:
                issues.append(f"orientation not unit-norm at index {i}")

    ts = [s.timestamp for s in ds.samples]
    for i in range(1, len(ts)):
        if ts[i] <= ts[i - 1]:
            issues.append(f"timestamps not increasing at index {i}")

    n_pos = sum(1 for s in ds.samples if s.position is not None)
    if 0 < n_pos < len(ds.samples):
        issues.append(f"position labels present on {n_pos}/{len(ds.samples)} samples (must be all or none)")
    n_dev = sum(1 for s in ds.samples if s.device_id is not None)
    if 0 < n_dev < len(ds.samples):
        issues.append(f"device_id present on {n_dev}/{len(ds.samples)} samples (must be all or none)")

    return ValidationReport(tuple(issues))


def split_random_indices(n: int, train_frac: float, holdout_tail: int, seed: int):
    """Index sets for the random train/test split with a held-out tail.

    The last `holdout_tail` indices are reserved (in original order); the
    remainder is partitioned uniformly at random, `train_frac` of it into the
    training set. Selected indices are returned sorted so subsets keep their
    temporal order.
    """
    if holdout_tail < 0 or holdout_tail >= n:
        raise ValueError(f"holdout_tail must be in [0, {n}) for {n} samples")
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    head = n - holdout_tail
    rng = np.random.default_rng(seed)
    perm = rng.permutation(head)
    n_train = int(round(train_frac * head))
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    tail = np.arange(head, n)
    return train, test, tail


def split_random(ds: Dataset, train_frac: float, holdout_tail: int, seed: int):
    """Split a dataset into (train, test, tail) datasets; deterministic per seed."""
    train, test, tail = split_random_indices(len(ds), train_frac, holdout_tail, seed)
    return ds.subset(train), ds.subset(test), ds.subset(tail)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Value-exact equality of two datasets on every field."""
    if a.meta != b.meta or len(a) != len(b):
        return False
    for sa, sb in zip(a.samples, b.samples):
        if sa.timestamp != sb.timestamp or sa.rnti != sb.rnti or sa.device_id != sb.device_id:
            return False
        if not np.array_equal(sa.csi, sb.csi):
            return False
        if not np.array_equal(sa.noise_var, sb.noise_var):
            return False
        for fa, fb in ((sa.position, sb.position), (sa.orientation, sb.orientation)):
            if (fa is None) != (fb is None):
                return False
            if fa is not None and not np.array_equal(fa, fb):
                return False
    return True
