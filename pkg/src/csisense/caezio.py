"""CAEZ-lite binary container and position-label interpolation.

Layout (all little-endian, packed, fixed record stride):

    magic   'CAEZ' (4 bytes)
    version u32 = 1
    flags   u32: bit0 has_positions, bit1 has_device_ids, bit2 has_orientation
    O, B, D, S as u32
    sample_period f64 [s], carrier f64 [Hz], spacing f64 [Hz]
    area_min 3 x f64, area_max 3 x f64    (2-D areas store z as 0..0)
    oru_positions O x 3 x f64
    sample_count u64

    per sample:
    timestamp f64, rnti u32, device_id u16 (0xFFFF = absent),
    noise_var O x f32, position 3 x f32 (NaN triple = absent),
    orientation 4 x f32 (present only when flagged),
    CSI as interleaved re/im f32 pairs in (o, b, d, s) C order.

CSI is stored as f32 and computed on f64 internally; the in-memory samples
hold complex64 so a write/read roundtrip is bit-exact. A 2-D scenario is
recognized on read by a zero-width z extent (a valid 3-D area must have
area_min < area_max in every component).
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, FormatError, OutOfRangeError, VersionError
from .model import CsiSample, Dataset, ScenarioMeta

MAGIC = b"CAEZ"
VERSION = 1
FLAG_POSITIONS = 1
FLAG_DEVICE_IDS = 2
FLAG_ORIENTATION = 4
DEVICE_ID_ABSENT = 0xFFFF

_HEAD_FIXED = struct.Struct("<4sIIIIIIddd")  # magic..spacing


def header_size(num_orus: int) -> int:
    return _HEAD_FIXED.size + 48 + 24 * num_orus + 8


def record_size(meta: ScenarioMeta, has_orientation: bool) -> int:
    o, b, d, s = meta.csi_shape
    n = 8 + 4 + 2 + 4 * o + 12
    if has_orientation:
        n += 16
    return n + 8 * o * b * d * s


def _pad3(p) -> np.ndarray:
    out = np.zeros(3, dtype=np.float64)
    out[: len(p)] = p
    return out


def _record_dtype(meta: ScenarioMeta, has_orientation: bool) -> np.dtype:
    o, b, d, s = meta.csi_shape
    fields = [
        ("timestamp", "<f8"),
        ("rnti", "<u4"),
        ("device_id", "<u2"),
        ("noise_var", "<f4", (o,)),
        ("position", "<f4", (3,)),
    ]
    if has_orientation:
        fields.append(("orientation", "<f4", (4,)))
    fields.append(("csi", "<f4", (o, b, d, s, 2)))
    return np.dtype(fields)


def write_dataset(ds: Dataset, sink) -> int:
    """Serialize a dataset; returns the byte count written.

    `sink` is a path or a binary file object. I/O errors propagate with the
    target named in the message.
    """
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        try:
            with open(sink, "wb") as f:
                return write_dataset(ds, f)
        except OSError as e:
            raise OSError(f"cannot write CAEZ-lite file {sink!r}: {e}") from e

    meta = ds.meta
    has_pos = len(ds) > 0 and all(s.position is not None for s in ds.samples)
    has_dev = len(ds) > 0 and all(s.device_id is not None for s in ds.samples)
    has_ori = any(s.orientation is not None for s in ds.samples)
    flags = (
        (FLAG_POSITIONS if has_pos else 0)
        | (FLAG_DEVICE_IDS if has_dev else 0)
        | (FLAG_ORIENTATION if has_ori else 0)
    )

    head = bytearray()
    head += _HEAD_FIXED.pack(
        MAGIC,
        VERSION,
        flags,
        meta.num_orus,
        meta.antennas_per_oru,
        meta.num_dmrs,
        meta.num_subcarriers,
        meta.sample_period,
        meta.carrier_frequency,
        meta.subcarrier_spacing,
    )
    head += _pad3(meta.area_min).tobytes()
    head += _pad3(meta.area_max).tobytes()
    for p in meta.oru_positions:
        head += _pad3(p).tobytes()
    head += struct.pack("<Q", len(ds))

    rec_dtype = _record_dtype(meta, has_ori)
    records = np.zeros(len(ds), dtype=rec_dtype)
    for i, s in enumerate(ds.samples):
        r = records[i]
        r["timestamp"] = s.timestamp
        r["rnti"] = s.rnti
        r["device_id"] = DEVICE_ID_ABSENT if s.device_id is None else s.device_id
        r["noise_var"] = s.noise_var
        if s.position is None:
            r["position"] = np.float32(np.nan)
        else:
            p = np.zeros(3, dtype=np.float32)
            p[: len(s.position)] = s.position
            r["position"] = p
        if has_ori:
            r["orientation"] = (
                np.zeros(4, dtype=np.float32) if s.orientation is None else s.orientation
            )
        r["csi"] = np.ascontiguousarray(s.csi)[..., None].view(np.float32)

    payload = records.tobytes()
    sink.write(bytes(head))
    sink.write(payload)
    return len(head) + len(payload)


def read_dataset(source) -> Dataset:
    """Parse a CAEZ-lite container back into a Dataset.

    Raises FormatError on a bad magic, VersionError on an unsupported
    version, and CorruptionError (naming the byte offset / record index)
    when the payload disagrees with the declared header.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        try:
            with open(source, "rb") as f:
                return read_dataset(f)
        except OSError as e:
            raise OSError(f"cannot read CAEZ-lite file {source!r}: {e}") from e

    blob = source.read()
    if len(blob) < _HEAD_FIXED.size:
        raise FormatError("file too short for a CAEZ-lite header")
    magic, version, flags, o, b, d, s, period, carrier, spacing = _HEAD_FIXED.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported CAEZ-lite version {version}")

    hsize = header_size(o)
    if len(blob) < hsize:
        raise CorruptionError(f"truncated header: {len(blob)} bytes < {hsize}")
    off = _HEAD_FIXED.size
    geom = np.frombuffer(blob, dtype="<f8", count=6 + 3 * o, offset=off)
    area_min3, area_max3 = geom[0:3], geom[3:6]
    oru3 = geom[6:].reshape(o, 3)
    off += (6 + 3 * o) * 8
    (count,) = struct.unpack_from("<Q", blob, off)

    # A zero-width z extent marks a 2-D scenario (a 3-D one must be strictly
    # increasing in every component).
    dim = 2 if area_min3[2] == area_max3[2] else 3
    meta = ScenarioMeta(
        num_orus=o,
        antennas_per_oru=b,
        num_dmrs=d,
        num_subcarriers=s,
        subcarrier_spacing=spacing,
        carrier_frequency=carrier,
        sample_period=period,
        area_min=area_min3[:dim],
        area_max=area_max3[:dim],
        oru_positions=oru3[:, :dim],
    )

    has_ori = bool(flags & FLAG_ORIENTATION)
    rec_dtype = _record_dtype(meta, has_ori)
    rsize = rec_dtype.itemsize
    assert rsize == record_size(meta, has_ori)
    payload = blob[hsize:]
    if len(payload) != count * rsize:
        whole = len(payload) // rsize
        raise CorruptionError(
            f"payload holds {len(payload)} bytes but header declares {count} records "
            f"of {rsize} bytes; first incomplete record index {whole}"
        )
    records = np.frombuffer(payload, dtype=rec_dtype, count=count)
    csi_all = records["csi"].view("<c8")[..., 0] if count else None

    samples = []
    for i in range(count):
        r = records[i]
        dev = int(r["device_id"])
        pos3 = r["position"]
        has_pos = not np.all(np.isnan(pos3))
        orient = None
        if has_ori and not np.all(np.asarray(r["orientation"]) == 0):
            orient = np.array(r["orientation"], dtype=np.float32)
        samples.append(
            CsiSample(
                timestamp=float(r["timestamp"]),
                rnti=int(r["rnti"]),
                csi=csi_all[i],
                noise_var=np.array(r["noise_var"], dtype=np.float32),
                device_id=None if dev == DEVICE_ID_ABSENT else dev,
                position=np.array(pos3[:dim], dtype=np.float32) if has_pos else None,
                orientation=orient,
            )
        )
    return Dataset(meta, tuple(samples))


@dataclass(frozen=True)
class LabelTrack:
    """Asynchronous position labels: strictly increasing timestamps plus
    one position per timestamp (e.g. from an external tracking system)."""

    timestamps: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        p = np.asarray(self.positions, dtype=np.float64)
        if t.ndim != 1 or len(t) < 2 or p.shape[0] != len(t) or p.ndim != 2:
            raise ValueError("track needs >= 2 timestamps and one position per timestamp")
        if not np.all(np.diff(t) > 0):
            raise ValueError("track timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)


def interpolate_labels(track: LabelTrack, query_timestamps, margin: float = 0.0) -> np.ndarray:
    """Componentwise linear interpolation of track positions at query times.

    Queries must lie within [first, last] track timestamp; a margin extends
    that range and clamps such queries to the track ends (silent
    extrapolation would corrupt ground truth). Out-of-range queries raise
    OutOfRangeError listing the offenders.
    """
    t = np.asarray(query_timestamps, dtype=np.float64)
    lo, hi = track.timestamps[0], track.timestamps[-1]
    bad = (t < lo - margin) | (t > hi + margin)
    if np.any(bad):
        offenders = t[bad][:8]
        raise OutOfRangeError(
            f"{int(np.sum(bad))} query timestamps outside track range "
            f"[{lo}, {hi}] (margin {margin}): {offenders.tolist()}"
        )
    tq = np.clip(t, lo, hi)
    idx = np.searchsorted(track.timestamps, tq, side="right") - 1
    idx = np.clip(idx, 0, len(track.timestamps) - 2)
    t0 = track.timestamps[idx]
    t1 = track.timestamps[idx + 1]
    w = ((tq - t0) / (t1 - t0))[:, None]
    return (1.0 - w) * track.positions[idx] + w * track.positions[idx + 1]


def labeltrack_to_csv(track: LabelTrack, sink) -> None:
    """Write a track as CSV (timestamp, x, y[, z]) for inspection."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", newline="") as f:
            labeltrack_to_csv(track, f)
        return
    writer = csv.writer(sink)
    dim = track.positions.shape[1]
    writer.writerow(["timestamp"] + ["xyz"[i] for i in range(dim)])
    for t, p in zip(track.timestamps, track.positions):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in p])
