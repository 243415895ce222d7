"""CSI feature extraction for the three sensing tasks.

Positioning features: per-antenna magnitude profiles, DMRS-averaged,
low-passed and decimated by 12 (one value per PRB), unit-normalized.
Charting features: per-antenna delay-domain autocorrelations (unitary IDFT
of the DMRS-averaged squared magnitudes), truncated to the first taps,
real/imag stacked, unit-normalized. Device (RFFI) features: the dominant
left singular vector of the column-normalized stacked per-DMRS channel
matrix, reshaped to (subcarrier, DMRS, re/im) so the common transmit-chain
structure survives while per-antenna channels cancel.

All extractors are pure functions: identical input gives identical output.
"""

from __future__ import annotations

import csv
import struct
import warnings

import numpy as np

from .dsp import dft, dominant_left_singular_vectors, unit_normalize
from .errors import DegenerateInputError, FormatError
from .model import CsiSample, Dataset

DOWNSAMPLE = 12  # PRB width in subcarriers
DEFAULT_CHART_TAPS = 25


def _boxcar_decimate(mags: np.ndarray) -> np.ndarray:
    """Length-12 moving average with edge replication, sampled at window
    centers (offset 6, stride 12) along the last axis."""
    s = mags.shape[-1]
    padded = np.concatenate(
        [
            np.repeat(mags[..., :1], 5, axis=-1),
            mags,
            np.repeat(mags[..., -1:], 6, axis=-1),
        ],
        axis=-1,
    )
    csum = np.cumsum(padded, axis=-1, dtype=np.float64)
    csum = np.concatenate([np.zeros_like(csum[..., :1]), csum], axis=-1)
    smooth = (csum[..., DOWNSAMPLE:] - csum[..., :-DOWNSAMPLE]) / DOWNSAMPLE  # window mean per index
    return smooth[..., 6::DOWNSAMPLE]


def extract_pos_feature(sample: CsiSample) -> np.ndarray:
    """Positioning feature: unit-norm vector of length O*B*(S/12).

    |csi| averaged over DMRS symbols, boxcar low-pass, one sample per PRB,
    antennas concatenated in (oru, antenna) order. Invariant to any complex
    scaling of the CSI and to per-subcarrier phase rotations.
    """
    o, b, d, s = sample.csi.shape
    if s % DOWNSAMPLE != 0:
        raise ValueError("subcarrier count must be divisible by 12")
    mags = np.abs(sample.csi.astype(np.complex128)).mean(axis=2)  # (O, B, S)
    feat = _boxcar_decimate(mags).reshape(-1)
    if not np.any(feat):
        raise DegenerateInputError("all-zero CSI tensor")
    return unit_normalize(feat)


def extract_chart_feature(sample: CsiSample, taps: int = DEFAULT_CHART_TAPS) -> np.ndarray:
    """Charting feature: unit-norm vector of length O*B*2*taps.

    Squared magnitudes averaged over DMRS, unitary IDFT to the delay domain,
    first `taps` complex taps kept, stacked as [real, imag] per antenna.
    Phase rotations of the CSI cancel in |.|^2, so the feature depends only
    on power delay structure.
    """
    o, b, d, s = sample.csi.shape
    if not 1 <= taps <= s:
        raise ValueError(f"taps must be in [1, {s}]")
    power = (np.abs(sample.csi.astype(np.complex128)) ** 2).mean(axis=2)  # (O, B, S)
    delay = dft(power.astype(np.complex128), inverse=True, axis=-1)[..., :taps]
    feat = np.concatenate([delay.real, delay.imag], axis=-1).reshape(-1)
    if not np.any(feat):
        raise DegenerateInputError("all-zero CSI tensor")
    return unit_normalize(feat)


def _stacked_columns(csi: np.ndarray) -> np.ndarray:
    """(O, B, D, S) -> (D*S, O*B): per-DMRS channel matrices with columns in
    (oru-major, antenna-minor) order, stacked along rows DMRS-major."""
    o, b, d, s = csi.shape
    return np.transpose(csi.astype(np.complex128), (2, 3, 0, 1)).reshape(d * s, o * b)


def extract_rffi_feature(sample: CsiSample) -> np.ndarray:
    """Device-fingerprint feature: real tensor (S, D, 2), unit Frobenius norm.

    Columns of the stacked matrix are normalized to unit norm first, which
    makes the feature exactly invariant to arbitrary nonzero per-antenna
    complex gains; the dominant left singular vector is then reshaped back
    to (subcarrier, DMRS) with real/imag in the trailing axis.
    """
    return extract_rffi_features_batch(sample.csi[None])[0]


def extract_rffi_features_batch(csi_batch: np.ndarray) -> np.ndarray:
    """Batched RFFI extraction, (N, O, B, D, S) -> (N, S, D, 2)."""
    n, o, b, d, s = csi_batch.shape
    if o * b < 2:
        raise ValueError("need at least two antenna columns")
    m = np.transpose(csi_batch.astype(np.complex128), (0, 3, 4, 1, 2)).reshape(n, d * s, o * b)
    norms = np.linalg.norm(m, axis=1)  # (N, O*B)
    dead = norms == 0.0
    if np.any(dead):
        i, col = np.argwhere(dead)[0]
        raise DegenerateInputError(
            f"zero column (dead antenna) at oru {col // b}, antenna {col % b}"
            + (f" in batch item {i}" if n > 1 else "")
        )
    m = m / norms[:, None, :]
    u, _ = dominant_left_singular_vectors(m)  # (N, D*S)
    u = u.reshape(n, d, s).transpose(0, 2, 1)  # (N, S, D)
    return np.stack([u.real, u.imag], axis=-1)


def receive_power_db(sample: CsiSample, oru: int) -> float:
    """Receive signal power of one ORU in dB: 10 log10 mean |csi|^2 over
    (antenna, DMRS, subcarrier). An all-zero block yields -inf with a warning."""
    o = sample.csi.shape[0]
    if not 0 <= oru < o:
        raise ValueError(f"oru index {oru} out of range [0, {o})")
    p = float(np.mean(np.abs(sample.csi[oru].astype(np.complex128)) ** 2))
    if p == 0.0:
        warnings.warn(f"all-zero CSI block for ORU {oru}", RuntimeWarning, stacklevel=2)
        return float("-inf")
    return float(10.0 * np.log10(p))


def receive_powers_db(ds: Dataset) -> np.ndarray:
    """(N, O) receive powers for a whole dataset."""
    return np.array(
        [[receive_power_db(s, o) for o in range(ds.meta.num_orus)] for s in ds.samples]
    )


def extract_pos_features(ds: Dataset) -> np.ndarray:
    return np.stack([extract_pos_feature(s) for s in ds.samples])


def extract_chart_features(ds: Dataset, taps: int = DEFAULT_CHART_TAPS) -> np.ndarray:
    return np.stack([extract_chart_feature(s, taps) for s in ds.samples])


def extract_rffi_features(ds: Dataset, batch: int = 512) -> np.ndarray:
    """(N, S, D, 2) RFFI features, extracted in batches for speed."""
    out = []
    for i in range(0, len(ds), batch):
        chunk = np.stack([s.csi for s in ds.samples[i : i + batch]])
        out.append(extract_rffi_features_batch(chunk))
    return np.concatenate(out) if out else np.empty((0,))


# --- feature file export -----------------------------------------------------
# Flat f32 binary with a short header: magic 'FEAT', kind tag u32
# (0 positioning, 1 charting, 2 device), ndim u32, dims u32 each.

FEATURE_MAGIC = b"FEAT"
FEATURE_KINDS = {"positioning": 0, "charting": 1, "device": 2}


def write_feature_file(path, kind: str, features: np.ndarray) -> int:
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    arr = np.asarray(features, dtype=np.float32)
    with open(path, "wb") as f:
        head = FEATURE_MAGIC + struct.pack("<II", FEATURE_KINDS[kind], arr.ndim)
        head += struct.pack(f"<{arr.ndim}I", *arr.shape)
        f.write(head)
        f.write(arr.tobytes())
        return len(head) + arr.nbytes


def read_feature_file(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError("not a feature file")
    kind_tag, ndim = struct.unpack_from("<II", blob, 4)
    dims = struct.unpack_from(f"<{ndim}I", blob, 12)
    arr = np.frombuffer(blob, dtype=np.float32, offset=12 + 4 * ndim).reshape(dims)
    kind = {v: k for k, v in FEATURE_KINDS.items()}[kind_tag]
    return kind, arr


def features_to_csv(features: np.ndarray, sink) -> None:
    """Row-per-sample CSV of a (N, F) feature matrix; for small batches."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", newline="") as f:
            features_to_csv(features, f)
        return
    arr = np.asarray(features)
    arr = arr.reshape(arr.shape[0], -1)
    writer = csv.writer(sink)
    writer.writerow([f"f{i}" for i in range(arr.shape[1])])
    for row in arr:
        writer.writerow([repr(float(v)) for v in row])
