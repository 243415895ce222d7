"""Synthetic multi-ORU uplink CSI generation.

A geometric multipath model stands in for the physical testbed: a line-of-
sight path per antenna plus a configurable set of point scatterers, each
contributing a two-segment specular path. Per-device RF fingerprints
(smooth complex transfer functions plus a small per-DMRS phase drift) and
per-ORU white noise at a target slot SNR complete a CsiSample. Motion models
mimic the measurement protocols: random waypoint driving, manually defined
paths, and the rotate/walk/rotate routine used for device measurements.

Everything is a pure function of its inputs plus seed; per-sample noise
streams derive from (seed, sample_index), so generation order never matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import CsiSample, Dataset, ScenarioMeta

C_LIGHT = 299_792_458.0  # m/s

# Default scatterer field: rich but sparse multipath, like a cluttered room.
DEFAULT_NUM_SCATTERERS = 15
SCATTERER_GAIN_RANGE = (0.2, 0.8)
SCATTERER_AREA_INFLATION = 1.5


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer with a complex reflection coefficient, |gain| <= 1."""

    position: np.ndarray
    gain: complex

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        if abs(self.gain) > 1.0 + 1e-12:
            raise ValueError("scatterer |gain| must be <= 1")


@dataclass(frozen=True)
class DeviceFingerprint:
    """Transmit RF-chain transfer function of one device.

    freq_response is a smooth complex ripple over the active subcarriers
    (mean magnitude within [0.5, 2], bounded first difference), and
    dmrs_phase_drift a small phase increment per DMRS symbol. The phase
    structure separates devices while the near-flat magnitude keeps
    magnitude-based positioning features essentially device-independent.
    """

    device_id: int
    freq_response: np.ndarray
    dmrs_phase_drift: float

    def __post_init__(self):
        g = np.asarray(self.freq_response, dtype=np.complex128)
        g.setflags(write=False)
        object.__setattr__(self, "freq_response", g)
        mean_mag = float(np.mean(np.abs(g)))
        if not 0.5 <= mean_mag <= 2.0:
            raise ValueError(f"fingerprint mean magnitude {mean_mag:.3f} outside [0.5, 2]")
        # Noise-like responses have first differences around 1.4x the mean
        # magnitude; genuine RF ripple stays far below 0.5 even on coarse grids.
        if g.size > 1 and float(np.max(np.abs(np.diff(g)))) > 0.5:
            raise ValueError("fingerprint is not smooth (first difference exceeds 0.5)")


@dataclass(frozen=True)
class MotionConfig:
    """Motion model for one measurement run.

    kind: 'random_waypoint' (drive to uniformly drawn targets), 'manual_path'
    (follow `waypoints`), or 'rotation_then_walk' (hold `rotation_point` for
    `dwell` seconds, walk randomly, return for the final `dwell` seconds).
    """

    kind: str = "random_waypoint"
    speed: float = 0.5
    dwell: float = 0.0
    seed: int = 0
    waypoints: Optional[np.ndarray] = None
    rotation_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("random_waypoint", "manual_path", "rotation_then_walk"):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.waypoints is not None:
            object.__setattr__(self, "waypoints", np.asarray(self.waypoints, dtype=np.float64))
        if self.rotation_point is not None:
            object.__setattr__(
                self, "rotation_point", np.asarray(self.rotation_point, dtype=np.float64)
            )


def _inside(p, lo, hi) -> bool:
    return bool(np.all(p >= lo) and np.all(p <= hi))


def _walk_positions(n, start, lo, hi, speed, period, dwell, rng):
    """Random-waypoint positions for n ticks starting at `start`."""
    out = np.empty((n, lo.size), dtype=np.float64)
    pos = start.astype(np.float64).copy()
    target = lo + rng.random(lo.size) * (hi - lo)
    pause = 0.0
    for k in range(n):
        out[k] = pos
        if pause > 0.0:
            pause -= period
            continue
        remaining = speed * period
        while remaining > 0.0:
            leg = target - pos
            dist = float(np.linalg.norm(leg))
            if dist <= remaining:
                pos = target.copy()
                remaining -= dist
                target = lo + rng.random(lo.size) * (hi - lo)
                if dwell > 0.0:
                    pause = dwell
                    break
            else:
                pos = pos + leg * (remaining / dist)
                remaining = 0.0
    return out


def gen_trajectory(meta: ScenarioMeta, motion: MotionConfig, duration: float):
    """Sampled motion path: one (timestamp, position) per sample period.

    Positions stay inside the area bounds, motion is piecewise linear at the
    configured speed, and the result is deterministic given the motion seed.
    Returns (timestamps (n,), positions (n, dim)).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    period = meta.sample_period
    n = int(math.floor(duration / period + 1e-9))
    timestamps = np.arange(n, dtype=np.float64) * period
    lo, hi = meta.area_min, meta.area_max
    rng = np.random.default_rng(np.random.SeedSequence(motion.seed))

    if motion.kind == "random_waypoint":
        start = lo + rng.random(lo.size) * (hi - lo)
        positions = _walk_positions(n, start, lo, hi, motion.speed, period, motion.dwell, rng)

    elif motion.kind == "manual_path":
        if motion.waypoints is None or len(motion.waypoints) < 1:
            raise ValueError("manual_path requires waypoints")
        wps = motion.waypoints
        for w in wps:
            if not _inside(w, lo, hi):
                raise ValueError("manual_path waypoint outside area bounds")
        positions = np.empty((n, lo.size), dtype=np.float64)
        pos = wps[0].copy()
        leg_idx = 1
        for k in range(n):
            positions[k] = pos
            remaining = motion.speed * period
            while remaining > 0.0 and leg_idx < len(wps):
                leg = wps[leg_idx] - pos
                dist = float(np.linalg.norm(leg))
                if dist <= remaining:
                    pos = wps[leg_idx].copy()
                    remaining -= dist
                    leg_idx += 1
                else:
                    pos = pos + leg * (remaining / dist)
                    remaining = 0.0

    else:  # rotation_then_walk
        if motion.dwell <= 0 or duration <= 2 * motion.dwell:
            raise ValueError("rotation_then_walk needs 0 < dwell and duration > 2*dwell")
        anchor = (
            motion.rotation_point
            if motion.rotation_point is not None
            else (lo + hi) / 2.0
        )
        if not _inside(anchor, lo, hi):
            raise ValueError("rotation point outside area bounds")
        positions = np.empty((n, lo.size), dtype=np.float64)
        n_rot = int(math.floor(motion.dwell / period + 1e-9))
        walk_ticks = max(n - 2 * n_rot, 0)
        positions[:n_rot] = anchor
        if walk_ticks:
            positions[n_rot : n_rot + walk_ticks] = _walk_positions(
                walk_ticks, anchor, lo, hi, motion.speed, period, 0.0, rng
            )
        positions[n_rot + walk_ticks :] = anchor

    np.clip(positions, lo, hi, out=positions)
    return timestamps, positions


def spin_orientations(timestamps, rev_per_s: float = 0.1) -> np.ndarray:
    """Unit quaternions for a steady rotation about the vertical axis."""
    half = np.pi * rev_per_s * np.asarray(timestamps, dtype=np.float64)
    q = np.zeros((len(half), 4), dtype=np.float64)
    q[:, 0] = np.cos(half)
    q[:, 3] = np.sin(half)
    return q


def antenna_positions(meta: ScenarioMeta) -> np.ndarray:
    """Antenna coordinates (O, B, dim): half-wavelength line arrays on the x axis,
    centered on each ORU position so the ORU point stays the array centroid."""
    lam = C_LIGHT / meta.carrier_frequency
    b = np.arange(meta.antennas_per_oru, dtype=np.float64)
    offsets = (b - (meta.antennas_per_oru - 1) / 2.0) * (lam / 2.0)
    ants = np.repeat(meta.oru_positions[:, None, :], meta.antennas_per_oru, axis=1).copy()
    ants[:, :, 0] += offsets[None, :]
    return ants


def subcarrier_frequencies(meta: ScenarioMeta) -> np.ndarray:
    """Baseband frequency of each subcarrier: (s - S/2) * spacing."""
    s = np.arange(meta.num_subcarriers, dtype=np.float64)
    return (s - meta.num_subcarriers / 2.0) * meta.subcarrier_spacing


def gen_channel(position, meta: ScenarioMeta, scatterers: Sequence[Scatterer], seed=None) -> np.ndarray:
    """Geometric multipath channel (O, B, S) for a transmitter at `position`.

    Per antenna: a line-of-sight path with delay d/c and amplitude 1/d, plus
    one two-segment path per scatterer with delay (d1+d2)/c and amplitude
    gain/(d1*d2). H[o,b,s] = sum_p a_p * exp(-j 2 pi f_s tau_p) over the
    baseband subcarrier frequencies. Deterministic; `seed` is reserved for
    randomized channel variants and currently unused.
    """
    pos = np.asarray(position, dtype=np.float64)
    if pos.shape != (meta.dim,):
        raise ValueError(f"position must be a {meta.dim}-D point")
    span = meta.area_max - meta.area_min
    lo = meta.area_min - span  # 2x-expanded region around the area
    hi = meta.area_max + span
    if not _inside(pos, lo, hi):
        raise ValueError("position outside the expanded scenario region")

    ants = antenna_positions(meta)  # (O, B, dim)
    d_los = np.linalg.norm(ants - pos, axis=-1)  # (O, B)
    if np.min(d_los) < 1e-6:
        raise ValueError("position coincides with an ORU antenna (singular 1/d)")

    delays = [d_los / C_LIGHT]
    amps = [np.ones_like(d_los) / d_los]
    for sc in scatterers:
        d1 = float(np.linalg.norm(sc.position - pos))
        d2 = np.linalg.norm(ants - sc.position, axis=-1)  # (O, B)
        if d1 < 1e-6 or np.min(d2) < 1e-6:
            raise ValueError("scatterer coincides with the transmitter or an antenna")
        delays.append((d1 + d2) / C_LIGHT)
        amps.append(sc.gain / (d1 * d2))

    tau = np.stack(delays)  # (P, O, B)
    amp = np.stack(amps).astype(np.complex128)
    f = subcarrier_frequencies(meta)  # (S,)
    phase = -2.0 * np.pi * tau[..., None] * f  # (P, O, B, S)
    h = np.einsum("pob,pobs->obs", amp, np.exp(1j * phase))
    return h


def synthesize_sample(
    position,
    meta: ScenarioMeta,
    scatterers: Sequence[Scatterer],
    fingerprint: DeviceFingerprint,
    target_snr_db,
    seed,
    timestamp: float = 0.0,
    rnti: int = 1,
    orientation=None,
    oru_response: Optional[np.ndarray] = None,
) -> CsiSample:
    """One CSI sample: channel x fingerprint x DMRS drift, plus noise at the
    target per-ORU slot SNR.

    SNR is defined as slot-aggregate per ORU: the noise variance of ORU o is
    its mean clean-signal power over (antenna, DMRS, subcarrier) divided by
    10^(snr/10). target_snr_db=None (or +inf) disables noise entirely.
    `oru_response` (O, S) optionally multiplies single ORUs' receive chains,
    used by the next-day surrogate.
    """
    if fingerprint.freq_response.shape != (meta.num_subcarriers,):
        raise ValueError("fingerprint length must match num_subcarriers")
    h = gen_channel(position, meta, scatterers)  # (O, B, S)
    if oru_response is not None:
        h = h * np.asarray(oru_response, dtype=np.complex128)[:, None, :]
    drift = np.exp(1j * fingerprint.dmrs_phase_drift * np.arange(meta.num_dmrs))
    clean = (
        h[:, :, None, :]
        * fingerprint.freq_response[None, None, None, :]
        * drift[None, None, :, None]
    )  # (O, B, D, S)

    noiseless = target_snr_db is None or (
        isinstance(target_snr_db, float) and math.isinf(target_snr_db)
    )
    if noiseless:
        csi = clean
        noise_var = np.zeros(meta.num_orus, dtype=np.float64)
    else:
        if not np.isfinite(target_snr_db):
            raise ValueError("target_snr_db must be finite (or None for noiseless)")
        p_sig = np.mean(np.abs(clean) ** 2, axis=(1, 2, 3))  # (O,)
        noise_var = p_sig / (10.0 ** (target_snr_db / 10.0))
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        shape = clean.shape
        scale = np.sqrt(noise_var / 2.0)[:, None, None, None]
        noise = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        csi = clean + noise

    return CsiSample(
        timestamp=timestamp,
        rnti=rnti,
        csi=csi.astype(np.complex64),
        noise_var=noise_var.astype(np.float32),
        device_id=fingerprint.device_id,
        position=np.asarray(position, dtype=np.float32),
        orientation=orientation,
    )


def make_scatterers(
    meta: ScenarioMeta,
    count: int = DEFAULT_NUM_SCATTERERS,
    seed: int = 0,
    inflation: float = SCATTERER_AREA_INFLATION,
) -> tuple:
    """Random scatterer field: uniform positions in an inflated area,
    |gain| uniform in [0.2, 0.8] with uniform phase."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5CA7)))
    center = (meta.area_min + meta.area_max) / 2.0
    half = (meta.area_max - meta.area_min) / 2.0 * inflation
    out = []
    for _ in range(count):
        pos = center + (rng.random(meta.dim) * 2.0 - 1.0) * half
        mag = rng.uniform(*SCATTERER_GAIN_RANGE)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out.append(Scatterer(pos, mag * np.exp(1j * phase)))
    return tuple(out)


def make_fingerprint(device_id: int, num_subcarriers: int, seed: int) -> DeviceFingerprint:
    """Random but plausible RF-chain response for one device.

    Built as a near-unit magnitude with a phase curve from a low-order random
    polynomial plus a sinusoidal ripple; devices are separated mostly in
    phase, which the positioning magnitude features cannot see.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, device_id, 0xF19E)))
    x = np.linspace(-1.0, 1.0, num_subcarriers)
    order = int(rng.integers(3, 7))
    phase = np.zeros_like(x)
    for k in range(1, order + 1):
        phase += rng.normal(0.0, 1.2 / k) * x**k
    m = int(rng.integers(2, 6))
    phase += rng.uniform(0.2, 0.5) * np.sin(2.0 * np.pi * m * (x + 1.0) / 2.0 + rng.uniform(0, 2 * np.pi))
    # Keep the ripple resolvable on coarse subcarrier grids: cap the phase
    # increment per step so the smoothness invariant holds for any S.
    if num_subcarriers > 1:
        steep = float(np.max(np.abs(np.diff(phase))))
        if steep > 0.25:
            phase *= 0.25 / steep
    mag = 1.0 + rng.uniform(0.05, 0.15) * np.sin(
        2.0 * np.pi * rng.integers(1, 4) * (x + 1.0) / 2.0 + rng.uniform(0, 2 * np.pi)
    )
    g = mag * np.exp(1j * phase)
    g = g / np.mean(np.abs(g))
    drift = rng.uniform(-0.05, 0.05)
    return DeviceFingerprint(device_id, g, drift)


def make_twin_fingerprint(
    fp: DeviceFingerprint, device_id: int, seed: int, epsilon: float = 0.01
) -> DeviceFingerprint:
    """Near-identical copy of a fingerprint (normalized correlation >= 0.999),
    standing in for a second device of the same hardware model."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, device_id, 0x7711)))
    x = np.linspace(-1.0, 1.0, fp.freq_response.size)
    dphase = epsilon * (rng.normal() * x + rng.normal() * x**2)
    g = fp.freq_response * np.exp(1j * dphase)
    g = g / np.mean(np.abs(g))
    return DeviceFingerprint(device_id, g, fp.dmrs_phase_drift + rng.normal(0.0, 0.002))


def fingerprint_correlation(a: DeviceFingerprint, b: DeviceFingerprint) -> float:
    """|<g_a, g_b>| / (||g_a|| ||g_b||): 1 means indistinguishable responses."""
    ga, gb = a.freq_response, b.freq_response
    return float(abs(np.vdot(ga, gb)) / (np.linalg.norm(ga) * np.linalg.norm(gb)))


def make_oru_response(num_subcarriers: int, seed: int, mag_ripple: float = 0.25) -> np.ndarray:
    """Smooth complex receive-chain change for one ORU (next-day surrogate)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x0D0)))
    x = np.linspace(-1.0, 1.0, num_subcarriers)
    mag = 1.0 + mag_ripple * np.sin(np.pi * x + rng.uniform(0, 2 * np.pi))
    phase = rng.normal(0.0, 0.8) * x + rng.uniform(0, 2 * np.pi)
    return mag * np.exp(1j * phase)


def gen_dataset(
    meta: ScenarioMeta,
    motion: MotionConfig,
    scatterers: Sequence[Scatterer],
    fingerprints: Sequence[DeviceFingerprint],
    target_snr_db,
    seed: int,
    duration: float = 60.0,
    labels: str = "position",
    oru_response: Optional[np.ndarray] = None,
    perturbed_oru: Optional[int] = None,
) -> Dataset:
    """Full synthetic dataset; one session of `duration` seconds per device.

    Sessions run back to back on a common clock (timestamps k * period
    throughout), each with its own trajectory seed and RNTI. `labels` selects
    which ground truth is attached: 'position', 'device', or 'both'.
    Deterministic: identical inputs give a bit-identical dataset.
    """
    if len(fingerprints) < 1:
        raise ValueError("need at least one device fingerprint")
    if labels not in ("position", "device", "both"):
        raise ValueError("labels must be 'position', 'device', or 'both'")

    full_response = None
    if perturbed_oru is not None:
        if oru_response is None:
            raise ValueError("perturbed_oru given without oru_response")
        full_response = np.ones((meta.num_orus, meta.num_subcarriers), dtype=np.complex128)
        full_response[perturbed_oru] = oru_response

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x12A7)))
    samples = []
    k = 0
    for dev_idx, fp in enumerate(fingerprints):
        dev_motion = MotionConfig(
            kind=motion.kind,
            speed=motion.speed,
            dwell=motion.dwell,
            seed=int(np.random.SeedSequence((seed, motion.seed, dev_idx)).generate_state(1)[0]),
            waypoints=motion.waypoints,
            rotation_point=motion.rotation_point,
        )
        _, positions = gen_trajectory(meta, dev_motion, duration)
        rnti = int(rng.integers(1, 2**16))
        rotating = motion.kind == "rotation_then_walk"
        n_rot = int(math.floor(motion.dwell / meta.sample_period + 1e-9)) if rotating else 0
        n_dev = len(positions)
        quats = spin_orientations(np.arange(n_dev) * meta.sample_period) if rotating else None

        for i in range(n_dev):
            orient = None
            if rotating and (i < n_rot or i >= n_dev - n_rot):
                orient = quats[i].astype(np.float32)
            s = synthesize_sample(
                positions[i],
                meta,
                scatterers,
                fp,
                target_snr_db,
                seed=(seed, k),
                timestamp=k * meta.sample_period,
                rnti=rnti,
                orientation=orient,
                oru_response=full_response,
            )
            if labels == "position":
                s = CsiSample(s.timestamp, s.rnti, s.csi, s.noise_var, None, s.position, s.orientation)
            elif labels == "device":
                s = CsiSample(s.timestamp, s.rnti, s.csi, s.noise_var, s.device_id, None, s.orientation)
            samples.append(s)
            k += 1

    return Dataset(meta, tuple(samples))
