"""Synthetic clustered-multipath MIMO-OFDM channels and the angular-delay
processing that turns them into normalized two-plane images.

The generator replaces a measured channel corpus: each sample is a sum of
clustered paths, every path contributing a complex gain times a phase ramp
across subcarriers (delay) and a uniform-linear-array steering phase across
antennas (angle). Path delays stay inside the first ``n_c`` delay bins so the
delay truncation keeps the dominant energy.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"CSIDATA1"
GENERATOR_VERSION = "clustered-multipath/1"


class ConfigError(ValueError):
    """Invalid generator or normalization configuration."""


@dataclass(frozen=True)
class ChannelGenConfig:
    n_s: int = 1024
    n_r: int = 32
    n_c: int = 32
    clusters: int = 3
    paths_per_cluster: int = 8
    delay_spread: float = 1.0     # per-cluster delay jitter, in delay bins
    angle_spread: float = 0.05    # per-cluster jitter of sin(angle)
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1 or self.paths_per_cluster < 1:
            raise ConfigError("need at least one cluster and one path")
        if not 1 <= self.n_c <= self.n_s:
            raise ConfigError("need 1 <= n_c <= n_s")
        if self.n_r < 1:
            raise ConfigError("need n_r >= 1")
        if self.delay_spread < 0 or self.angle_spread < 0:
            raise ConfigError("spreads must be non-negative")
        if self.n_c < 8:
            raise ConfigError("n_c < 8 leaves no room for the delay window margins")


def generate_channel(cfg: ChannelGenConfig, index: int) -> np.ndarray:
    """One spatial channel matrix (n_s subcarriers x n_r antennas).

    Deterministic in ``(cfg.seed, index)``; every sample has its own RNG
    stream, so datasets are order-independent.
    """
    rng = np.random.default_rng((cfg.seed, index))
    n = np.arange(cfg.n_s)
    r = np.arange(cfg.n_r)
    h = np.zeros((cfg.n_s, cfg.n_r), dtype=np.complex128)
    # Delay window margins keep the leakage outside the first n_c rows small.
    lo, hi = 2.0, cfg.n_c - 6.0
    for k in range(cfg.clusters):
        center_delay = rng.uniform(lo, hi)
        center_mu = rng.uniform(-1.0, 1.0)
        amp = np.exp(-0.6 * k)
        for _ in range(cfg.paths_per_cluster):
            tau = np.clip(center_delay + cfg.delay_spread * rng.normal(),
                          lo, cfg.n_c - 4.0)
            mu = center_mu + cfg.angle_spread * rng.normal()
            gain = amp * (rng.normal() + 1j * rng.normal()) / np.sqrt(2.0)
            h += gain * np.exp(2j * np.pi * tau * n / cfg.n_s)[:, None] \
                      * np.exp(1j * np.pi * mu * r)[None, :]
    # Unit average element power, so dataset scale is stable across samples.
    h /= np.sqrt((np.abs(h) ** 2).mean())
    return h


def generate_dataset(cfg: ChannelGenConfig, count: int) -> np.ndarray:
    """Stack of spatial channels, shape (count, n_s, n_r)."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    return np.stack([generate_channel(cfg, i) for i in range(count)])


def to_angular_delay(h: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT into the angular-delay domain (energy preserving)."""
    return np.fft.fft2(h, norm="ortho")


def from_angular_delay(ha: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_angular_delay`."""
    return np.fft.ifft2(ha, norm="ortho")


def truncate_delay(ha: np.ndarray, n_c: int) -> np.ndarray:
    """Keep the first ``n_c`` delay rows."""
    if n_c > ha.shape[-2]:
        raise ValueError(f"n_c={n_c} exceeds {ha.shape[-2]} delay rows")
    return ha[..., :n_c, :].copy()


def pad_delay(hc: np.ndarray, n_s: int) -> np.ndarray:
    """Zero-pad truncated delay rows back to the full ``n_s`` grid."""
    n_c = hc.shape[-2]
    if n_c > n_s:
        raise ValueError("n_c exceeds n_s")
    out = np.zeros(hc.shape[:-2] + (n_s, hc.shape[-1]), dtype=hc.dtype)
    out[..., :n_c, :] = hc
    return out


def complex_to_planes(hc: np.ndarray) -> np.ndarray:
    """Complex (..., H, W) -> real (..., 2, H, W): real plane then imaginary."""
    return np.stack([hc.real, hc.imag], axis=-3)


def planes_to_complex(planes: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_planes`."""
    return planes[..., 0, :, :] + 1j * planes[..., 1, :, :]


@dataclass(frozen=True)
class NormStats:
    """Dataset-global min/max used for the affine map onto [0, 1]."""

    vmin: float
    vmax: float

    def __post_init__(self):
        if not np.isfinite(self.vmin) or not np.isfinite(self.vmax):
            raise ConfigError("non-finite normalization stats")
        if self.vmax <= self.vmin:
            raise ConfigError("degenerate normalization stats (max <= min)")


def norm_stats_of(planes: np.ndarray) -> NormStats:
    return NormStats(float(planes.min()), float(planes.max()))


def normalize(planes: np.ndarray, stats: NormStats) -> np.ndarray:
    """Affine map onto [0, 1]; out-of-range values (other splits) clamp."""
    scaled = (planes - stats.vmin) / (stats.vmax - stats.vmin)
    return np.clip(scaled, 0.0, 1.0)


def denormalize(planes01: np.ndarray, stats: NormStats) -> np.ndarray:
    return planes01 * (stats.vmax - stats.vmin) + stats.vmin


def build_csi_images(cfg: ChannelGenConfig, count: int) -> np.ndarray:
    """Generate, transform, truncate: raw (count, 2, n_c, n_r) float32 images."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    out = np.empty((count, 2, cfg.n_c, cfg.n_r), dtype=np.float32)
    for i in range(count):
        hc = truncate_delay(to_angular_delay(generate_channel(cfg, i)), cfg.n_c)
        out[i] = complex_to_planes(hc).astype(np.float32)
    return out


@dataclass
class CsiDataset:
    """In-memory view of a CSID v1 file: raw (denormalized) images + header."""

    images: np.ndarray          # (count, 2, n_c, n_r) float32
    header: dict = field(repr=False, default_factory=dict)

    @property
    def count(self):
        return self.images.shape[0]

    @property
    def n_c(self):
        return self.images.shape[2]

    @property
    def n_r(self):
        return self.images.shape[3]

    @property
    def stats(self) -> NormStats:
        return NormStats(self.header["min"], self.header["max"])


def write_csid(path, images: np.ndarray, seed: int, n_s: int | None = None,
               extra: dict | None = None) -> None:
    """Write a CSID v1 dataset file.

    Layout: 8-byte magic, uint32-LE header length, UTF-8 JSON header, then
    count * (2 * n_c * n_r) little-endian float32 (real plane then imaginary,
    row-major per sample).
    """
    images = np.ascontiguousarray(images, dtype="<f4")
    count, planes, n_c, n_r = images.shape
    if planes != 2:
        raise ValueError("images must have two planes")
    header = {
        "count": int(count),
        "n_c": int(n_c),
        "n_r": int(n_r),
        "min": float(images.min()),
        "max": float(images.max()),
        "seed": int(seed),
        "generator_version": GENERATOR_VERSION,
    }
    if n_s is not None:
        header["n_s"] = int(n_s)
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(images.tobytes())
    os.replace(tmp, path)


def read_csid(path) -> CsiDataset:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a CSID v1 file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        count, n_c, n_r = header["count"], header["n_c"], header["n_r"]
        data = np.frombuffer(fh.read(count * 2 * n_c * n_r * 4), dtype="<f4")
    if data.size != count * 2 * n_c * n_r:
        raise ValueError(f"{path}: truncated payload")
    images = data.reshape(count, 2, n_c, n_r).copy()
    return CsiDataset(images=images, header=header)
