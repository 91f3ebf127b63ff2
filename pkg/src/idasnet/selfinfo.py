"""Per-pixel self-information from Gaussian-kernel neighbourhood
probabilities, and the threshold/mask machinery built on top.

A patch's probability is estimated as the mean Gaussian kernel value against
its neighbours inside a Chebyshev ("Manhattan radius") window; its
self-information is the negative base-2 log of that estimate. The additive
constant of the underlying density estimate is dropped throughout: only the
ordering of values feeds the thresholds and masks, and ordering is invariant
to additive constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import kde_qhat

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SelfInfoConfig:
    radius: int = 3           # Chebyshev neighbourhood radius R
    patch_size: int = 1       # pixels per patch side; the pipeline uses 1
    bandwidth: float = 1.0    # Gaussian kernel bandwidth on the pixel scale
    neighbor_samples: int = 9
    n_texture: int = 224      # positions zeroed per mask
    sample_seed: int = 0

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        window = (2 * self.radius + 1) ** 2
        if not 1 <= self.neighbor_samples <= window:
            raise ValueError(f"neighbor_samples must be in [1, {window}]")
        if self.n_texture < 0:
            raise ValueError("n_texture must be >= 0")

    @property
    def full_window(self) -> bool:
        return self.neighbor_samples == (2 * self.radius + 1) ** 2


def candidate_offsets(radius: int) -> np.ndarray:
    """All (dy, dx) offsets within the window, excluding (0, 0)."""
    span = range(-radius, radius + 1)
    offs = [(dy, dx) for dy in span for dx in span if (dy, dx) != (0, 0)]
    return np.array(offs, dtype=np.int64)


def full_offsets(radius: int) -> np.ndarray:
    """All (dy, dx) offsets within the window, including (0, 0)."""
    span = range(-radius, radius + 1)
    return np.array([(dy, dx) for dy in span for dx in span], dtype=np.int64)


def sample_offsets(cfg: SelfInfoConfig) -> np.ndarray:
    """The fixed neighbour offsets used by every probability estimate.

    Full-window configs use the whole window (self included, matching the
    direct estimator); otherwise ``neighbor_samples`` offsets are drawn once,
    without replacement, from the non-self candidates.
    """
    if cfg.full_window:
        offs = full_offsets(cfg.radius)
    else:
        cands = candidate_offsets(cfg.radius)
        rng = np.random.default_rng(cfg.sample_seed)
        pick = rng.choice(len(cands), size=cfg.neighbor_samples, replace=False)
        offs = cands[np.sort(pick)]
    offs.setflags(write=False)
    return offs


def estimate_patch_prob(patch, neighbors, bandwidth: float) -> float:
    """Mean Gaussian-kernel value of ``patch`` against ``neighbors``.

    The kernel is exp(-||p - p'||^2 / (2 h^2)) / (sqrt(2 pi) h) with the
    squared Frobenius distance. Always in (0, 1 / (sqrt(2 pi) h)].
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    patch = np.asarray(patch, dtype=np.float64)
    acc = 0.0
    count = 0
    for nb in neighbors:
        d2 = float(((patch - np.asarray(nb, dtype=np.float64)) ** 2).sum())
        acc += math.exp(-d2 / (2.0 * bandwidth * bandwidth))
        count += 1
    if count == 0:
        raise ValueError("need at least one neighbor")
    return acc / (count * SQRT_2PI * bandwidth)


def info_from_qhat(qhat: np.ndarray) -> np.ndarray:
    """Self-information (bits, up to an additive constant) of probability
    estimates. Underflowed estimates clamp to the smallest positive normal
    so the result stays finite."""
    tiny = np.finfo(qhat.dtype).tiny
    return -np.log2(np.maximum(qhat, tiny))


def self_info_map(plane: np.ndarray, cfg: SelfInfoConfig,
                  offsets: np.ndarray | None = None) -> np.ndarray:
    """Self-information estimate for every patch of a single image plane.

    The plane is zero-padded by the radius before neighbours are gathered.
    ``offsets`` overrides the config-derived neighbour set (the pipeline
    passes its fixed sampled offsets). With patch_size n > 1 the patch grid
    shrinks to (H - n + 1, W - n + 1) and distances are squared Frobenius
    norms between n x n windows.
    """
    plane = np.asarray(plane)
    if offsets is None:
        offsets = sample_offsets(cfg)
    if cfg.patch_size == 1:
        qhat = kde_qhat(plane[None, None], offsets, cfg.bandwidth)[0]
        return info_from_qhat(qhat)
    return info_from_qhat(_patch_qhat(plane, cfg, offsets))


def _patch_qhat(plane, cfg, offsets):
    n = cfg.patch_size
    r = cfg.radius
    h, w = plane.shape
    if h < n or w < n:
        raise ValueError("plane smaller than patch")
    padded = np.pad(plane.astype(np.float64), r)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (n, n))
    out_h, out_w = h - n + 1, w - n + 1
    base = windows[r:r + out_h, r:r + out_w]
    inv2h2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth)
    acc = np.zeros((out_h, out_w))
    for dy, dx in offsets:
        nb = windows[r + dy:r + dy + out_h, r + dx:r + dx + out_w]
        d2 = ((base - nb) ** 2).sum(axis=(-1, -2))
        acc += np.exp(-d2 * inv2h2)
    return acc / (len(offsets) * SQRT_2PI * cfg.bandwidth)


def batched_info_maps(stacks: np.ndarray, offsets: np.ndarray,
                      bandwidth: float) -> np.ndarray:
    """Self-information maps for a stack of pixel-patch images via the fast
    kernel. stacks: (N, P, H, W); distances sum over the P planes."""
    return info_from_qhat(kde_qhat(stacks, offsets, bandwidth))


def texture_threshold(info_map: np.ndarray, n_texture: int) -> float:
    """The n_texture-th smallest self-information value.

    Exactly ``n_texture`` positions fall at or below the returned value under
    the stable tie rule (ties broken by ascending row-major index).
    """
    flat = np.asarray(info_map).ravel()
    if not 0 < n_texture < flat.size:
        raise ValueError(f"n_texture must be in (0, {flat.size})")
    return float(np.partition(flat, n_texture - 1)[n_texture - 1])


def stable_smallest_mask(values: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k smallest entries per row of a 2D array.

    Ties at the boundary resolve by ascending column index, so the selected
    set is unique even on constant rows.
    """
    rows, length = values.shape
    if k == 0:
        return np.zeros_like(values, dtype=bool)
    if k >= length:
        raise ValueError("k must be smaller than the row length")
    part = np.partition(values, k - 1, axis=1)
    kth = part[:, k - 1:k]
    less = values < kth
    need = k - less.sum(axis=1, keepdims=True)
    eq = values == kth
    take_eq = eq & (np.cumsum(eq, axis=1) <= need)
    return less | take_eq


def select_texture_positions(info_map: np.ndarray, n_texture: int) -> np.ndarray:
    """Boolean map of the n_texture lowest-information positions."""
    shape = info_map.shape
    flat = info_map.reshape(1, -1)
    return stable_smallest_mask(flat, n_texture).reshape(shape)


def build_masks(info_maps: np.ndarray, thresholds) -> np.ndarray:
    """Binary masks: 0 where the map value is at or below its threshold.

    ``info_maps`` is (num_maps, H, W); ``thresholds`` one value per map.
    """
    maps = np.asarray(info_maps)
    thr = np.asarray(thresholds, dtype=maps.dtype).reshape(-1, 1, 1)
    if thr.shape[0] != maps.shape[0]:
        raise ValueError("one threshold per map required")
    return (maps > thr).astype(maps.dtype)


def masks_from_counts(info_maps: np.ndarray, n_texture: int) -> np.ndarray:
    """Binary masks zeroing exactly ``n_texture`` lowest positions per map.

    Works on any leading shape: (..., H, W) in, same shape out. This is the
    order-statistic form of thresholding; it keeps the zero count exact even
    when values tie at the threshold.
    """
    maps = np.asarray(info_maps)
    h, w = maps.shape[-2:]
    flat = maps.reshape(-1, h * w)
    if n_texture == 0:
        return np.ones_like(maps)
    selected = stable_smallest_mask(flat, n_texture)
    return (~selected).reshape(maps.shape).astype(maps.dtype)
