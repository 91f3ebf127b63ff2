"""Pure-numpy implementations of the hot kernels.

Selected when the compiled extension is unavailable or disabled via
``IDASNET_NO_EXT=1``. Semantics match ``idasnet._kernels._ckern``.
"""

import numpy as np

SQRT_2PI = 2.5066282746310002


def im2col_k3(x):
    """Unfold (N, C, H, W) into patch rows for a 3x3 / pad-1 / stride-1 conv.

    Returns (N*H*W, C*9) with columns ordered (channel, ky, kx) and rows in
    (sample, row, col) raster order. Out-of-frame taps read as zero.
    """
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, c, 9, h, w), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky * 3 + kx] = xp[:, :, ky:ky + h, kx:kx + w]
    return np.ascontiguousarray(cols.transpose(0, 3, 4, 1, 2)).reshape(n * h * w, c * 9)


def col2im_k3(cols, n, c, h, w):
    """Fold patch-row values back onto an (N, C, H, W) grid, accumulating
    overlaps. Adjoint of :func:`im2col_k3`."""
    g = cols.reshape(n, h, w, c, 9).transpose(0, 3, 4, 1, 2)
    xp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            xp[:, :, ky:ky + h, kx:kx + w] += g[:, :, ky * 3 + kx]
    return np.ascontiguousarray(xp[:, :, 1:-1, 1:-1])


def kde_qhat(planes, offsets, bandwidth):
    """Gaussian-kernel probability estimate of each pixel against shifted
    copies of its own image.

    planes: (N, P, H, W). The squared distance at a pixel sums over the P
    planes; neighbours outside the frame read as zero (zero padding).
    Returns (N, H, W): mean over offsets of
    exp(-d^2 / (2 h^2)) / (sqrt(2 pi) h).
    """
    n, p, h, w = planes.shape
    k = len(offsets)
    r = int(np.abs(offsets).max()) if k else 0
    xp = np.zeros((n, p, h + 2 * r, w + 2 * r), dtype=planes.dtype)
    xp[:, :, r:r + h, r:r + w] = planes
    inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    acc = np.zeros((n, h, w), dtype=planes.dtype)
    for dy, dx in offsets:
        shifted = xp[:, :, r + dy:r + dy + h, r + dx:r + dx + w]
        d2 = ((planes - shifted) ** 2).sum(axis=1)
        acc += np.exp(-d2 * inv2h2)
    acc *= 1.0 / (k * SQRT_2PI * bandwidth)
    return acc
