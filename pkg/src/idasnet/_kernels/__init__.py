"""Numeric hot kernels with a compiled fast path.

The Cython extension is used when built; set ``IDASNET_NO_EXT=1`` to force
the pure-numpy fallback (useful for benchmarking and debugging).
"""

import os

from . import fallback

if os.environ.get("IDASNET_NO_EXT"):
    _impl = fallback
    HAVE_EXT = False
else:
    try:
        from . import _ckern as _impl
        HAVE_EXT = True
    except ImportError:
        _impl = fallback
        HAVE_EXT = False

im2col_k3 = _impl.im2col_k3
col2im_k3 = _impl.col2im_k3
kde_qhat = _impl.kde_qhat

__all__ = ["im2col_k3", "col2im_k3", "kde_qhat", "HAVE_EXT", "fallback"]
