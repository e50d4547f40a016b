"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``SSLRECON_BACKEND=python``
to force the numpy fallback. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

if os.environ.get("SSLRECON_BACKEND", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

im2col = _impl.im2col
col2im = _impl.col2im
fft_rows = _impl.fft_rows

__all__ = ["BACKEND", "im2col", "col2im", "fft_rows"]
