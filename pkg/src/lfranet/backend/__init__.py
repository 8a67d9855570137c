"""Kernel backend selection.

The compiled extension (``lfranet.backend._core``) is preferred when built;
otherwise the NumPy fallback is used.  Both expose the same functions with
bit-identical results, so the choice only affects speed.

Set ``LFRANET_BACKEND=numpy`` or ``LFRANET_BACKEND=cython`` to force one.
"""

import os

from . import numpy_kernels

_choice = os.environ.get("LFRANET_BACKEND", "auto").lower()

if _choice == "numpy":
    _impl = numpy_kernels
elif _choice == "cython":
    from . import _core as _impl  # raises ImportError if the extension is missing
elif _choice == "auto":
    try:
        from . import _core as _impl
    except ImportError:
        _impl = numpy_kernels
else:
    raise ValueError(f"LFRANET_BACKEND must be 'numpy', 'cython' or 'auto', got {_choice!r}")

BACKEND_NAME = _impl.BACKEND_NAME

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward
dwconv_forward = _impl.dwconv_forward
dwconv_backward_x = _impl.dwconv_backward_x


def available_backends():
    names = ["numpy"]
    try:
        from . import _core  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names
