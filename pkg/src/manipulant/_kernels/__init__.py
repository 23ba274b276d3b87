"""Serial-chain kernels with backend selection at import time.

The compiled extension ``_chain_cy`` is used when it was built; otherwise (or
when ``MANIPULANT_PURE_PYTHON=1``) the numpy implementation in ``_chain_py``
takes over. Both expose ``chain_frames``, ``chain_jacobian`` and
``chain_jacobian_derivative`` with identical signatures.
"""
import os

from . import _chain_py

if os.environ.get("MANIPULANT_PURE_PYTHON") == "1":
    _impl = _chain_py
else:
    try:
        from . import _chain_cy as _impl
    except ImportError:
        _impl = _chain_py

BACKEND = "cython" if _impl is not _chain_py else "python"

chain_frames = _impl.chain_frames
chain_jacobian = _impl.chain_jacobian
chain_jacobian_derivative = _impl.chain_jacobian_derivative

__all__ = ["BACKEND", "chain_frames", "chain_jacobian", "chain_jacobian_derivative"]
