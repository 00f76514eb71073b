"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``CONDSPEC_PURE_PYTHON=1`` is set, the numpy fallback
is used. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

if os.environ.get("CONDSPEC_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

philox_blocks = _impl.philox_blocks
raw_words = _impl.raw_words
uniforms = _impl.uniforms
normals = _impl.normals
weighted_sup_abs = _impl.weighted_sup_abs
weighted_sum_sq = _impl.weighted_sum_sq
quad_form_rows = _impl.quad_form_rows
psd_cholesky = _impl.psd_cholesky
psd_cholesky_pivoted = _impl.psd_cholesky_pivoted

__all__ = [
    "BACKEND",
    "philox_blocks",
    "raw_words",
    "uniforms",
    "normals",
    "weighted_sup_abs",
    "weighted_sum_sq",
    "quad_form_rows",
    "psd_cholesky",
    "psd_cholesky_pivoted",
]
