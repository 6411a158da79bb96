"""Backend selection for the inner loops.

The compiled extension is used when it imports; set
``STABSADDLE_PURE_PYTHON=1`` to force the reference implementation.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("STABSADDLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

bilinear_chunk = _impl.bilinear_chunk
mdp_chunk = _impl.mdp_chunk
simulate_chain = _impl.simulate_chain
sample_index = _impl.sample_index
first_above = _impl.first_above
inf_sq_clip_level = _impl.inf_sq_clip_level


def backends():
    """Available kernel modules keyed by name (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
