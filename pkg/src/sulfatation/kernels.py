"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py``.  Setting ``SULFATATION_BACKEND`` to
``python`` or ``cython`` forces a choice (``cython`` fails loudly if the
extension is missing).
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}") from None


def _select():
    requested = os.environ.get("SULFATATION_BACKEND", "").strip().lower()
    if requested:
        return get_backend(requested)
    return _BACKENDS.get("cython", _kernels_py)


active = _select()


def pack_cell_params(cfg) -> np.ndarray:
    p = cfg.params
    return np.array(
        [
            p.d2, p.d3, p.beta2, p.beta3, p.beta4, p.B, p.H,
            p.phi2 * p.k2, p.phi3 * p.k3, p.phi4 * p.k4,
            p.gamma_sw, p.beta_bar, p.p_order, p.q_order, cfg.hy,
        ],
        dtype=float,
    )


def pack_macro_params(cfg) -> np.ndarray:
    return np.array([cfg.params.d1, cfg.hx], dtype=float)
