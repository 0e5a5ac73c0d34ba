"""Hot-kernel backend selection.

Prefers the compiled Cython extension and falls back to the numpy
implementation when the extension is unavailable. FRFORGE_PURE_PYTHON=1
forces the fallback (useful for the kernel benchmark and debugging).
"""

from __future__ import annotations

import os

import numpy as np

from . import kernels_np

if os.environ.get("FRFORGE_PURE_PYTHON") == "1":
    _impl = kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = kernels_np
        BACKEND = "numpy"


def _lengths64(lengths):
    return np.ascontiguousarray(lengths, dtype=np.int64)


def lstm_seq_forward(xp, w_hh, lengths):
    return _impl.lstm_seq_forward(
        np.ascontiguousarray(xp), np.ascontiguousarray(w_hh), _lengths64(lengths)
    )


def lstm_seq_backward(dh_final, h_seq, c_seq, gates, w_hh, lengths):
    return _impl.lstm_seq_backward(
        np.ascontiguousarray(dh_final),
        np.ascontiguousarray(h_seq),
        np.ascontiguousarray(c_seq),
        np.ascontiguousarray(gates),
        np.ascontiguousarray(w_hh),
        _lengths64(lengths),
    )


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    if BACKEND == "cython":
        _impl.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=p.dtype).reshape(-1),
            m.reshape(-1), v.reshape(-1), t, lr, beta1, beta2, eps,
        )
    else:
        _impl.adam_update(p, g.astype(p.dtype, copy=False), m, v, t, lr, beta1, beta2, eps)
