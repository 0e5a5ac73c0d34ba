"""Pure-numpy implementations of the hot kernels.

Drop-in fallback for the compiled extension (`_kernels`). Both backends
share the same contracts:

- LSTM gate layout along the last axis is [input | forget | cell | output].
- `xp` already contains the input projection plus bias (W_ih @ x + b), so
  the recurrence only applies the hidden-to-hidden weights.
- Ragged batches are described by `lengths`; rows are processed for
  t < lengths[b] and the hidden/cell/gate caches stay zero afterwards.
"""

from __future__ import annotations

import numpy as np


def _sig(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_seq_forward(xp, w_hh, lengths):
    """Run an LSTM over a padded batch.

    xp: (B, T, 4h) precomputed input projections, w_hh: (h, 4h),
    lengths: (B,) int64. Returns (h_seq, c_seq, gates, h_final) where
    gates holds post-activation (i, f, g, o) values needed by backward.
    """
    B, T, H4 = xp.shape
    h = H4 // 4
    dt = xp.dtype
    h_seq = np.zeros((B, T, h), dtype=dt)
    c_seq = np.zeros((B, T, h), dtype=dt)
    gates = np.zeros((B, T, H4), dtype=dt)
    h_t = np.zeros((B, h), dtype=dt)
    c_t = np.zeros((B, h), dtype=dt)
    for t in range(T):
        active = lengths > t
        if not active.any():
            break
        pre = xp[:, t, :] + h_t @ w_hh
        i = _sig(pre[:, :h])
        f = _sig(pre[:, h : 2 * h])
        g = np.tanh(pre[:, 2 * h : 3 * h])
        o = _sig(pre[:, 3 * h :])
        c_new = f * c_t + i * g
        h_new = o * np.tanh(c_new)
        m = active[:, None]
        h_t = np.where(m, h_new, h_t)
        c_t = np.where(m, c_new, c_t)
        h_seq[:, t, :] = np.where(m, h_new, 0)
        c_seq[:, t, :] = np.where(m, c_new, 0)
        gates[:, t, :h] = np.where(m, i, 0)
        gates[:, t, h : 2 * h] = np.where(m, f, 0)
        gates[:, t, 2 * h : 3 * h] = np.where(m, g, 0)
        gates[:, t, 3 * h :] = np.where(m, o, 0)
    h_final = np.where((lengths > 0)[:, None], h_t, 0)
    return h_seq, c_seq, gates, h_final


def lstm_seq_backward(dh_final, h_seq, c_seq, gates, w_hh, lengths):
    """Backward pass given the gradient of the per-row final hidden state.

    Returns (dxp, dw_hh).
    """
    B, T, h = h_seq.shape
    dt = h_seq.dtype
    dxp = np.zeros((B, T, 4 * h), dtype=dt)
    dw = np.zeros_like(w_hh)
    dh = np.zeros((B, h), dtype=dt)
    dc = np.zeros((B, h), dtype=dt)
    zeros = np.zeros((B, h), dtype=dt)
    for t in range(T - 1, -1, -1):
        active = lengths > t
        if not active.any():
            continue
        last = lengths - 1 == t
        if last.any():
            dh = dh + np.where(last[:, None], dh_final, 0)
        i = gates[:, t, :h]
        f = gates[:, t, h : 2 * h]
        g = gates[:, t, 2 * h : 3 * h]
        o = gates[:, t, 3 * h :]
        c_t = c_seq[:, t, :]
        tc = np.tanh(c_t)
        do = dh * tc
        dct = dh * o * (1.0 - tc * tc) + dc
        c_prev = c_seq[:, t - 1, :] if t > 0 else zeros
        h_prev = h_seq[:, t - 1, :] if t > 0 else zeros
        dpre = np.concatenate(
            [
                dct * g * i * (1.0 - i),
                dct * c_prev * f * (1.0 - f),
                dct * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        m = active[:, None]
        dpre = np.where(m, dpre, 0)
        dxp[:, t, :] = dpre
        dw += h_prev.T @ dpre
        dh = np.where(m, dpre @ w_hh.T, dh)
        dc = np.where(m, dct * f, dc)
    return dxp, dw


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """Fused in-place Adam step with bias correction. Arrays share a shape."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
