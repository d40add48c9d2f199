"""Pure numpy LSTM recurrence; the fallback when the compiled kernel is absent.

Both backends share one contract. ``xp`` holds the precomputed input
projection ``x @ W_x + b`` of shape (B, T, 4H) with gate blocks ordered
input, forget, cell, output. Sequence ``b`` is valid for ``t < lengths[b]``;
at invalid steps the hidden and cell outputs are exactly zero, which in the
reverse direction makes the first valid step start from a zero state.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(xp, w_h, lengths, reverse):
    """Returns (h, c, gates) with gates holding the activated i, f, g, o blocks."""
    B, T, H4 = xp.shape
    H = H4 // 4
    dtype = xp.dtype
    h = np.zeros((B, T, H), dtype=dtype)
    c = np.zeros((B, T, H), dtype=dtype)
    gates = np.empty((B, T, H4), dtype=dtype)
    h_prev = np.zeros((B, H), dtype=dtype)
    c_prev = np.zeros((B, H), dtype=dtype)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        valid = (lengths > t)[:, None]
        z = xp[:, t] + h_prev @ w_h
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        ct = f * c_prev + i * g
        ht = o * np.tanh(ct)
        ct = np.where(valid, ct, 0)
        ht = np.where(valid, ht, 0)
        gates[:, t] = np.where(valid, np.concatenate([i, f, g, o], axis=1), 0)
        h[:, t] = ht
        c[:, t] = ct
        h_prev, c_prev = ht, ct
    return h, c, gates


def lstm_backward(dh_out, w_h, lengths, reverse, h, c, gates):
    """Gradient w.r.t. the pre-activation gates ``z`` at every step, (B, T, 4H)."""
    B, T, H = dh_out.shape
    dtype = dh_out.dtype
    dz = np.zeros((B, T, 4 * H), dtype=dtype)
    dh_next = np.zeros((B, H), dtype=dtype)
    dc_next = np.zeros((B, H), dtype=dtype)
    zeros = np.zeros((B, H), dtype=dtype)
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        valid = (lengths > t)[:, None]
        if reverse:
            c_prev = c[:, t + 1] if t + 1 < T else zeros
        else:
            c_prev = c[:, t - 1] if t > 0 else zeros
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        tc = np.tanh(c[:, t])
        dh = dh_out[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dzt = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        dzt = np.where(valid, dzt, 0)
        dz[:, t] = dzt
        dh_next = np.where(valid, dzt @ w_h.T, 0)
        dc_next = np.where(valid, dc * f, 0)
    return dz
