"""NumPy implementations of the hot kernels.

This backend is always available and is what the package falls back to
when the compiled extension was not built. Array layouts are identical to
``_ckern``: conv/pool work on [batch, channels, length], the LSTM
recurrence works time-major on [steps, batch, ...] so each step is a
contiguous block.
"""

import numpy as np


def _sigmoid(x):
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv1d_fwd(x, kernels, bias, stride, pad_l, pad_r):
    B, C, L = x.shape
    O, _, W = kernels.shape
    if pad_l or pad_r:
        x = np.pad(x, ((0, 0), (0, 0), (pad_l, pad_r)))
    out_len = (L + pad_l + pad_r - W) // stride + 1
    y = np.zeros((B, O, out_len), dtype=x.dtype)
    span = stride * (out_len - 1) + 1
    for w in range(W):
        window = x[:, :, w : w + span : stride]
        y += np.einsum("bcj,oc->boj", window, kernels[:, :, w], optimize=True)
    y += bias[None, :, None]
    return y


def conv1d_bwd(x, kernels, stride, pad_l, pad_r, gy):
    B, C, L = x.shape
    O, _, W = kernels.shape
    out_len = gy.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad_l, pad_r))) if (pad_l or pad_r) else x
    span = stride * (out_len - 1) + 1

    gb = gy.sum(axis=(0, 2))
    gk = np.empty_like(kernels)
    gxp = np.zeros_like(xp)
    for w in range(W):
        window = xp[:, :, w : w + span : stride]
        gk[:, :, w] = np.einsum("boj,bcj->oc", gy, window, optimize=True)
        gxp[:, :, w : w + span : stride] += np.einsum(
            "boj,oc->bcj", gy, kernels[:, :, w], optimize=True
        )
    gx = gxp[:, :, pad_l : pad_l + L] if (pad_l or pad_r) else gxp
    return np.ascontiguousarray(gx), gk, gb


def avgpool_fwd(x, window):
    B, C, L = x.shape
    out_len = L // window
    used = x[:, :, : out_len * window]
    return used.reshape(B, C, out_len, window).mean(axis=3)


def avgpool_bwd(gy, window, in_length):
    B, C, out_len = gy.shape
    gx = np.zeros((B, C, in_length), dtype=gy.dtype)
    gx[:, :, : out_len * window] = np.repeat(gy / window, window, axis=2)
    return gx


def lstm_recurrence_fwd(pre, recurrent_kernel):
    """Run the gate recurrence given pre-activations from the input path.

    ``pre`` is [steps, batch, 4*hidden] holding x @ Wx + b; the recurrent
    contribution h @ Wh is added step by step. Gate blocks are ordered
    input, forget, cell candidate, output. Returns hidden states, cell
    states, and post-activation gates, all time-major.
    """
    T, B, H4 = pre.shape
    H = H4 // 4
    h_seq = np.empty((T, B, H), dtype=pre.dtype)
    c_seq = np.empty((T, B, H), dtype=pre.dtype)
    gates = np.empty((T, B, H4), dtype=pre.dtype)
    h = np.zeros((B, H), dtype=pre.dtype)
    c = np.zeros((B, H), dtype=pre.dtype)
    for t in range(T):
        a = pre[t] + h @ recurrent_kernel
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :, :H] = i
        gates[t, :, H : 2 * H] = f
        gates[t, :, 2 * H : 3 * H] = g
        gates[t, :, 3 * H :] = o
        c_seq[t] = c
        h_seq[t] = h
    return h_seq, c_seq, gates


def lstm_recurrence_bwd(recurrent_kernel, h_seq, c_seq, gates, gy):
    """Backpropagation through time for the gate recurrence.

    ``gy`` is the upstream gradient on every hidden state, time-major.
    Returns the gradient on the gate pre-activations (time-major) and on
    the recurrent kernel; the caller turns pre-activation gradients into
    input-kernel/bias/input gradients with two big matmuls.
    """
    T, B, H = gy.shape
    da = np.empty((T, B, 4 * H), dtype=gy.dtype)
    g_wh = np.zeros_like(recurrent_kernel)
    dh = np.zeros((B, H), dtype=gy.dtype)
    dc = np.zeros((B, H), dtype=gy.dtype)
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        g = gates[t, :, 2 * H : 3 * H]
        o = gates[t, :, 3 * H :]
        c_prev = c_seq[t - 1] if t > 0 else np.zeros((B, H), dtype=gy.dtype)
        tc = np.tanh(c_seq[t])

        dh_total = gy[t] + dh
        do = dh_total * tc
        dct = dc + dh_total * o * (1.0 - tc * tc)
        di = dct * g
        dg = dct * i
        df = dct * c_prev
        dc = dct * f

        da[t, :, :H] = di * i * (1.0 - i)
        da[t, :, H : 2 * H] = df * f * (1.0 - f)
        da[t, :, 2 * H : 3 * H] = dg * (1.0 - g * g)
        da[t, :, 3 * H :] = do * o * (1.0 - o)

        if t > 0:
            g_wh += h_seq[t - 1].T @ da[t]
        dh = da[t] @ recurrent_kernel.T
    return da, g_wh
