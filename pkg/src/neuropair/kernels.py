"""Hot numeric loops, written once and optionally numba-compiled.

Every kernel is a plain function over contiguous float64 arrays so the same
source runs under the interpreter (numpy fallback) or under ``numba.njit``.
The public names (``dtw_cost``, ``lstm_steps_forward``, ``lstm_steps_backward``)
are bound to the compiled or plain variant at import time; the ``*_py``
originals stay importable for the benchmark in ``benchmarks/``.
"""

import numpy as np

from .backend import jit_compile, selected_backend


def dtw_cost_py(x, y):
    # Two-row dynamic program; local cost |x_i - y_j|, steps
    # (i-1,j), (i,j-1), (i-1,j-1), each adding the local cost once.
    n = x.shape[0]
    m = y.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    acc = 0.0
    for j in range(m):
        acc += abs(x[0] - y[j])
        prev[j] = acc
    for i in range(1, n):
        cur[0] = prev[0] + abs(x[i] - y[0])
        for j in range(1, m):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(x[i] - y[j]) + best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m - 1]


def lstm_steps_forward_py(xp, wh, h0, c0):
    # xp: (t, 4H) input projection x_t . Wx + b, gate order [i, f, g, o].
    # Returns hidden states plus the per-step activations the backward pass needs.
    t = xp.shape[0]
    hd = wh.shape[0]
    hs = np.empty((t, hd))
    cs = np.empty((t, hd))
    tc = np.empty((t, hd))
    gi = np.empty((t, hd))
    gf = np.empty((t, hd))
    gg = np.empty((t, hd))
    go = np.empty((t, hd))
    h = h0.copy()
    c = c0.copy()
    for s in range(t):
        z = xp[s] + np.dot(h, wh)
        i = 1.0 / (1.0 + np.exp(-z[:hd]))
        f = 1.0 / (1.0 + np.exp(-z[hd : 2 * hd]))
        g = np.tanh(z[2 * hd : 3 * hd])
        o = 1.0 / (1.0 + np.exp(-z[3 * hd :]))
        c = f * c + i * g
        th = np.tanh(c)
        h = o * th
        gi[s] = i
        gf[s] = f
        gg[s] = g
        go[s] = o
        cs[s] = c
        tc[s] = th
        hs[s] = h
    return hs, cs, tc, gi, gf, gg, go


def lstm_steps_backward_py(dh_out, wh, c0, cs, tc, gi, gf, gg, go):
    # Backprop through time for one layer. dh_out: (t, H) gradient w.r.t.
    # the emitted hidden states. Returns dz: (t, 4H); the caller turns dz
    # into dWx/dWh/db/dx with dense matmuls outside this loop.
    t = dh_out.shape[0]
    hd = wh.shape[0]
    dz = np.empty((t, 4 * hd))
    dh_next = np.zeros(hd)
    dc_next = np.zeros(hd)
    for s in range(t - 1, -1, -1):
        dh = dh_out[s] + dh_next
        i = gi[s]
        f = gf[s]
        g = gg[s]
        o = go[s]
        th = tc[s]
        if s > 0:
            c_prev = cs[s - 1]
        else:
            c_prev = c0
        dc = dh * o * (1.0 - th * th) + dc_next
        do = dh * th
        dz[s, :hd] = dc * g * i * (1.0 - i)
        dz[s, hd : 2 * hd] = dc * c_prev * f * (1.0 - f)
        dz[s, 2 * hd : 3 * hd] = dc * i * (1.0 - g * g)
        dz[s, 3 * hd :] = do * o * (1.0 - o)
        dc_next = dc * f
        dh_next = np.dot(wh, dz[s])
    return dz


BACKEND = selected_backend()

dtw_cost = jit_compile(dtw_cost_py)
lstm_steps_forward = jit_compile(lstm_steps_forward_py)
lstm_steps_backward = jit_compile(lstm_steps_backward_py)
