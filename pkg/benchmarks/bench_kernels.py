"""Time the compiled kernels against their interpreted fallbacks.

Run:  python benchmarks/bench_kernels.py
"""

import timeit

import numpy as np

from neuropair import kernels

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    print("numba not installed; only the numpy path is timed")


def _time(fn, *args, repeat=5, number=3):
    best = min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number))
    return best / number


def bench_dtw(t=2000):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(t)
    y = rng.standard_normal(t)
    rows = [("dtw_cost numpy", _time(kernels.dtw_cost_py, x, y))]
    if HAS_NUMBA:
        jitted = njit(kernels.dtw_cost_py)
        jitted(x[:10], y[:10])  # compile outside the timer
        rows.append(("dtw_cost numba", _time(jitted, x, y)))
    return rows


def bench_lstm(t=400, hidden=64):
    rng = np.random.default_rng(1)
    xp = np.ascontiguousarray(rng.standard_normal((t, 4 * hidden)))
    wh = np.ascontiguousarray(rng.standard_normal((hidden, 4 * hidden)) * 0.05)
    h0 = np.zeros(hidden)
    c0 = np.zeros(hidden)
    rows = [("lstm_forward numpy", _time(kernels.lstm_steps_forward_py, xp, wh, h0, c0))]
    caches = kernels.lstm_steps_forward_py(xp, wh, h0, c0)
    hs, cs, tc, gi, gf, gg, go = caches
    dh = np.ascontiguousarray(rng.standard_normal((t, hidden)))
    rows.append(
        ("lstm_backward numpy",
         _time(kernels.lstm_steps_backward_py, dh, wh, c0, cs, tc, gi, gf, gg, go))
    )
    if HAS_NUMBA:
        fwd = njit(kernels.lstm_steps_forward_py)
        bwd = njit(kernels.lstm_steps_backward_py)
        fwd(xp[:2], wh, h0, c0)
        bwd(dh[:2], wh, c0, cs[:2], tc[:2], gi[:2], gf[:2], gg[:2], go[:2])
        rows.append(("lstm_forward numba", _time(fwd, xp, wh, h0, c0)))
        rows.append(
            ("lstm_backward numba",
             _time(bwd, dh, wh, c0, cs, tc, gi, gf, gg, go))
        )
    return rows


def main():
    print(f"active backend: {kernels.BACKEND}")
    all_rows = bench_dtw() + bench_lstm()
    width = max(len(name) for name, _ in all_rows)
    baselines = {}
    for name, secs in all_rows:
        kernel = name.rsplit(" ", 1)[0]
        baselines.setdefault(kernel, secs)
        speedup = baselines[kernel] / secs
        print(f"{name.ljust(width)}  {secs * 1e3:9.2f} ms   x{speedup:.1f}")


if __name__ == "__main__":
    main()
