"""The compiled and interpreted kernel paths must agree exactly."""

import subprocess
import sys

import numpy as np
import pytest

from neuropair import kernels

numba = pytest.importorskip("numba")

rng = np.random.default_rng(99)

_jit = {
    "dtw_cost": numba.njit(kernels.dtw_cost_py),
    "lstm_steps_forward": numba.njit(kernels.lstm_steps_forward_py),
    "lstm_steps_backward": numba.njit(kernels.lstm_steps_backward_py),
}


@pytest.mark.parametrize("case", range(5))
def test_dtw_cost_paths_agree(case):
    x = rng.standard_normal(rng.integers(1, 40))
    y = rng.standard_normal(rng.integers(1, 40))
    assert _jit["dtw_cost"](x, y) == kernels.dtw_cost_py(x, y)


def test_lstm_forward_paths_agree():
    t, hd = 7, 3
    xp = np.ascontiguousarray(rng.standard_normal((t, 4 * hd)))
    wh = np.ascontiguousarray(rng.standard_normal((hd, 4 * hd)))
    h0 = np.zeros(hd)
    c0 = np.zeros(hd)
    got = _jit["lstm_steps_forward"](xp, wh, h0, c0)
    want = kernels.lstm_steps_forward_py(xp, wh, h0, c0)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=1e-15, atol=1e-15)


def test_lstm_backward_paths_agree():
    t, hd = 6, 2
    xp = np.ascontiguousarray(rng.standard_normal((t, 4 * hd)))
    wh = np.ascontiguousarray(rng.standard_normal((hd, 4 * hd)))
    h0 = np.zeros(hd)
    c0 = np.zeros(hd)
    hs, cs, tc, gi, gf, gg, go = kernels.lstm_steps_forward_py(xp, wh, h0, c0)
    dh = np.ascontiguousarray(rng.standard_normal((t, hd)))
    got = _jit["lstm_steps_backward"](dh, wh, c0, cs, tc, gi, gf, gg, go)
    want = kernels.lstm_steps_backward_py(dh, wh, c0, cs, tc, gi, gf, gg, go)
    np.testing.assert_allclose(got, want, rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("flag,expected", [("numpy", "numpy"), ("numba", "numba")])
def test_backend_env_flag(flag, expected):
    out = subprocess.run(
        [sys.executable, "-c",
         "from neuropair.backend import selected_backend; print(selected_backend())"],
        env={"PATH": "/usr/bin:/bin", "NEUROPAIR_BACKEND": flag},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_bad_backend_flag_rejected():
    out = subprocess.run(
        [sys.executable, "-c", "import neuropair.kernels"],
        env={"PATH": "/usr/bin:/bin", "NEUROPAIR_BACKEND": "cuda"},
        capture_output=True, text=True,
    )
    assert out.returncode != 0
