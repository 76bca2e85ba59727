"""Per-filter temporal activations from feature-map stacks, and alignment of
the two activation domains onto a common, z-normalized time axis.

Convention: a feature-map stack is (T, C, H, W) with one frame per scan time
point; a filter activation matrix is (T, C). Frame-rate resampling happens
upstream in the extractor, never here.
"""

import numpy as np

from .errors import InputError, ShapeError


def filter_activations(feature_maps):
    """Reduce (T, C, H, W) responses to a (T, C) matrix by the spatial max.

    No normalization is applied; pairing is scale-invariant and distance
    metrics normalize during alignment.
    """
    fm = np.asarray(feature_maps, dtype=np.float64)
    if fm.ndim != 4:
        raise ShapeError(f"expected a (T, C, H, W) stack, got shape {fm.shape}")
    if min(fm.shape) < 1:
        raise ShapeError(f"every axis must be non-empty, got shape {fm.shape}")
    return fm.max(axis=(2, 3))


def _zscore_columns(a):
    c = a - a.mean(axis=0)
    sd = np.sqrt((c * c).mean(axis=0))
    dead = sd == 0.0
    out = c / np.where(dead, 1.0, sd)
    out[:, dead] = 0.0
    return out


def align(filter_acts, fbn_acts, lag=0):
    """Overlap the two series with the filter side shifted by ``lag`` samples.

    Positive lag models the hemodynamic delay: filter row 0 is paired with
    brain row ``lag``. Both outputs are truncated to the shared window and
    z-normalized per column.
    """
    a = np.asarray(filter_acts, dtype=np.float64)
    l = np.asarray(fbn_acts, dtype=np.float64)
    if a.ndim != 2 or l.ndim != 2:
        raise ShapeError("align expects 2-D activation matrices")
    big_t, small_t = a.shape[0], l.shape[0]
    lag = int(lag)
    if abs(lag) >= min(big_t, small_t):
        raise InputError(
            f"|lag| must be < min(T, t) = {min(big_t, small_t)}, got {lag}"
        )
    if lag >= 0:
        rows = min(big_t, small_t - lag)
        a_win = a[:rows]
        l_win = l[lag : lag + rows]
    else:
        rows = min(big_t + lag, small_t)
        a_win = a[-lag : -lag + rows]
        l_win = l[:rows]
    if rows < 2:
        raise InputError(f"lag {lag} leaves only {rows} overlapping rows")
    return _zscore_columns(a_win), _zscore_columns(l_win)
