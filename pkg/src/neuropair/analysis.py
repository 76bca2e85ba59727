"""Similarity metrics over matched activation pairs and the PCC-vs-accuracy
regression.

``pair_metrics`` expects series that were z-normalized upstream (the aligner
does this) so MAE/MSE/RMSE are comparable across neurons of different scale;
nothing here re-normalizes.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputError
from .matching import pearson, student_t_sf


@dataclass
class MetricBundle:
    mae: float
    mse: float
    rmse: float
    dtw: float
    pcc: float


def dtw(x, y):
    """Dynamic-time-warping distance with |a-b| local cost and the symmetric
    match/insert/delete step pattern, no warping window."""
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise InputError("DTW requires non-empty series")
    return float(kernels.dtw_cost(x, y))


def pair_metrics(x, y):
    """MAE / MSE / RMSE / DTW / PCC for one matched pair of series."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise InputError(f"need at least 3 samples, got {x.size}")
    diff = x - y
    mse = float(np.mean(diff * diff))
    return MetricBundle(
        mae=float(np.mean(np.abs(diff))),
        mse=mse,
        rmse=math.sqrt(mse),
        dtw=dtw(x, y),
        pcc=pearson(x, y),
    )


# ---------------------------------------------------------------------------
# Ordinary least squares (mean PCC vs. classification accuracy)
# ---------------------------------------------------------------------------

@dataclass
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    n: int


def ols_fit(points):
    """Simple OLS of y on x; slope significance via a two-sided t-test with
    n-2 degrees of freedom."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InputError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise InputError("x values are all equal; slope is undefined")
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(yc @ yc)
    if ss_tot > 0.0:
        r_squared = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    else:
        # constant y: the flat line fits exactly
        r_squared = 1.0 if ss_res == 0.0 else 0.0
    df = n - 2
    se2 = ss_res / df / sxx
    if se2 > 0.0:
        t = slope / math.sqrt(se2)
        p_value = 2.0 * student_t_sf(abs(t), df)
    else:
        p_value = 0.0 if slope != 0.0 else 1.0
    return RegressionFit(
        slope=slope, intercept=intercept, r_squared=r_squared, p_value=p_value, n=n
    )


def regression_json(fit):
    return json.dumps(
        {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "p_value": fit.p_value,
            "n": fit.n,
        },
        indent=2,
        sort_keys=True,
    ) + "\n"


def regression_plot_data(points, fit):
    """CSV with the raw points and the fitted line, ready for any plotter."""
    lines = ["x,y,y_fit"]
    for x, y in points:
        lines.append(f"{float(x)!r},{float(y)!r},{fit.intercept + fit.slope * float(x)!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Ablation table (per-variant metric means with best / second-best marks)
# ---------------------------------------------------------------------------

_METRICS = ("mae", "mse", "rmse", "dtw", "pcc")
_HIGHER_BETTER = {"pcc"}


@dataclass
class AblationRow:
    variant: str
    means: MetricBundle
    best: set        # metric names where this variant ranks first
    second_best: set


def ablation_report(bundles_by_variant):
    """Per-variant means of the five metrics, ranked per metric column.

    ``bundles_by_variant`` maps variant name -> non-empty list of
    MetricBundle. Row order follows the mapping order.
    """
    if not bundles_by_variant:
        raise InputError("ablation report needs at least one variant")
    rows = []
    for variant, bundles in bundles_by_variant.items():
        if not bundles:
            raise InputError(f"variant {variant!r} has no metric bundles")
        means = MetricBundle(
            **{
                m: float(np.mean([getattr(b, m) for b in bundles]))
                for m in _METRICS
            }
        )
        rows.append(AblationRow(variant=variant, means=means, best=set(), second_best=set()))
    for m in _METRICS:
        vals = [getattr(r.means, m) for r in rows]
        order = sorted(range(len(rows)), key=lambda i: vals[i], reverse=m in _HIGHER_BETTER)
        rows[order[0]].best.add(m)
        if len(order) > 1:
            rows[order[1]].second_best.add(m)
    return rows


def _mark(row, metric):
    val = f"{getattr(row.means, metric):.4f}"
    if metric in row.best:
        return val + "*"
    if metric in row.second_best:
        return val + "^"
    return val


def ablation_text(rows):
    header = ("Variant", "MAE", "MSE", "RMSE", "DTW", "PCC")
    cells = [header] + [
        (r.variant,) + tuple(_mark(r, m) for m in _METRICS) for r in rows
    ]
    widths = [max(len(row[k]) for row in cells) for k in range(len(header))]
    out = []
    for idx, row in enumerate(cells):
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if idx == 0:
            out.append("  ".join("-" * w for w in widths))
    out.append("(* best per column, ^ second best; PCC higher is better, others lower)")
    return "\n".join(out) + "\n"


def ablation_csv(rows):
    lines = ["variant,mae,mse,rmse,dtw,pcc"]
    for r in rows:
        vals = ",".join(f"{getattr(r.means, m):.4f}" for m in _METRICS)
        lines.append(f"{r.variant},{vals}")
    return "\n".join(lines) + "\n"
