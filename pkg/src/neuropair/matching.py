"""Correlation-based neuron pairing between two activation domains.

Given two sets of temporal activations recorded against the same stimulus
timeline, every neuron in the source domain is paired with the
maximally-correlated neuron in the target domain. Significance of each
Pearson r uses the two-sided Student-t test with T-2 degrees of freedom,
evaluated through a local regularized-incomplete-beta implementation so the
package has no runtime scipy dependency.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError

UNLABELED = "⟨unlabeled⟩"  # placeholder for ids missing from a label table

_FBN_TO_FILTER = "fbn_to_filter"
_FILTER_TO_FBN = "filter_to_fbn"
DIRECTIONS = (_FBN_TO_FILTER, _FILTER_TO_FBN)


# ---------------------------------------------------------------------------
# Student-t significance machinery
# ---------------------------------------------------------------------------

def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) by the continued-fraction expansion (modified Lentz).

    The fraction converges fast for x < (a+1)/(a+b+2); outside that region
    the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) is applied first. Accurate to
    ~1e-14 for the a, b ranges used here (t-test with df <= ~1e6).
    """
    if a <= 0 or b <= 0:
        raise InputError("incomplete beta requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise InputError(f"incomplete beta requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a, b, x, max_iter=300, tol=1e-15):
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def student_t_sf(t, df):
    """Upper-tail survival P(T > t) for Student t with ``df`` degrees of freedom."""
    if df <= 0:
        raise InputError("degrees of freedom must be positive")
    if math.isnan(t):
        return math.nan
    x = df / (df + t * t)
    p_two = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return 0.5 * p_two if t >= 0 else 1.0 - 0.5 * p_two


# ---------------------------------------------------------------------------
# Pearson correlation
# ---------------------------------------------------------------------------

def pearson(x, y):
    """Sample Pearson r between two equal-length series (T >= 3).

    Returns NaN when either series has zero variance.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise InputError(f"need at least 3 samples, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    if ssx == 0.0 or ssy == 0.0:
        return math.nan
    r = float(xc @ yc) / math.sqrt(ssx * ssy)
    return min(1.0, max(-1.0, r))


def pearson_pvalue(r, t_len):
    """Two-sided p-value for r over series of length ``t_len``.

    Uses t = r * sqrt((T-2) / (1-r^2)) against Student t with T-2 df, which
    reduces to I_{1-r^2}((T-2)/2, 1/2).
    """
    if t_len < 3:
        raise InputError(f"need at least 3 samples, got {t_len}")
    if math.isnan(r):
        return math.nan
    if abs(r) > 1.0 + 1e-12:
        raise InputError(f"|r| must be <= 1, got {r}")
    r = min(1.0, max(-1.0, r))
    x = max(0.0, 1.0 - r * r)
    return regularized_incomplete_beta((t_len - 2) / 2.0, 0.5, x)


# ---------------------------------------------------------------------------
# Correlation matrix
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CorrelationMatrix:
    r: np.ndarray  # (a, b) Pearson r, NaN where undefined
    p: np.ndarray  # (a, b) two-sided p-values
    t_len: int


def correlation_matrix(f, g):
    """All-pairs correlations between columns of f (T, a) and g (T, b)."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.ndim != 2 or g.ndim != 2:
        raise ShapeError("correlation_matrix expects 2-D inputs")
    if f.shape[0] != g.shape[0]:
        raise InputError(
            f"series length mismatch: {f.shape[0]} vs {g.shape[0]} rows"
        )
    t_len = f.shape[0]
    if t_len < 3:
        raise InputError(f"need at least 3 samples, got {t_len}")

    def zcols(m):
        c = m - m.mean(axis=0)
        sd = np.sqrt((c * c).mean(axis=0))
        dead = sd == 0.0
        sd_safe = np.where(dead, 1.0, sd)
        return c / sd_safe, dead

    zf, dead_f = zcols(f)
    zg, dead_g = zcols(g)
    r = (zf.T @ zg) / t_len
    np.clip(r, -1.0, 1.0, out=r)
    r[dead_f, :] = np.nan
    r[:, dead_g] = np.nan
    p = np.empty_like(r)
    for i in range(r.shape[0]):
        for j in range(r.shape[1]):
            p[i, j] = pearson_pvalue(r[i, j], t_len) if np.isfinite(r[i, j]) else np.nan
    return CorrelationMatrix(r=r, p=p, t_len=t_len)


# ---------------------------------------------------------------------------
# Pairing
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class NeuronPair:
    source: int
    target: int | None  # None when every candidate correlation was NaN
    r: float
    p: float


@dataclass(eq=False)
class PairingResult:
    direction: str
    alpha: float
    pairs: list[NeuronPair]
    mean_r: float
    n_not_significant: int
    n_unpairable: int
    n_source: int
    n_target: int
    series_length: int
    model: str = ""
    layer: str = ""
    run: str = ""

    def significance_ratio(self):
        """Table-style "k/m" string: not-significant pairs over source count."""
        return f"{self.n_not_significant}/{self.n_source}"


def pair_neurons(corr, direction=_FBN_TO_FILTER, alpha=0.05):
    """Pick, for every source neuron (row of ``corr.r``), the target column
    with maximal r. Ties break to the lowest target index; NaN entries are
    skipped; an all-NaN row yields an unpairable placeholder excluded from
    the mean. ``direction`` labels which domain the rows represent.
    """
    if direction not in DIRECTIONS:
        raise InputError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    r = corr.r
    pairs = []
    chosen_r = []
    n_not_significant = 0
    n_unpairable = 0
    for i in range(r.shape[0]):
        row = r[i]
        if np.all(np.isnan(row)):
            pairs.append(NeuronPair(source=i, target=None, r=math.nan, p=math.nan))
            n_unpairable += 1
            continue
        j = int(np.nanargmax(row))
        p_ij = float(corr.p[i, j])
        pairs.append(NeuronPair(source=i, target=j, r=float(row[j]), p=p_ij))
        chosen_r.append(float(row[j]))
        if p_ij > alpha:
            n_not_significant += 1
    mean_r = float(np.mean(chosen_r)) if chosen_r else math.nan
    return PairingResult(
        direction=direction,
        alpha=alpha,
        pairs=pairs,
        mean_r=mean_r,
        n_not_significant=n_not_significant,
        n_unpairable=n_unpairable,
        n_source=r.shape[0],
        n_target=r.shape[1],
        series_length=corr.t_len,
    )


def pairing_to_dict(res):
    return {
        "direction": res.direction,
        "alpha": res.alpha,
        "mean_r": res.mean_r,
        "n_not_significant": res.n_not_significant,
        "n_unpairable": res.n_unpairable,
        "n_source": res.n_source,
        "n_target": res.n_target,
        "series_length": res.series_length,
        "significance_ratio": res.significance_ratio(),
        "model": res.model,
        "layer": res.layer,
        "run": res.run,
        "pairs": [
            {"source": p.source, "target": p.target, "r": p.r, "p": p.p}
            for p in res.pairs
        ],
    }


def pairing_from_dict(d):
    pairs = [
        NeuronPair(
            source=int(p["source"]),
            target=None if p["target"] is None else int(p["target"]),
            r=float(p["r"]) if p["r"] is not None else math.nan,
            p=float(p["p"]) if p["p"] is not None else math.nan,
        )
        for p in d["pairs"]
    ]
    return PairingResult(
        direction=d["direction"],
        alpha=float(d["alpha"]),
        pairs=pairs,
        mean_r=float(d["mean_r"]) if d["mean_r"] is not None else math.nan,
        n_not_significant=int(d["n_not_significant"]),
        n_unpairable=int(d["n_unpairable"]),
        n_source=int(d["n_source"]),
        n_target=int(d["n_target"]),
        series_length=int(d["series_length"]),
        model=d.get("model", ""),
        layer=d.get("layer", ""),
        run=d.get("run", ""),
    )


def dump_pairing_json(res, path):
    def _clean(v):
        if isinstance(v, float) and math.isnan(v):
            return None
        return v

    d = pairing_to_dict(res)
    d["mean_r"] = _clean(d["mean_r"])
    for p in d["pairs"]:
        p["r"] = _clean(p["r"])
        p["p"] = _clean(p["p"])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pairing_json(path):
    with open(path, encoding="utf-8") as fh:
        return pairing_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Run summaries (mean PCC + significance ratio per model/layer/run)
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    model: str
    layer: str
    run: str
    mean_pcc: str
    ratio: str


def summarize(results):
    """One formatted row per pairing: mean PCC to 4 decimals, ratio "k/m"."""
    results = list(results)
    if not results:
        raise InputError("summarize needs at least one pairing result")
    return [
        SummaryRow(
            model=res.model,
            layer=res.layer,
            run=res.run,
            mean_pcc=f"{res.mean_r:.4f}",
            ratio=res.significance_ratio(),
        )
        for res in results
    ]


def summary_text(rows):
    header = ("Model", "Layer", "Run", "Mean PCC", "Not significant")
    cells = [header] + [(r.model, r.layer, r.run, r.mean_pcc, r.ratio) for r in rows]
    widths = [max(len(row[k]) for row in cells) for k in range(len(header))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def summary_csv(rows):
    lines = ["model,layer,run,mean_pcc,not_significant"]
    for r in rows:
        lines.append(f"{r.model},{r.layer},{r.run},{r.mean_pcc},{r.ratio}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Cross-annotation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LabelTable:
    labels: dict = field(default_factory=dict)  # neuron id -> description

    def describe(self, neuron_id):
        return self.labels.get(neuron_id, UNLABELED)


@dataclass(eq=False)
class AnnotationEntry:
    source: int
    source_label: str
    target: int | None
    target_label: str
    r: float
    p: float


def cross_annotate(pairing, src_labels, dst_labels):
    """Join each pair with the semantic descriptions of both neurons.

    Entries are sorted by descending r; unpairable sources sink to the end.
    Missing descriptions become the unlabeled placeholder, never an error.
    """
    entries = []
    for pair in pairing.pairs:
        entries.append(
            AnnotationEntry(
                source=pair.source,
                source_label=src_labels.describe(pair.source),
                target=pair.target,
                target_label=(
                    dst_labels.describe(pair.target)
                    if pair.target is not None
                    else UNLABELED
                ),
                r=pair.r,
                p=pair.p,
            )
        )
    entries.sort(key=lambda e: (math.isnan(e.r), -(e.r if not math.isnan(e.r) else 0.0), e.source))
    return entries


def annotation_jsonl(entries):
    lines = []
    for e in entries:
        lines.append(
            json.dumps(
                {
                    "source": e.source,
                    "source_label": e.source_label,
                    "target": e.target,
                    "target_label": e.target_label,
                    "r": None if math.isnan(e.r) else e.r,
                    "p": None if math.isnan(e.p) else e.p,
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def annotation_text(entries):
    lines = []
    for e in entries:
        r_s = "nan" if math.isnan(e.r) else f"{e.r:+.4f}"
        p_s = "nan" if math.isnan(e.p) else f"{e.p:.3g}"
        tgt = "-" if e.target is None else str(e.target)
        lines.append(
            f"{e.source:>4} {e.source_label!r} -> {tgt:>4} {e.target_label!r}"
            f"  r={r_s}  p={p_s}"
        )
    return "\n".join(lines) + "\n"
