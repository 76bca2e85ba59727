"""Acceptance gate: one test per release criterion, each printing a verdict
line (run with ``pytest -s tests/test_acceptance.py`` to see them inline).

Numeric thresholds are fixed here and match the independent oracles coded in
each test; nothing is calibrated at runtime.
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from neuropair import dataio
from neuropair import embedding as em
from neuropair import matching as mt
from neuropair.activations import align
from neuropair.analysis import ablation_report, ablation_text, dtw, ols_fit, regression_json
from neuropair.errors import FormatError
from neuropair.numerics import grad_check
from neuropair.synth import SynthConfig, generate, score_recovery


def _verdict(name, ok, detail=""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
    assert ok, f"{name} failed: {detail}"


# ---------------------------------------------------------------------------
# shared full-scale pipeline run
# ---------------------------------------------------------------------------

ACCEPT_SEED = 42


def _pipeline(sigma):
    cfg = SynthConfig(
        subjects=12, t=200, n_voxels=500, m_sources=8, c_channels=16,
        sigma_brain=sigma, sigma_filter=sigma, seed=ACCEPT_SEED,
    )
    ds = generate(cfg)
    econf = em.EmbeddingConfig(
        n_voxels=500, n_networks=8, variant="lt", seed=ACCEPT_SEED,
    )
    model, log = em.train(ds.subjects, econf)
    fbn = em.average_test_activations(model, ds.subjects)
    acts_z, fbn_z = align(ds.filter_acts, fbn, lag=0)
    pairing = mt.pair_neurons(
        mt.correlation_matrix(fbn_z, acts_z), "fbn_to_filter"
    )
    recovery = score_recovery(pairing, fbn_z, ds)
    return {
        "dataset": ds, "config": econf, "model": model, "log": log,
        "pairing": pairing, "recovery": recovery,
    }


@pytest.fixture(scope="module")
def noisy_run():
    start = time.perf_counter()
    out = _pipeline(0.5)
    out["elapsed"] = time.perf_counter() - start
    return out


# ---------------------------------------------------------------------------
# criterion 1: gradient correctness
# ---------------------------------------------------------------------------

def test_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    s = rng.standard_normal((6, 20))
    worst = {}
    for variant in ("lt", "lt_lstm", "lt_msa"):
        config = em.EmbeddingConfig(
            n_voxels=20, n_networks=4, variant=variant, seed=3,
        )
        model = em.EmbeddingModel.initialize(config)
        params = model.named_parameters()
        worst[variant] = grad_check(
            lambda: model.loss_and_grads([s]), params, eps=1e-5
        )
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 10.0
    detail = ", ".join(f"{k} err={v:.2e}" for k, v in worst.items())
    _verdict("gradient-correctness", ok, f"{detail}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: oracle equivalence
# ---------------------------------------------------------------------------

def _dtw_recursive(x, y, i, j):
    d = abs(x[i] - y[j])
    if i == 0 and j == 0:
        return d
    if i == 0:
        return d + _dtw_recursive(x, y, 0, j - 1)
    if j == 0:
        return d + _dtw_recursive(x, y, i - 1, 0)
    return d + min(
        _dtw_recursive(x, y, i - 1, j),
        _dtw_recursive(x, y, i, j - 1),
        _dtw_recursive(x, y, i - 1, j - 1),
    )


def _pearson_closed_form(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = math.fsum((a - mx) ** 2 for a in x)
    vy = math.fsum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def _ols_closed_form(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxx = math.fsum((a - mx) ** 2 for a in x)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = math.fsum((b - intercept - slope * a) ** 2 for a, b in zip(x, y))
    ss_tot = math.fsum((b - my) ** 2 for b in y)
    r2 = 1.0 - ss_res / ss_tot
    t = slope / math.sqrt(ss_res / (n - 2) / sxx)
    p = 2.0 * float(scipy.stats.t.sf(abs(t), n - 2))
    return slope, intercept, r2, p


def _percentile_sorted(vals, q):
    s = sorted(vals)
    pos = q / 100.0 * (len(s) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def test_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    n_cases = 1000

    worst_pearson = 0.0
    for _ in range(n_cases):
        t_len = int(rng.integers(3, 60))
        x = rng.standard_normal(t_len)
        y = rng.standard_normal(t_len)
        worst_pearson = max(
            worst_pearson, abs(mt.pearson(x, y) - _pearson_closed_form(x, y))
        )

    worst_p = 0.0
    for _ in range(n_cases):
        t_len = int(rng.integers(3, 500))
        r = float(rng.uniform(-0.999, 0.999))
        t_stat = r * math.sqrt((t_len - 2) / (1 - r * r))
        ref = 2.0 * float(scipy.stats.t.sf(abs(t_stat), t_len - 2))
        worst_p = max(worst_p, abs(mt.pearson_pvalue(r, t_len) - ref))

    worst_dtw = 0.0
    for _ in range(n_cases):
        x = rng.standard_normal(int(rng.integers(1, 9)))
        y = rng.standard_normal(int(rng.integers(1, 9)))
        ref = _dtw_recursive(x, y, len(x) - 1, len(y) - 1)
        worst_dtw = max(worst_dtw, abs(dtw(x, y) - ref))

    worst_ols = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(3, 40))
        x = rng.standard_normal(n)
        y = 0.5 * x + rng.standard_normal(n)
        fit = ols_fit(list(zip(x, y)))
        slope, intercept, r2, p = _ols_closed_form(x, y)
        worst_ols = max(
            worst_ols,
            abs(fit.slope - slope), abs(fit.intercept - intercept),
            abs(fit.r_squared - r2), abs(fit.p_value - p),
        )

    worst_pct = 0.0
    for _ in range(n_cases):
        vals = rng.standard_normal(int(rng.integers(2, 80)))
        lo = float(rng.uniform(0, 60))
        hi = float(rng.uniform(lo + 1, 100))
        got_lo, got_hi = em.percentile_bounds(np.abs(vals), lo, hi)
        worst_pct = max(
            worst_pct,
            abs(got_lo - _percentile_sorted(np.abs(vals), lo)),
            abs(got_hi - _percentile_sorted(np.abs(vals), hi)),
        )

    elapsed = time.perf_counter() - start
    worst = {
        "pearson": worst_pearson, "pvalue": worst_p, "dtw": worst_dtw,
        "ols": worst_ols, "percentile": worst_pct,
    }
    ok = max(worst.values()) < 1e-8 and elapsed < 60.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    _verdict("oracle-equivalence", ok, f"{detail}, {elapsed:.1f}s over {n_cases} cases each")


# ---------------------------------------------------------------------------
# criterion 3: planted-coupling recovery
# ---------------------------------------------------------------------------

def test_planted_coupling_recovery(noisy_run):
    clean = _pipeline(0.0)
    ok = (
        noisy_run["recovery"] >= 7.0 / 8.0
        and clean["recovery"] == 1.0
        and noisy_run["elapsed"] < 300.0
    )
    _verdict(
        "planted-coupling-recovery", ok,
        f"sigma=0.5 recovered {noisy_run['recovery'] * 8:.0f}/8, "
        f"sigma=0 recovered {clean['recovery'] * 8:.0f}/8, "
        f"{noisy_run['elapsed']:.1f}s",
    )


# ---------------------------------------------------------------------------
# criterion 4: training contract
# ---------------------------------------------------------------------------

def test_training_contract(noisy_run, tmp_path):
    log = noisy_run["log"]
    halved = log.final_train_mse <= 0.5 * log.initial_train_mse
    val_finite = all(math.isfinite(row[2]) for row in log.rows)

    retrained, _ = em.train(noisy_run["dataset"].subjects, noisy_run["config"])
    p1, p2 = tmp_path / "a.npec", tmp_path / "b.npec"
    em.save_checkpoint(noisy_run["model"], p1)
    em.save_checkpoint(retrained, p2)
    identical = p1.read_bytes() == p2.read_bytes()

    ok = halved and val_finite and identical
    _verdict(
        "training-contract", ok,
        f"mse {log.initial_train_mse:.4f}->{log.final_train_mse:.4f}, "
        f"val finite={val_finite}, checkpoint bit-identical={identical}",
    )


# ---------------------------------------------------------------------------
# criterion 5: invariance suite
# ---------------------------------------------------------------------------

def test_invariance_suite():
    rng = np.random.default_rng(21)
    f = rng.standard_normal((40, 5))
    g = rng.standard_normal((40, 9))
    base = mt.pair_neurons(mt.correlation_matrix(f, g), "fbn_to_filter")
    f2 = f * rng.uniform(0.1, 5.0, 5) + rng.uniform(-3, 3, 5)
    g2 = g * rng.uniform(0.1, 5.0, 9) + rng.uniform(-3, 3, 9)
    scaled = mt.pair_neurons(mt.correlation_matrix(f2, g2), "fbn_to_filter")
    pairing_invariant = [p.target for p in base.pairs] == [
        p.target for p in scaled.pairs
    ]

    x = rng.standard_normal(30)
    y = rng.standard_normal(30)
    sign_flips = mt.pearson(-x, y) == pytest.approx(-mt.pearson(x, y), abs=1e-12)

    ratio = base.significance_ratio()
    direct = sum(1 for p in base.pairs if p.p > 0.05)
    ratio_ok = ratio == f"{direct}/5"

    ok = pairing_invariant and sign_flips and ratio_ok
    _verdict(
        "invariance-suite", ok,
        f"affine-invariant={pairing_invariant}, sign-flip={sign_flips}, ratio={ratio}",
    )


# ---------------------------------------------------------------------------
# criterion 6: report fidelity
# ---------------------------------------------------------------------------

def test_report_fidelity(noisy_run):
    import json

    rows = mt.summarize([noisy_run["pairing"]])
    table = mt.summary_text(rows)
    header = table.splitlines()[0]
    report_ok = all(col in header for col in ("Model", "Layer", "Run", "Mean PCC", "Not significant"))
    csv_ok = mt.summary_csv(rows).splitlines()[0] == "model,layer,run,mean_pcc,not_significant"

    from neuropair.analysis import MetricBundle

    bundles = {
        "lt": [MetricBundle(0.97, 1.53, 1.23, 18.0, 0.23)],
        "lt_lstm": [MetricBundle(0.93, 1.44, 1.19, 18.4, 0.28)],
        "lt_msa": [MetricBundle(0.96, 1.51, 1.22, 18.7, 0.24)],
    }
    ab_rows = ablation_report(bundles)
    ab_header = ablation_text(ab_rows).splitlines()[0].split()
    ablate_ok = ab_header == ["Variant", "MAE", "MSE", "RMSE", "DTW", "PCC"]

    rng = np.random.default_rng(2)
    x = np.linspace(0.22, 0.31, 10)
    y = 0.9 * x + 0.45 + rng.normal(0, 0.005, 10)
    fit = ols_fit(list(zip(x, y)))
    fit_fields = set(json.loads(regression_json(fit))) == {
        "slope", "intercept", "r_squared", "p_value", "n"
    }
    regress_ok = fit.r_squared > 0.7 and fit.p_value < 0.05 and fit_fields

    ok = report_ok and csv_ok and ablate_ok and regress_ok
    _verdict(
        "report-fidelity", ok,
        f"summary cols={report_ok}, ablation cols={ablate_ok}, "
        f"regression r2={fit.r_squared:.3f} p={fit.p_value:.2g}",
    )


# ---------------------------------------------------------------------------
# criterion 7: format round-trip
# ---------------------------------------------------------------------------

def test_format_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    arr = rng.standard_normal((6, 4, 3, 2))
    p1, p2 = tmp_path / "a.npy", tmp_path / "b.npy"
    dataio.write_tensor(p1, arr)
    dataio.write_tensor(p2, dataio.read_tensor(p1))
    bytes_ok = p1.read_bytes() == p2.read_bytes()

    sig = tmp_path / "sig.npy"
    dataio.write_tensor(sig, rng.standard_normal((5, 3)))
    manifest = dataio.Manifest(name="x", tr_seconds=1.0)
    manifest.subjects.append(dataio.ManifestSubject("s0", sig, "train"))
    mpath = tmp_path / "manifest.ini"
    dataio.save_manifest(manifest, mpath, root=tmp_path)
    corrupted = bytearray(sig.read_bytes())
    corrupted[3] = 0xFF
    sig.write_bytes(bytes(corrupted))
    try:
        dataio.load_manifest(mpath)
        fail_fast = False
    except FormatError:
        fail_fast = True

    ok = bytes_ok and fail_fast
    _verdict(
        "format-round-trip", ok,
        f"byte-identity={bytes_ok}, manifest fail-fast={fail_fast}",
    )
