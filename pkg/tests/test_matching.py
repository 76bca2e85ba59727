import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from neuropair import matching as mt
from neuropair.errors import InputError

rng = np.random.default_rng(2024)


# ---------------------------------------------------------------------------
# pearson
# ---------------------------------------------------------------------------

class TestPearson:
    def test_positive_affine(self):
        assert mt.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_negation(self):
        assert mt.pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_evaluated_case(self):
        assert mt.pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            mt.pearson([1, 2, 3], [1, 2])

    def test_too_short(self):
        with pytest.raises(InputError):
            mt.pearson([1, 2], [3, 4])

    def test_zero_variance_is_nan(self):
        assert math.isnan(mt.pearson([1.0, 1.0, 1.0], [1, 2, 3]))

    @given(
        st.floats(0.1, 50.0),
        st.floats(-10.0, 10.0),
        st.integers(0, 2 ** 31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_positive_affine_invariance(self, a, b, seed):
        g = np.random.default_rng(seed)
        x = g.standard_normal(20)
        y = g.standard_normal(20)
        r = mt.pearson(x, y)
        assert mt.pearson(a * x + b, y) == pytest.approx(r, abs=1e-12)
        assert mt.pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-12)


# ---------------------------------------------------------------------------
# significance
# ---------------------------------------------------------------------------

class TestPValue:
    def test_zero_r(self):
        assert mt.pearson_pvalue(0.0, 10) == pytest.approx(1.0)

    def test_perfect_r(self):
        assert mt.pearson_pvalue(1.0, 10) == 0.0
        assert mt.pearson_pvalue(-1.0, 10) == 0.0

    def test_reference_case(self):
        # r=0.8, T=4: t = 1.8856, df = 2
        assert mt.pearson_pvalue(0.8, 4) == pytest.approx(0.1999, abs=2e-4)

    def test_too_short(self):
        with pytest.raises(InputError):
            mt.pearson_pvalue(0.5, 2)

    def test_monotone_in_abs_r(self):
        ps = [mt.pearson_pvalue(r, 30) for r in np.linspace(0.0, 0.999, 40)]
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    @pytest.mark.parametrize("df", [2, 3, 5, 10, 25, 50])
    def test_against_t_density_quadrature(self, df):
        # brute-force numeric integration of the t density as the oracle
        def density(u):
            c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
            return c * (1 + u * u / df) ** (-(df + 1) / 2)

        for r in (0.05, 0.3, 0.6, 0.9):
            t_len = df + 2
            t_stat = r * math.sqrt(df / (1 - r * r))
            tail, _ = scipy.integrate.quad(density, t_stat, np.inf)
            assert mt.pearson_pvalue(r, t_len) == pytest.approx(2 * tail, abs=1e-8)

    def test_incomplete_beta_vs_scipy(self):
        for a, b, x in [(0.5, 0.5, 0.3), (4.0, 0.5, 0.9), (50.0, 0.5, 0.2), (500.0, 0.5, 0.99)]:
            assert mt.regularized_incomplete_beta(a, b, x) == pytest.approx(
                float(scipy.special.betainc(a, b, x)), abs=1e-10
            )

    def test_t_sf_high_df_accuracy(self):
        for df in (100, 500, 1000):
            for t in (0.1, 1.5, 3.0):
                assert mt.student_t_sf(t, df) == pytest.approx(
                    float(scipy.stats.t.sf(t, df)), abs=1e-10
                )


# ---------------------------------------------------------------------------
# correlation matrix
# ---------------------------------------------------------------------------

class TestCorrelationMatrix:
    def test_self_correlation_diagonal(self):
        f = rng.standard_normal((30, 4))
        corr = mt.correlation_matrix(f, f)
        np.testing.assert_allclose(np.diag(corr.r), 1.0, atol=1e-12)

    def test_orthogonal_columns(self):
        t = 64
        grid = np.arange(t)
        f = np.stack([np.sin(2 * np.pi * 3 * grid / t)], axis=1)
        g = np.stack([np.sin(2 * np.pi * 5 * grid / t)], axis=1)
        corr = mt.correlation_matrix(f, g)
        assert abs(corr.r[0, 0]) < 1e-12

    def test_matches_looped_pearson(self):
        f = rng.standard_normal((20, 3))
        g = rng.standard_normal((20, 4))
        corr = mt.correlation_matrix(f, g)
        for i in range(3):
            for j in range(4):
                r = mt.pearson(f[:, i], g[:, j])
                assert corr.r[i, j] == pytest.approx(r, abs=1e-12)
                assert corr.p[i, j] == pytest.approx(
                    mt.pearson_pvalue(r, 20), abs=1e-12
                )

    def test_dead_column_is_nan(self):
        f = rng.standard_normal((10, 2))
        f[:, 1] = 3.3
        corr = mt.correlation_matrix(f, rng.standard_normal((10, 2)))
        assert np.all(np.isnan(corr.r[1, :]))
        assert np.all(np.isfinite(corr.r[0, :]))

    def test_range_invariant(self):
        f = rng.standard_normal((15, 5))
        g = 2.0 * f + 0.1 * rng.standard_normal((15, 5))
        corr = mt.correlation_matrix(f, g)
        assert np.nanmax(corr.r) <= 1.0 and np.nanmin(corr.r) >= -1.0


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------

def _corr_from(r):
    r = np.asarray(r, dtype=np.float64)
    t_len = 20
    p = np.empty_like(r)
    for i in range(r.shape[0]):
        for j in range(r.shape[1]):
            p[i, j] = mt.pearson_pvalue(r[i, j], t_len) if np.isfinite(r[i, j]) else np.nan
    return mt.CorrelationMatrix(r=r, p=p, t_len=t_len)


class TestPairNeurons:
    def test_obvious_argmax(self):
        res = mt.pair_neurons(_corr_from([[0.9, 0.1], [0.2, 0.8]]), "fbn_to_filter")
        assert [(p.source, p.target) for p in res.pairs] == [(0, 0), (1, 1)]
        assert res.mean_r == pytest.approx(0.85)

    def test_tie_breaks_to_lowest_index(self):
        res = mt.pair_neurons(_corr_from([[0.1, 0.5, 0.2, 0.5]]), "fbn_to_filter")
        assert res.pairs[0].target == 1

    def test_all_nan_row_is_unpairable(self):
        r = np.array([[np.nan, np.nan], [0.3, 0.6]])
        res = mt.pair_neurons(_corr_from(r), "fbn_to_filter")
        assert res.pairs[0].target is None
        assert res.n_unpairable == 1
        assert len(res.pairs) == res.n_source == 2
        assert res.mean_r == pytest.approx(0.6)

    def test_nan_entries_skipped(self):
        r = np.array([[np.nan, 0.4, np.nan]])
        res = mt.pair_neurons(_corr_from(r), "fbn_to_filter")
        assert res.pairs[0].target == 1

    def test_self_pairing_on_square_identity(self):
        f = rng.standard_normal((25, 5))
        res = mt.pair_neurons(mt.correlation_matrix(f, f), "fbn_to_filter")
        assert [p.target for p in res.pairs] == list(range(5))

    def test_bad_direction(self):
        with pytest.raises(InputError):
            mt.pair_neurons(_corr_from([[0.5]]), "sideways")

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_invariant_under_positive_affine_transforms(self, seed):
        g = np.random.default_rng(seed)
        f = g.standard_normal((18, 3))
        h = g.standard_normal((18, 4))
        base = mt.pair_neurons(mt.correlation_matrix(f, h), "fbn_to_filter")
        f2 = f * g.uniform(0.2, 4.0, 3) + g.uniform(-5, 5, 3)
        h2 = h * g.uniform(0.2, 4.0, 4) + g.uniform(-5, 5, 4)
        scaled = mt.pair_neurons(mt.correlation_matrix(f2, h2), "fbn_to_filter")
        assert [p.target for p in base.pairs] == [p.target for p in scaled.pairs]
        for a, b in zip(base.pairs, scaled.pairs):
            assert a.r == pytest.approx(b.r, abs=1e-9)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def _result(mean_r=0.285, n_not=0, n_source=64, **meta):
    return mt.PairingResult(
        direction="fbn_to_filter", alpha=0.05, pairs=[], mean_r=mean_r,
        n_not_significant=n_not, n_unpairable=0, n_source=n_source,
        n_target=128, series_length=100, **meta,
    )


class TestSummarize:
    def test_single_row_formatting(self):
        rows = mt.summarize([_result(model="net", layer="last", run="1")])
        assert rows[0].mean_pcc == "0.2850"
        assert rows[0].ratio == "0/64"

    def test_not_significant_ratio(self):
        rows = mt.summarize([_result(n_not=2)])
        assert rows[0].ratio == "2/64"

    def test_multi_run_means_match_recomputation(self):
        results = []
        for run in range(3):
            g = np.random.default_rng(run)
            f = g.standard_normal((30, 3))
            h = g.standard_normal((30, 5))
            res = mt.pair_neurons(mt.correlation_matrix(f, h), "fbn_to_filter")
            res.run = str(run)
            results.append(res)
        rows = mt.summarize(results)
        for row, res in zip(rows, results):
            expect = np.mean([p.r for p in res.pairs])
            assert row.mean_pcc == f"{expect:.4f}"

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            mt.summarize([])

    def test_text_and_csv_shapes(self):
        rows = mt.summarize([_result(model="m", layer="l", run="1")])
        text = mt.summary_text(rows)
        assert "Mean PCC" in text and "0.2850" in text
        csv = mt.summary_csv(rows)
        assert csv.splitlines()[0] == "model,layer,run,mean_pcc,not_significant"


# ---------------------------------------------------------------------------
# cross-annotation
# ---------------------------------------------------------------------------

def _pairing_for_annotation():
    pairs = [
        mt.NeuronPair(source=25, target=7, r=0.61, p=0.001),
        mt.NeuronPair(source=3, target=2, r=0.72, p=0.0005),
        mt.NeuronPair(source=9, target=None, r=math.nan, p=math.nan),
    ]
    return mt.PairingResult(
        direction="fbn_to_filter", alpha=0.05, pairs=pairs, mean_r=0.665,
        n_not_significant=0, n_unpairable=1, n_source=3, n_target=8,
        series_length=50,
    )


class TestCrossAnnotate:
    def test_joins_descriptions(self):
        src = mt.LabelTable(labels={25: "place, navigation", 3: "faces"})
        dst = mt.LabelTable(labels={7: "rock", 2: "street scene"})
        entries = mt.cross_annotate(_pairing_for_annotation(), src, dst)
        by_source = {e.source: e for e in entries}
        assert by_source[25].source_label == "place, navigation"
        assert by_source[25].target_label == "rock"
        # sorted by descending r, unpairable last
        assert [e.source for e in entries] == [3, 25, 9]

    def test_empty_tables_yield_placeholders(self):
        entries = mt.cross_annotate(
            _pairing_for_annotation(), mt.LabelTable(), mt.LabelTable()
        )
        assert all(e.source_label == mt.UNLABELED for e in entries)
        assert len(entries) == 3

    def test_label_order_is_irrelevant(self):
        a = mt.LabelTable(labels={25: "x", 3: "y"})
        b = mt.LabelTable(labels={3: "y", 25: "x"})
        dst = mt.LabelTable(labels={7: "p", 2: "q"})
        res = _pairing_for_annotation()
        assert mt.annotation_jsonl(mt.cross_annotate(res, a, dst)) == mt.annotation_jsonl(
            mt.cross_annotate(res, b, dst)
        )

    def test_jsonl_is_utf8_parseable(self):
        import json

        entries = mt.cross_annotate(
            _pairing_for_annotation(),
            mt.LabelTable(labels={25: "déjà vu"}),
            mt.LabelTable(),
        )
        lines = mt.annotation_jsonl(entries).strip().split("\n")
        assert len(lines) == 3
        assert json.loads(lines[1])["source_label"] == "déjà vu"


# ---------------------------------------------------------------------------
# round trip
# ---------------------------------------------------------------------------

def test_pairing_json_round_trip(tmp_path):
    f = rng.standard_normal((25, 3))
    h = rng.standard_normal((25, 6))
    res = mt.pair_neurons(mt.correlation_matrix(f, h), "fbn_to_filter")
    res.model, res.layer, res.run = "net", "block4", "2"
    path = tmp_path / "pairing.json"
    mt.dump_pairing_json(res, path)
    back = mt.load_pairing_json(path)
    assert back.model == "net" and back.run == "2"
    assert [p.target for p in back.pairs] == [p.target for p in res.pairs]
    assert back.mean_r == pytest.approx(res.mean_r)
