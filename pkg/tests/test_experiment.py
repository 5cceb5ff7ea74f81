import csv

import numpy as np
import pytest

from nncommittee.data import generate_synthetic
from nncommittee.experiment import (
    RunRecord,
    SchemeId,
    derive_seed,
    emit_histograms,
    emit_scatter,
    prepare,
    run_experiment,
    run_scheme,
    summarize,
    write_outputs,
)

SMALL = dict(hidden=5, epochs={"mse": 5, "msereg": 8})


def rec(ident, dcf, scheme=SchemeId.MSE_SINGLE, i=0, stalled=False):
    return RunRecord(SchemeId.parse(scheme), i, (i,), ident, dcf, stalled)


@pytest.fixture(scope="module")
def small():
    tr, te, _ = prepare(generate_synthetic(4, 8, 3, seed=3, spread=2.0), 5)
    return tr, te


def nearest_mean_rate(tr, te):
    means = np.stack([tr.features[tr.person_ids == p].mean(axis=0) for p in range(tr.people_count)])
    d = ((te.features[:, None, :] - means[None]) ** 2).sum(axis=2)
    return float(np.mean(d.argmin(axis=1) == te.person_ids))


class TestSchemeId:
    @pytest.mark.parametrize("text,expected", [
        ("a", SchemeId.MSE_SINGLE), ("b", SchemeId.MSEREG_SINGLE),
        ("c", SchemeId.MSE_COMMITTEE), ("d", SchemeId.MSEREG_COMMITTEE),
        ("MSEREG_committee", SchemeId.MSEREG_COMMITTEE),
    ])
    def test_parse(self, text, expected):
        assert SchemeId.parse(text) is expected

    def test_unknown(self):
        with pytest.raises(ValueError):
            SchemeId.parse("e")

    def test_properties(self):
        assert SchemeId.MSEREG_COMMITTEE.training == "msereg"
        assert SchemeId.MSE_COMMITTEE.is_committee and not SchemeId.MSE_SINGLE.is_committee


class TestSeeds:
    def test_distinct(self):
        seeds = {derive_seed(0, role, r, m) for role in (0, 1) for r in range(50) for m in range(3)}
        assert len(seeds) == 300

    def test_stable(self):
        assert derive_seed(7, 1, 3, 2) == derive_seed(7, 1, 3, 2)
        assert 0 <= derive_seed(7, 1, 3, 2) < 2 ** 63


class TestRunScheme:
    def test_deterministic(self, small):
        tr, te = small
        a = run_experiment(tr, te, "abcd", n_runs=2, base_seed=1, **SMALL)
        b = run_experiment(tr, te, "abcd", n_runs=2, base_seed=1, **SMALL)
        assert a == b

    def test_record_fields(self, small):
        tr, te = small
        recs = run_scheme("c", tr, te, n_runs=2, base_seed=0, **SMALL)
        assert [r.run_index for r in recs] == [0, 1]
        assert all(len(r.seeds) == 3 and len(set(r.seeds)) == 3 for r in recs)
        assert all(0 <= r.identification_rate <= 1 and r.min_dcf >= 0 for r in recs)

    def test_single_schemes_share_initializations(self, small):
        tr, te = small
        a = run_scheme("a", tr, te, n_runs=2, **SMALL)
        b = run_scheme("b", tr, te, n_runs=2, **SMALL)
        assert [r.seeds for r in a] == [r.seeds for r in b]

    @pytest.mark.parametrize("single,committee", [("a", "c"), ("b", "d")])
    def test_clone_members_reproduce_single(self, small, single, committee):
        tr, te = small
        s = run_scheme(single, tr, te, n_runs=2, **SMALL)
        c = run_scheme(committee, tr, te, n_runs=2, clone_members=True, **SMALL)
        for x, y in zip(s, c):
            assert x.identification_rate == y.identification_rate
            assert x.min_dcf == pytest.approx(y.min_dcf, abs=1e-12)

    def test_parallel_matches_serial(self, small):
        tr, te = small
        serial = run_scheme("a", tr, te, n_runs=3, **SMALL)
        parallel = run_scheme("a", tr, te, n_runs=3, jobs=2, **SMALL)
        assert serial == parallel

    def test_easy_data(self):
        tr, te, _ = prepare(generate_synthetic(4, 8, 3, seed=11, spread=10.0), 5)
        assert nearest_mean_rate(tr, te) == 1.0
        results = run_experiment(tr, te, "abcd", n_runs=2, hidden=6)
        for recs in results.values():
            assert all(r.identification_rate >= 0.95 for r in recs)

    def test_too_few_runs(self, small):
        with pytest.raises(ValueError):
            run_scheme("a", *small, n_runs=1)


class TestSummarize:
    def test_identical_records(self):
        s = summarize([rec(0.9, 0.1, i=i) for i in range(5)])[SchemeId.MSE_SINGLE]
        assert s.ident_std == 0.0 and s.dcf_std == 0.0
        assert s.corr is None
        assert s.ident_mean == pytest.approx(0.9)

    def test_two_points(self):
        s = summarize([rec(0.8, 0.2), rec(0.9, 0.1, i=1)])[SchemeId.MSE_SINGLE]
        assert s.corr == pytest.approx(-1.0)
        assert s.ident_std == pytest.approx(np.std([0.8, 0.9], ddof=1))

    def test_stalled_excluded(self):
        recs = [rec(0.8, 0.2), rec(0.9, 0.1, i=1), rec(0.1, 0.9, i=2, stalled=True)]
        s = summarize(recs)[SchemeId.MSE_SINGLE]
        assert (s.n_runs, s.n_excluded) == (2, 1)
        assert s.ident_mean == pytest.approx(0.85)

    def test_too_few(self):
        with pytest.raises(ValueError):
            summarize([rec(0.8, 0.2)])


class TestHistograms:
    def test_mass_conserved(self):
        rng = np.random.default_rng(0)
        recs = [rec(*rng.random(2), i=i) for i in range(37)]
        for h in emit_histograms(recs, bins=7).values():
            assert h.counts.sum() == 37 and len(h.edges) == 8

    def test_single_bin_when_constant(self):
        h = emit_histograms([rec(0.9, 0.1, i=i) for i in range(4)])[SchemeId.MSE_SINGLE, "ident"]
        assert np.count_nonzero(h.counts) == 1 and h.counts.sum() == 4

    def test_uniform(self):
        rng = np.random.default_rng(1)
        recs = [rec(x, 0.0, i=i) for i, x in enumerate(rng.random(100_000))]
        h = emit_histograms(recs, bins=10)[SchemeId.MSE_SINGLE, "ident"]
        np.testing.assert_allclose(h.counts / 100_000, 0.1, atol=0.01)

    def test_bins_validated(self):
        with pytest.raises(ValueError):
            emit_histograms([rec(0.9, 0.1)], bins=1)


class TestScatter:
    def test_two_points_on_line(self):
        fit = emit_scatter([rec(0.8, 0.3), rec(0.9, 0.1, i=1)])[SchemeId.MSE_SINGLE]
        for x, y in fit.points:
            assert fit.slope * x + fit.intercept == pytest.approx(y)

    def test_collinear_zero_residual(self):
        xs = np.linspace(0.7, 0.95, 6)
        fit = emit_scatter([rec(x, 1 - 0.5 * x, i=i) for i, x in enumerate(xs)])[SchemeId.MSE_SINGLE]
        assert fit.slope == pytest.approx(-0.5)
        res = fit.points[:, 1] - (fit.slope * fit.points[:, 0] + fit.intercept)
        np.testing.assert_allclose(res, 0, atol=1e-12)

    def test_slope_sign_matches_corr(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            recs = [rec(*rng.random(2), i=i) for i in range(10)]
            fit = emit_scatter(recs)[SchemeId.MSE_SINGLE]
            corr = summarize(recs)[SchemeId.MSE_SINGLE].corr
            assert np.sign(fit.slope) == np.sign(corr)

    def test_undefined_slope(self):
        fit = emit_scatter([rec(0.9, 0.1), rec(0.9, 0.3, i=1)])[SchemeId.MSE_SINGLE]
        assert fit.slope is None


class TestWriteOutputs:
    def test_layout(self, tmp_path):
        results = {SchemeId.parse(s): [rec(0.8 + 0.01 * i, 0.1 - 0.01 * i, s, i) for i in range(4)]
                   for s in "abcd"}
        write_outputs(results, tmp_path, bins=5)
        for s in SchemeId:
            d = tmp_path / s.value
            for name in ("records", "histogram_ident", "histogram_dcf", "scatter"):
                assert (d / f"{name}.csv").is_file()
            with (d / "histogram_ident.csv").open() as fh:
                rows = list(csv.DictReader(fh))
            assert len(rows) == 5 and sum(int(r["count"]) for r in rows) == 4
        with (tmp_path / "summary.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["scheme"] for r in rows] == [s.value for s in SchemeId]
        assert float(rows[0]["corr"]) == pytest.approx(-1.0)

    def test_undefined_marker(self, tmp_path):
        write_outputs({SchemeId.MSE_SINGLE: [rec(0.9, 0.1), rec(0.9, 0.1, i=1)]}, tmp_path)
        text = (tmp_path / "summary.csv").read_text()
        assert "undefined" in text
