import numpy as np
import pytest

from spikesurv.dataset import (
    SurvivalDataset,
    TimeGrid,
    build_time_grid,
    encode_target,
    encode_targets,
    fit_standardizer,
    generate_synthetic,
    load_covariates,
    load_csv,
    write_csv,
)
from spikesurv.errors import DimensionError, EmptyDatasetError, ParseError, SchemaError
from spikesurv.metrics import kaplan_meier


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_schema_mapping(self, tmp_path):
        p = _write(tmp_path, "f1,f2,time,event\n1,2,3.5,1\n0,0,1,0\n-1,4,2,1\n")
        ds = load_csv(p)
        assert (ds.n, ds.d) == (3, 2)
        assert ds.feature_names == ("f1", "f2")
        np.testing.assert_array_equal(ds.time, [3.5, 1.0, 2.0])
        np.testing.assert_array_equal(ds.event, [True, False, True])

    def test_columns_in_file_order_around_labels(self, tmp_path):
        p = _write(tmp_path, "time,b,event,a\n1,2,1,3\n")
        ds = load_csv(p)
        assert ds.feature_names == ("b", "a")
        np.testing.assert_array_equal(ds.X, [[2.0, 3.0]])

    def test_bad_event_names_row_and_column(self, tmp_path):
        p = _write(tmp_path, "f1,time,event\n1,1,1\n1,2,2\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p)
        assert exc.value.row == 2 and exc.value.column == "event"

    @pytest.mark.parametrize("cell", ["abc", "nan", "inf", ""])
    def test_bad_covariate_cell(self, tmp_path, cell):
        p = _write(tmp_path, f"f1,time,event\n{cell},1,1\n")
        with pytest.raises(ParseError) as exc:
            load_csv(p)
        assert exc.value.row == 1 and exc.value.column == "f1"

    def test_negative_time(self, tmp_path):
        p = _write(tmp_path, "f1,time,event\n0,-1,1\n")
        with pytest.raises(ParseError):
            load_csv(p)

    def test_missing_label_column(self, tmp_path):
        p = _write(tmp_path, "f1,event\n0,1\n")
        with pytest.raises(SchemaError):
            load_csv(p)

    def test_no_features(self, tmp_path):
        p = _write(tmp_path, "time,event\n1,1\n")
        with pytest.raises(EmptyDatasetError):
            load_csv(p)

    def test_no_rows(self, tmp_path):
        p = _write(tmp_path, "f1,time,event\n")
        with pytest.raises(EmptyDatasetError):
            load_csv(p)

    def test_custom_label_names(self, tmp_path):
        p = _write(tmp_path, "x,T,E\n1,2,0\n")
        ds = load_csv(p, time_col="T", event_col="E")
        assert ds.feature_names == ("x",) and not ds.event[0]

    def test_round_trip(self, tmp_path):
        ds = generate_synthetic(25, 3, [0], [0.5], 0.2, 0.1, seed=4)
        write_csv(ds, tmp_path / "r.csv")
        back = load_csv(tmp_path / "r.csv")
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.time, ds.time)
        np.testing.assert_array_equal(back.event, ds.event)

    def test_load_covariates_without_labels(self, tmp_path):
        p = _write(tmp_path, "a,b\n1,2\n3,4\n")
        X, names = load_covariates(p)
        assert names == ("a", "b")
        np.testing.assert_array_equal(X, [[1, 2], [3, 4]])


class TestSurvivalDataset:
    def test_duplicate_names(self):
        with pytest.raises(SchemaError):
            SurvivalDataset(np.zeros((2, 2)), [1, 2], [1, 0], ["a", "a"])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            SurvivalDataset(np.zeros((2, 1)), [1, 2, 3], [1, 0, 1], ["a"])

    def test_records_iterate(self):
        ds = SurvivalDataset([[1.0], [2.0]], [3, 4], [1, 0], ["a"])
        recs = ds.records
        assert len(recs) == 2 and recs[1].time == 4.0 and recs[1].event is False

    def test_select_features_reorders(self):
        ds = SurvivalDataset([[1.0, 2.0]], [1], [1], ["a", "b"])
        out = ds.select_features(["b", "a"])
        np.testing.assert_array_equal(out.X, [[2.0, 1.0]])

    def test_select_features_reports_mismatch(self):
        ds = SurvivalDataset([[1.0, 2.0]], [1], [1], ["a", "b"])
        with pytest.raises(SchemaError, match="missing.*c"):
            ds.select_features(["a", "c"])

    def test_immutable_arrays(self):
        ds = SurvivalDataset([[1.0]], [1], [1], ["a"])
        with pytest.raises(ValueError):
            ds.X[0, 0] = 5.0


class TestStandardizer:
    def test_population_std(self):
        ds = SurvivalDataset([[1.0], [2.0], [3.0]], [1, 1, 1], [1, 1, 1], ["a"])
        st = fit_standardizer(ds)
        assert st.means[0] == 2.0
        assert st.stds[0] == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
        assert st.apply(np.array([2.0]))[0] == 0.0

    def test_constant_column(self):
        ds = SurvivalDataset([[5.0], [5.0]], [1, 2], [1, 1], ["a"])
        st = fit_standardizer(ds)
        assert st.stds[0] == 1.0
        np.testing.assert_array_equal(st.apply(ds.X), [[0.0], [0.0]])

    def test_dimension_check(self):
        ds = SurvivalDataset([[1.0, 2.0]], [1], [1], ["a", "b"])
        with pytest.raises(DimensionError):
            fit_standardizer(ds).apply(np.zeros(3))


class TestTimeGrid:
    def test_event_quantiles(self):
        ds = SurvivalDataset(np.zeros((5, 1)), [1, 2, 3, 4, 100], [1, 1, 1, 1, 0], ["a"])
        g = build_time_grid(ds, 4)
        np.testing.assert_array_equal(g.points, [1.75, 2.5, 3.25, 4.0])

    def test_duplicates_pushed_up(self):
        ds = SurvivalDataset(np.zeros((4, 1)), [2, 2, 2, 2], [1, 1, 1, 1], ["a"])
        g = build_time_grid(ds, 3)
        assert g.points[0] == 2.0
        assert np.all(np.diff(g.points) > 0)

    def test_uniform(self):
        ds = SurvivalDataset(np.zeros((2, 1)), [3, 6], [0, 1], ["a"])
        np.testing.assert_array_equal(build_time_grid(ds, 3, "uniform").points, [2.0, 4.0, 6.0])

    def test_rejects_bad_m(self, cohort):
        with pytest.raises(ValueError):
            build_time_grid(cohort, 0)

    @pytest.mark.parametrize("pts", [[2.0, 1.0], [0.0, 1.0], [1.0, 1.0], []])
    def test_invalid_points(self, pts):
        with pytest.raises(ValueError):
            TimeGrid(pts)

    def test_all_censored_quantile_grid(self):
        ds = SurvivalDataset(np.zeros((2, 1)), [3, 6], [0, 0], ["a"])
        with pytest.raises(ValueError):
            build_time_grid(ds, 2)


class TestEncodeTarget:
    grid = TimeGrid([1.0, 2.0, 3.0])

    @pytest.mark.parametrize(
        "t,event,kind,k",
        [
            (0.5, True, "exact", 0),
            (1.0, True, "exact", 0),
            (1.5, True, "exact", 1),
            (3.5, True, "exact", 3),
            (0.5, False, "censored", 0),
            (1.0, False, "censored", 1),
            (2.5, False, "censored", 2),
            (9.0, False, "censored", 3),
        ],
    )
    def test_cases(self, t, event, kind, k):
        enc = encode_target(t, event, self.grid)
        assert (enc.kind, enc.k) == (kind, k)

    def test_vectorised_matches_scalar(self, rng):
        t = rng.uniform(0, 4, 200)
        e = rng.random(200) < 0.5
        k, exact = encode_targets(t, e, self.grid)
        for i in range(200):
            enc = encode_target(t[i], e[i], self.grid)
            assert enc.k == k[i] and (enc.kind == "exact") == exact[i]


class TestGenerateSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(50, 3, [1], [0.4], 0.1, 0.05, seed=9)
        b = generate_synthetic(50, 3, [1], [0.4], 0.1, 0.05, seed=9)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.time, b.time)

    def test_null_model_marginal(self):
        ds = generate_synthetic(20000, 1, [0], [0.0], 0.2, 1e-9, seed=1)
        km = kaplan_meier(ds.time, ds.event)
        for t in (1.0, 3.0, 6.0):
            assert abs(km(t) - np.exp(-0.2 * t)) < 0.01

    def test_shift(self):
        ds = generate_synthetic(4000, 2, [0], [0.0], 0.1, 0.1, seed=2, covariate_shift=2.0)
        assert abs(ds.X.mean() - 2.0) < 0.05

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_synthetic(10, 2, [2], [1.0], 0.1, 0.1, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic(10, 2, [0, 1], [1.0], 0.1, 0.1, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic(10, 2, [0], [1.0], 0.0, 0.1, seed=0)
