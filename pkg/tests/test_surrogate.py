import numpy as np
import pandas as pd
import pytest

from walkerforge import dataset as ds
from walkerforge.core import original_design
from walkerforge.errors import (
    DimensionMismatch,
    EncodingError,
    InsufficientData,
)
from walkerforge.fea import TARGET_NAMES
from walkerforge.sampling import ParameterRanges
from walkerforge.surrogate import (
    BASE_LEARNERS,
    SurrogateConfig,
    encode_designs,
    encode_matrix,
    encoding_schema_hash,
    evaluate,
    load_ensemble,
    r_squared,
    save_ensemble,
    split_dataset,
    train,
)
from tests.conftest import FAST_SURROGATE


class TestEncoding:
    def test_shape_and_range(self, small_dataset, default_ranges):
        designs = ds.designs_from_frame(small_dataset)
        X = encode_designs(designs, default_ranges)
        assert X.shape == (len(designs), 20)
        assert np.all(X[:, :14] >= -1e-12) and np.all(X[:, :14] <= 1 + 1e-12)
        # exactly one hot per material block
        assert np.array_equal(X[:, 14:17].sum(axis=1), np.ones(len(designs)))
        assert np.array_equal(X[:, 17:20].sum(axis=1), np.ones(len(designs)))

    def test_unknown_material_rejected(self, default_ranges):
        from dataclasses import replace

        d = replace(original_design(), frame_material="Unobtanium")
        with pytest.raises(EncodingError):
            encode_designs([d], default_ranges)

    def test_matrix_encoder_matches_scalar(self, default_ranges):
        d = original_design()
        a = encode_designs([d], default_ranges)
        b = encode_matrix(d.continuous()[None, :], np.array([[0, 0]]), default_ranges)
        assert np.allclose(a, b)

    def test_schema_hash_tracks_ranges(self, default_ranges):
        from walkerforge.sampling import DEFAULT_RANGES

        other = ParameterRanges.from_bounds(
            {**DEFAULT_RANGES, "overall_height": (30.0, 40.0)}
        )
        assert encoding_schema_hash(default_ranges) != encoding_schema_hash(other)
        assert encoding_schema_hash(default_ranges) == encoding_schema_hash(
            ParameterRanges.default()
        )


class TestMetricsAndSplit:
    def test_r_squared_perfect_and_mean(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert r_squared(y, y) == 1.0
        assert r_squared(np.full(4, y.mean()), y) == pytest.approx(0.0)
        assert r_squared(np.zeros(4), np.zeros(4)) == 0.0  # constant convention

    def test_r_squared_shape_check(self):
        with pytest.raises(DimensionMismatch):
            r_squared([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_split_disjoint_and_deterministic(self, small_dataset):
        tr1, te1 = split_dataset(small_dataset, 0.2, seed=0)
        tr2, te2 = split_dataset(small_dataset, 0.2, seed=0)
        pd.testing.assert_frame_equal(tr1, tr2)
        pd.testing.assert_frame_equal(te1, te2)
        assert set(tr1.design_id).isdisjoint(te1.design_id)
        n_ok = (small_dataset.sim_status == "ok").sum()
        assert len(tr1) + len(te1) == n_ok
        assert len(te1) == int(round(0.2 * n_ok))

    def test_split_excludes_failed_rows(self, small_dataset):
        bad = small_dataset.copy()
        bad.loc[bad.index[:5], "sim_status"] = "failed"
        tr, te = split_dataset(bad, 0.2, seed=0)
        assert not set(bad.design_id.iloc[:5]) & (set(tr.design_id) | set(te.design_id))

    def test_split_needs_enough_rows(self, small_dataset):
        with pytest.raises(InsufficientData):
            split_dataset(small_dataset.head(10), 0.2)


class TestTraining:
    def test_covers_all_targets(self, fast_ensemble):
        ens, _, _ = fast_ensemble
        assert set(ens.targets) == set(TARGET_NAMES)
        assert len(TARGET_NAMES) == 9

    def test_mass_model_quality_even_on_small_data(self, fast_ensemble):
        ens, _, test_df = fast_ensemble
        rep = evaluate(ens, test_df)
        r2 = dict(zip(rep.rows.target, rep.rows.r2))
        assert r2["mass_lbs"] > 0.9  # mass is nearly closed-form in the inputs

    def test_no_leakage_between_split_halves(self, fast_ensemble):
        _, train_df, test_df = fast_ensemble
        assert set(train_df.design_id).isdisjoint(test_df.design_id)

    def test_train_determinism(self, small_dataset, default_ranges):
        tr, te = split_dataset(small_dataset, 0.2, seed=0)
        d = original_design()
        e1 = train(tr, default_ranges, FAST_SURROGATE)
        e2 = train(tr, default_ranges, FAST_SURROGATE)
        assert e1.predict(d).mass_lbs == e2.predict(d).mass_lbs

    def test_constant_target_handled(self, small_dataset, default_ranges):
        frozen = small_dataset.copy()
        frozen["com_vertical_in"] = 5.0
        tr, _ = split_dataset(frozen, 0.2, seed=0)
        ens = train(tr, default_ranges, FAST_SURROGATE)
        assert ens.targets["com_vertical_in"].constant_value == 5.0
        assert any("com_vertical_in" in w for w in ens.warnings)

    def test_predict_record_fields(self, fast_ensemble):
        ens, _, _ = fast_ensemble
        rec = ens.predict(original_design())
        assert 5.0 < rec.mass_lbs < 10.0
        assert rec.tip_status is None

    def test_theta_rows_filtered_to_tipping(self, small_dataset):
        tipping = small_dataset[small_dataset.tip_status == "tips"]
        assert len(tipping) >= 50  # enough rows survive the filter to train


class TestEvaluation:
    def test_report_structure(self, fast_ensemble):
        ens, train_df, test_df = fast_ensemble
        rep = evaluate(ens, test_df, len(train_df))
        assert list(rep.rows.target) == list(TARGET_NAMES)
        for base in BASE_LEARNERS:
            assert f"r2_{base}" in rep.rows.columns
        assert rep.rows.reliable.dtype == bool
        assert "mass_lbs" in rep.reliable_targets()

    def test_report_round_trips_through_csv(self, fast_ensemble, tmp_path):
        ens, _, test_df = fast_ensemble
        rep = evaluate(ens, test_df)
        p = tmp_path / "r2.csv"
        rep.to_csv(p)
        back = pd.read_csv(p)
        assert list(back.target) == list(TARGET_NAMES)


class TestPersistence:
    def test_round_trip(self, fast_ensemble, tmp_path):
        ens, _, _ = fast_ensemble
        p = tmp_path / "model.joblib"
        save_ensemble(ens, p)
        loaded = load_ensemble(p)
        d = original_design()
        assert loaded.predict(d).mass_lbs == ens.predict(d).mass_lbs
        assert loaded.schema_hash == ens.schema_hash

    def test_version_check(self, tmp_path):
        import joblib

        p = tmp_path / "model.joblib"
        joblib.dump({"format_version": 99, "ensemble": None}, p)
        with pytest.raises(EncodingError):
            load_ensemble(p)
