"""Forest regression, PCA, outlier removal, feature matrices, grid search."""

import numpy as np
import pytest

from lervup.baseline import BaselineConfig, rate_profile_baseline
from lervup.calibration import (
    Calibration,
    DetectorSelection,
    ThresholdEntry,
    ThresholdTable,
)
from lervup.core import (
    DegenerateDataError,
    DetectionRecord,
    ManualProfileRating,
    PhotoDetections,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    situation_of,
)
from lervup.forest import ForestConfig, RandomForest, fit_forest
from lervup.learning import (
    FeaturePipeline,
    GridSpec,
    TrainedModel,
    build_feature_pipeline,
    build_training_matrix,
    cv_folds,
    fit_pca,
    grid_search_train,
    remove_outliers,
    reg_raw_matrix,
    trace_to_csv,
)

ACC = situation_of("ACC")


class TestForest:
    def test_constant_target_predicts_constant(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(30, 4))
        y = np.full(30, 1.5)
        forest = fit_forest(X, y, ForestConfig(n_trees=10, seed=0))
        assert np.allclose(forest.predict(rng.uniform(0, 1, size=(5, 4))), 1.5)

    def test_memorizing_tree_reproduces_targets(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, size=(40, 3))
        y = rng.uniform(-3, 3, size=40)
        cfg = ForestConfig(n_trees=1, max_depth=None, min_samples_leaf=1,
                           bootstrap=False, feature_fraction=1.0, seed=0)
        forest = fit_forest(X, y, cfg)
        assert np.allclose(forest.predict(X), y, atol=1e-12)

    def test_recovers_linear_signal(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(200, 3))
        y = 3.0 * X[:, 0]
        X_test = rng.uniform(-1, 1, size=(80, 3))
        y_test = 3.0 * X_test[:, 0]
        forest = fit_forest(X, y, ForestConfig(n_trees=100, seed=1))
        rmse = float(np.sqrt(np.mean((forest.predict(X_test) - y_test) ** 2)))
        assert rmse < 0.3 * float(np.std(y))

    def test_predictions_within_target_range(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 1, size=(60, 4))
        y = rng.uniform(-2, 2, size=60)
        forest = fit_forest(X, y, ForestConfig(n_trees=30, seed=2))
        predictions = forest.predict(rng.uniform(-2, 3, size=(40, 4)))
        assert predictions.min() >= y.min() - 1e-12
        assert predictions.max() <= y.max() + 1e-12

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, size=(50, 4))
        y = rng.uniform(-1, 1, size=50)
        cfg = ForestConfig(n_trees=20, seed=11)
        a = fit_forest(X, y, cfg)
        b = fit_forest(X, y, cfg)
        assert a.to_dict() == b.to_dict()

    def test_json_roundtrip_preserves_predictions(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 1, size=(50, 4))
        y = rng.uniform(-1, 1, size=50)
        forest = fit_forest(X, y, ForestConfig(n_trees=10, seed=3))
        import json
        restored = RandomForest.from_dict(json.loads(json.dumps(forest.to_dict())))
        probe = rng.uniform(0, 1, size=(20, 4))
        assert np.array_equal(forest.predict(probe), restored.predict(probe))


class TestPCA:
    def test_one_dimensional_subspace_exact_reconstruction(self):
        rng = np.random.default_rng(7)
        direction = np.array([1.0, 2.0, -1.0])
        X = rng.uniform(-1, 1, size=(40, 1)) * direction + np.array([5, 1, 0])
        pca = fit_pca(X, 1)
        reconstructed = pca.inverse_transform(pca.transform(X))
        assert np.allclose(reconstructed, X, atol=1e-9)

    def test_isotropic_explained_variance(self):
        rng = np.random.default_rng(8)
        X = rng.normal(0, 1, size=(5000, 2))
        pca = fit_pca(X, 2)
        total = float(np.sum(X.var(axis=0)))
        assert float(pca.explained_variance.sum()) == pytest.approx(
            total, rel=0.01)

    def test_mean_projects_to_zero(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0, 4, size=(30, 5))
        pca = fit_pca(X, 3)
        assert np.allclose(pca.transform(X.mean(axis=0)[None, :]), 0.0,
                           atol=1e-12)

    def test_zero_variance_input_yields_zero_components(self):
        X = np.tile([1.0, 2.0, 3.0], (10, 1))
        pca = fit_pca(X, 2)
        assert np.allclose(pca.components, 0.0)
        assert np.allclose(pca.transform(X), 0.0)

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(10)
        X = rng.normal(0, 1, size=(200, 4)) * np.array([3.0, 1.0, 0.5, 0.1])
        pca = fit_pca(X, 4)
        for row in pca.components:
            if np.any(row != 0):
                assert row[int(np.argmax(np.abs(row)))] > 0


class TestRemoveOutliers:
    def test_keep_all_at_100(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, size=(17, 16))
        assert np.array_equal(remove_outliers(X, 0.1, 100), np.arange(17))

    def test_far_outlier_removed(self):
        rng = np.random.default_rng(12)
        cluster = rng.normal(0, 0.05, size=(10, 16))
        outlier = np.full((1, 16), 25.0)
        X = np.vstack([cluster, outlier])
        kept = remove_outliers(X, 0.5, 90)
        assert len(kept) == int(np.ceil(0.9 * 11))
        assert 10 not in kept

    def test_identical_points_tie_break_by_index(self):
        X = np.tile([1.0, 2.0], (10, 1))
        kept = remove_outliers(X, 0.05, 80)
        assert len(kept) == int(np.ceil(0.8 * 10))
        assert np.array_equal(kept, np.arange(8))

    def test_exact_retention_counts(self):
        rng = np.random.default_rng(13)
        for n in (7, 10, 23, 40):
            X = rng.uniform(0, 1, size=(n, 16))
            for g in (80, 85, 90, 95, 100):
                kept = remove_outliers(X, 0.1, g)
                assert len(kept) == int(np.ceil(g / 100 * n))


def make_fixture_dataset():
    """Small dataset around the two-photo fixture profile."""
    model = SituationModel.from_pairs(
        ACC, [("book", 1.23), ("cocaine", -2.84)])
    table = ThresholdTable("ACC", {
        "book": ThresholdEntry("book", 0.1, 0.6, 3),
        "cocaine": ThresholdEntry("cocaine", 0.1, 0.7, 3)})
    calibration = Calibration(
        table, DetectorSelection(-1.0, frozenset({"book", "cocaine"})), 0.1)
    rng = np.random.default_rng(21)
    profiles = [ProfileDetections("u0", (
        PhotoDetections("u0p0", (DetectionRecord("book", 0.9),)),
        PhotoDetections("u0p1", (DetectionRecord("cocaine", 0.8),)),
        PhotoDetections("u0p2", ()),
    ))]
    for i in range(1, 16):
        photos = []
        for j in range(3):
            detections = tuple(
                DetectionRecord(str(rng.choice(["book", "cocaine"])),
                                float(rng.uniform(0.2, 1.0)))
                for _ in range(int(rng.integers(0, 3))))
            photos.append(PhotoDetections(f"u{i}p{j}", detections))
        profiles.append(ProfileDetections(f"u{i}", tuple(photos)))
    manual = {}
    split = {}
    for i, profile in enumerate(profiles):
        manual[(profile.user_id, "ACC")] = ManualProfileRating(
            profile.user_id, "ACC", (int(rng.integers(-3, 4)),))
        split[profile.user_id] = "TRAIN" if i < 12 else "VALIDATION"
    return model, calibration, RatedProfileDataset(tuple(profiles), manual, split)


class TestFeatureMatrices:
    def test_reg_raw_fixture_values(self):
        model, calibration, dataset = make_fixture_dataset()
        pipeline = FeaturePipeline("reg_raw", model, calibration)
        vector = pipeline.vector_for(dataset.profiles[0])
        # columns sorted: book, cocaine
        assert vector[0] == pytest.approx(1.23 * 0.9 / 2, abs=1e-12)
        assert vector[1] == pytest.approx(-2.84 * 0.8 / 2, abs=1e-12)

    def test_uncovered_profile_omitted(self):
        model, calibration, dataset = make_fixture_dataset()
        empty = ProfileDetections("empty", (PhotoDetections("e0", ()),))
        profiles = dataset.profiles + (empty,)
        manual = dict(dataset.manual)
        manual[("empty", "ACC")] = ManualProfileRating("empty", "ACC", (0,))
        split = dict(dataset.split)
        split["empty"] = "TRAIN"
        bigger = RatedProfileDataset(profiles, manual, split)
        pipeline = FeaturePipeline("reg_raw", model, calibration)
        matrix = build_training_matrix(bigger, "ACC", pipeline)
        assert "empty" in matrix.omitted
        assert "empty" not in matrix.user_ids

    def test_reg_raw_rows_sum_to_baseline_rating(self):
        model, calibration, dataset = make_fixture_dataset()
        X, covered = reg_raw_matrix(dataset.profiles, model, calibration)
        cfg = BaselineConfig("base_eta")
        for i, profile in enumerate(dataset.profiles):
            baseline = rate_profile_baseline(
                profile, model, calibration.table, calibration.selection, cfg)
            if baseline is None:
                assert covered[i] == 0
            else:
                assert X[i].sum() == pytest.approx(baseline, abs=1e-9)

    def test_lervup_vector_is_16_dim(self):
        model, calibration, dataset = make_fixture_dataset()
        pipeline = build_feature_pipeline(
            dataset, "ACC", model, calibration, "lervup", None, seed=0)
        matrix = build_training_matrix(dataset, "ACC", pipeline)
        assert matrix.X.shape[1] == 16


class TestCvFolds:
    def test_partition_properties(self):
        folds = cv_folds(23, 5, seed=4)
        together = np.concatenate(folds)
        assert len(together) == 23
        assert len(np.unique(together)) == 23
        again = cv_folds(23, 5, seed=4)
        for a, b in zip(folds, again):
            assert np.array_equal(a, b)


class TestGridSearch:
    def test_default_grid_matches_published_values(self):
        grid = GridSpec()
        assert grid.k_params == (10.0, 15.0, 20.0, 25.0)
        assert grid.gammas == (0, 1, 2, 3, 4)
        assert grid.epsilons == (0.05, 0.1, 0.15, 0.2)
        assert grid.g_percents == (80.0, 85.0, 90.0, 95.0, 100.0)

    def test_single_point_equals_direct_training(self):
        model, calibration, dataset = make_fixture_dataset()
        grid = GridSpec(k_params=(10.0,), gammas=(0,), epsilons=(0.1,),
                        g_percents=(100.0,),
                        forest=({"n_trees": 8, "max_depth": 4,
                                 "min_samples_leaf": 2, "bootstrap": True,
                                 "feature_fraction": 1.0},))
        trained = grid_search_train(dataset, "ACC", model, calibration,
                                    "reg_raw", grid, seed=5)
        assert len(trained.trace) == 1
        assert trained.epsilon == 0.1 and trained.g_percent == 100.0
        # direct training with the same configuration and seed
        pipeline = FeaturePipeline("reg_raw", model, calibration)
        matrix = build_training_matrix(dataset, "ACC", pipeline)
        from lervup.forest import fit_forest as direct_fit
        direct = direct_fit(matrix.X, matrix.y,
                            ForestConfig(n_trees=8, max_depth=4,
                                         min_samples_leaf=2, bootstrap=True,
                                         feature_fraction=1.0, seed=5))
        assert direct.to_dict() == trained.forest.to_dict()

    def test_trace_covers_every_grid_point(self):
        model, calibration, dataset = make_fixture_dataset()
        grid = GridSpec(k_params=(10.0,), gammas=(0, 1), epsilons=(0.1, 0.2),
                        g_percents=(100.0,),
                        forest=({"n_trees": 4, "max_depth": 3,
                                 "min_samples_leaf": 2, "bootstrap": True,
                                 "feature_fraction": 1.0},
                                {"n_trees": 4, "max_depth": 2,
                                 "min_samples_leaf": 2, "bootstrap": False,
                                 "feature_fraction": 1.0}))
        trained = grid_search_train(dataset, "ACC", model, calibration,
                                    "lervup_fr", grid, seed=6)
        assert len(trained.trace) == 2 * 2 * 2
        csv_text = trace_to_csv(trained.trace)
        assert csv_text.count("\n") == 1 + len(trained.trace)

    def test_too_few_training_profiles_error(self):
        model, calibration, dataset = make_fixture_dataset()
        with pytest.raises(DegenerateDataError):
            grid_search_train(dataset, "ACC", model, calibration, "reg_raw",
                              GridSpec.small(), seed=0, min_train=99)

    def test_planted_focal_signal_selects_positive_gamma(self):
        # targets are generated with a gamma=2 focal boost; the search
        # must prefer a boosted configuration in at least 4 of 5 seeds
        from lervup.calibration import calibrate_situation
        from lervup.synth import SynthConfig, generate

        grid = GridSpec(k_params=(10.0,), gammas=(0, 2, 4), epsilons=(0.1,),
                        g_percents=(100.0,),
                        forest=({"n_trees": 40, "max_depth": None,
                                 "min_samples_leaf": 2, "bootstrap": True,
                                 "feature_fraction": 1.0 / 3.0},))
        picks = []
        for seed in (1, 2, 3, 4, 5):
            config = SynthConfig(n_users=120, n_validation=20,
                                 photos_per_user=40, n_objects=24,
                                 situations=("ACC",), rating_noise_std=0.05,
                                 label_noise_std=0.25, planted_k=4.5,
                                 planted_gamma=2.0, seed=seed)
            models, dataset = generate(config)
            calibration = calibrate_situation(dataset, "ACC", models["ACC"],
                                              global_eta=False)
            trained = grid_search_train(dataset, "ACC", models["ACC"],
                                        calibration, "lervup_fr", grid,
                                        seed=seed)
            picks.append(trained.focal[1])
        assert sum(1 for gamma in picks if gamma > 0) >= 4, picks


class TestTrainedModelArtifact:
    def test_roundtrip_preserves_predictions(self):
        model, calibration, dataset = make_fixture_dataset()
        trained = grid_search_train(dataset, "ACC", model, calibration,
                                    "lervup", GridSpec.small(n_trees=8),
                                    seed=7)
        import json
        restored = TrainedModel.from_dict(
            json.loads(json.dumps(trained.to_dict())))
        for profile in dataset.profiles:
            assert trained.predict(profile) == restored.predict(profile)

    def test_predictions_clamped_and_order_invariant(self):
        model, calibration, dataset = make_fixture_dataset()
        trained = grid_search_train(dataset, "ACC", model, calibration,
                                    "lervup", GridSpec.small(n_trees=8),
                                    seed=8)
        profile = dataset.profiles[0]
        value = trained.predict(profile)
        assert value is None or -3.0 <= value <= 3.0
        reversed_profile = ProfileDetections(
            profile.user_id, tuple(reversed(profile.photos)))
        assert trained.predict(reversed_profile) == pytest.approx(
            value, abs=1e-12)

    def test_no_signal_profile_predicts_none(self):
        model, calibration, dataset = make_fixture_dataset()
        trained = grid_search_train(dataset, "ACC", model, calibration,
                                    "reg_raw", GridSpec.small(n_trees=8),
                                    seed=9)
        empty = ProfileDetections("ghost", (PhotoDetections("g0", ()),))
        assert trained.predict(empty) is None
