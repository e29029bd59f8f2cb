"""Core types, focal rating, and table statistics."""

import json

import numpy as np
import pytest

from lervup.core import (
    BUILTIN_SITUATIONS,
    DegenerateDataError,
    DetectionRecord,
    ManualProfileRating,
    PhotoDetections,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    Split,
    ValidationError,
    apply_focal,
    focal_rating,
    rating_table_stats,
    situation_of,
    validate_profile_objects,
)
from lervup.io import (
    dataset_from_dict,
    dataset_to_dict,
    manual_ratings_from_csv,
    manual_ratings_to_csv,
    profile_from_dict,
    profile_to_dict,
    situation_model_from_dict,
    situation_model_to_dict,
)

ACC = situation_of("ACC")


def make_model(pairs):
    return SituationModel.from_pairs(ACC, pairs)


class TestFocalRating:
    def test_zero_rating_fixed_point(self):
        assert focal_rating(0.0, 10, 3) == 0.0

    def test_gamma_zero_identity(self):
        assert focal_rating(2.5, 10, 0) == 2.5

    def test_hand_evaluation_max_rating(self):
        # 3 / (1 - 0.3)^2, evaluated by hand
        assert focal_rating(3.0, 10, 2) == pytest.approx(6.122448979591837,
                                                         abs=1e-5)

    def test_hand_evaluation_strong_negative(self):
        # -2.84 / 0.716^2, evaluated by hand
        assert focal_rating(-2.84, 10, 2) == pytest.approx(-5.5397771605,
                                                           abs=1e-4)

    def test_domain_error_when_k_too_small(self):
        with pytest.raises(ValidationError):
            focal_rating(2.5, 2.0, 1)

    def test_odd_function_property(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            r = float(rng.uniform(-3, 3))
            k = float(rng.uniform(3.5, 30))
            gamma = int(rng.integers(0, 5))
            assert focal_rating(-r, k, gamma) == pytest.approx(
                -focal_rating(r, k, gamma), abs=1e-12)

    def test_monotone_in_magnitude_and_gamma(self):
        rng = np.random.default_rng(8)
        for _ in range(500):
            k = float(rng.uniform(3.5, 30))
            gamma = int(rng.integers(0, 5))
            a, b = sorted(rng.uniform(0, 3, size=2))
            assert focal_rating(b, k, gamma) >= focal_rating(a, k, gamma)
            r = float(rng.uniform(0.01, 3))
            assert focal_rating(r, k, gamma + 1) >= focal_rating(r, k, gamma)

    def test_magnitude_never_shrinks(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            r = float(rng.uniform(-3, 3))
            out = focal_rating(r, 10.0, int(rng.integers(0, 5)))
            assert abs(out) >= abs(r) - 1e-15
            assert np.sign(out) == np.sign(r)


class TestApplyFocal:
    def test_gamma_zero_is_identity(self):
        model = make_model([("book", 1.23), ("cocaine", -2.84)])
        out = apply_focal(model, 10, 0)
        assert out.ratings == model.ratings

    def test_single_object_hand_value(self):
        model = make_model([("book", 1.23)])
        out = apply_focal(model, 10, 2)
        # 1.23 / 0.877^2, evaluated by hand
        assert out.rating_of("book") == pytest.approx(1.599211575691464,
                                                      abs=1e-4)

    def test_all_zero_model_unchanged(self):
        model = make_model([("a", 0.0), ("b", 0.0)])
        out = apply_focal(model, 15, 3)
        assert all(v.rating == 0.0 for v in out.ratings.values())

    def test_preserves_sign_partition(self):
        rng = np.random.default_rng(11)
        pairs = [(f"o{i}", float(rng.uniform(-3, 3))) for i in range(50)]
        model = make_model(pairs)
        out = apply_focal(model, 12, 3)
        for object_id, entry in model.ratings.items():
            boosted = out.rating_of(object_id)
            assert np.sign(boosted) == np.sign(entry.rating)
            assert (boosted == 0.0) == (entry.rating == 0.0)


class TestRatingTableStats:
    def test_hand_computed_population_stats(self):
        model = make_model([("a", -1.0), ("b", 0.0), ("c", 1.0)])
        stats = rating_table_stats(model)
        assert stats["mean"] == pytest.approx(0.0)
        assert stats["stddev"] == pytest.approx(0.816496580927726, abs=1e-6)

    def test_single_rating(self):
        stats = rating_table_stats(make_model([("a", 2.0)]))
        assert stats == {"mean": 2.0, "stddev": 0.0}


class TestTypeInvariants:
    def test_four_builtin_situations(self):
        assert sorted(BUILTIN_SITUATIONS) == ["ACC", "BANK", "IT", "WAIT"]
        assert situation_of("CUSTOM").code == "CUSTOM"

    def test_confidence_bounds(self):
        with pytest.raises(ValidationError):
            DetectionRecord("book", 0.0)
        with pytest.raises(ValidationError):
            DetectionRecord("book", 1.2)
        assert DetectionRecord("book", 1.0).confidence == 1.0

    def test_bbox_must_stay_inside_unit_square(self):
        with pytest.raises(ValidationError):
            DetectionRecord("book", 0.5, (0.8, 0.1, 0.4, 0.2))
        DetectionRecord("book", 0.5, (0.1, 0.2, 0.3, 0.4))

    def test_duplicate_photo_ids_rejected(self):
        photo = PhotoDetections("p1", ())
        with pytest.raises(ValidationError):
            ProfileDetections("u1", (photo, PhotoDetections("p1", ())))

    def test_crowd_table_range_enforced(self):
        with pytest.raises(ValidationError):
            make_model([("a", 3.5)])

    def test_manual_rating_mean(self):
        record = ManualProfileRating("u1", "ACC", (1, 2, 3))
        assert record.m == pytest.approx(2.0)
        with pytest.raises(ValidationError):
            ManualProfileRating("u1", "ACC", ())
        with pytest.raises(ValidationError):
            ManualProfileRating("u1", "ACC", (5,))

    def test_dataset_invariants(self):
        profile = ProfileDetections("u1", ())
        manual = {("u1", "ACC"): ManualProfileRating("u1", "ACC", (1,))}
        dataset = RatedProfileDataset((profile,), manual, {"u1": "TRAIN"})
        assert dataset.split["u1"] is Split.TRAIN
        with pytest.raises(ValidationError):
            RatedProfileDataset((profile,), manual, {})
        with pytest.raises(ValidationError):
            RatedProfileDataset(
                (profile,),
                {("ghost", "ACC"): ManualProfileRating("ghost", "ACC", (1,))},
                {"u1": "TRAIN"})

    def test_strict_mode_rejects_unknown_objects(self):
        model = make_model([("book", 1.0)])
        profile = ProfileDetections(
            "u1", (PhotoDetections("p1", (DetectionRecord("laptop", 0.9),)),))
        with pytest.raises(ValidationError):
            validate_profile_objects(profile, model)


def random_profile(rng, user_id):
    photos = []
    for j in range(int(rng.integers(0, 4))):
        detections = tuple(
            DetectionRecord(
                f"o{int(rng.integers(0, 5))}",
                float(rng.uniform(0.05, 1.0)),
                (0.1, 0.1, 0.3, 0.3) if rng.random() < 0.5 else None)
            for _ in range(int(rng.integers(0, 3))))
        photos.append(PhotoDetections(f"{user_id}p{j}", detections))
    return ProfileDetections(user_id, tuple(photos))


class TestSerializationRoundTrips:
    def test_situation_model_roundtrip(self):
        rng = np.random.default_rng(21)
        pairs = [(f"o{i}", round(float(rng.uniform(-3, 3)), 4))
                 for i in range(30)]
        model = make_model(pairs)
        data = json.loads(json.dumps(situation_model_to_dict(model)))
        restored = situation_model_from_dict(data)
        assert restored == model

    def test_profile_roundtrip(self):
        rng = np.random.default_rng(22)
        for i in range(20):
            profile = random_profile(rng, f"u{i}")
            data = json.loads(json.dumps(profile_to_dict(profile)))
            assert profile_from_dict(data) == profile

    def test_manual_csv_roundtrip(self):
        manual = {
            ("u1", "ACC"): ManualProfileRating("u1", "ACC", (1, -2, 3)),
            ("u2", "BANK"): ManualProfileRating("u2", "BANK", (0, 0)),
        }
        text = manual_ratings_to_csv(manual)
        assert text.splitlines()[0] == "user_id,situation,rater_id,rating"
        assert manual_ratings_from_csv(text) == manual

    def test_dataset_roundtrip(self):
        rng = np.random.default_rng(23)
        profiles = tuple(random_profile(rng, f"u{i}") for i in range(6))
        manual = {
            (p.user_id, "ACC"): ManualProfileRating(
                p.user_id, "ACC",
                tuple(int(rng.integers(-3, 4)) for _ in range(3)))
            for p in profiles
        }
        split = {p.user_id: ("TRAIN" if i < 4 else "VALIDATION")
                 for i, p in enumerate(profiles)}
        dataset = RatedProfileDataset(profiles, manual, split)
        data = json.loads(json.dumps(dataset_to_dict(dataset)))
        assert dataset_from_dict(data) == dataset

    def test_ratings_keep_two_decimals(self):
        model = make_model([("cocaine", -2.84)])
        data = situation_model_to_dict(model)
        assert situation_model_from_dict(data).rating_of("cocaine") == -2.84


class TestErrors:
    def test_empty_model_rejected(self):
        with pytest.raises(ValidationError):
            SituationModel(ACC, {})

    def test_stats_need_objects(self):
        model = make_model([("a", 1.0)])
        object.__setattr__(model, "ratings", {})
        with pytest.raises(DegenerateDataError):
            rating_table_stats(model)
