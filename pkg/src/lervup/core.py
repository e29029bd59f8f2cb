"""Domain types shared by the whole pipeline, plus focal rating.

Everything here is immutable after construction and safe to share across
threads/processes; the operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .util import LIKERT_MAX, LIKERT_MIN


class ValidationError(ValueError):
    """Input data violates a structural invariant."""


class DegenerateDataError(ValueError):
    """Computation is undefined on this data (constant series, empty set...)."""


@dataclass(frozen=True)
class Situation:
    """A real-life decision context in which shared photos are interpreted."""

    code: str
    display_name: str

    def __post_init__(self):
        if not self.code:
            raise ValidationError("situation code must be non-empty")


BUILTIN_SITUATIONS: dict[str, Situation] = {
    "ACC": Situation("ACC", "accommodation search"),
    "BANK": Situation("BANK", "bank credit demand"),
    "IT": Situation("IT", "IT job search"),
    "WAIT": Situation("WAIT", "waiter job search"),
}


def situation_of(code: str, display_name: str | None = None) -> Situation:
    """Look up a built-in situation, or build a custom one for experiments."""
    if code in BUILTIN_SITUATIONS:
        return BUILTIN_SITUATIONS[code]
    return Situation(code, display_name or code)


@dataclass(frozen=True)
class ObjectRating:
    """Impact rating of one visual object.

    Crowd inputs live on the 7-point scale [-3, 3] (checked when tables are
    parsed); focal-boosted tables may exceed it, so the type itself only
    requires a finite value.
    """

    object_id: str
    rating: float

    def __post_init__(self):
        if not self.object_id:
            raise ValidationError("object_id must be non-empty")
        if not np.isfinite(self.rating):
            raise ValidationError(f"rating {self.rating} is not finite")


@dataclass(frozen=True)
class SituationModel:
    """Impact ratings of all objects known for one situation."""

    situation: Situation
    ratings: Mapping[str, ObjectRating]

    def __post_init__(self):
        if len(self.ratings) < 1:
            raise ValidationError("situation model needs at least one object")
        for object_id, entry in self.ratings.items():
            if object_id != entry.object_id:
                raise ValidationError(
                    f"ratings key {object_id!r} != entry id {entry.object_id!r}")
        object.__setattr__(self, "ratings", dict(self.ratings))

    @property
    def object_count(self) -> int:
        return len(self.ratings)

    @property
    def object_ids(self) -> list[str]:
        """Stable sorted identifier order used everywhere downstream."""
        return sorted(self.ratings)

    def rating_of(self, object_id: str, default: float = 0.0) -> float:
        entry = self.ratings.get(object_id)
        return entry.rating if entry is not None else default

    @staticmethod
    def from_pairs(situation: Situation, pairs: Sequence[tuple[str, float]],
                   enforce_range: bool = True) -> "SituationModel":
        ratings: dict[str, ObjectRating] = {}
        for object_id, value in pairs:
            if object_id in ratings:
                raise ValidationError(f"duplicate object_id {object_id!r}")
            value = float(value)
            if enforce_range and not (LIKERT_MIN <= value <= LIKERT_MAX):
                raise ValidationError(
                    f"rating {value} for {object_id!r} outside 7-point range")
            ratings[object_id] = ObjectRating(object_id, value)
        return SituationModel(situation, ratings)


@dataclass(frozen=True)
class DetectionRecord:
    """One raw detector hit: object class, confidence, optional relative box."""

    object_id: str
    confidence: float
    bbox: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if not self.object_id:
            raise ValidationError("object_id must be non-empty")
        if not (0.0 < self.confidence <= 1.0):
            raise ValidationError(
                f"confidence {self.confidence} outside (0, 1]")
        if self.bbox is not None:
            x, y, w, h = self.bbox
            if w < 0 or h < 0 or x < 0 or y < 0 or x + w > 1.0 or y + h > 1.0:
                raise ValidationError(f"bbox {self.bbox} outside unit square")
            object.__setattr__(self, "bbox", (float(x), float(y), float(w), float(h)))


@dataclass(frozen=True)
class PhotoDetections:
    """All detections of one photo. Detections may legitimately be empty."""

    photo_id: str
    detections: tuple[DetectionRecord, ...]

    def __post_init__(self):
        if not self.photo_id:
            raise ValidationError("photo_id must be non-empty")
        object.__setattr__(self, "detections", tuple(self.detections))


@dataclass(frozen=True)
class ProfileDetections:
    """One user's visual profile, represented by per-photo detection records."""

    user_id: str
    photos: tuple[PhotoDetections, ...]

    def __post_init__(self):
        if not self.user_id:
            raise ValidationError("user_id must be non-empty")
        object.__setattr__(self, "photos", tuple(self.photos))
        seen: set[str] = set()
        for photo in self.photos:
            if photo.photo_id in seen:
                raise ValidationError(
                    f"duplicate photo_id {photo.photo_id!r} in profile {self.user_id!r}")
            seen.add(photo.photo_id)

    def object_ids(self) -> set[str]:
        return {d.object_id for p in self.photos for d in p.detections}


@dataclass(frozen=True)
class ManualProfileRating:
    """Crowd rating of a whole profile in one situation; m is the rater mean."""

    user_id: str
    situation_code: str
    rater_ratings: tuple[int, ...]

    def __post_init__(self):
        if len(self.rater_ratings) < 1:
            raise ValidationError("at least one rater rating is required")
        ratings = tuple(int(r) for r in self.rater_ratings)
        for r in ratings:
            if not (LIKERT_MIN <= r <= LIKERT_MAX):
                raise ValidationError(f"rater rating {r} outside 7-point range")
        object.__setattr__(self, "rater_ratings", ratings)

    @property
    def m(self) -> float:
        return float(np.mean(self.rater_ratings))


class Split(str, Enum):
    TRAIN = "TRAIN"
    VALIDATION = "VALIDATION"


@dataclass(frozen=True)
class RatedProfileDataset:
    """Profiles + manual ratings + train/validation split."""

    profiles: tuple[ProfileDetections, ...]
    manual: Mapping[tuple[str, str], ManualProfileRating]
    split: Mapping[str, Split]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "manual", dict(self.manual))
        object.__setattr__(self, "split", {k: Split(v) for k, v in self.split.items()})
        ids = [p.user_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate user_id in dataset")
        known = set(ids)
        for (user_id, situation_code), rating in self.manual.items():
            if user_id not in known:
                raise ValidationError(
                    f"manual rating references unknown user {user_id!r}")
            if rating.user_id != user_id or rating.situation_code != situation_code:
                raise ValidationError("manual rating keyed inconsistently")
        if set(self.split) != known:
            raise ValidationError("split must cover every profile exactly once")

    def profiles_in(self, split: Split) -> list[ProfileDetections]:
        return [p for p in self.profiles if self.split[p.user_id] == split]

    def manual_value(self, user_id: str, situation_code: str) -> float:
        return self.manual[(user_id, situation_code)].m

    def situation_codes(self) -> list[str]:
        return sorted({code for (_, code) in self.manual})


def validate_profile_objects(profile: ProfileDetections, model: SituationModel) -> None:
    """Strict mode: reject detections of objects the model does not rate."""
    unknown = sorted(profile.object_ids() - set(model.ratings))
    if unknown:
        raise ValidationError(
            f"profile {profile.user_id!r} has unrated objects: {', '.join(unknown)}")


def focal_rating(rating: float, k_param: float, gamma: int) -> float:
    """Attention-style boost of high-magnitude ratings.

    rating / (1 - |rating|/k_param)**gamma. Sign-preserving because
    k_param must exceed |rating|; gamma = 0 is the identity.
    """
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    magnitude = abs(rating)
    if k_param <= magnitude:
        raise ValidationError(
            f"k_param {k_param} must exceed |rating| {magnitude}")
    if gamma == 0 or rating == 0.0:
        return float(rating)
    return float(rating / (1.0 - magnitude / k_param) ** gamma)


def apply_focal(model: SituationModel, k_param: float, gamma: int) -> SituationModel:
    """Replace every rating in the model by its focal-boosted value."""
    boosted = {
        object_id: ObjectRating(object_id, focal_rating(entry.rating, k_param, gamma))
        for object_id, entry in model.ratings.items()
    }
    return SituationModel(model.situation, boosted)


def rating_table_stats(model: SituationModel) -> dict[str, float]:
    """Population mean/stddev over all object ratings of a model."""
    if model.object_count < 1:
        raise DegenerateDataError("empty situation model")
    values = np.array([entry.rating for entry in model.ratings.values()])
    return {"mean": float(values.mean()), "stddev": float(values.std())}
