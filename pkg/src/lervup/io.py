"""Wire formats: situation-model JSON, detections JSON, manual-rating CSV.

A dataset directory looks like:

    situations/<CODE>.json   one rating table per situation
    profiles.json            array of per-user detection records
    ratings.csv              user_id,situation,rater_id,rating
    split.json               {"user_id": "TRAIN" | "VALIDATION", ...}

All files are UTF-8; floats are written with full repr precision so
round-trips are lossless.
"""

from __future__ import annotations

import csv
import io as _io
import os
from typing import Any

from .core import (
    DetectionRecord,
    ManualProfileRating,
    PhotoDetections,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    Split,
    ValidationError,
    situation_of,
)
from .util import atomic_write_text, read_json, sha256_of, write_json


def situation_model_to_dict(model: SituationModel) -> dict[str, Any]:
    return {
        "situation": model.situation.code,
        "display_name": model.situation.display_name,
        "ratings": [
            {"object": object_id, "rating": model.ratings[object_id].rating}
            for object_id in model.object_ids
        ],
    }


def situation_model_from_dict(data: dict[str, Any],
                              enforce_range: bool = True) -> SituationModel:
    try:
        situation = situation_of(data["situation"], data.get("display_name"))
        pairs = [(entry["object"], float(entry["rating"]))
                 for entry in data["ratings"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed situation model: {exc}") from exc
    return SituationModel.from_pairs(situation, pairs, enforce_range=enforce_range)


def profile_to_dict(profile: ProfileDetections) -> dict[str, Any]:
    photos = []
    for photo in profile.photos:
        detections = []
        for det in photo.detections:
            entry: dict[str, Any] = {"object": det.object_id,
                                     "confidence": det.confidence}
            if det.bbox is not None:
                entry["bbox"] = list(det.bbox)
            detections.append(entry)
        photos.append({"photo_id": photo.photo_id, "detections": detections})
    return {"user_id": profile.user_id, "photos": photos}


def profile_from_dict(data: dict[str, Any]) -> ProfileDetections:
    try:
        photos = []
        for photo in data["photos"]:
            detections = []
            for det in photo["detections"]:
                bbox = det.get("bbox")
                detections.append(DetectionRecord(
                    det["object"], float(det["confidence"]),
                    tuple(bbox) if bbox is not None else None))
            photos.append(PhotoDetections(photo["photo_id"], tuple(detections)))
        return ProfileDetections(data["user_id"], tuple(photos))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed profile detections: {exc}") from exc


def manual_ratings_to_csv(manual: dict[tuple[str, str], ManualProfileRating]) -> str:
    """Long-form CSV, one row per rater."""
    buffer = _io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["user_id", "situation", "rater_id", "rating"])
    for (user_id, code) in sorted(manual):
        record = manual[(user_id, code)]
        for rater_index, value in enumerate(record.rater_ratings):
            writer.writerow([user_id, code, f"r{rater_index}", value])
    return buffer.getvalue()


def manual_ratings_from_csv(text: str) -> dict[tuple[str, str], ManualProfileRating]:
    reader = csv.DictReader(_io.StringIO(text))
    required = {"user_id", "situation", "rater_id", "rating"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise ValidationError(
            f"ratings CSV must have columns {sorted(required)}")
    collected: dict[tuple[str, str], list[int]] = {}
    for row in reader:
        key = (row["user_id"], row["situation"])
        try:
            collected.setdefault(key, []).append(int(float(row["rating"])))
        except ValueError as exc:
            raise ValidationError(f"bad rating value in row {row}") from exc
    return {
        (user_id, code): ManualProfileRating(user_id, code, tuple(values))
        for (user_id, code), values in collected.items()
    }


def dataset_to_dict(dataset: RatedProfileDataset) -> dict[str, Any]:
    """Canonical nested form used for hashing and JSON round-trips."""
    return {
        "profiles": [profile_to_dict(p) for p in dataset.profiles],
        "manual": [
            {"user_id": user_id, "situation": code,
             "rater_ratings": list(dataset.manual[(user_id, code)].rater_ratings)}
            for (user_id, code) in sorted(dataset.manual)
        ],
        "split": {user_id: split.value for user_id, split in sorted(dataset.split.items())},
    }


def dataset_from_dict(data: dict[str, Any]) -> RatedProfileDataset:
    profiles = tuple(profile_from_dict(p) for p in data["profiles"])
    manual = {
        (entry["user_id"], entry["situation"]): ManualProfileRating(
            entry["user_id"], entry["situation"], tuple(entry["rater_ratings"]))
        for entry in data["manual"]
    }
    split = {user_id: Split(value) for user_id, value in data["split"].items()}
    return RatedProfileDataset(profiles, manual, split)


def dataset_hash(dataset: RatedProfileDataset,
                 models: dict[str, SituationModel] | None = None) -> str:
    payload: dict[str, Any] = {"dataset": dataset_to_dict(dataset)}
    if models:
        payload["situations"] = {
            code: situation_model_to_dict(model)
            for code, model in sorted(models.items())
        }
    return sha256_of(payload)


def save_dataset(directory: str, dataset: RatedProfileDataset,
                 models: dict[str, SituationModel],
                 extra: dict[str, Any] | None = None) -> None:
    os.makedirs(os.path.join(directory, "situations"), exist_ok=True)
    for code, model in sorted(models.items()):
        write_json(os.path.join(directory, "situations", f"{code}.json"),
                   situation_model_to_dict(model))
    write_json(os.path.join(directory, "profiles.json"),
               [profile_to_dict(p) for p in dataset.profiles])
    atomic_write_text(os.path.join(directory, "ratings.csv"),
                      manual_ratings_to_csv(dict(dataset.manual)))
    write_json(os.path.join(directory, "split.json"),
               {user_id: split.value for user_id, split in sorted(dataset.split.items())})
    if extra:
        for name, obj in extra.items():
            write_json(os.path.join(directory, name), obj)


def load_dataset(directory: str) -> tuple[RatedProfileDataset, dict[str, SituationModel]]:
    situations_dir = os.path.join(directory, "situations")
    if not os.path.isdir(situations_dir):
        raise ValidationError(f"no situations/ directory under {directory}")
    models: dict[str, SituationModel] = {}
    for name in sorted(os.listdir(situations_dir)):
        if name.endswith(".json"):
            model = situation_model_from_dict(
                read_json(os.path.join(situations_dir, name)))
            models[model.situation.code] = model
    profiles = tuple(profile_from_dict(p)
                     for p in read_json(os.path.join(directory, "profiles.json")))
    with open(os.path.join(directory, "ratings.csv"), encoding="utf-8") as fh:
        manual = manual_ratings_from_csv(fh.read())
    split = {user_id: Split(value)
             for user_id, value in read_json(os.path.join(directory, "split.json")).items()}
    dataset = RatedProfileDataset(profiles, manual, split)
    return dataset, models
