"""What-if HTTP service: ratings, per-photo impacts, masking previews.

The server holds immutable per-situation artifacts (rating tables,
calibrations, trained models) plus a reference community, and an
in-memory profile store. What-if requests recompute ratings on the
unmasked photo subset without touching the stored profile.
"""

from __future__ import annotations

import bisect
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .baseline import BaselineConfig, photo_contributions, rate_profile_baseline
from .calibration import Calibration
from .core import (
    ProfileDetections,
    SituationModel,
    ValidationError,
)
from .descriptors import image_descriptor
from .io import profile_from_dict, profile_to_dict, situation_model_from_dict
from .learning import TrainedModel
from .util import read_json, sha256_of

BASELINE_METHODS = ("base", "base_eta", "base_eta_fr")

# traffic-light cutpoints on the 7-point scale
DEFAULT_BANDS = (
    ("red", -1.0),          # rating < -1.0
    ("orange", -0.25),      # [-1.0, -0.25)
    ("yellow", 0.25),       # [-0.25, 0.25]
    ("light-green", 1.0),   # (0.25, 1.0]
    ("green", None),        # > 1.0
)


def traffic_light_band(rating: float,
                       bands=DEFAULT_BANDS) -> str:
    if rating < bands[0][1]:
        return bands[0][0]
    if rating < bands[1][1]:
        return bands[1][0]
    if rating <= bands[2][1]:
        return bands[2][0]
    if rating <= bands[3][1]:
        return bands[3][0]
    return bands[4][0]


@dataclass
class SituationArtifacts:
    model: SituationModel
    calibration: Calibration
    trained: dict[str, TrainedModel] = field(default_factory=dict)

    def methods(self) -> list[str]:
        available = []
        if self.calibration.global_eta is not None:
            available.append("base")
        available.append("base_eta")
        if self.calibration.baseline_focal is not None:
            available.append("base_eta_fr")
        available.extend(sorted(self.trained))
        return available


@dataclass
class ReferenceCommunity:
    """Sorted per-situation rating populations for percentile feedback."""

    ratings: dict[str, list[float]]
    method: str = ""
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for code, values in self.ratings.items():
            if len(values) < 100:
                raise ValidationError(
                    f"reference for {code} has {len(values)} ratings, need >= 100")
            self.ratings[code] = sorted(float(v) for v in values)

    def percentile(self, code: str, rating: float) -> float:
        values = self.ratings[code]
        return bisect.bisect_right(values, rating) / len(values)

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ReferenceCommunity":
        return ReferenceCommunity(
            {code: list(values)
             for code, values in data["situations"].items()},
            data.get("method", ""), dict(data.get("provenance", {})))

    def to_dict(self) -> dict[str, Any]:
        return {"situations": {code: values
                               for code, values in sorted(self.ratings.items())},
                "method": self.method, "provenance": dict(self.provenance)}


class ExposureEngine:
    """Rating dispatch over baseline and learned methods."""

    def __init__(self, artifacts: dict[str, SituationArtifacts],
                 reference: ReferenceCommunity | None = None):
        self.artifacts = artifacts
        self.reference = reference
        self.provenance = sha256_of(sorted(
            (code, sorted(art.trained),
             art.calibration.to_dict().get("tau_threshold"))
            for code, art in artifacts.items()))[:16]

    def situation_codes(self) -> list[str]:
        return sorted(self.artifacts)

    def _baseline_config(self, art: SituationArtifacts,
                         method: str) -> BaselineConfig:
        if method == "base":
            if art.calibration.global_eta is None:
                raise KeyError(method)
            return BaselineConfig("base", global_eta=art.calibration.global_eta)
        if method == "base_eta":
            return BaselineConfig("base_eta")
        if art.calibration.baseline_focal is None:
            raise KeyError(method)
        return BaselineConfig("base_eta_fr",
                              focal=art.calibration.baseline_focal)

    def rate(self, code: str, method: str,
             profile: ProfileDetections) -> Optional[float]:
        art = self.artifacts[code]
        if method in BASELINE_METHODS:
            cfg = self._baseline_config(art, method)
            return rate_profile_baseline(profile, art.model,
                                         art.calibration.table,
                                         art.calibration.selection, cfg)
        return art.trained[method].predict(profile)

    def model_hash(self, code: str, method: str) -> str:
        art = self.artifacts[code]
        if method in BASELINE_METHODS:
            return sha256_of(art.calibration.to_dict())[:16]
        return art.trained[method].model_hash()[:16]

    def rating_payload(self, code: str, method: str,
                       profile: ProfileDetections) -> dict[str, Any]:
        rating = self.rate(code, method, profile)
        total = len(profile.photos)
        coverage = 0.0
        if total and rating is not None:
            art = self.artifacts[code]
            if method in BASELINE_METHODS:
                cfg = self._baseline_config(art, method)
                contributions = photo_contributions(
                    profile, art.model, art.calibration.table,
                    art.calibration.selection, cfg)
                covered = sum(1 for v in contributions.values() if v is not None)
            else:
                covered = sum(
                    1 for photo in profile.photos
                    if image_descriptor(photo, art.model,
                                        art.calibration.table) is not None)
            coverage = covered / total
        payload: dict[str, Any] = {
            "rating": rating,
            "band": traffic_light_band(rating) if rating is not None else None,
            "coverage": coverage,
            "model_hash": self.model_hash(code, method),
        }
        if self.reference is not None and rating is not None \
                and code in self.reference.ratings:
            payload["percentile"] = self.reference.percentile(code, rating)
        else:
            payload["percentile"] = None
        return payload

    def photo_payloads(self, code: str,
                       profile: ProfileDetections) -> list[dict[str, Any]]:
        art = self.artifacts[code]
        entries = []
        for photo in profile.photos:
            descriptor = image_descriptor(photo, art.model,
                                          art.calibration.table)
            boxes = [{
                "object": det.object_id,
                "confidence": det.confidence,
                "rating": art.model.rating_of(det.object_id),
                "bbox": list(det.bbox) if det.bbox else None,
            } for det in photo.detections]
            if descriptor is None:
                entries.append({"photo_id": photo.photo_id, "no_signal": True,
                                "impact": None, "band": None,
                                "descriptor": None, "boxes": boxes})
                continue
            entries.append({
                "photo_id": photo.photo_id,
                "no_signal": False,
                "impact": descriptor.impact,
                "band": traffic_light_band(descriptor.impact),
                "descriptor": {"positive": descriptor.positive,
                               "negative": descriptor.negative,
                               "confidence": descriptor.confidence},
                "boxes": boxes,
            })
        eligible = sorted((e for e in entries if not e["no_signal"]),
                          key=lambda e: (e["impact"], e["photo_id"]))
        rest = sorted((e for e in entries if e["no_signal"]),
                      key=lambda e: e["photo_id"])
        return eligible + rest


def load_artifacts(models_dir: str) -> dict[str, SituationArtifacts]:
    """Read the artifact directory written by the training pipeline.

    Expected layout: situations/<CODE>.json, calibration/<CODE>.json,
    models/<CODE>/<variant>.json.
    """
    import os

    situations_dir = os.path.join(models_dir, "situations")
    calibration_dir = os.path.join(models_dir, "calibration")
    if not os.path.isdir(situations_dir) or not os.path.isdir(calibration_dir):
        raise ValidationError(
            f"{models_dir} lacks situations/ and calibration/ artifacts")
    artifacts: dict[str, SituationArtifacts] = {}
    for name in sorted(os.listdir(situations_dir)):
        if not name.endswith(".json"):
            continue
        model = situation_model_from_dict(
            read_json(os.path.join(situations_dir, name)), enforce_range=True)
        code = model.situation.code
        calibration_path = os.path.join(calibration_dir, f"{code}.json")
        if not os.path.exists(calibration_path):
            raise ValidationError(f"missing calibration for {code}")
        artifacts[code] = SituationArtifacts(
            model, Calibration.load(calibration_path))
    models_root = os.path.join(models_dir, "models")
    if os.path.isdir(models_root):
        for code in sorted(os.listdir(models_root)):
            if code not in artifacts:
                continue
            situation_dir = os.path.join(models_root, code)
            for name in sorted(os.listdir(situation_dir)):
                if name.endswith(".json") and not name.endswith("_trace.json"):
                    trained = TrainedModel.load(os.path.join(situation_dir, name))
                    artifacts[code].trained[trained.variant] = trained
    return artifacts


def create_app(engine: ExposureEngine) -> FastAPI:
    app = FastAPI(title="photo-exposure what-if service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])

    store: dict[str, ProfileDetections] = {}
    etags: dict[str, str] = {}
    lock = threading.Lock()

    def error(status: int, code: str, detail: str) -> JSONResponse:
        return JSONResponse({"error": code, "detail": detail},
                            status_code=status)

    @app.middleware("http")
    async def provenance_header(request: Request, call_next):
        response: Response = await call_next(request)
        response.headers["X-Provenance"] = engine.provenance
        return response

    def get_profile(profile_id: str) -> ProfileDetections | None:
        with lock:
            return store.get(profile_id)

    def resolve(profile_id: str, situation: str, method: str):
        profile = get_profile(profile_id)
        if profile is None:
            return None, error(404, "not_found",
                               f"unknown profile {profile_id!r}")
        if situation not in engine.artifacts:
            return None, error(409, "no_model",
                               f"no artifacts for situation {situation!r}")
        art = engine.artifacts[situation]
        if method not in art.methods():
            return None, error(409, "no_model",
                               f"no method {method!r} for {situation!r}")
        return (profile, art), None

    @app.post("/profiles", status_code=201)
    async def create_profile(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "bad_json", "request body is not valid JSON")
        try:
            profile = profile_from_dict(body)
        except ValidationError as exc:
            return error(400, "validation", str(exc))
        profile_id = uuid.uuid4().hex[:12]
        etag = sha256_of(profile_to_dict(profile))[:16]
        with lock:
            store[profile_id] = profile
            etags[profile_id] = etag
        return JSONResponse({"profile_id": profile_id, "etag": etag},
                            status_code=201, headers={"ETag": etag})

    @app.get("/profiles/{profile_id}")
    async def read_profile(profile_id: str):
        profile = get_profile(profile_id)
        if profile is None:
            return error(404, "not_found", f"unknown profile {profile_id!r}")
        return JSONResponse(profile_to_dict(profile),
                            headers={"ETag": etags[profile_id]})

    @app.get("/profiles/{profile_id}/rating")
    async def rating(profile_id: str, situation: str, method: str = "base_eta"):
        resolved, failure = resolve(profile_id, situation, method)
        if failure is not None:
            return failure
        profile, _ = resolved
        payload = engine.rating_payload(situation, method, profile)
        payload.update({"situation": situation, "method": method})
        return JSONResponse(payload, headers={"ETag": etags[profile_id]})

    @app.get("/profiles/{profile_id}/photos")
    async def photos(profile_id: str, situation: str, method: str = "base_eta"):
        resolved, failure = resolve(profile_id, situation, method)
        if failure is not None:
            return failure
        profile, _ = resolved
        return JSONResponse(
            {"situation": situation, "method": method,
             "photos": engine.photo_payloads(situation, profile)},
            headers={"ETag": etags[profile_id]})

    @app.post("/profiles/{profile_id}/whatif")
    async def whatif(profile_id: str, request: Request):
        profile = get_profile(profile_id)
        if profile is None:
            return error(404, "not_found", f"unknown profile {profile_id!r}")
        try:
            body = await request.json()
        except Exception:
            return error(400, "bad_json", "request body is not valid JSON")
        masked = body.get("masked_photo_ids", [])
        method = body.get("method", "base_eta")
        if not isinstance(masked, list):
            return error(400, "validation", "masked_photo_ids must be a list")
        known = {photo.photo_id for photo in profile.photos}
        unknown = sorted(set(masked) - known)
        if unknown:
            return error(400, "validation",
                         f"unknown photo ids: {', '.join(unknown)}")
        masked_set = set(masked)
        remaining = ProfileDetections(profile.user_id, tuple(
            photo for photo in profile.photos
            if photo.photo_id not in masked_set))
        situations: dict[str, Any] = {}
        for code in engine.situation_codes():
            art = engine.artifacts[code]
            if method not in art.methods():
                continue
            current = engine.rating_payload(code, method, profile)
            masked_payload = engine.rating_payload(code, method, remaining)
            if current["rating"] is None or masked_payload["rating"] is None:
                delta = None
            else:
                delta = masked_payload["rating"] - current["rating"]
            masked_payload["delta"] = delta
            situations[code] = masked_payload
        if not situations:
            return error(409, "no_model", f"no method {method!r} available")
        return JSONResponse({"method": method,
                             "masked_photo_ids": sorted(masked_set),
                             "situations": situations})

    @app.get("/situations")
    async def situations():
        entries = []
        for code in engine.situation_codes():
            art = engine.artifacts[code]
            entries.append({
                "code": code,
                "display_name": art.model.situation.display_name,
                "objects": art.model.object_count,
                "methods": art.methods(),
            })
        return entries

    @app.get("/models")
    async def models():
        entries = []
        for code in engine.situation_codes():
            art = engine.artifacts[code]
            for method in art.methods():
                entry = {"situation": code, "method": method,
                         "model_hash": engine.model_hash(code, method)}
                if method in art.trained:
                    entry["dataset_hash"] = art.trained[method].provenance.get(
                        "dataset_hash")
                    entry["variant"] = art.trained[method].variant
                entries.append(entry)
        return entries

    return app


def build_reference(engine: ExposureEngine, profiles: list[ProfileDetections],
                    method: str, min_size: int = 100) -> ReferenceCommunity:
    """Rate a population with one method to obtain the reference community."""
    ratings: dict[str, list[float]] = {}
    for code in engine.situation_codes():
        if method not in engine.artifacts[code].methods():
            continue
        values = []
        for profile in profiles:
            value = engine.rate(code, method, profile)
            if value is not None:
                values.append(float(value))
        if len(values) >= min_size:
            ratings[code] = sorted(values)
    if not ratings:
        raise ValidationError(
            f"reference community too small (need >= {min_size} rated profiles)")
    return ReferenceCommunity(ratings, method,
                              {"population": len(profiles)})
