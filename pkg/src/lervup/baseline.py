"""Unsupervised profile raters: averaged rating-weighted detections.

Three variants:
  base         one global detection threshold, every rated object active
  base_eta     per-object calibrated thresholds + detector subset selection
  base_eta_fr  base_eta with focal-boosted object ratings
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calibration import (
    DetectorSelection,
    ThresholdTable,
    filter_detection,
    pearson,
)
from .core import (
    DegenerateDataError,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    Split,
    ValidationError,
    apply_focal,
)
from .util import eta_grid

VARIANTS = ("base", "base_eta", "base_eta_fr")


@dataclass(frozen=True)
class BaselineConfig:
    variant: str
    global_eta: float | None = None
    focal: tuple[float, int] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown baseline variant {self.variant!r}")
        if self.variant == "base" and self.global_eta is None:
            raise ValidationError("variant 'base' requires global_eta")
        if self.variant != "base" and self.global_eta is not None:
            raise ValidationError("global_eta only applies to variant 'base'")
        if self.variant == "base_eta_fr" and self.focal is None:
            raise ValidationError("variant 'base_eta_fr' requires focal (k, gamma)")
        if self.variant != "base_eta_fr" and self.focal is not None:
            raise ValidationError("focal only applies to variant 'base_eta_fr'")


def _effective_model(model: SituationModel, cfg: BaselineConfig) -> SituationModel:
    if cfg.focal is not None:
        k_param, gamma = cfg.focal
        return apply_focal(model, k_param, gamma)
    return model


def _active_and_eta(model: SituationModel, thresholds: ThresholdTable | None,
                    selection: DetectorSelection | None, cfg: BaselineConfig):
    if cfg.variant == "base":
        active = frozenset(model.ratings)
        eta_of = lambda object_id: cfg.global_eta  # noqa: E731
    else:
        if thresholds is None or selection is None:
            raise ValidationError(
                f"variant {cfg.variant!r} needs calibrated thresholds and selection")
        active = selection.active_objects
        eta_of = thresholds.eta_for
    return active, eta_of


def photo_contributions(profile: ProfileDetections, model: SituationModel,
                        thresholds: ThresholdTable | None,
                        selection: DetectorSelection | None,
                        cfg: BaselineConfig) -> dict[str, Optional[float]]:
    """Per-photo rating-weighted sums of activated detections.

    None marks photos with no activated detection (they do not count
    toward the averaging denominator).
    """
    model = _effective_model(model, cfg)
    active, eta_of = _active_and_eta(model, thresholds, selection, cfg)
    contributions: dict[str, Optional[float]] = {}
    for photo in profile.photos:
        photo_sum = 0.0
        hit = False
        for det in sorted(photo.detections,
                          key=lambda d: (d.object_id, d.confidence)):
            if det.object_id not in active:
                continue
            kept = filter_detection(det, eta_of(det.object_id))
            if kept > 0.0:
                photo_sum += model.rating_of(det.object_id) * kept
                hit = True
        contributions[photo.photo_id] = photo_sum if hit else None
    return contributions


def rate_profile_baseline(profile: ProfileDetections, model: SituationModel,
                          thresholds: ThresholdTable | None,
                          selection: DetectorSelection | None,
                          cfg: BaselineConfig) -> Optional[float]:
    """Averaged profile rating; None when no photo has an activated detection."""
    contributions = photo_contributions(profile, model, thresholds, selection, cfg)
    covered = [value for value in contributions.values() if value is not None]
    if not covered:
        return None
    return float(sum(covered) / len(covered))


@dataclass(frozen=True)
class FlatDetectionIndex:
    """Dataset-wide detection arrays for vectorized rating sweeps.

    Detections are flattened in (profile, photo, object_id, confidence)
    order so every sweep accumulates floats identically.
    """

    n_profiles: int
    object_ids: tuple[str, ...]
    det_conf: np.ndarray      # (n_det,)
    det_obj: np.ndarray       # (n_det,) int codes into object_ids
    det_profile: np.ndarray   # (n_det,)
    det_photo: np.ndarray     # (n_det,) uid over photos with >=1 detection
    photo_profile: np.ndarray  # (n_photos,) profile of each photo uid

    @property
    def n_photos(self) -> int:
        return int(self.photo_profile.size)


def build_flat_index(profiles: Sequence[ProfileDetections]) -> FlatDetectionIndex:
    object_ids = sorted({d.object_id for p in profiles
                         for photo in p.photos for d in photo.detections})
    code = {object_id: i for i, object_id in enumerate(object_ids)}
    det_conf: list[float] = []
    det_obj: list[int] = []
    det_profile: list[int] = []
    det_photo: list[int] = []
    photo_profile: list[int] = []
    uid = 0
    for p_idx, profile in enumerate(profiles):
        for photo in profile.photos:
            if not photo.detections:
                continue
            for det in sorted(photo.detections,
                              key=lambda d: (d.object_id, d.confidence)):
                det_conf.append(det.confidence)
                det_obj.append(code[det.object_id])
                det_profile.append(p_idx)
                det_photo.append(uid)
            photo_profile.append(p_idx)
            uid += 1
    return FlatDetectionIndex(
        len(profiles), tuple(object_ids), np.array(det_conf),
        np.array(det_obj, dtype=int), np.array(det_profile, dtype=int),
        np.array(det_photo, dtype=int), np.array(photo_profile, dtype=int))


def index_vectors(index: FlatDetectionIndex, model: SituationModel,
                  thresholds: ThresholdTable | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ratings, etas, rated-mask) aligned with the index object codes."""
    ratings = np.array([model.rating_of(o) for o in index.object_ids])
    rated = np.array([o in model.ratings for o in index.object_ids])
    if thresholds is None:
        etas = np.ones(len(index.object_ids))
    else:
        etas = np.array([thresholds.eta_for(o) for o in index.object_ids])
    return ratings, etas, rated


def eq6_series(index: FlatDetectionIndex, ratings: np.ndarray,
               etas: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Averaged profile ratings for every profile at once.

    ratings/etas/active are per object code; uncovered profiles get 0.
    """
    if index.det_conf.size == 0:
        return np.zeros(index.n_profiles)
    valid = active[index.det_obj] & (index.det_conf >= etas[index.det_obj])
    if not np.any(valid):
        return np.zeros(index.n_profiles)
    weights = ratings[index.det_obj[valid]] * index.det_conf[valid]
    numer = np.bincount(index.det_profile[valid], weights=weights,
                        minlength=index.n_profiles)
    photo_hit = np.bincount(index.det_photo[valid],
                            minlength=index.n_photos) > 0
    covered = np.bincount(index.photo_profile[photo_hit],
                          minlength=index.n_profiles)
    out = np.zeros(index.n_profiles)
    mask = covered > 0
    out[mask] = numer[mask] / covered[mask]
    return out


def optimize_global_eta(dataset: RatedProfileDataset, situation_code: str,
                        model: SituationModel,
                        split: Split = Split.TRAIN) -> float:
    """Exhaustive sweep of the shared threshold for the plain baseline.

    Maximizes the correlation between automatic and manual ratings over
    the calibration split; ties resolve to the smallest threshold.
    """
    from .calibration import calibration_profiles

    profiles, manual = calibration_profiles(dataset, situation_code, split)
    if len(profiles) < 3:
        raise DegenerateDataError("global eta needs at least 3 rated profiles")
    index = build_flat_index(profiles)
    ratings, _, rated = index_vectors(index, model)
    if np.all(manual == manual[0]):
        raise DegenerateDataError("manual ratings are constant")
    best: tuple[float, float] | None = None
    for eta in eta_grid():
        etas = np.full(len(index.object_ids), float(eta))
        automatic = eq6_series(index, ratings, etas, rated.copy())
        if np.all(automatic == automatic[0]):
            continue
        score = pearson(automatic, manual)
        if best is None or score > best[0]:
            best = (score, float(eta))
    if best is None:
        raise DegenerateDataError(
            f"no admissible global threshold for {situation_code}")
    return best[1]
