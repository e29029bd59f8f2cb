"""Per-object detection-threshold calibration and detector subset selection.

For every object we sweep the threshold grid 0.01..1.00, rate each profile
with that object alone, and keep the threshold whose automatic ratings
correlate best with the manual ones. A second sweep over correlation
cut-offs then picks the detector subset that works best jointly.

Profiles without a valid detection keep an automatic rating of 0 so the
correlation is computed over a constant sample for every candidate,
which keeps candidates comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .core import (
    DegenerateDataError,
    DetectionRecord,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    Split,
    ValidationError,
)
from .util import eta_grid, pmap, read_json, tau_grid, write_json

MIN_SUPPORT = 3
DEGENERATE_TAU = -1.0
DEGENERATE_ETA = 1.0


@dataclass(frozen=True)
class ThresholdEntry:
    object_id: str
    eta: float
    tau: float
    support: int
    degenerate: bool = False


@dataclass(frozen=True)
class ThresholdTable:
    """Calibrated per-object thresholds for one situation."""

    situation_code: str
    entries: Mapping[str, ThresholdEntry]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def eta_for(self, object_id: str) -> float:
        """Uncalibrated objects behave as if degenerate: only 1.0 passes."""
        entry = self.entries.get(object_id)
        return entry.eta if entry is not None else DEGENERATE_ETA

    def tau_for(self, object_id: str) -> float:
        entry = self.entries.get(object_id)
        return entry.tau if entry is not None else DEGENERATE_TAU

    def object_ids(self) -> list[str]:
        return sorted(self.entries)


@dataclass(frozen=True)
class DetectorSelection:
    """Active detector subset induced by a correlation cut-off."""

    tau_threshold: float
    active_objects: frozenset[str]

    def is_active(self, object_id: str) -> bool:
        return object_id in self.active_objects


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; undefined for constant series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("series must be 1-d and equally long")
    if x.size < 3:
        raise DegenerateDataError("need at least 3 points for a correlation")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateDataError("correlation undefined for a constant series")
    return float(np.dot(dx, dy) / (sx * sy))


def _rank_transform(values: np.ndarray) -> np.ndarray:
    """Average ranks (Spearman-style) for the optional rank-based mode."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    ranks[order] = np.arange(1, values.size + 1, dtype=float)
    unique, inverse, counts = np.unique(values, return_inverse=True,
                                        return_counts=True)
    sums = np.bincount(inverse, weights=ranks)
    return sums[inverse] / counts[inverse]


def filter_detection(det: DetectionRecord, eta: float) -> float:
    """Confidence if it passes the threshold (inclusive), else 0."""
    return det.confidence if det.confidence >= eta else 0.0


def single_object_rating(profile: ProfileDetections, object_id: str,
                         rating: float, eta: float) -> Optional[float]:
    """Profile rating with only one detector active at threshold eta.

    Returns None when no photo has a valid detection of the object.
    """
    total = 0.0
    covered = 0
    for photo in profile.photos:
        photo_sum = 0.0
        hit = False
        for det in photo.detections:
            if det.object_id != object_id:
                continue
            kept = filter_detection(det, eta)
            if kept > 0.0:
                photo_sum += kept
                hit = True
        if hit:
            covered += 1
            total += rating * photo_sum
    if covered == 0:
        return None
    return total / covered


@dataclass(frozen=True)
class ObjectDetectionIndex:
    """Flat arrays over one object's detections in the calibration profiles.

    det_* are per detection; photo_* are per photo that contains the object.
    """

    n_profiles: int
    det_conf: np.ndarray
    det_profile: np.ndarray
    photo_profile: np.ndarray
    photo_max: np.ndarray


def build_object_index(profiles: Sequence[ProfileDetections]
                       ) -> dict[str, ObjectDetectionIndex]:
    """One pass over all detections, grouped by object."""
    acc: dict[str, list[list]] = {}
    for p_idx, profile in enumerate(profiles):
        for photo in profile.photos:
            per_object: dict[str, list[float]] = {}
            for det in photo.detections:
                per_object.setdefault(det.object_id, []).append(det.confidence)
            for object_id, confs in per_object.items():
                slot = acc.setdefault(object_id, [[], [], [], []])
                slot[0].extend(confs)
                slot[1].extend([p_idx] * len(confs))
                slot[2].append(p_idx)
                slot[3].append(max(confs))
    n = len(profiles)
    return {
        object_id: ObjectDetectionIndex(
            n, np.array(slot[0]), np.array(slot[1], dtype=int),
            np.array(slot[2], dtype=int), np.array(slot[3]))
        for object_id, slot in acc.items()
    }


def _blank_index(n_profiles: int) -> ObjectDetectionIndex:
    return ObjectDetectionIndex(n_profiles, np.empty(0),
                                np.empty(0, dtype=int),
                                np.empty(0, dtype=int), np.empty(0))


def _single_object_series(index: ObjectDetectionIndex, rating: float,
                          eta: float) -> tuple[np.ndarray, int]:
    """Automatic single-detector ratings for all profiles at one threshold."""
    n = index.n_profiles
    automatic = np.zeros(n)
    if index.det_conf.size == 0:
        return automatic, 0
    valid = index.det_conf >= eta
    if not np.any(valid):
        return automatic, 0
    conf_sum = np.bincount(index.det_profile[valid],
                           weights=index.det_conf[valid], minlength=n)
    covered_photos = np.bincount(index.photo_profile[index.photo_max >= eta],
                                 minlength=n)
    covered = covered_photos > 0
    automatic[covered] = rating * conf_sum[covered] / covered_photos[covered]
    return automatic, int(np.count_nonzero(covered))


def _best_threshold(object_id: str, index: ObjectDetectionIndex, rating: float,
                    manual: np.ndarray, rank_transform: bool) -> ThresholdEntry:
    manual_t = _rank_transform(manual) if rank_transform else manual
    if manual.size < MIN_SUPPORT or np.all(manual_t == manual_t[0]):
        return ThresholdEntry(object_id, DEGENERATE_ETA, DEGENERATE_TAU, 0, True)
    best: tuple[float, float, int] | None = None
    for eta in eta_grid():
        automatic, support = _single_object_series(index, rating, float(eta))
        if support < MIN_SUPPORT:
            continue
        if np.all(automatic == automatic[0]):
            continue
        auto_t = _rank_transform(automatic) if rank_transform else automatic
        if np.all(auto_t == auto_t[0]):
            continue
        tau = pearson(auto_t, manual_t)
        if best is None or tau > best[0]:
            best = (tau, float(eta), support)
    if best is None:
        return ThresholdEntry(object_id, DEGENERATE_ETA, DEGENERATE_TAU, 0, True)
    tau, eta, support = best
    return ThresholdEntry(object_id, eta, tau, support, False)


def calibration_profiles(dataset: RatedProfileDataset, situation_code: str,
                         split: Split = Split.TRAIN
                         ) -> tuple[list[ProfileDetections], np.ndarray]:
    """Profiles of the calibration split plus their manual rating vector."""
    profiles = [p for p in dataset.profiles_in(split)
                if (p.user_id, situation_code) in dataset.manual]
    manual = np.array([dataset.manual_value(p.user_id, situation_code)
                       for p in profiles])
    return profiles, manual


def calibrate_object_threshold(dataset: RatedProfileDataset, situation_code: str,
                               model: SituationModel, object_id: str,
                               split: Split = Split.TRAIN,
                               rank_transform: bool = False) -> ThresholdEntry:
    """Best (tau, eta) for one detector over the exhaustive threshold grid.

    Ties on tau resolve to the smallest eta so more occurrences are kept.
    Degenerate objects (no admissible threshold) get tau=-1, eta=1.0 and
    are flagged; the selection step can never prefer them.
    """
    profiles, manual = calibration_profiles(dataset, situation_code, split)
    if not profiles:
        raise DegenerateDataError("empty calibration split")
    index = build_object_index(profiles).get(
        object_id, _blank_index(len(profiles)))
    return _best_threshold(object_id, index, model.rating_of(object_id),
                           manual, rank_transform)


def _calibrate_task(args) -> ThresholdEntry:
    return _best_threshold(*args)


def calibrate_thresholds(dataset: RatedProfileDataset, situation_code: str,
                         model: SituationModel, split: Split = Split.TRAIN,
                         rank_transform: bool = False,
                         jobs: int = 1) -> ThresholdTable:
    """Calibrate every object of the model; objects are independent units."""
    profiles, manual = calibration_profiles(dataset, situation_code, split)
    if not profiles:
        raise DegenerateDataError("empty calibration split")
    indexes = build_object_index(profiles)
    blank = _blank_index(len(profiles))
    tasks = [(object_id, indexes.get(object_id, blank),
              model.rating_of(object_id), manual, rank_transform)
             for object_id in model.object_ids]
    entries = pmap(_calibrate_task, tasks, jobs)
    return ThresholdTable(situation_code,
                          {entry.object_id: entry for entry in entries})


def dataset_ratings_eq6(profiles: Sequence[ProfileDetections],
                        model: SituationModel, thresholds: ThresholdTable,
                        active: frozenset[str]) -> np.ndarray:
    """Vector of averaged profile ratings with the given detectors active.

    Uncovered profiles get 0 (constant-sample convention used throughout
    calibration). Detections are accumulated in sorted order so floating
    point results never depend on input order.
    """
    values = np.zeros(len(profiles))
    for idx, profile in enumerate(profiles):
        total = 0.0
        covered = 0
        for photo in profile.photos:
            photo_sum = 0.0
            hit = False
            for det in sorted(photo.detections,
                              key=lambda d: (d.object_id, d.confidence)):
                if det.object_id not in active:
                    continue
                kept = filter_detection(det, thresholds.eta_for(det.object_id))
                if kept > 0.0:
                    photo_sum += model.rating_of(det.object_id) * kept
                    hit = True
            if hit:
                covered += 1
                total += photo_sum
        if covered:
            values[idx] = total / covered
    return values


def select_detectors(dataset: RatedProfileDataset, situation_code: str,
                     thresholds: ThresholdTable, model: SituationModel,
                     split: Split = Split.TRAIN,
                     rank_transform: bool = False) -> DetectorSelection:
    """Pick the correlation cut-off whose active subset rates profiles best.

    Every candidate on the -1.00..1.00 grid is evaluated; ties resolve to
    the smallest cut-off, which keeps the densest coverage.
    """
    profiles, manual = calibration_profiles(dataset, situation_code, split)
    if not profiles:
        raise DegenerateDataError("empty calibration split")
    manual_t = _rank_transform(manual) if rank_transform else manual

    taus = {object_id: thresholds.tau_for(object_id)
            for object_id in model.object_ids}
    best: tuple[float, float, frozenset[str]] | None = None
    cache: dict[frozenset[str], float | None] = {}
    for tau in tau_grid():
        active = frozenset(o for o, t in taus.items() if t >= tau)
        if not active:
            continue
        if active in cache:
            score = cache[active]
        else:
            automatic = dataset_ratings_eq6(profiles, model, thresholds, active)
            if np.all(automatic == automatic[0]) or np.all(manual_t == manual_t[0]):
                score = None
            else:
                auto_t = _rank_transform(automatic) if rank_transform else automatic
                score = None if np.all(auto_t == auto_t[0]) \
                    else pearson(auto_t, manual_t)
            cache[active] = score
        if score is None:
            continue
        if best is None or score > best[0]:
            best = (score, float(tau), active)
    if best is None:
        raise DegenerateDataError(
            f"every candidate detector subset is degenerate for {situation_code}")
    _, tau_threshold, active = best
    return DetectorSelection(tau_threshold, active)


@dataclass(frozen=True)
class Calibration:
    """Everything the rating formulas need for one situation."""

    table: ThresholdTable
    selection: DetectorSelection
    global_eta: float | None = None
    baseline_focal: tuple[float, int] | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "situation": self.table.situation_code,
            "objects": [
                {"object": e.object_id, "eta": e.eta, "tau": e.tau,
                 "support": e.support, "degenerate": e.degenerate}
                for e in (self.table.entries[o] for o in self.table.object_ids())
            ],
            "tau_threshold": self.selection.tau_threshold,
        }
        if self.global_eta is not None:
            data["global_eta"] = self.global_eta
        if self.baseline_focal is not None:
            data["baseline_focal"] = list(self.baseline_focal)
        return data

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "Calibration":
        entries = {
            obj["object"]: ThresholdEntry(obj["object"], float(obj["eta"]),
                                          float(obj["tau"]), int(obj["support"]),
                                          bool(obj.get("degenerate", False)))
            for obj in data["objects"]
        }
        table = ThresholdTable(data["situation"], entries)
        tau_threshold = float(data["tau_threshold"])
        active = frozenset(o for o, e in entries.items()
                           if e.tau >= tau_threshold)
        focal = data.get("baseline_focal")
        return Calibration(table, DetectorSelection(tau_threshold, active),
                           data.get("global_eta"),
                           (float(focal[0]), int(focal[1])) if focal else None)

    def save(self, path: str) -> None:
        write_json(path, self.to_dict())

    @staticmethod
    def load(path: str) -> "Calibration":
        return Calibration.from_dict(read_json(path))


def calibrate_situation(dataset: RatedProfileDataset, situation_code: str,
                        model: SituationModel, split: Split = Split.TRAIN,
                        rank_transform: bool = False, jobs: int = 1,
                        global_eta: bool = True) -> Calibration:
    """Full calibration: per-object thresholds, subset selection, global eta."""
    from .baseline import optimize_global_eta

    table = calibrate_thresholds(dataset, situation_code, model, split=split,
                                 rank_transform=rank_transform, jobs=jobs)
    selection = select_detectors(dataset, situation_code, table, model,
                                 split=split, rank_transform=rank_transform)
    eta = None
    if global_eta:
        eta = optimize_global_eta(dataset, situation_code, model, split=split)
    return Calibration(table, selection, eta)
