"""Photo-level descriptors and their clustered aggregation per user.

Each eligible photo (at least one detection passing its object's calibrated
threshold) is summarized by three attributes: rating-weighted positive and
negative fractions plus mean confidence. A k-means model groups photo
descriptors; a user is then the concatenation of per-cluster means and a
per-cluster variance scalar, 4*(3+1) = 16 dimensions at the default k=4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .calibration import ThresholdTable, filter_detection
from .core import (
    DegenerateDataError,
    PhotoDetections,
    ProfileDetections,
    SituationModel,
    ValidationError,
)

DEFAULT_K = 4
MAX_ITERATIONS = 300


@dataclass(frozen=True)
class ImageDescriptor:
    """(positive, negative, confidence) summary of one photo."""

    photo_id: str
    positive: float   # >= 0, rating-weighted share of non-negative objects
    negative: float   # <= 0, rating-weighted share of negative objects
    confidence: float  # mean confidence of valid detections, in (0, 1]

    def as_array(self) -> np.ndarray:
        return np.array([self.positive, self.negative, self.confidence])

    @property
    def impact(self) -> float:
        """Signed photo impact used for user feedback."""
        return self.positive + self.negative


@dataclass(frozen=True)
class PhotoSummary:
    """Threshold-filtered detection tallies of one eligible photo.

    Rating tables only enter at descriptor time, so one summary serves
    every focal configuration during grid search.
    """

    photo_id: str
    counts: tuple[tuple[str, int], ...]  # (object_id, valid detections)
    total: int
    mean_confidence: float


def photo_summary(photo: PhotoDetections,
                  thresholds: ThresholdTable) -> Optional[PhotoSummary]:
    valid_count: dict[str, int] = {}
    conf_sum = 0.0
    total = 0
    for det in sorted(photo.detections, key=lambda d: (d.object_id, d.confidence)):
        kept = filter_detection(det, thresholds.eta_for(det.object_id))
        if kept > 0.0:
            valid_count[det.object_id] = valid_count.get(det.object_id, 0) + 1
            conf_sum += kept
            total += 1
    if total == 0:
        return None
    return PhotoSummary(photo.photo_id,
                        tuple(sorted(valid_count.items())), total,
                        conf_sum / total)


def photo_summaries(profile: ProfileDetections,
                    thresholds: ThresholdTable) -> list[PhotoSummary]:
    """Summaries of every eligible photo, in photo order."""
    out = []
    for photo in profile.photos:
        summary = photo_summary(photo, thresholds)
        if summary is not None:
            out.append(summary)
    return out


def summary_descriptor(summary: PhotoSummary,
                       model: SituationModel) -> ImageDescriptor:
    positive = 0.0
    negative = 0.0
    for object_id, count in summary.counts:
        rating = model.rating_of(object_id)
        if rating >= 0.0:
            positive += rating * count
        else:
            negative += rating * count
    return ImageDescriptor(summary.photo_id, positive / summary.total,
                           negative / summary.total, summary.mean_confidence)


def image_descriptor(photo: PhotoDetections, model: SituationModel,
                     thresholds: ThresholdTable) -> Optional[ImageDescriptor]:
    """Descriptor of one photo, or None when no detection passes its threshold.

    Objects missing from the model count with rating 0: they dilute the
    positive/negative shares and enter the confidence average, nothing else.
    """
    summary = photo_summary(photo, thresholds)
    if summary is None:
        return None
    return summary_descriptor(summary, model)


def profile_descriptors(profile: ProfileDetections, model: SituationModel,
                        thresholds: ThresholdTable) -> list[ImageDescriptor]:
    """Descriptors of every eligible photo, in photo order."""
    return [summary_descriptor(s, model)
            for s in photo_summaries(profile, thresholds)]


@dataclass(frozen=True)
class ClusterModel:
    """Fitted k-means centroids over photo-descriptor space."""

    k: int
    centroids: np.ndarray  # (k, 3), sorted lexicographically
    seed: int
    inertia_trace: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=float)
        if centroids.shape != (self.k, 3):
            raise ValidationError(
                f"centroids must be ({self.k}, 3), got {centroids.shape}")
        if not np.all(np.isfinite(centroids)):
            raise ValidationError("centroids must be finite")
        object.__setattr__(self, "centroids", centroids)

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels; ties go to the lowest cluster index."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        distances = np.linalg.norm(points[:, None, :] - self.centroids[None, :, :],
                                   axis=2)
        return np.argmin(distances, axis=1)

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "seed": self.seed,
                "centroids": [list(map(float, row)) for row in self.centroids]}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ClusterModel":
        return ClusterModel(int(data["k"]), np.array(data["centroids"]),
                            int(data["seed"]))


def _farthest_point_init(points: np.ndarray, k: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Seeded farthest-point start on distinct points.

    When there are fewer distinct points than k the remaining centroids
    coincide with existing ones, which keeps degenerate inputs legal.
    """
    distinct = np.unique(points, axis=0)
    first = int(rng.integers(len(distinct)))
    chosen = [distinct[first]]
    if len(distinct) >= k:
        min_dist = np.linalg.norm(distinct - chosen[0], axis=1)
        while len(chosen) < k:
            idx = int(np.argmax(min_dist))
            chosen.append(distinct[idx])
            min_dist = np.minimum(min_dist,
                                  np.linalg.norm(distinct - chosen[-1], axis=1))
    else:
        while len(chosen) < k:
            chosen.append(distinct[len(chosen) % len(distinct)])
    return np.array(chosen)


def lloyd_kmeans(points: np.ndarray, k: int, seed: int = 0
                 ) -> tuple[np.ndarray, np.ndarray, tuple[float, ...]]:
    """Plain Lloyd iterations, deterministic under seed, capped at 300.

    Converges when assignments stop changing; empty clusters keep their
    previous centroid. Returns lexicographically sorted centroids, the
    matching labels and the per-iteration inertia trace.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValidationError("points must be a 2-d array")
    if len(points) < k:
        raise DegenerateDataError(
            f"need at least k={k} points, got {len(points)}")
    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(points, k, rng)
    labels = np.full(len(points), -1)
    trace: list[float] = []
    for _ in range(MAX_ITERATIONS):
        distances = np.linalg.norm(points[:, None, :] - centroids[None, :, :],
                                   axis=2)
        new_labels = np.argmin(distances, axis=1)
        trace.append(float(np.sum((points - centroids[new_labels]) ** 2)))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    order = np.lexsort(tuple(centroids[:, col]
                             for col in reversed(range(points.shape[1]))))
    centroids = centroids[order]
    relabel = np.empty(k, dtype=int)
    relabel[order] = np.arange(k)
    return centroids, relabel[labels], tuple(trace)


def fit_clusters(descriptors: Sequence[ImageDescriptor] | np.ndarray,
                 k: int = DEFAULT_K, seed: int = 0) -> ClusterModel:
    """Fit the photo-descriptor cluster model (3-dim Lloyd k-means)."""
    if isinstance(descriptors, np.ndarray):
        points = np.asarray(descriptors, dtype=float)
    else:
        points = np.array([d.as_array() for d in descriptors])
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValidationError("descriptor points must be (n, 3)")
    centroids, _, trace = lloyd_kmeans(points, k, seed)
    return ClusterModel(k, centroids, seed, trace)


@dataclass(frozen=True)
class UserDescriptor:
    """Per-cluster (mean, mean, mean, variance) blocks, concatenated."""

    user_id: str
    vector: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.vector)


def user_descriptor(descriptors: Sequence[ImageDescriptor],
                    clusters: ClusterModel,
                    user_id: str = "") -> UserDescriptor:
    """Aggregate a user's photo descriptors through the cluster model.

    Each cluster contributes its member mean (3 values) plus one scalar,
    the mean of the per-attribute population variances; empty clusters
    contribute zeros. Output order follows the stored centroid order, so
    the result is invariant to photo ordering.
    """
    if not len(descriptors):
        raise DegenerateDataError("profile has no eligible photos")
    if isinstance(descriptors, np.ndarray):
        points = np.asarray(descriptors, dtype=float)
    else:
        points = np.array([d.as_array() for d in descriptors])
    labels = clusters.assign(points)
    blocks: list[float] = []
    for c in range(clusters.k):
        members = points[labels == c]
        if len(members) == 0:
            blocks.extend([0.0, 0.0, 0.0, 0.0])
            continue
        mean = members.mean(axis=0)
        variance = float(members.var(axis=0).mean())
        blocks.extend([float(mean[0]), float(mean[1]), float(mean[2]), variance])
    return UserDescriptor(user_id, tuple(blocks))
