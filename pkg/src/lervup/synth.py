"""Synthetic detection datasets with a planted, recoverable exposure signal.

Each user gets a sparse latent preference over objects; photos sample
objects from it, a noisy detector emits confidence records, and simulated
raters score the focal-weighted mean photo impact on the 7-point scale.
The noise-free planted rating is recomputable from the seed alone, which
gives acceptance tests an oracle that bypasses the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

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
from .util import clamp_rating, likert_level

# per-situation (mean, std) targets for crowd-table moment matching
REFERENCE_MOMENTS: dict[str, tuple[float, float]] = {
    "ACC": (0.03, 0.70),
    "BANK": (-0.13, 0.68),
    "IT": (0.09, 0.58),
    "WAIT": (0.27, 0.60),
}


@dataclass(frozen=True)
class DetectorNoise:
    """Beta-confidence detector with misses, false positives, and
    per-object quality spread.

    tp_alpha/tp_beta describe the best detectors; each object gets a
    latent quality in [0.25, 1] that interpolates toward a sloppy
    detector, so some classes separate cleanly from false positives and
    others barely do. That spread is what per-object threshold
    calibration exists to exploit.
    """

    tp_alpha: float = 7.0
    tp_beta: float = 1.3
    false_positive_rate: float = 0.08
    miss_rate: float = 0.08

    def __post_init__(self):
        if not (0.0 <= self.miss_rate < 1.0):
            raise ValidationError("miss_rate must be in [0, 1)")
        if self.false_positive_rate < 0.0:
            raise ValidationError("false_positive_rate must be >= 0")

    def confidence_for(self, quality: float, draw: float) -> float:
        """True-positive confidence: quality-anchored level, Beta jitter.

        Each object class reports at a characteristic confidence level
        (good detectors near 0.95, poor ones near 0.6); draw is a
        Beta(tp_alpha, tp_beta) sample that wiggles it slightly.
        """
        center = 0.5 + 0.45 * quality
        mean = self.tp_alpha / (self.tp_alpha + self.tp_beta)
        return float(np.clip(center + 0.08 * (draw - mean), 0.02, 0.995))

    def to_dict(self) -> dict[str, Any]:
        return {"tp_alpha": self.tp_alpha, "tp_beta": self.tp_beta,
                "false_positive_rate": self.false_positive_rate,
                "miss_rate": self.miss_rate}


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 300
    n_validation: int = 50
    photos_per_user: int = 100
    n_objects: int = 269
    situations: tuple[str, ...] = ("ACC", "BANK", "IT", "WAIT")
    moment_targets: Optional[Mapping[str, tuple[float, float]]] = None
    detector: DetectorNoise = field(default_factory=DetectorNoise)
    rating_noise_std: float = 0.0
    label_noise_std: float = 0.0
    planted_k: float = 10.0
    planted_gamma: float = 2.0
    mean_extra_objects: float = 5.0
    user_concentration: float = 0.15
    n_raters: int = 9
    seed: int = 42

    def __post_init__(self):
        if self.n_users < 1 or self.photos_per_user < 0 or self.n_objects < 1:
            raise ValidationError("counts must be positive")
        if not (0 <= self.n_validation < self.n_users):
            raise ValidationError("n_validation must be < n_users")
        if self.planted_k <= 3.0:
            raise ValidationError("planted_k must exceed the rating range")
        if self.moment_targets is not None:
            object.__setattr__(self, "moment_targets",
                               {k: (float(m), float(s))
                                for k, (m, s) in self.moment_targets.items()})

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_users": self.n_users, "n_validation": self.n_validation,
            "photos_per_user": self.photos_per_user,
            "n_objects": self.n_objects, "situations": list(self.situations),
            "moment_targets": None if self.moment_targets is None else
            {k: list(v) for k, v in self.moment_targets.items()},
            "detector": self.detector.to_dict(),
            "rating_noise_std": self.rating_noise_std,
            "label_noise_std": self.label_noise_std,
            "planted_k": self.planted_k,
            "planted_gamma": self.planted_gamma,
            "mean_extra_objects": self.mean_extra_objects,
            "user_concentration": self.user_concentration,
            "n_raters": self.n_raters, "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "SynthConfig":
        defaults = SynthConfig()
        detector = DetectorNoise(**data["detector"]) if "detector" in data \
            else defaults.detector
        targets = data.get("moment_targets")
        return SynthConfig(
            n_users=int(data.get("n_users", defaults.n_users)),
            n_validation=int(data.get("n_validation", defaults.n_validation)),
            photos_per_user=int(data.get("photos_per_user",
                                         defaults.photos_per_user)),
            n_objects=int(data.get("n_objects", defaults.n_objects)),
            situations=tuple(data.get("situations", defaults.situations)),
            moment_targets=None if targets is None else
            {k: (float(v[0]), float(v[1])) for k, v in targets.items()},
            detector=detector,
            rating_noise_std=float(data.get("rating_noise_std",
                                            defaults.rating_noise_std)),
            label_noise_std=float(data.get("label_noise_std",
                                           defaults.label_noise_std)),
            planted_k=float(data.get("planted_k", defaults.planted_k)),
            planted_gamma=float(data.get("planted_gamma",
                                         defaults.planted_gamma)),
            mean_extra_objects=float(data.get("mean_extra_objects",
                                              defaults.mean_extra_objects)),
            user_concentration=float(data.get("user_concentration",
                                              defaults.user_concentration)),
            n_raters=int(data.get("n_raters", defaults.n_raters)),
            seed=int(data.get("seed", defaults.seed)),
        )


def _focal_float(rating: float, k_param: float, gamma: float) -> float:
    """Focal boost with real-valued strength, used only for planting."""
    if rating == 0.0 or gamma == 0.0:
        return float(rating)
    return float(rating / (1.0 - abs(rating) / k_param) ** gamma)


def _seed_tree(config: SynthConfig):
    root = np.random.SeedSequence(config.seed)
    tones_seq, detector_seq, ratings_seq, users_seq = root.spawn(4)
    return (tones_seq, detector_seq,
            ratings_seq.spawn(len(config.situations)),
            users_seq.spawn(config.n_users))


TONE_CORRELATION = 0.99
DEFAULT_RATING_STD = 1.35

# tone thresholds carving the negative / neutral / positive usage pools
POOL_EDGES = (-0.4, 0.4)


def _object_tones(config: SynthConfig, seq: np.random.SeedSequence) -> np.ndarray:
    """Shared positive/neutral/negative tone axis behind all situations.

    Negative tones run deep while positive ones stay mild, matching the
    usual shape of crowd impact tables (strong taboos, lukewarm praise).
    """
    rng = np.random.default_rng(seq)
    n = config.n_objects
    component = rng.random(n)
    return np.where(
        component < 0.25, -rng.uniform(1.4, 2.8, n),
        np.where(component < 0.70, rng.uniform(0.45, 1.3, n),
                 rng.normal(0.0, 0.18, n)))


def _situation_ratings(config: SynthConfig, code: str, tones: np.ndarray,
                       seq: np.random.SeedSequence) -> np.ndarray:
    """Per-situation ratings correlated with the tone axis.

    Without moment targets the designed tone geometry is kept as-is;
    targets re-standardize the table to the requested (mean, std).
    """
    rng = np.random.default_rng(seq)
    noise = rng.normal(0.0, 1.0, config.n_objects)
    raw = TONE_CORRELATION * tones \
        + np.sqrt(1.0 - TONE_CORRELATION ** 2) * noise
    targets = (config.moment_targets or {}).get(code)
    if targets is not None:
        mean_t, std_t = targets
        std = raw.std()
        if std > 0:
            raw = (raw - raw.mean()) / std * std_t + mean_t
    return np.round(np.clip(raw, -3.0, 3.0), 2)


def _pools(tones: np.ndarray) -> list[np.ndarray]:
    """Object indices per pool: negative, neutral, positive.

    Pools may be empty on tiny object sets."""
    a, b = POOL_EDGES
    return [
        np.where(tones < a)[0],
        np.where((tones >= a) & (tones <= b))[0],
        np.where(tones > b)[0],
    ]


FAVOURITES_PER_SIDE = 4
THEME_RATES = (0.28, 0.12, 0.6)  # negative, neutral, positive photo shares


def _user_content(config: SynthConfig, tones: np.ndarray,
                  pools: list[np.ndarray],
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Latent photo contents: per photo, the planted object indices.

    Every user shoots negative, neutral and positive photo themes at the
    same fixed rates; what distinguishes users is HOW SEVERE their
    negatives and HOW FLATTERING their positives are. Each user has a
    severity level per side and favours pool objects whose tone sits near
    it (Gaussian kernel), with a little Dirichlet texture on top.
    """
    severity_neg = rng.uniform(-2.6, -1.7)
    severity_pos = rng.uniform(0.5, 1.3)
    centers = (severity_neg, None, severity_pos)
    prefs = []
    for pool, center in zip(pools, centers):
        if not len(pool):
            prefs.append(None)
            continue
        weights = np.zeros(len(pool))
        if center is None:
            weights[:] = 1.0
        else:
            # equal-weight favourite set: the objects nearest the user's
            # severity level on this side
            nearest = np.argsort(np.abs(tones[pool] - center),
                                 kind="stable")[:FAVOURITES_PER_SIDE]
            weights[nearest] = 1.0
        prefs.append(weights / weights.sum())

    theme = np.array(THEME_RATES)
    theme[[len(pool) == 0 for pool in pools]] = 0.0
    theme = theme / theme.sum()

    counts = 1 + rng.poisson(config.mean_extra_objects,
                             size=config.photos_per_user)
    photos = []
    for count in counts:
        chosen = []
        for pool_idx in rng.choice(3, size=int(count), p=theme):
            pool = pools[pool_idx]
            member = int(rng.choice(len(pool), p=prefs[pool_idx]))
            chosen.append(int(pool[member]))
        photos.append(np.array(chosen, dtype=int))
    return photos


def _profile_truth(contents: list[np.ndarray], focal_table: np.ndarray,
                   noise_col: np.ndarray | None = None) -> float:
    """Clamped mean photo impact for one situation.

    Shared by generation and the oracle so the noise-free values agree
    bit for bit; noise_col adds per-photo impact noise when generating.
    """
    if not contents:
        return 0.0
    total = 0.0
    for j, photo in enumerate(contents):
        impact = float(focal_table[photo].mean())
        if noise_col is not None:
            impact += float(noise_col[j])
        total += impact
    return clamp_rating(total / len(contents))


def _detector_quality(config: SynthConfig, tones: np.ndarray,
                      seq: np.random.SeedSequence) -> np.ndarray:
    """Latent per-object detector quality in (0, 1], independent of tone.

    Quality fixes the characteristic confidence level of a class, so
    confidence-weighted aggregation mis-weights object ratings by a
    random per-object factor; count-based descriptors are immune, which
    is the point of thresholding detections instead of trusting scores.
    """
    rng = np.random.default_rng(seq)
    del tones  # same latent for every situation, by design
    return rng.uniform(0.3, 1.0, config.n_objects)


def _detect_photo(config: SynthConfig, planted: np.ndarray,
                  object_ids: list[str], quality: np.ndarray,
                  fp_weights: np.ndarray,
                  rng: np.random.Generator) -> list[DetectionRecord]:
    detections: list[DetectionRecord] = []
    noise = config.detector
    for obj_index in planted:
        if noise.miss_rate > 0 and rng.random() < noise.miss_rate:
            continue
        draw = float(rng.beta(noise.tp_alpha, noise.tp_beta))
        confidence = noise.confidence_for(float(quality[int(obj_index)]), draw)
        detections.append(_record(object_ids[int(obj_index)], confidence, rng))
    if noise.false_positive_rate > 0:
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            obj_index = int(rng.choice(config.n_objects, p=fp_weights))
            confidence = 0.05 + 0.3 * float(rng.beta(2.0, 3.0))
            detections.append(_record(object_ids[obj_index], confidence, rng))
    return detections


def _record(object_id: str, confidence: float,
            rng: np.random.Generator) -> DetectionRecord:
    confidence = float(min(1.0, max(1e-6, confidence)))
    x = float(rng.uniform(0.0, 0.6))
    y = float(rng.uniform(0.0, 0.6))
    w = float(rng.uniform(0.1, 0.35))
    h = float(rng.uniform(0.1, 0.35))
    return DetectionRecord(object_id, confidence, (x, y, w, h))


def object_id_list(config: SynthConfig) -> list[str]:
    width = max(3, len(str(config.n_objects - 1)))
    return [f"obj{i:0{width}d}" for i in range(config.n_objects)]


def user_id_of(index: int) -> str:
    return f"u{index:05d}"


def generate(config: SynthConfig
             ) -> tuple[dict[str, SituationModel], RatedProfileDataset]:
    """Deterministic synthetic dataset for the given config."""
    object_ids = object_id_list(config)
    tones_seq, detector_seq, rating_seqs, user_seqs = _seed_tree(config)
    tones = _object_tones(config, tones_seq)
    pools = _pools(tones)
    quality = _detector_quality(config, tones, detector_seq)
    fp_weights = (0.2 + quality) / (0.2 + quality).sum()
    rating_tables = np.array([
        _situation_ratings(config, code, tones, seq)
        for code, seq in zip(config.situations, rating_seqs)])
    focal_tables = np.array([
        [_focal_float(r, config.planted_k, config.planted_gamma)
         for r in table] for table in rating_tables])
    models = {
        code: SituationModel.from_pairs(
            situation_of(code),
            list(zip(object_ids, rating_tables[s])))
        for s, code in enumerate(config.situations)
    }

    profiles: list[ProfileDetections] = []
    manual: dict[tuple[str, str], ManualProfileRating] = {}
    split: dict[str, Split] = {}
    n_train = config.n_users - config.n_validation
    for index in range(config.n_users):
        user_id = user_id_of(index)
        content_seq, detector_seq, noise_seq = user_seqs[index].spawn(3)
        content_rng = np.random.default_rng(content_seq)
        detector_rng = np.random.default_rng(detector_seq)
        noise_rng = np.random.default_rng(noise_seq)

        contents = _user_content(config, tones, pools, content_rng)
        photos = tuple(
            PhotoDetections(f"{user_id}_p{j:04d}",
                            tuple(_detect_photo(config, planted, object_ids,
                                                quality, fp_weights,
                                                detector_rng)))
            for j, planted in enumerate(contents))
        profiles.append(ProfileDetections(user_id, photos))

        n_situations = len(config.situations)
        impact_noise = None
        if config.rating_noise_std > 0:
            impact_noise = noise_rng.normal(
                0.0, config.rating_noise_std,
                size=(max(1, len(contents)), n_situations))
        rater_noise = np.zeros((config.n_raters, n_situations))
        if config.label_noise_std > 0:
            rater_noise = noise_rng.normal(
                0.0, config.label_noise_std,
                size=(config.n_raters, n_situations))

        for s, code in enumerate(config.situations):
            emitted = _profile_truth(
                contents, focal_tables[s],
                None if impact_noise is None else impact_noise[:, s])
            raters = tuple(likert_level(emitted + rater_noise[r, s])
                           for r in range(config.n_raters))
            manual[(user_id, code)] = ManualProfileRating(user_id, code, raters)
        split[user_id] = Split.TRAIN if index < n_train else Split.VALIDATION

    dataset = RatedProfileDataset(tuple(profiles), manual, split)
    return models, dataset


def planted_oracle_rating(profile: ProfileDetections, config: SynthConfig,
                          situation_code: str | None = None) -> float:
    """Noise-free planted rating, recomputed from latent state only.

    Bypasses detections entirely; valid only for profiles produced by
    generate() with the same config.
    """
    situations = config.situations
    code = situation_code if situation_code is not None else situations[0]
    if code not in situations:
        raise ValidationError(f"situation {code!r} not in this config")
    if not profile.user_id.startswith("u"):
        raise ValidationError(
            f"profile {profile.user_id!r} was not produced by this generator")
    try:
        index = int(profile.user_id[1:])
    except ValueError as exc:
        raise ValidationError(
            f"profile {profile.user_id!r} was not produced by this generator"
        ) from exc
    if not (0 <= index < config.n_users):
        raise ValidationError(f"user index {index} out of range")

    tones_seq, _, rating_seqs, user_seqs = _seed_tree(config)
    tones = _object_tones(config, tones_seq)
    pools = _pools(tones)
    s = situations.index(code)
    table = _situation_ratings(config, code, tones, rating_seqs[s])
    focal_table = np.array([_focal_float(r, config.planted_k,
                                         config.planted_gamma) for r in table])
    content_seq, _, _ = user_seqs[index].spawn(3)
    contents = _user_content(config, tones, pools,
                             np.random.default_rng(content_seq))
    if not contents:
        return 0.0
    return float(likert_level(_profile_truth(contents, focal_table)))
