"""Supervised profile raters: feature building, grid search, trained artifacts.

Variants:
  reg_raw    per-object averaged rating contributions (one column per object)
  reg_pca    the reg_raw vector compressed by PCA to 16 dimensions
  lervup     16-dim clustered photo-descriptor aggregation
  lervup_fr  lervup with focal-boosted ratings (strength grid-searched)

Model selection: for every focal/outlier configuration the forest grid is
scored by mean Pearson over 5-fold cross-validation on the retained
training profiles; each configuration's best forest is then evaluated on
the validation split and the overall best validation score wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .baseline import build_flat_index
from .calibration import Calibration, pearson
from .core import (
    DegenerateDataError,
    ProfileDetections,
    RatedProfileDataset,
    Situation,
    SituationModel,
    Split,
    ValidationError,
    apply_focal,
)
from .descriptors import (
    ClusterModel,
    ImageDescriptor,
    PhotoSummary,
    fit_clusters,
    photo_summaries,
    summary_descriptor,
    user_descriptor,
)
from .forest import ForestConfig, RandomForest, fit_forest
from .io import situation_model_from_dict, situation_model_to_dict
from .util import clamp_rating, read_json, sha256_of, write_json

LEARNED_VARIANTS = ("reg_raw", "reg_pca", "lervup", "lervup_fr")
PCA_TARGET_DIM = 16


# ---------------------------------------------------------------------------
# principal components


@dataclass(frozen=True)
class PCAProjection:
    mean: np.ndarray          # (d,)
    components: np.ndarray    # (out_dim, d); zero rows for dead directions
    explained_variance: np.ndarray  # (out_dim,)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return Z @ self.components + self.mean

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean.tolist(),
                "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist()}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "PCAProjection":
        return PCAProjection(np.array(data["mean"]),
                             np.array(data["components"]),
                             np.array(data["explained_variance"]))


def fit_pca(X: Sequence[Sequence[float]], out_dim: int) -> PCAProjection:
    """Mean-centered projection onto the leading principal directions.

    Deterministic sign convention: the largest-magnitude loading of each
    direction is positive. Zero-variance directions become zero rows so
    degenerate inputs simply project to zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise ValidationError("PCA needs at least 2 rows")
    if out_dim > d:
        raise ValidationError(f"out_dim {out_dim} exceeds input dim {d}")
    mean = X.mean(axis=0)
    centered = X - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variance = singular ** 2 / n
    components = np.zeros((out_dim, d))
    explained = np.zeros(out_dim)
    tol = max(singular[0], 1.0) * 1e-12 if singular.size else 0.0
    available = min(out_dim, vt.shape[0])
    for i in range(available):
        if singular[i] <= tol:
            continue
        row = vt[i]
        pivot = int(np.argmax(np.abs(row)))
        components[i] = -row if row[pivot] < 0 else row
        explained[i] = variance[i]
    return PCAProjection(mean, components, explained)


# ---------------------------------------------------------------------------
# outlier removal


def remove_outliers(vectors: Sequence[Sequence[float]] | np.ndarray,
                    epsilon: float, g_percent: float) -> np.ndarray:
    """Indices of the densest ceil(g% * N) points, in input order.

    Density is judged in a standardized 2-dim PCA projection: points are
    ranked by how many neighbours sit within Euclidean radius epsilon,
    ties broken by smaller summed distance to all points, then by index.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValidationError("outlier removal needs at least 2 points")
    if not (0 < g_percent <= 100):
        raise ValidationError("g_percent must be in (0, 100]")
    keep = int(np.ceil(g_percent / 100.0 * n))
    if keep >= n:
        return np.arange(n)
    projection = fit_pca(X, min(2, X.shape[1])).transform(X)
    if projection.shape[1] < 2:
        projection = np.hstack([projection,
                                np.zeros((n, 2 - projection.shape[1]))])
    std = projection.std(axis=0)
    std[std == 0.0] = 1.0
    z = (projection - projection.mean(axis=0)) / std
    deltas = z[:, None, :] - z[None, :, :]
    distances = np.sqrt(np.sum(deltas ** 2, axis=2))
    neighbor_counts = np.sum(distances <= epsilon, axis=1) - 1
    summed = distances.sum(axis=1)
    order = sorted(range(n), key=lambda i: (-neighbor_counts[i], summed[i], i))
    return np.array(sorted(order[:keep]), dtype=int)


# ---------------------------------------------------------------------------
# feature building


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    user_ids: tuple[str, ...]
    omitted: tuple[str, ...]


def reg_raw_matrix(profiles: Sequence[ProfileDetections],
                   model: SituationModel,
                   calibration: Calibration) -> tuple[np.ndarray, np.ndarray]:
    """(n_profiles, n_objects) per-object averaged contributions + coverage.

    Column order follows the model's sorted object ids; row sums equal the
    calibrated baseline rating of the profile.
    """
    columns = model.object_ids
    col_of = {object_id: i for i, object_id in enumerate(columns)}
    index = build_flat_index(profiles)
    n, w = len(profiles), len(columns)
    X = np.zeros((n, w))
    covered = np.zeros(n)
    if index.det_conf.size:
        etas = np.array([calibration.table.eta_for(o) for o in index.object_ids])
        active = np.array([calibration.selection.is_active(o)
                           for o in index.object_ids])
        ratings = np.array([model.rating_of(o) for o in index.object_ids])
        valid = active[index.det_obj] & (index.det_conf >= etas[index.det_obj])
        if np.any(valid):
            obj = index.det_obj[valid]
            weights = ratings[obj] * index.det_conf[valid]
            cols = np.array([col_of[index.object_ids[o]] for o in obj])
            flat = index.det_profile[valid] * w + cols
            X = np.bincount(flat, weights=weights, minlength=n * w).reshape(n, w)
            photo_hit = np.bincount(index.det_photo[valid],
                                    minlength=index.n_photos) > 0
            covered = np.bincount(index.photo_profile[photo_hit], minlength=n)
    mask = covered > 0
    X[mask] = X[mask] / covered[mask, None]
    X[~mask] = 0.0
    return X, covered


def _profiles_with_manual(dataset: RatedProfileDataset, situation_code: str,
                          split: Split) -> list[ProfileDetections]:
    return [p for p in dataset.profiles_in(split)
            if (p.user_id, situation_code) in dataset.manual]


@dataclass(frozen=True)
class FeaturePipeline:
    """Everything needed to turn a profile into a feature vector."""

    variant: str
    model: SituationModel              # raw ratings
    calibration: Calibration
    focal: tuple[float, int] | None = None
    cluster_model: ClusterModel | None = None
    pca: PCAProjection | None = None

    def effective_model(self) -> SituationModel:
        if self.focal is not None:
            return apply_focal(self.model, self.focal[0], self.focal[1])
        return self.model

    def vector_for(self, profile: ProfileDetections) -> Optional[np.ndarray]:
        """Feature vector for one profile, None when it has no signal."""
        if self.variant in ("lervup", "lervup_fr"):
            summaries = photo_summaries(profile, self.calibration.table)
            if not summaries:
                return None
            eff = self.effective_model()
            descriptors = [summary_descriptor(s, eff) for s in summaries]
            return user_descriptor(descriptors, self.cluster_model,
                                   profile.user_id).as_array()
        X, covered = reg_raw_matrix([profile], self.model, self.calibration)
        if covered[0] == 0:
            return None
        row = X[0]
        if self.variant == "reg_pca":
            row = self.pca.transform(row[None, :])[0]
        return row


def build_feature_pipeline(dataset: RatedProfileDataset, situation_code: str,
                           model: SituationModel, calibration: Calibration,
                           variant: str, focal: tuple[float, int] | None,
                           seed: int, cluster_k: int = 4) -> FeaturePipeline:
    """Fit the variant's feature components on the training split."""
    if variant not in LEARNED_VARIANTS:
        raise ValidationError(f"unknown learned variant {variant!r}")
    if variant != "lervup_fr":
        focal = None
    train = _profiles_with_manual(dataset, situation_code, Split.TRAIN)
    if variant in ("lervup", "lervup_fr"):
        eff = apply_focal(model, focal[0], focal[1]) if focal else model
        pool: list[ImageDescriptor] = []
        for profile in train:
            for summary in photo_summaries(profile, calibration.table):
                pool.append(summary_descriptor(summary, eff))
        if len(pool) < cluster_k:
            raise DegenerateDataError(
                "not enough eligible photos to fit the cluster model")
        cluster_model = fit_clusters(pool, k=cluster_k, seed=seed)
        return FeaturePipeline(variant, model, calibration, focal,
                               cluster_model=cluster_model)
    if variant == "reg_pca":
        X, covered = reg_raw_matrix(train, model, calibration)
        rows = X[covered > 0]
        if len(rows) < 2:
            raise DegenerateDataError("not enough covered training profiles")
        pca = fit_pca(rows, min(PCA_TARGET_DIM, X.shape[1]))
        return FeaturePipeline(variant, model, calibration, pca=pca)
    return FeaturePipeline(variant, model, calibration)


def build_training_matrix(dataset: RatedProfileDataset, situation_code: str,
                          pipeline: FeaturePipeline,
                          split: Split = Split.TRAIN) -> FeatureMatrix:
    """Feature rows + manual targets for one split; no-signal users listed."""
    profiles = _profiles_with_manual(dataset, situation_code, split)
    rows, targets, kept, omitted = [], [], [], []
    for profile in profiles:
        vector = pipeline.vector_for(profile)
        if vector is None:
            omitted.append(profile.user_id)
            continue
        rows.append(vector)
        targets.append(dataset.manual_value(profile.user_id, situation_code))
        kept.append(profile.user_id)
    if not rows:
        raise DegenerateDataError(
            f"no profile of split {split.value} has usable signal")
    return FeatureMatrix(np.array(rows), np.array(targets),
                         tuple(kept), tuple(omitted))


# ---------------------------------------------------------------------------
# grid search


def _forest_grid_default() -> tuple[dict, ...]:
    combos = []
    for max_depth in (4, 8, None):
        for min_leaf in (1, 2, 5):
            for bootstrap in (True, False):
                for fraction in (1.0 / 3.0, 1.0):
                    combos.append({"n_trees": 100, "max_depth": max_depth,
                                   "min_samples_leaf": min_leaf,
                                   "bootstrap": bootstrap,
                                   "feature_fraction": fraction})
    return tuple(combos)


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grid; defaults follow the published tuning table."""

    k_params: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0)
    gammas: tuple[int, ...] = (0, 1, 2, 3, 4)
    epsilons: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2)
    g_percents: tuple[float, ...] = (80.0, 85.0, 90.0, 95.0, 100.0)
    forest: tuple[dict, ...] = field(default_factory=_forest_grid_default)

    @staticmethod
    def small(n_trees: int = 60) -> "GridSpec":
        """Compact grid for tests and demos."""
        return GridSpec(
            k_params=(10.0,), gammas=(0, 2), epsilons=(0.1,),
            g_percents=(100.0,),
            forest=({"n_trees": n_trees, "max_depth": 8,
                     "min_samples_leaf": 2, "bootstrap": True,
                     "feature_fraction": 1.0},))

    def focal_points(self, variant: str) -> tuple[tuple[float, int] | None, ...]:
        if variant == "lervup_fr":
            return tuple((k, g) for k in self.k_params for g in self.gammas)
        return (None,)

    def outlier_points(self) -> tuple[tuple[float, float], ...]:
        return tuple((e, g) for e in self.epsilons for g in self.g_percents)

    def to_dict(self) -> dict[str, Any]:
        return {"k_params": list(self.k_params), "gammas": list(self.gammas),
                "epsilons": list(self.epsilons),
                "g_percents": list(self.g_percents),
                "forest": [dict(f) for f in self.forest]}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "GridSpec":
        spec = GridSpec()
        return GridSpec(
            tuple(data.get("k_params", spec.k_params)),
            tuple(data.get("gammas", spec.gammas)),
            tuple(data.get("epsilons", spec.epsilons)),
            tuple(data.get("g_percents", spec.g_percents)),
            tuple(dict(f) for f in data["forest"]) if "forest" in data
            else spec.forest)


def cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Disjoint covering folds from a seeded permutation."""
    permutation = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(permutation, folds)]


def _cv_score(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, folds: int,
              fold_seed: int) -> tuple[float, float]:
    """(mean, std) Pearson over cross-validation; undefined folds skipped.

    The fold partition depends only on fold_seed so every forest candidate
    of one configuration is compared on identical folds.
    """
    parts = cv_folds(len(y), folds, fold_seed)
    scores = []
    for i, held in enumerate(parts):
        train_idx = np.setdiff1d(np.arange(len(y)), held)
        if len(held) < 3 or len(train_idx) < 2:
            continue
        forest = fit_forest(X[train_idx], y[train_idx],
                            replace(cfg, seed=cfg.seed + i))
        predictions = forest.predict(X[held])
        try:
            scores.append(pearson(predictions, y[held]))
        except DegenerateDataError:
            continue
    if not scores:
        return float("-inf"), 0.0
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class TrainedModel:
    """Self-contained rating model: artifact JSON reproduces predictions."""

    situation: Situation
    variant: str
    model_table: SituationModel
    calibration: Calibration
    forest: RandomForest
    focal: tuple[float, int] | None = None
    epsilon: float | None = None
    g_percent: float | None = None
    cluster_model: ClusterModel | None = None
    pca: PCAProjection | None = None
    provenance: dict[str, Any] = field(default_factory=dict)
    trace: list[dict] = field(default_factory=list, compare=False, repr=False)

    def pipeline(self) -> FeaturePipeline:
        return FeaturePipeline(self.variant, self.model_table, self.calibration,
                               self.focal, self.cluster_model, self.pca)

    def predict(self, profile: ProfileDetections) -> Optional[float]:
        """Clamped rating, or None when the profile has no usable signal."""
        vector = self.pipeline().vector_for(profile)
        if vector is None:
            return None
        return clamp_rating(self.forest.predict_one(vector))

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "format": "lervup-model/1",
            "situation": {"code": self.situation.code,
                          "display_name": self.situation.display_name},
            "variant": self.variant,
            "ratings": situation_model_to_dict(self.model_table),
            "calibration": self.calibration.to_dict(),
            "forest": self.forest.to_dict(),
            "focal": list(self.focal) if self.focal else None,
            "epsilon": self.epsilon,
            "g_percent": self.g_percent,
            "cluster_model": self.cluster_model.to_dict()
            if self.cluster_model else None,
            "pca": self.pca.to_dict() if self.pca else None,
            "provenance": dict(self.provenance),
        }
        return data

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "TrainedModel":
        table = situation_model_from_dict(data["ratings"])
        return TrainedModel(
            situation=table.situation,
            variant=data["variant"],
            model_table=table,
            calibration=Calibration.from_dict(data["calibration"]),
            forest=RandomForest.from_dict(data["forest"]),
            focal=tuple(data["focal"]) if data.get("focal") else None,
            epsilon=data.get("epsilon"),
            g_percent=data.get("g_percent"),
            cluster_model=ClusterModel.from_dict(data["cluster_model"])
            if data.get("cluster_model") else None,
            pca=PCAProjection.from_dict(data["pca"])
            if data.get("pca") else None,
            provenance=dict(data.get("provenance", {})),
        )

    def model_hash(self) -> str:
        return sha256_of(self.to_dict())

    def save(self, path: str) -> None:
        write_json(path, self.to_dict())

    @staticmethod
    def load(path: str) -> "TrainedModel":
        return TrainedModel.from_dict(read_json(path))


def grid_search_train(dataset: RatedProfileDataset, situation_code: str,
                      model: SituationModel, calibration: Calibration,
                      variant: str, grid: GridSpec, seed: int = 0,
                      folds: int = 5, min_train: int = 10,
                      cluster_k: int = 4,
                      dataset_hash: str | None = None) -> TrainedModel:
    """Exhaustive search over the grid; returns the best validated model.

    For each focal/outlier configuration every forest candidate is scored
    by cross-validation; the configuration's best forest is refit on the
    full retained training set and scored on the validation split. The
    model with the highest validation Pearson wins; the full search trace
    is kept on the returned model.
    """
    if variant not in LEARNED_VARIANTS:
        raise ValidationError(f"unknown learned variant {variant!r}")
    train_profiles = _profiles_with_manual(dataset, situation_code, Split.TRAIN)
    if len(train_profiles) < min_train:
        raise DegenerateDataError(
            f"training split has {len(train_profiles)} profiles, "
            f"need at least {min_train}")
    situation = None
    trace: list[dict] = []
    best: tuple[float, int, TrainedModel] | None = None
    point_index = 0
    config_index = 0
    for focal in grid.focal_points(variant):
        pipeline = build_feature_pipeline(dataset, situation_code, model,
                                          calibration, variant, focal,
                                          seed=seed, cluster_k=cluster_k)
        if situation is None:
            situation = pipeline.model.situation
        train = build_training_matrix(dataset, situation_code, pipeline,
                                      Split.TRAIN)
        validation = build_training_matrix(dataset, situation_code, pipeline,
                                           Split.VALIDATION)
        for epsilon, g_percent in grid.outlier_points():
            retained = remove_outliers(train.X, epsilon, g_percent)
            if len(retained) < 5:
                raise DegenerateDataError(
                    "outlier removal left fewer than 5 training profiles")
            X_kept, y_kept = train.X[retained], train.y[retained]
            fold_seed = seed + 7919 * config_index
            config_index += 1
            config_best: tuple[float, float, ForestConfig, int] | None = None
            config_rows: list[dict] = []
            for forest_params in grid.forest:
                cfg = ForestConfig(seed=seed + point_index, **forest_params)
                cv_mean, cv_std = _cv_score(X_kept, y_kept, cfg, folds,
                                            fold_seed)
                row = {"point": point_index, "variant": variant,
                       "k_param": focal[0] if focal else None,
                       "gamma": focal[1] if focal else None,
                       "epsilon": epsilon, "g_percent": g_percent,
                       **forest_params,
                       "cv_mean": cv_mean, "cv_std": cv_std,
                       "validation_pearson": None}
                config_rows.append(row)
                if config_best is None or cv_mean > config_best[0]:
                    config_best = (cv_mean, cv_std, cfg, len(config_rows) - 1)
                point_index += 1
            cv_mean, _, cfg, row_idx = config_best
            forest = fit_forest(X_kept, y_kept, cfg)
            predictions = forest.predict(validation.X)
            try:
                val_score = pearson(predictions, validation.y)
            except DegenerateDataError:
                val_score = float("-inf")
            config_rows[row_idx]["validation_pearson"] = \
                None if val_score == float("-inf") else val_score
            trace.extend(config_rows)
            if best is None or val_score > best[0]:
                candidate = TrainedModel(
                    situation=situation, variant=variant, model_table=model,
                    calibration=calibration, forest=forest,
                    focal=focal, epsilon=epsilon, g_percent=g_percent,
                    cluster_model=pipeline.cluster_model, pca=pipeline.pca,
                    provenance={"seed": seed, "dataset_hash": dataset_hash,
                                "grid_points": None,
                                "validation_pearson": None
                                if val_score == float("-inf") else val_score},
                )
                best = (val_score, point_index, candidate)
    if best is None or best[0] == float("-inf"):
        raise DegenerateDataError("every grid point was degenerate")
    winner = best[2]
    winner.provenance["grid_points"] = point_index
    winner.trace = trace
    return winner


def trace_to_csv(trace: Sequence[dict]) -> str:
    """Search trace as CSV, one row per grid point."""
    import csv
    import io as _io

    columns = ["point", "variant", "k_param", "gamma", "epsilon", "g_percent",
               "n_trees", "max_depth", "min_samples_leaf", "bootstrap",
               "feature_fraction", "cv_mean", "cv_std", "validation_pearson"]
    buffer = _io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in trace:
        writer.writerow(["" if row.get(c) is None else row.get(c)
                         for c in columns])
    return buffer.getvalue()
