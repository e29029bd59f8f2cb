"""Evaluation and dataset-analysis tooling.

Correlation reporting with Cohen bands, inter-rater agreement, rating
pattern discovery, head-to-head method evaluation, and data ablations.
"""

from __future__ import annotations

import csv
import io as _io
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .baseline import (
    BaselineConfig,
    build_flat_index,
    eq6_series,
    index_vectors,
    rate_profile_baseline,
)
from .calibration import Calibration, calibrate_situation, calibration_profiles
from .calibration import pearson as _pearson
from .core import (
    DegenerateDataError,
    ManualProfileRating,
    ProfileDetections,
    RatedProfileDataset,
    SituationModel,
    Split,
    ValidationError,
    apply_focal,
)
from .descriptors import lloyd_kmeans
from .learning import GridSpec, TrainedModel, grid_search_train

AD_ACCEPTABLE_BOUND = 1.2
ALL_METHODS = ("base", "base_eta", "base_eta_fr", "reg_raw", "reg_pca",
               "lervup", "lervup_fr")
BASELINE_METHODS = ("base", "base_eta", "base_eta_fr")


@dataclass(frozen=True)
class RatingSeries:
    """Paired automatic/manual ratings for one situation and method."""

    user_ids: tuple[str, ...]
    automatic: tuple[float, ...]
    manual: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.user_ids) == len(self.automatic) == len(self.manual)):
            raise ValidationError("series lengths differ")
        if len(set(self.user_ids)) != len(self.user_ids):
            raise ValidationError("duplicate user_id in rating series")


def pearson(series: RatingSeries) -> float:
    return _pearson(np.array(series.automatic), np.array(series.manual))


def cohen_band(r: float) -> str:
    """Correlation strength interpretation on |r|."""
    if not (-1.0 - 1e-12 <= r <= 1.0 + 1e-12):
        raise ValidationError(f"correlation {r} outside [-1, 1]")
    magnitude = abs(r)
    if magnitude < 0.1:
        return "negligible"
    if magnitude < 0.3:
        return "weak"
    if magnitude < 0.5:
        return "moderate"
    return "strong"


def ad_index(ratings_per_item: Sequence[Sequence[float]]) -> dict[str, Any]:
    """Average-deviation agreement: mean absolute deviation around item means."""
    if not len(ratings_per_item):
        raise DegenerateDataError("no items to compute agreement on")
    per_item = []
    for ratings in ratings_per_item:
        values = np.asarray(ratings, dtype=float)
        if values.size < 2:
            raise DegenerateDataError(
                "agreement needs at least 2 ratings per item")
        per_item.append(float(np.mean(np.abs(values - values.mean()))))
    return {"per_item": per_item, "mean": float(np.mean(per_item))}


def ad_report(items: Mapping[str, Sequence[float]],
              bound: float = AD_ACCEPTABLE_BOUND) -> dict[str, Any]:
    """Agreement report with the acceptability bound applied per item."""
    labels = sorted(items)
    result = ad_index([items[label] for label in labels])
    per_item = dict(zip(labels, result["per_item"]))
    over = sorted(label for label, value in per_item.items() if value > bound)
    acceptable = result["mean"] <= bound and not over
    if not acceptable:
        warnings.warn(
            f"inter-rater agreement exceeds the acceptable bound {bound}: "
            f"mean={result['mean']:.3f}, items over bound: {over}",
            stacklevel=2)
    return {"per_item": per_item, "mean": result["mean"], "bound": bound,
            "acceptable": acceptable, "items_over_bound": over}


# ---------------------------------------------------------------------------
# rating-pattern discovery


def silhouette_score(points: np.ndarray, labels: np.ndarray) -> Optional[float]:
    """Mean silhouette; None when fewer than 2 occupied clusters.

    Points in singleton clusters score 0; coincident points across two
    separated clusters score 1.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    occupied = np.unique(labels)
    if occupied.size < 2:
        return None
    deltas = points[:, None, :] - points[None, :, :]
    distances = np.sqrt(np.sum(deltas ** 2, axis=2))
    n = len(points)
    mean_to = np.empty((n, occupied.size))
    sizes = np.empty(occupied.size)
    for j, cluster in enumerate(occupied):
        mask = labels == cluster
        sizes[j] = mask.sum()
        mean_to[:, j] = distances[:, mask].sum(axis=1) / sizes[j]
    scores = np.zeros(n)
    for i in range(n):
        own = int(np.searchsorted(occupied, labels[i]))
        m = sizes[own]
        if m <= 1:
            scores[i] = 0.0
            continue
        a = mean_to[i, own] * m / (m - 1)
        b = np.min(np.delete(mean_to[i], own))
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


@dataclass(frozen=True)
class PatternResult:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    silhouette: float
    per_k: tuple[tuple[int, Optional[float]], ...]
    mode: str


def discover_patterns(rows: np.ndarray, k_range: Sequence[int], seed: int = 0,
                      mode: str = "max") -> PatternResult:
    """Cluster rating rows and pick k by the silhouette criterion.

    mode="max" keeps the best-separated clustering (standard practice);
    mode="min" keeps the least-separated one for comparison runs.
    Ties resolve to the smallest k.
    """
    if mode not in ("max", "min"):
        raise ValidationError("mode must be 'max' or 'min'")
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values or k_values[0] < 2:
        raise ValidationError("k_range must contain integers >= 2")
    if len(rows) < k_values[-1]:
        raise ValidationError(
            f"need at least {k_values[-1]} rows, got {len(rows)}")
    if np.all(rows == rows[0]):
        raise DegenerateDataError("all rating rows are identical")
    fits: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    per_k: list[tuple[int, Optional[float]]] = []
    for k in k_values:
        centroids, labels, _ = lloyd_kmeans(rows, k, seed)
        score = silhouette_score(rows, labels)
        per_k.append((k, score))
        if score is not None:
            fits[k] = (centroids, labels)
    scored = [(k, s) for k, s in per_k if s is not None]
    if not scored:
        raise DegenerateDataError("every candidate clustering is degenerate")
    if mode == "max":
        best_k = max(scored, key=lambda item: (item[1], -item[0]))[0]
    else:
        best_k = min(scored, key=lambda item: (item[1], item[0]))[0]
    best_score = dict(scored)[best_k]
    centroids, labels = fits[best_k]
    return PatternResult(best_k, centroids, labels, best_score,
                         tuple(per_k), mode)


def ratings_matrix(manual: Mapping[tuple[str, str], ManualProfileRating]
                   ) -> tuple[list[str], list[str], np.ndarray]:
    """(entity ids, situation codes, entity x situation mean-rating matrix)."""
    user_ids = sorted({user_id for user_id, _ in manual})
    codes = sorted({code for _, code in manual})
    matrix = np.zeros((len(user_ids), len(codes)))
    for i, user_id in enumerate(user_ids):
        for j, code in enumerate(codes):
            record = manual.get((user_id, code))
            if record is None:
                raise ValidationError(
                    f"missing rating for ({user_id}, {code})")
            matrix[i, j] = record.m
    return user_ids, codes, matrix


# ---------------------------------------------------------------------------
# method evaluation


@dataclass(frozen=True)
class MethodResult:
    situation_code: str
    method: str
    pearson: Optional[float]
    band: Optional[str]
    coverage: float
    n_rated: int
    n_total: int
    best: bool = False


@dataclass(frozen=True)
class EvaluationReport:
    results: tuple[MethodResult, ...]

    def situations(self) -> list[str]:
        return sorted({r.situation_code for r in self.results})

    def methods(self) -> list[str]:
        seen: list[str] = []
        for r in self.results:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def cell(self, method: str, situation_code: str) -> Optional[MethodResult]:
        for r in self.results:
            if r.method == method and r.situation_code == situation_code:
                return r
        return None

    def to_csv(self) -> str:
        buffer = _io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["method", "situation", "pearson", "band", "coverage",
                         "n_rated", "n_total", "best"])
        for r in self.results:
            writer.writerow([
                r.method, r.situation_code,
                "" if r.pearson is None else f"{r.pearson:.6f}",
                r.band or "", f"{r.coverage:.6f}", r.n_rated, r.n_total,
                "yes" if r.best else ""])
        return buffer.getvalue()

    def to_markdown(self) -> str:
        situations = self.situations()
        lines = ["| method | " + " | ".join(situations) + " |",
                 "|" + "---|" * (len(situations) + 1)]
        for method in self.methods():
            cells = []
            for code in situations:
                r = self.cell(method, code)
                if r is None or r.pearson is None:
                    cells.append("n/a")
                else:
                    text = f"{r.pearson:.2f}"
                    cells.append(f"**{text}**" if r.best else text)
            lines.append(f"| {method} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def optimize_baseline_focal(dataset: RatedProfileDataset, situation_code: str,
                            model: SituationModel, calibration: Calibration,
                            k_params: Sequence[float], gammas: Sequence[int],
                            split: Split = Split.TRAIN) -> tuple[float, int]:
    """Pick the focal strength maximizing the calibrated baseline correlation."""
    profiles, manual = calibration_profiles(dataset, situation_code, split)
    if len(profiles) < 3 or np.all(manual == manual[0]):
        raise DegenerateDataError("focal optimization needs a usable split")
    index = build_flat_index(profiles)
    _, etas, _ = index_vectors(index, model, calibration.table)
    active = np.array([calibration.selection.is_active(o)
                       for o in index.object_ids])
    best: tuple[float, tuple[float, int]] | None = None
    for k_param in k_params:
        for gamma in gammas:
            boosted = apply_focal(model, k_param, gamma)
            ratings = np.array([boosted.rating_of(o) for o in index.object_ids])
            automatic = eq6_series(index, ratings, etas, active)
            if np.all(automatic == automatic[0]):
                continue
            score = _pearson(automatic, manual)
            if best is None or score > best[0]:
                best = (score, (float(k_param), int(gamma)))
    if best is None:
        raise DegenerateDataError("every focal candidate is degenerate")
    return best[1]


def _validation_series(dataset: RatedProfileDataset, situation_code: str,
                       rate) -> tuple[RatingSeries, int]:
    """Apply a rater to the validation split; uncovered profiles excluded."""
    profiles = [p for p in dataset.profiles_in(Split.VALIDATION)
                if (p.user_id, situation_code) in dataset.manual]
    rated: list[tuple[str, float, float]] = []
    for profile in profiles:
        value = rate(profile)
        if value is None:
            continue
        rated.append((profile.user_id, float(value),
                      dataset.manual_value(profile.user_id, situation_code)))
    series = RatingSeries(tuple(r[0] for r in rated),
                          tuple(r[1] for r in rated),
                          tuple(r[2] for r in rated))
    return series, len(profiles)


def evaluate_situation(dataset: RatedProfileDataset, situation_code: str,
                       model: SituationModel, methods: Sequence[str],
                       grid: GridSpec, seed: int = 0, jobs: int = 1,
                       calibration: Calibration | None = None,
                       trained: dict[str, TrainedModel] | None = None,
                       ) -> list[MethodResult]:
    """One evaluation row per method on the validation split."""
    for method in methods:
        if method not in ALL_METHODS:
            raise ValidationError(f"unknown method {method!r}")
    if not methods:
        return []
    if calibration is None:
        calibration = calibrate_situation(
            dataset, situation_code, model, jobs=jobs,
            global_eta="base" in methods)
    trained = dict(trained or {})
    results: list[MethodResult] = []
    for method in methods:
        if method in BASELINE_METHODS:
            if method == "base":
                cfg = BaselineConfig("base", global_eta=calibration.global_eta)
            elif method == "base_eta":
                cfg = BaselineConfig("base_eta")
            else:
                focal = calibration.baseline_focal or optimize_baseline_focal(
                    dataset, situation_code, model, calibration,
                    grid.k_params, grid.gammas)
                cfg = BaselineConfig("base_eta_fr", focal=focal)
            rate = lambda p, c=cfg: rate_profile_baseline(  # noqa: E731
                p, model, calibration.table, calibration.selection, c)
        else:
            if method not in trained:
                trained[method] = grid_search_train(
                    dataset, situation_code, model, calibration, method,
                    grid, seed=seed)
            rate = trained[method].predict
        series, n_total = _validation_series(dataset, situation_code, rate)
        try:
            score = pearson(series)
            band = cohen_band(score)
        except DegenerateDataError:
            score, band = None, None
        coverage = len(series.user_ids) / n_total if n_total else 0.0
        results.append(MethodResult(situation_code, method, score, band,
                                    coverage, len(series.user_ids), n_total))
    best_score = max((r.pearson for r in results if r.pearson is not None),
                     default=None)
    if best_score is not None:
        results = [
            MethodResult(r.situation_code, r.method, r.pearson, r.band,
                         r.coverage, r.n_rated, r.n_total,
                         best=(r.pearson == best_score))
            for r in results
        ]
    return results


def evaluate_all(dataset: RatedProfileDataset,
                 models: Mapping[str, SituationModel],
                 methods: Sequence[str], grid: GridSpec, seed: int = 0,
                 jobs: int = 1) -> EvaluationReport:
    """Method x situation evaluation table over every given situation."""
    results: list[MethodResult] = []
    for code in sorted(models):
        results.extend(evaluate_situation(dataset, code, models[code],
                                          methods, grid, seed=seed, jobs=jobs))
    return EvaluationReport(tuple(results))


# ---------------------------------------------------------------------------
# ablations


@dataclass(frozen=True)
class AblationRun:
    seed: int
    full_pearson: float
    ablated_pearson: float
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AblationReport:
    mode: str
    variant: str
    runs: tuple[AblationRun, ...]

    @property
    def mean_full(self) -> float:
        return float(np.mean([r.full_pearson for r in self.runs]))

    @property
    def std_full(self) -> float:
        return float(np.std([r.full_pearson for r in self.runs]))

    @property
    def mean_ablated(self) -> float:
        return float(np.mean([r.ablated_pearson for r in self.runs]))

    @property
    def std_ablated(self) -> float:
        return float(np.std([r.ablated_pearson for r in self.runs]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode, "variant": self.variant,
            "runs": [{"seed": r.seed, "full_pearson": r.full_pearson,
                      "ablated_pearson": r.ablated_pearson, **r.detail}
                     for r in self.runs],
            "mean_full": self.mean_full, "std_full": self.std_full,
            "mean_ablated": self.mean_ablated, "std_ablated": self.std_ablated,
        }


def _drop_profiles(dataset: RatedProfileDataset,
                   drop: set[str]) -> RatedProfileDataset:
    profiles = tuple(p for p in dataset.profiles if p.user_id not in drop)
    manual = {key: value for key, value in dataset.manual.items()
              if key[0] not in drop}
    split = {user_id: value for user_id, value in dataset.split.items()
             if user_id not in drop}
    return RatedProfileDataset(profiles, manual, split)


def _train_and_score(dataset: RatedProfileDataset, situation_code: str,
                     model: SituationModel, variant: str, grid: GridSpec,
                     seed: int, jobs: int) -> tuple[float, Calibration]:
    calibration = calibrate_situation(dataset, situation_code, model,
                                      jobs=jobs, global_eta=False)
    trained = grid_search_train(dataset, situation_code, model, calibration,
                                variant, grid, seed=seed)
    series, _ = _validation_series(dataset, situation_code, trained.predict)
    return pearson(series), calibration


def run_ablation(dataset: RatedProfileDataset, situation_code: str,
                 model: SituationModel, variant: str, mode: str,
                 seeds: Sequence[int], grid: GridSpec,
                 jobs: int = 1) -> AblationReport:
    """Compare full-data training against seeded 50% data ablations.

    users50 drops half of the training profiles; objects50 drops half of
    the rated objects before calibration. Each seed trains both a full and
    an ablated model with that training seed.
    """
    if mode not in ("users50", "objects50"):
        raise ValidationError("mode must be 'users50' or 'objects50'")
    runs: list[AblationRun] = []
    for seed in seeds:
        full_score, _ = _train_and_score(dataset, situation_code, model,
                                         variant, grid, seed, jobs)
        rng = np.random.default_rng(seed)
        detail: dict[str, Any] = {}
        if mode == "users50":
            train_ids = sorted(p.user_id for p in dataset.profiles_in(Split.TRAIN))
            drop = set(rng.choice(train_ids, size=len(train_ids) // 2,
                                  replace=False).tolist())
            ablated_dataset = _drop_profiles(dataset, drop)
            ablated_model = model
            detail["train_profiles_kept"] = len(train_ids) - len(drop)
        else:
            object_ids = model.object_ids
            drop = set(rng.choice(object_ids, size=len(object_ids) // 2,
                                  replace=False).tolist())
            kept = [(o, model.ratings[o].rating)
                    for o in object_ids if o not in drop]
            ablated_model = SituationModel.from_pairs(
                model.situation, kept, enforce_range=False)
            ablated_dataset = dataset
            detail["objects_kept"] = len(kept)
        ablated_score, ablated_calibration = _train_and_score(
            ablated_dataset, situation_code, ablated_model, variant, grid,
            seed, jobs)
        if mode == "objects50":
            detail["threshold_table_size"] = len(
                ablated_calibration.table.entries)
        runs.append(AblationRun(seed, full_score, ablated_score, detail))
    return AblationReport(mode, variant, tuple(runs))
