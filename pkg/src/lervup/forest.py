"""Random-forest regression built on variance-reduction decision trees.

Kept dependency-free so trained ensembles serialize to plain JSON (nested
split nodes) and predictions are bit-reproducible from the artifact alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .core import ValidationError


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    feature_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be positive")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be positive")
        if not (0.0 < self.feature_fraction <= 1.0):
            raise ValidationError("feature_fraction must be in (0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_leaf": self.min_samples_leaf,
                "bootstrap": self.bootstrap,
                "feature_fraction": self.feature_fraction, "seed": self.seed}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "ForestConfig":
        return ForestConfig(
            int(data["n_trees"]),
            None if data["max_depth"] is None else int(data["max_depth"]),
            int(data["min_samples_leaf"]), bool(data["bootstrap"]),
            float(data["feature_fraction"]), int(data["seed"]))


def _build_tree(X: np.ndarray, y: np.ndarray, indices: np.ndarray,
                rng: np.random.Generator, max_depth: int | None,
                min_leaf: int, n_candidates: int, depth: int = 0) -> dict:
    """Recursive splitter maximizing summed-squared-error reduction."""
    node_y = y[indices]
    n = len(indices)
    mean = float(node_y.mean())
    if (max_depth is not None and depth >= max_depth) or n < 2 * min_leaf \
            or np.all(node_y == node_y[0]):
        return {"value": mean}

    features = rng.choice(X.shape[1], size=n_candidates, replace=False)
    parent_sse = float(np.sum((node_y - mean) ** 2))
    left_sizes = np.arange(1, n)
    best_gain = 0.0
    best: tuple[int, float, np.ndarray, np.ndarray] | None = None
    for f in features:
        values = X[indices, f]
        order = np.argsort(values, kind="stable")
        sorted_vals = values[order]
        sorted_y = node_y[order]
        cum = np.cumsum(sorted_y)[:-1]
        cum2 = np.cumsum(sorted_y ** 2)[:-1]
        total = cum[-1] + sorted_y[-1]
        total2 = cum2[-1] + sorted_y[-1] ** 2
        # candidate split after each position; left = first i+1 samples
        usable = (sorted_vals[:-1] != sorted_vals[1:]) \
            & (left_sizes >= min_leaf) & (n - left_sizes >= min_leaf)
        if not np.any(usable):
            continue
        sse_left = cum2 - cum ** 2 / left_sizes
        sse_right = (total2 - cum2) - (total - cum) ** 2 / (n - left_sizes)
        gains = np.where(usable, parent_sse - sse_left - sse_right, -np.inf)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            threshold = (sorted_vals[i] + sorted_vals[i + 1]) / 2.0
            n_left = i + 1
            best_gain = float(gains[i])
            best = (int(f), float(threshold), order[:n_left], order[n_left:])
    if best is None:
        return {"value": mean}
    f, threshold, left_pos, right_pos = best
    left = _build_tree(X, y, indices[np.sort(left_pos)], rng, max_depth,
                       min_leaf, n_candidates, depth + 1)
    right = _build_tree(X, y, indices[np.sort(right_pos)], rng, max_depth,
                        min_leaf, n_candidates, depth + 1)
    return {"feature": f, "threshold": threshold, "left": left, "right": right}


def _tree_predict(node: dict, x: np.ndarray) -> float:
    while "value" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] \
            else node["right"]
    return node["value"]


@dataclass(frozen=True)
class RandomForest:
    config: ForestConfig
    n_features: int
    trees: tuple[dict, ...]

    def predict_one(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise ValidationError(
                f"expected {self.n_features} features, got {x.shape}")
        return float(np.mean([_tree_predict(tree, x) for tree in self.trees]))

    def predict(self, X: Sequence[Sequence[float]]) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.predict_one(row) for row in X])

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config.to_dict(), "n_features": self.n_features,
                "trees": list(self.trees)}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "RandomForest":
        return RandomForest(ForestConfig.from_dict(data["config"]),
                            int(data["n_features"]), tuple(data["trees"]))


def fit_forest(X: Sequence[Sequence[float]], y: Sequence[float],
               cfg: ForestConfig) -> RandomForest:
    """Train the ensemble; fully deterministic under cfg.seed."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValidationError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValidationError("need at least 2 training rows")
    n, d = X.shape
    n_candidates = max(1, int(np.ceil(cfg.feature_fraction * d)))
    rngs = [np.random.default_rng(s)
            for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)]
    trees = []
    for rng in rngs:
        if cfg.bootstrap:
            indices = np.sort(rng.integers(0, n, size=n))
        else:
            indices = np.arange(n)
        trees.append(_build_tree(X, y, indices, rng, cfg.max_depth,
                                 cfg.min_samples_leaf, n_candidates))
    return RandomForest(cfg, d, tuple(trees))
