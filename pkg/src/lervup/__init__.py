"""Situation-aware photo-sharing exposure ratings for visual user profiles.

The pipeline turns per-photo object-detection records into per-situation
profile ratings: calibrated detection thresholds, rating-weighted photo
descriptors, clustered user descriptors, and a learned forest regressor,
next to unsupervised baselines, a synthetic benchmark generator, a CLI,
and a what-if HTTP service.
"""

from .analysis import (
    AblationReport,
    EvaluationReport,
    MethodResult,
    PatternResult,
    RatingSeries,
    ad_index,
    ad_report,
    cohen_band,
    discover_patterns,
    evaluate_all,
    evaluate_situation,
    pearson,
    run_ablation,
)
from .baseline import BaselineConfig, optimize_global_eta, rate_profile_baseline
from .calibration import (
    Calibration,
    DetectorSelection,
    ThresholdEntry,
    ThresholdTable,
    calibrate_object_threshold,
    calibrate_situation,
    calibrate_thresholds,
    filter_detection,
    select_detectors,
    single_object_rating,
)
from .core import (
    BUILTIN_SITUATIONS,
    DegenerateDataError,
    DetectionRecord,
    ManualProfileRating,
    ObjectRating,
    PhotoDetections,
    ProfileDetections,
    RatedProfileDataset,
    Situation,
    SituationModel,
    Split,
    ValidationError,
    apply_focal,
    focal_rating,
    rating_table_stats,
    situation_of,
)
from .descriptors import (
    ClusterModel,
    ImageDescriptor,
    UserDescriptor,
    fit_clusters,
    image_descriptor,
    profile_descriptors,
    user_descriptor,
)
from .forest import ForestConfig, RandomForest, fit_forest
from .learning import (
    FeaturePipeline,
    GridSpec,
    PCAProjection,
    TrainedModel,
    build_training_matrix,
    fit_pca,
    grid_search_train,
    remove_outliers,
)
from .synth import DetectorNoise, SynthConfig, generate, planted_oracle_rating

__version__ = "0.1.0"
