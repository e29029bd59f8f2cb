#!/usr/bin/env python3
"""Grid-search training and the method comparison table.

Trains the learned raters on a planted synthetic benchmark and prints the
validation comparison across all seven methods. Takes a minute or two.
"""

from lervup import GridSpec, SynthConfig, calibrate_situation, generate
from lervup.analysis import EvaluationReport, evaluate_situation

config = SynthConfig(n_users=120, n_validation=30, photos_per_user=40,
                     n_objects=30, situations=("ACC",),
                     rating_noise_std=0.05, label_noise_std=0.25,
                     planted_k=5.0, planted_gamma=2.0, seed=21)
models, dataset = generate(config)
model = models["ACC"]

grid = GridSpec(k_params=(10.0,), gammas=(0, 2, 4), epsilons=(0.1,),
                g_percents=(100.0,),
                forest=({"n_trees": 60, "max_depth": None,
                         "min_samples_leaf": 2, "bootstrap": True,
                         "feature_fraction": 1.0 / 3.0},))

calibration = calibrate_situation(dataset, "ACC", model, global_eta=True)
results = evaluate_situation(
    dataset, "ACC", model,
    ["base", "base_eta", "base_eta_fr", "reg_raw", "reg_pca",
     "lervup", "lervup_fr"],
    grid, seed=21, calibration=calibration)

print(EvaluationReport(tuple(results)).to_markdown())
print("the learned raters recover the planted focal-weighted signal that")
print("plain confidence-weighted averaging blurs; the focal variant should")
print("sit on top whenever the planted boost is strong.")
