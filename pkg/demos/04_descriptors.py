#!/usr/bin/env python3
"""Photo descriptors and the clustered 16-dim user descriptor.

Each eligible photo becomes a (positive, negative, confidence) triple;
a k=4 clustering over all photos defines slots whose member means and
variances summarize a whole profile in 16 numbers.
"""

import numpy as np

from lervup import SynthConfig, calibrate_situation, fit_clusters, generate, user_descriptor
from lervup.descriptors import profile_descriptors

config = SynthConfig(n_users=40, n_validation=10, photos_per_user=25,
                     n_objects=12, situations=("ACC",),
                     label_noise_std=0.25, planted_k=5.0, seed=13)
models, dataset = generate(config)
model = models["ACC"]
calibration = calibrate_situation(dataset, "ACC", model, global_eta=False)

pool = []
for profile in dataset.profiles:
    pool.extend(profile_descriptors(profile, model, calibration.table))
print(f"{len(pool)} eligible photos across {len(dataset.profiles)} users")

clusters = fit_clusters(pool, k=4, seed=0)
print("\ncluster centroids (positive, negative, confidence):")
print(np.round(clusters.centroids, 3))

profile = dataset.profiles[0]
descriptors = profile_descriptors(profile, model, calibration.table)
vector = user_descriptor(descriptors, clusters, profile.user_id)
print(f"\nuser {profile.user_id}: {len(descriptors)} eligible photos")
print("16-dim descriptor (4 slots x [mean_p, mean_n, mean_c, variance]):")
print(np.round(np.array(vector.vector).reshape(4, 4), 3))
