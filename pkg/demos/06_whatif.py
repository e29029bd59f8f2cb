#!/usr/bin/env python3
"""What-if exposure feedback, end to end in-process.

Builds service artifacts for the worked fixture, rates a profile in every
situation, lists photos by impact, and previews ratings with the worst
photo masked — exactly what the HTTP service and web UI expose.

To run the same thing over HTTP:
    lervup serve --models <artifact dir> --reference ref.json --port 8321
"""

import numpy as np

from lervup import SituationModel, situation_of
from lervup.calibration import (
    Calibration,
    DetectorSelection,
    ThresholdEntry,
    ThresholdTable,
)
from lervup.core import DetectionRecord, PhotoDetections, ProfileDetections
from lervup.service import ExposureEngine, ReferenceCommunity, SituationArtifacts


def build_artifacts(code):
    model = SituationModel.from_pairs(
        situation_of(code), [("book", 1.23), ("cocaine", -2.84)])
    table = ThresholdTable(code, {
        "book": ThresholdEntry("book", 0.1, 0.6, 3),
        "cocaine": ThresholdEntry("cocaine", 0.1, 0.7, 3)})
    calibration = Calibration(
        table, DetectorSelection(-1.0, frozenset({"book", "cocaine"})),
        global_eta=0.1, baseline_focal=(10.0, 2))
    return SituationArtifacts(model, calibration)


rng = np.random.default_rng(0)
reference = ReferenceCommunity(
    {code: sorted(rng.uniform(-3, 3, 500).tolist())
     for code in ("ACC", "BANK")}, method="base_eta")
engine = ExposureEngine({code: build_artifacts(code)
                         for code in ("ACC", "BANK")}, reference)

profile = ProfileDetections("demo", (
    PhotoDetections("p1", (DetectionRecord("book", 0.9),)),
    PhotoDetections("p2", (DetectionRecord("cocaine", 0.8),)),
    PhotoDetections("p3", ()),
))

print("current exposure:")
for code in engine.situation_codes():
    payload = engine.rating_payload(code, "base_eta", profile)
    print(f"  {code}: rating {payload['rating']:+.4f} band={payload['band']} "
          f"percentile={payload['percentile']:.2f}")

print("\nphotos by impact (ascending = worst first):")
for entry in engine.photo_payloads("ACC", profile):
    impact = "no signal" if entry["no_signal"] else f"{entry['impact']:+.3f}"
    print(f"  {entry['photo_id']}: {impact}")

masked = ProfileDetections(profile.user_id, tuple(
    photo for photo in profile.photos if photo.photo_id != "p2"))
print("\nafter masking the worst photo (p2):")
for code in engine.situation_codes():
    now = engine.rating_payload(code, "base_eta", profile)["rating"]
    then = engine.rating_payload(code, "base_eta", masked)["rating"]
    print(f"  {code}: {now:+.4f} -> {then:+.4f} (delta {then - now:+.4f})")
