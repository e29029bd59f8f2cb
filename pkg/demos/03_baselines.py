#!/usr/bin/env python3
"""Unsupervised baseline raters and per-photo contributions.

Rates the worked two-photo example profile with each baseline variant and
shows which photo pulls the rating where — the quantity behind the
what-if masking feedback.
"""

from lervup import (
    BaselineConfig,
    DetectionRecord,
    PhotoDetections,
    ProfileDetections,
    SituationModel,
    rate_profile_baseline,
    situation_of,
)
from lervup.baseline import photo_contributions
from lervup.calibration import (
    Calibration,
    DetectorSelection,
    ThresholdEntry,
    ThresholdTable,
)

ACC = situation_of("ACC")
model = SituationModel.from_pairs(ACC, [("book", 1.23), ("cocaine", -2.84)])
table = ThresholdTable("ACC", {
    "book": ThresholdEntry("book", 0.1, 0.6, 3),
    "cocaine": ThresholdEntry("cocaine", 0.1, 0.7, 3)})
calibration = Calibration(
    table, DetectorSelection(-1.0, frozenset({"book", "cocaine"})), 0.1)

profile = ProfileDetections("demo", (
    PhotoDetections("holiday_read", (DetectionRecord("book", 0.9),)),
    PhotoDetections("party", (DetectionRecord("cocaine", 0.8),)),
    PhotoDetections("sunset", ()),
))

for cfg in (BaselineConfig("base", global_eta=0.1),
            BaselineConfig("base_eta"),
            BaselineConfig("base_eta_fr", focal=(10.0, 2))):
    rating = rate_profile_baseline(profile, model, table,
                                   calibration.selection, cfg)
    print(f"{cfg.variant:12s} -> {rating:+.4f}")

print("\nper-photo contributions (calibrated baseline):")
contributions = photo_contributions(profile, model, table,
                                    calibration.selection,
                                    BaselineConfig("base_eta"))
for photo_id, value in contributions.items():
    shown = "no activated detection" if value is None else f"{value:+.3f}"
    print(f"  {photo_id:14s} {shown}")
print("\nmasking the 'party' photo removes the below-mean contribution,")
print("so the averaged profile rating must go up — the UI's what-if rule.")
