#!/usr/bin/env python3
"""Situation rating tables and focal boosting.

Builds a tiny accommodation-search table, shows how focal boosting
amplifies strong ratings while barely moving neutral ones, and prints the
population statistics used for table sanity checks.
"""

from lervup import SituationModel, apply_focal, focal_rating, rating_table_stats, situation_of

ACC = situation_of("ACC")

table = SituationModel.from_pairs(ACC, [
    ("book", 1.23),
    ("houseplant", 0.92),
    ("spoon", 0.05),
    ("cigarette_pack", -2.15),
    ("cocaine", -2.84),
])

print("raw ratings")
for object_id in table.object_ids:
    print(f"  {object_id:15s} {table.rating_of(object_id):+.2f}")

print("\nfocal boosting with k=10")
for gamma in (0, 1, 2, 4):
    boosted = apply_focal(table, 10.0, gamma)
    row = "  ".join(f"{boosted.rating_of(o):+6.2f}" for o in table.object_ids)
    print(f"  gamma={gamma}  {row}")

print("\nthe boost is sign-preserving and grows with |rating|:")
for rating in (0.05, 1.23, -2.84):
    print(f"  {rating:+.2f} -> {focal_rating(rating, 10.0, 2):+.3f}")

stats = rating_table_stats(table)
print(f"\ntable stats: mean={stats['mean']:+.3f} stddev={stats['stddev']:.3f}")
