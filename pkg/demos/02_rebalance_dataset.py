"""Dataset preparation: stratified split, rebalancing plan, CV folds.

Builds a manifest with the canonical originals-per-grade counts, splits it
70/15/15, plans the synthetic samples that lift each minority grade to its
target, and deals the training ids into five stratified folds.
"""

from drscreen.dataset import (
    DEFAULT_TARGETS,
    DatasetManifest,
    ManifestEntry,
    Severity,
    assign_folds,
    build_augmentation_plan,
    stratified_split,
)

ORIGINALS = (1805, 370, 999, 193, 295)

entries = [
    ManifestEntry(f"c{label}_{i:04d}", f"images/c{label}_{i:04d}.ppm", Severity(label))
    for label, count in enumerate(ORIGINALS)
    for i in range(count)
]
manifest = DatasetManifest(entries)
print(f"manifest: {len(manifest)} originals, per grade {manifest.class_counts()}")

split = stratified_split(manifest, seed=0)
for part in ("train", "validation", "test"):
    print(f"  {part:<11} {len(split.ids(part))}")

plan = build_augmentation_plan(manifest, targets=DEFAULT_TARGETS, seed=0)
syn = plan.synthetic_counts(manifest)
print(f"plan: synthetic per grade {syn}")
after = [o + s for o, s in zip(ORIGINALS, syn)]
print(f"after augmentation: {tuple(after)} (total {sum(after)})")

ops_used = sorted({e.op.kind for e in plan.entries})
print(f"operators drawn: {ops_used}")

labels = {e.image_id: e.label for e in manifest.entries}
folds = assign_folds(split.ids("train"), labels, k=5, seed=0)
sizes = [len(folds.ids(i)) for i in range(5)]
print(f"5-fold assignment over the train partition, fold sizes {sizes}")
