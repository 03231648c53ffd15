"""Dataset manifests, stratified splitting, rebalancing augmentation plans,
and cross-validation fold assignment.

The five severity grades follow the screening convention: 0 No_DR, 1 Mild,
2 Moderate, 3 Severe, 4 Proliferate_DR.  Default augmentation targets lift
the minority grades to (1805, 900, 1200, 900, 1000) samples, 5805 in total,
leaving the majority grade untouched.

Splitting happens over original images only; synthetic samples are planned
and generated afterwards so they can never leak into validation or test.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .imaging import (
    AugmentOp,
    RasterImage,
    apply_augment,
    decode_image,
    denormalize,
    encode_ppm,
    hflip,
    normalize,
    rotate,
    vflip,
)
from .rng import SplitMix64

__all__ = [
    "Severity",
    "ManifestEntry",
    "DatasetManifest",
    "SplitAssignment",
    "AugmentationPlan",
    "FoldAssignment",
    "DatasetError",
    "ParseError",
    "DuplicateId",
    "UnknownLabel",
    "EmptyManifest",
    "TargetBelowOriginal",
    "MissingSource",
    "WriteFailure",
    "DEFAULT_TARGETS",
    "load_manifest",
    "save_manifest",
    "stratified_split",
    "build_augmentation_plan",
    "execute_plan",
    "assign_folds",
]


class Severity(IntEnum):
    NO_DR = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3
    PROLIFERATE_DR = 4

    @property
    def display(self) -> str:
        return _DISPLAY[int(self)]


_DISPLAY = ["No_DR", "Mild", "Moderate", "Severe", "Proliferate_DR"]

# After-augmentation sample targets per severity grade.
DEFAULT_TARGETS = (1805, 900, 1200, 900, 1000)

# Operators permitted when synthesizing samples for each grade.
CLASS_OPS: dict[Severity, tuple[str, ...]] = {
    Severity.NO_DR: (),
    Severity.MILD: ("hflip", "vflip", "rotate", "brightness"),
    Severity.MODERATE: ("hflip", "rotate"),
    Severity.SEVERE: ("contrast", "noise", "zoom"),
    Severity.PROLIFERATE_DR: ("contrast", "noise"),
}

# Parameter ranges for the stochastic operators, drawn per plan entry.
_PARAM_RANGES = {
    "rotate": (-25.0, 25.0),
    "brightness": (0.8, 1.2),
    "contrast": (1.1, 1.5),
    "noise": (0.01, 0.03),
    "zoom": (1.05, 1.2),
}


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    pass


class DuplicateId(DatasetError):
    pass


class UnknownLabel(DatasetError):
    pass


class EmptyManifest(DatasetError):
    pass


class TargetBelowOriginal(DatasetError):
    pass


class MissingSource(DatasetError):
    pass


class WriteFailure(DatasetError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    label: Severity
    provenance: str = "orig"  # orig | syn
    source_id: str | None = None
    op: AugmentOp | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise DuplicateId(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)
        by_id = {e.image_id: e for e in self.entries}
        for e in self.entries:
            if e.provenance == "syn":
                src = by_id.get(e.source_id or "")
                if src is None or src.provenance != "orig":
                    raise ParseError(
                        f"synthetic {e.image_id!r} does not reference an original"
                    )

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.image_id: e for e in self.entries}

    def originals(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.provenance == "orig"]

    def class_counts(self, originals_only: bool = True) -> tuple[int, ...]:
        counts = [0] * len(Severity)
        for e in self.entries:
            if originals_only and e.provenance != "orig":
                continue
            counts[int(e.label)] += 1
        return tuple(counts)

    def ids_per_class(self, originals_only: bool = True) -> dict[Severity, list[str]]:
        out: dict[Severity, list[str]] = {s: [] for s in Severity}
        for e in self.entries:
            if originals_only and e.provenance != "orig":
                continue
            out[e.label].append(e.image_id)
        return out


_MANIFEST_HEADER = ["image_id", "path", "label", "provenance", "source_id", "op"]


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest CSV (header image_id,path,label,provenance,source_id,op)."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty manifest file") from None
        if [h.strip() for h in header] != _MANIFEST_HEADER:
            raise ParseError(f"bad manifest header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(_MANIFEST_HEADER):
                raise ParseError(f"line {lineno}: expected 6 fields, got {len(row)}")
            image_id, img_path, label_s, prov, source_id, op_s = [c.strip() for c in row]
            if not image_id:
                raise ParseError(f"line {lineno}: empty image_id")
            if image_id in seen:
                raise DuplicateId(f"line {lineno}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            try:
                label = Severity(int(label_s))
            except (ValueError, KeyError):
                raise UnknownLabel(f"line {lineno}: label {label_s!r} not in 0..4") from None
            if prov not in ("orig", "syn"):
                raise ParseError(f"line {lineno}: provenance must be orig or syn")
            op = AugmentOp.decode(op_s) if op_s else None
            entries.append(
                ManifestEntry(image_id, img_path, label, prov, source_id or None, op)
            )
    return DatasetManifest(entries)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow(
                [
                    e.image_id,
                    e.path,
                    int(e.label),
                    e.provenance,
                    e.source_id or "",
                    e.op.encode() if e.op else "",
                ]
            )


# ---------------------------------------------------------------------------
# Stratified split

PARTITIONS = ("train", "validation", "test")


@dataclass
class SplitAssignment:
    partition: dict[str, str]  # image_id -> train | validation | test
    seed: int
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def ids(self, part: str) -> list[str]:
        return [i for i, p in self.partition.items() if p == part]

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "partition"])
            for image_id in sorted(self.partition):
                writer.writerow([image_id, self.partition[image_id]])


def load_split(path: str | Path, seed: int = 0) -> SplitAssignment:
    part: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["image_id", "partition"]:
            raise ParseError(f"bad split header {header!r}")
        for row in reader:
            if not row:
                continue
            if row[1] not in PARTITIONS:
                raise ParseError(f"unknown partition {row[1]!r}")
            part[row[0]] = row[1]
    return SplitAssignment(part, seed)


def stratified_split(
    manifest: DatasetManifest,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Per class: seeded shuffle, then floor(f_train*n) train, floor(f_val*n)
    validation, remainder test.  Operates on originals only."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    originals = manifest.originals()
    if not originals:
        raise EmptyManifest("manifest has no original entries to split")

    rng = np.random.default_rng(seed)
    partition: dict[str, str] = {}
    for sev in Severity:
        ids = sorted(e.image_id for e in originals if e.label == sev)
        if not ids:
            continue
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n = len(shuffled)
        n_train = math.floor(fractions[0] * n)
        n_val = math.floor(fractions[1] * n)
        for image_id in shuffled[:n_train]:
            partition[image_id] = "train"
        for image_id in shuffled[n_train : n_train + n_val]:
            partition[image_id] = "validation"
        for image_id in shuffled[n_train + n_val :]:
            partition[image_id] = "test"
    return SplitAssignment(partition, seed, fractions)


# ---------------------------------------------------------------------------
# Augmentation planning and execution

@dataclass(frozen=True)
class PlanEntry:
    source_id: str
    op: AugmentOp
    new_id: str


@dataclass
class AugmentationPlan:
    targets: tuple[int, ...]
    entries: list[PlanEntry]
    seed: int

    def synthetic_counts(self, manifest: DatasetManifest) -> tuple[int, ...]:
        by_id = manifest.by_id()
        counts = [0] * len(Severity)
        for entry in self.entries:
            counts[int(by_id[entry.source_id].label)] += 1
        return tuple(counts)

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source_id", "op", "new_id"])
            for entry in self.entries:
                writer.writerow([entry.source_id, entry.op.encode(), entry.new_id])


def build_augmentation_plan(
    manifest: DatasetManifest,
    targets: tuple[int, ...] | None = None,
    seed: int = 0,
    restrict_ids: set[str] | None = None,
) -> AugmentationPlan:
    """Plan exactly (target - original) synthetic samples per class.

    Sources and each class's allowed operators are cycled round-robin, so no
    source is reused more than one time beyond any other.  Stochastic
    parameters come from one seeded stream; noise entries get derived
    per-entry seeds so execution stays order-independent.

    `restrict_ids` limits eligible sources (e.g. to the train partition)
    while targets keep referring to full class counts.
    """
    targets = tuple(targets) if targets is not None else DEFAULT_TARGETS
    if len(targets) != len(Severity):
        raise ValueError("need one target per severity class")
    counts = manifest.class_counts(originals_only=True)
    for sev in Severity:
        if targets[int(sev)] < counts[int(sev)]:
            raise TargetBelowOriginal(
                f"{sev.display}: target {targets[int(sev)]} < original {counts[int(sev)]}"
            )

    rng = SplitMix64(seed)
    ids_per_class = manifest.ids_per_class(originals_only=True)
    entries: list[PlanEntry] = []
    for sev in Severity:
        need = targets[int(sev)] - counts[int(sev)]
        if need == 0:
            continue
        sources = sorted(ids_per_class[sev])
        if restrict_ids is not None:
            sources = [s for s in sources if s in restrict_ids]
        if not sources:
            raise MissingSource(f"no source images available for {sev.display}")
        ops = CLASS_OPS[sev]
        if not ops:
            raise DatasetError(f"{sev.display} has no augmentation operators")
        usage: dict[str, int] = {}
        for i in range(need):
            source = sources[i % len(sources)]
            kind = ops[i % len(ops)]
            if kind in ("hflip", "vflip"):
                op = AugmentOp(kind)
            elif kind == "noise":
                sigma = rng.uniform_in(*_PARAM_RANGES[kind])
                op = AugmentOp(kind, sigma, seed=rng.next_u64())
            else:
                op = AugmentOp(kind, rng.uniform_in(*_PARAM_RANGES[kind]))
            k = usage.get(source, 0)
            usage[source] = k + 1
            entries.append(PlanEntry(source, op, f"{source}-aug{k}"))
    return AugmentationPlan(targets, entries, seed)


class DirectoryStore:
    """Image store over a directory tree; paths are store-relative."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def read(self, rel_path: str) -> bytes:
        p = self.root / rel_path
        if not p.is_file():
            raise MissingSource(f"image file missing: {rel_path}")
        return p.read_bytes()

    def write(self, rel_path: str, blob: bytes) -> None:
        p = self.root / rel_path
        try:
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(blob)
        except OSError as exc:
            raise WriteFailure(f"cannot write {rel_path}: {exc}") from exc


def execute_plan(
    manifest: DatasetManifest, plan: AugmentationPlan, store: DirectoryStore
) -> DatasetManifest:
    """Generate the planned synthetic images and return the extended manifest.

    Raster flips/rotations run on 8-bit data directly; photometric operators
    run on the normalized plane and are rounded back half-even.  Outputs are
    binary PPM, so identical plans yield byte-identical files.
    """
    by_id = manifest.by_id()
    new_entries = list(manifest.entries)
    for entry in plan.entries:
        src = by_id.get(entry.source_id)
        if src is None:
            raise MissingSource(f"plan references unknown source {entry.source_id!r}")
        img = decode_image(store.read(src.path))
        out = _apply_to_raster(img, entry.op)
        rel_path = f"syn/{entry.new_id}.ppm"
        store.write(rel_path, encode_ppm(out))
        new_entries.append(
            ManifestEntry(entry.new_id, rel_path, src.label, "syn", src.image_id, entry.op)
        )
    return DatasetManifest(new_entries)


def _apply_to_raster(img: RasterImage, op: AugmentOp) -> RasterImage:
    if op.kind == "hflip":
        return hflip(img)
    if op.kind == "vflip":
        return vflip(img)
    if op.kind == "rotate":
        return rotate(img, op.param)
    return denormalize(apply_augment(normalize(img), op))


# ---------------------------------------------------------------------------
# Cross-validation folds

@dataclass
class FoldAssignment:
    k: int
    fold: dict[str, int]  # image_id -> fold index
    seed: int

    def ids(self, fold_index: int) -> list[str]:
        return [i for i, f in self.fold.items() if f == fold_index]

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "fold"])
            for image_id in sorted(self.fold):
                writer.writerow([image_id, self.fold[image_id]])


def assign_folds(
    ids: list[str],
    labels: dict[str, Severity],
    k: int = 5,
    seed: int = 0,
) -> FoldAssignment:
    """Stratified fold assignment: per class, seeded shuffle then round-robin
    deal, so per-class fold sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold: dict[str, int] = {}
    for sev in Severity:
        class_ids = sorted(i for i in ids if labels[i] == sev)
        if not class_ids:
            continue
        order = rng.permutation(len(class_ids))
        for pos, idx in enumerate(order):
            fold[class_ids[idx]] = pos % k
    return FoldAssignment(k, fold, seed)
