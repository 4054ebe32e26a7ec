"""
Balanced, stratified, reproducible datasets and mini-batches
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError, ManifestError
from .text import NEGATIVE, POSITIVE

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test", "unassigned")
LABELS = (POSITIVE, NEGATIVE)
MANIFEST_COLUMNS = ("id", "image_path", "text_path", "concept", "label", "split")

PathLike = Union[str, Path]


@dataclass
class Sample:
    """One coin record for one concept"""
    id: str
    image_path: str
    text_path: str
    concept: str
    label: str
    split: str = "unassigned"
    extra: Dict[str, str] = field(default_factory=dict)

    @property
    def target(self) -> int:
        return 1 if self.label == POSITIVE else 0

    def with_split(self, split: str) -> "Sample":
        return Sample(self.id, self.image_path, self.text_path, self.concept,
                      self.label, split, dict(self.extra))


@dataclass
class SplitConfig:
    ratios: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    balance: bool = True

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if len(self.ratios) != 3 or min(self.ratios) <= 0:
            raise ConfigError(f"split ratios must be three positive fractions, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {sum(self.ratios)}")


@dataclass
class Manifest:
    samples: List[Sample] = field(default_factory=list)
    extra_columns: List[str] = field(default_factory=list)
    base_dir: Optional[Path] = None

    def __post_init__(self):
        seen = set()
        for sample in self.samples:
            if sample.id in seen:
                raise ManifestError(f"duplicate sample id '{sample.id}'")
            seen.add(sample.id)

    def by_split(self, split: str) -> List[Sample]:
        return [s for s in self.samples if s.split == split]

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    @property
    def concept(self) -> str:
        concepts = sorted({s.concept for s in self.samples})
        return concepts[0] if len(concepts) == 1 else ",".join(concepts)


def read_manifest(path: PathLike) -> Manifest:
    """Parse a manifest TSV; relative paths resolve against its directory"""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}")
    with handle:
        reader = csv.reader(handle, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            raise ManifestError(f"{path}: empty manifest, header row is mandatory", line=1)
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"{path}: header lacks column(s) {', '.join(missing)}", line=1)
        index = {name: header.index(name) for name in MANIFEST_COLUMNS}
        extra_columns = [c for c in header if c not in MANIFEST_COLUMNS]

        samples = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ManifestError(
                    f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno)
            values = {name: row[i] for name, i in index.items()}
            if values["label"] not in LABELS:
                raise ManifestError(f"{path}: label must be pos or neg", line=lineno)
            if values["split"] not in SPLITS:
                raise ManifestError(f"{path}: unknown split '{values['split']}'", line=lineno)
            if not values["id"] or not values["image_path"] or not values["text_path"]:
                raise ManifestError(f"{path}: id and paths must be non-empty", line=lineno)
            if values["id"] in seen:
                raise ManifestError(f"{path}: duplicate id '{values['id']}'", line=lineno)
            seen.add(values["id"])
            extra = {c: row[header.index(c)] for c in extra_columns}
            samples.append(Sample(extra=extra, **values))
    return Manifest(samples=samples, extra_columns=extra_columns, base_dir=path.parent)


def write_manifest(path: PathLike, manifest: Manifest):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", quoting=csv.QUOTE_NONE,
                            lineterminator="\n")
        writer.writerow(list(MANIFEST_COLUMNS) + manifest.extra_columns)
        for s in manifest.samples:
            writer.writerow([s.id, s.image_path, s.text_path, s.concept, s.label, s.split]
                            + [s.extra.get(c, "") for c in manifest.extra_columns])


def _by_class(samples: Sequence[Sample]) -> Tuple[List[Sample], List[Sample]]:
    positives = sorted((s for s in samples if s.label == POSITIVE), key=lambda s: s.id)
    negatives = sorted((s for s in samples if s.label == NEGATIVE), key=lambda s: s.id)
    return positives, negatives


def _concept_of(samples: Sequence[Sample]) -> str:
    return samples[0].concept if samples else "?"


def stratify_balance(samples: Sequence[Sample], seed: int) -> List[Sample]:
    """Undersample the majority class to the minority count"""
    positives, negatives = _by_class(samples)
    if not positives or not negatives:
        empty = "positive" if not positives else "negative"
        raise DataError(f"concept '{_concept_of(samples)}' has no {empty} samples")
    minority, majority = sorted((positives, negatives), key=len)
    if len(minority) == len(majority):
        return list(samples)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(len(majority))[:len(minority)]
    keep = {s.id for s in minority} | {majority[i].id for i in chosen}
    logger.debug("Balanced '%s': kept %d of %d majority samples",
                  _concept_of(samples), len(minority), len(majority))
    return [s for s in samples if s.id in keep]


def split_counts(n_total: int, ratios: Sequence[float]) -> List[int]:
    """Floor of ratio * n per split, remainder to train"""
    counts = [int(math.floor(r * n_total + 1e-9)) for r in ratios]
    counts[0] += n_total - sum(counts)
    return counts


def _apportion(class_sizes: List[int], total: int, rotate: int) -> List[int]:
    """Share one split's total across classes by cumulative flooring"""
    n = sum(class_sizes)
    order = [(i + rotate) % len(class_sizes) for i in range(len(class_sizes))]
    shares = [0] * len(class_sizes)
    cumulative = 0
    assigned = 0
    for i in order:
        cumulative += class_sizes[i]
        upto = (total * cumulative) // n if n else 0
        shares[i] = upto - assigned
        assigned = upto
    return shares


def split(samples: Sequence[Sample], config: SplitConfig) -> List[Sample]:
    """Shuffle and assign train / val / test per class

    Split totals are floor(ratio * n) with the remainder going to train; each
    split's total is shared across classes so class counts stay within one
    sample of parity.
    """
    pool = stratify_balance(samples, config.seed) if config.balance else list(samples)
    classes = list(_by_class(pool))
    concept = _concept_of(pool)
    for label, members in zip((POSITIVE, NEGATIVE), classes):
        if not members:
            raise DataError(f"concept '{concept}': no '{label}' samples, every split "
                            "would be empty for that class")
    sizes = [len(c) for c in classes]
    totals = split_counts(len(pool), config.ratios)

    per_class = [[0, 0, 0] for _ in classes]
    for s_index in (1, 2):
        shares = _apportion(sizes, totals[s_index], rotate=s_index - 1)
        for c_index, share in enumerate(shares):
            per_class[c_index][s_index] = share
    for c_index, size in enumerate(sizes):
        per_class[c_index][0] = size - per_class[c_index][1] - per_class[c_index][2]

    assignment: Dict[str, str] = {}
    for c_index, members in enumerate(classes):
        counts = per_class[c_index]
        if min(counts) < 1:
            raise DataError(
                f"concept '{concept}': a split would be empty for one class "
                f"(train/val/test = {counts[0]}/{counts[1]}/{counts[2]})")
        rng = np.random.default_rng([config.seed, c_index])
        order = rng.permutation(len(members))
        names = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
        for position, member_index in enumerate(order):
            assignment[members[member_index].id] = names[position]

    return [s.with_split(assignment[s.id]) for s in pool]


def batches(samples: Sequence[Sample], batch_size: int, seed: int,
            epoch: int) -> List[List[Sample]]:
    """Per-epoch reshuffle keyed on (seed, epoch); the last batch may be short"""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not samples:
        raise DataError("cannot batch an empty split")
    ordered = sorted(samples, key=lambda s: s.id)
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]
