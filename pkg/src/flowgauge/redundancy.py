"""Duplicate-cluster detection and dataset redundancy statistics.

Duplicates are defined on raw packet sequences via canonical keys, never on
scaled feature vectors, so a redundancy report is independent of any scaling
configuration. Every flow lands in exactly one of three buckets: unique
(its key is a singleton), same-class duplicate (its cluster carries one
label), or mixed duplicate (its cluster carries two or more labels).
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass

from .errors import UsageError
from .model import CAPTURE_CAP, CanonicalKey, Dataset, KeyVariant, canonical_key


@dataclass(frozen=True)
class DuplicateCluster:
    """A maximal group of >= 2 flows sharing one canonical key."""

    key: CanonicalKey
    member_ids: tuple[str, ...]
    label_counts: dict[str, int]
    seq_len: int

    @property
    def size(self) -> int:
        return len(self.member_ids)

    @property
    def is_mixed(self) -> bool:
        return len(self.label_counts) >= 2

    @property
    def majority_count(self) -> int:
        return max(self.label_counts.values())


@dataclass(frozen=True)
class RedundancyReport:
    """Dataset-level duplicate accounting under one key variant.

    ``label_counts`` covers the whole dataset (unique flows included) so
    that bounds like the minimal false-positive rate can be computed from
    the report alone.
    """

    variant: KeyVariant
    n_total: int
    n_unique: int
    n_same_class_dup: int
    n_mixed_dup: int
    clusters: tuple[DuplicateCluster, ...]
    label_counts: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "variant": str(self.variant),
            "n_total": self.n_total,
            "n_unique": self.n_unique,
            "n_same_class_dup": self.n_same_class_dup,
            "n_mixed_dup": self.n_mixed_dup,
            "n_clusters": len(self.clusters),
            "label_counts": dict(sorted(self.label_counts.items())),
            "clusters": [
                {
                    "seq_len": c.seq_len,
                    "size": c.size,
                    "mixed": c.is_mixed,
                    "label_counts": dict(sorted(c.label_counts.items())),
                    "member_ids": list(c.member_ids),
                }
                for c in self.clusters
            ],
        }


def cluster_duplicates(ds: Dataset, variant: KeyVariant) -> RedundancyReport:
    """Group flows by canonical key and classify the duplicate clusters."""
    if len(ds) == 0:
        raise UsageError("cannot analyze an empty dataset")
    groups: dict[CanonicalKey, list[int]] = defaultdict(list)
    for pos, flow in enumerate(ds.flows):
        groups[canonical_key(flow, variant)].append(pos)

    n_unique = 0
    n_same = 0
    n_mixed = 0
    clusters: list[DuplicateCluster] = []
    for key, members in groups.items():
        if len(members) == 1:
            n_unique += 1
            continue
        label_counts = Counter(ds.flows[p].label for p in members)
        cluster = DuplicateCluster(
            key=key,
            member_ids=tuple(ds.flows[p].id for p in members),
            label_counts=dict(label_counts),
            seq_len=key.seq_len,
        )
        clusters.append(cluster)
        if cluster.is_mixed:
            n_mixed += cluster.size
        else:
            n_same += cluster.size

    return RedundancyReport(
        variant=variant,
        n_total=len(ds),
        n_unique=n_unique,
        n_same_class_dup=n_same,
        n_mixed_dup=n_mixed,
        clusters=tuple(clusters),
        label_counts=dict(Counter(f.label for f in ds.flows)),
    )


def redundancy_fraction(report: RedundancyReport) -> float:
    """Fraction of flows whose packet sequence is unique in the dataset."""
    if report.n_total <= 0:
        raise UsageError("n_total must be positive")
    return report.n_unique / report.n_total


# ---------------------------------------------------------------------------
# length-stratified views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EcdfCurves:
    """Cumulative fractions by sequence length, one curve per population.

    Each curve is a tuple of (seq_len, cumulative fraction) points over
    lengths 1..CAPTURE_CAP and is empty when its population is empty.
    """

    all_samples: tuple[tuple[int, float], ...]
    same_class_dups: tuple[tuple[int, float], ...]
    mixed_dups: tuple[tuple[int, float], ...]


def _ecdf(length_counts: Counter, population: int) -> tuple[tuple[int, float], ...]:
    if population == 0:
        return ()
    points = []
    running = 0
    for length in range(1, CAPTURE_CAP + 1):
        running += length_counts.get(length, 0)
        points.append((length, running / population))
    return tuple(points)


def _dup_length_counts(report: RedundancyReport) -> tuple[Counter, Counter]:
    same: Counter = Counter()
    mixed: Counter = Counter()
    for c in report.clusters:
        (mixed if c.is_mixed else same)[c.seq_len] += c.size
    return same, mixed


def ecdf_by_length(report: RedundancyReport, ds: Dataset) -> EcdfCurves:
    """The three cumulative length distributions: all samples, members of
    same-class clusters, members of mixed clusters."""
    all_counts = Counter(f.seq_len for f in ds.flows)
    same_counts, mixed_counts = _dup_length_counts(report)
    return EcdfCurves(
        all_samples=_ecdf(all_counts, len(ds)),
        same_class_dups=_ecdf(same_counts, report.n_same_class_dup),
        mixed_dups=_ecdf(mixed_counts, report.n_mixed_dup),
    )


@dataclass(frozen=True)
class HeatmapRow:
    """Redundancy ratios within one packet-sequence length stratum."""

    seq_len: int
    sample_fraction: float
    same_class_ratio: float
    mixed_ratio: float


def heatmap_by_length(report: RedundancyReport, ds: Dataset) -> tuple[HeatmapRow, ...]:
    """Per-length sample fractions and within-stratum redundancy ratios;
    lengths absent from the dataset are omitted."""
    all_counts = Counter(f.seq_len for f in ds.flows)
    same_counts, mixed_counts = _dup_length_counts(report)
    rows = []
    for length in sorted(all_counts):
        stratum = all_counts[length]
        rows.append(
            HeatmapRow(
                seq_len=length,
                sample_fraction=stratum / report.n_total,
                same_class_ratio=same_counts.get(length, 0) / stratum,
                mixed_ratio=mixed_counts.get(length, 0) / stratum,
            )
        )
    return tuple(rows)


# ---------------------------------------------------------------------------
# plot-shaped exports
# ---------------------------------------------------------------------------


def ecdf_csv(curve: tuple[tuple[int, float], ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["seq_len", "cum_fraction"])
    for length, fraction in curve:
        writer.writerow([length, f"{fraction:.6f}"])
    return buf.getvalue()


def heatmap_csv(rows: tuple[HeatmapRow, ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["seq_len", "sample_fraction", "same_class_ratio", "mixed_ratio"])
    for row in rows:
        writer.writerow(
            [
                row.seq_len,
                f"{row.sample_fraction:.6f}",
                f"{row.same_class_ratio:.6f}",
                f"{row.mixed_ratio:.6f}",
            ]
        )
    return buf.getvalue()
