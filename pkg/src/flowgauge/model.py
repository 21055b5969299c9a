"""Core domain types: labeled flows, datasets, and canonical sequence keys.

A flow is summarized by three parallel per-packet sequences (payload sizes,
directions, inter-packet times) plus endpoints, a start timestamp, and a
class label. Two flows are considered duplicates when their sequences are
element-wise identical under a chosen key variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

from .errors import UsageError

# Feature horizon: keys and feature vectors never look past this many packets.
CAPTURE_CAP = 30


class KeyVariant(Enum):
    """Which sequence components participate in duplicate detection."""

    SIZES_DIRS = "sizes_dirs"
    SIZES_DIRS_IPTS = "sizes_dirs_ipts"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FlowRecord:
    """One labeled flow: per-packet metadata sequences plus identity fields.

    Invariants (enforced at construction):
      * sizes, dirs, ipts have equal length, between 1 and CAPTURE_CAP
      * every direction is +1 or -1
      * every inter-packet time is >= 0 ms and ipts[0] == 0
    """

    id: str
    label: str
    ts_ms: int
    src_key: str
    dst_key: str
    sizes: tuple[int, ...]
    dirs: tuple[int, ...]
    ipts: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.sizes)
        if not (len(self.dirs) == len(self.ipts) == n):
            raise UsageError(f"flow {self.id!r}: ragged sequences")
        if n < 1:
            raise UsageError(f"flow {self.id!r}: empty packet sequence")
        if n > CAPTURE_CAP:
            raise UsageError(
                f"flow {self.id!r}: {n} packets exceeds capture cap {CAPTURE_CAP}"
            )
        if any(d not in (1, -1) for d in self.dirs):
            raise UsageError(f"flow {self.id!r}: directions must be +1 or -1")
        if any(t < 0 for t in self.ipts):
            raise UsageError(f"flow {self.id!r}: negative inter-packet time")
        if self.ipts[0] != 0:
            raise UsageError(f"flow {self.id!r}: ipts[0] must be 0")
        if self.ts_ms < 0:
            raise UsageError(f"flow {self.id!r}: negative timestamp")
        if any(s < 0 for s in self.sizes):
            raise UsageError(f"flow {self.id!r}: negative packet size")

    @property
    def seq_len(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class CanonicalKey:
    """Hashable identity of a flow's packet sequences under one variant.

    Two flows map to equal keys iff the covered sequences are element-wise
    identical (IPTs compared exactly at their stored millisecond value).
    """

    variant: KeyVariant
    payload: tuple

    @property
    def seq_len(self) -> int:
        return len(self.payload[0])


def canonical_key(flow: FlowRecord, variant: KeyVariant) -> CanonicalKey:
    """Build the duplicate-detection key for a flow.

    Only the first CAPTURE_CAP packets participate; ingest already enforces
    the cap, so the slice is a guard rather than a truncation in practice.
    """
    sizes = flow.sizes[:CAPTURE_CAP]
    dirs = flow.dirs[:CAPTURE_CAP]
    if variant is KeyVariant.SIZES_DIRS:
        return CanonicalKey(variant, (sizes, dirs))
    if variant is KeyVariant.SIZES_DIRS_IPTS:
        return CanonicalKey(variant, (sizes, dirs, flow.ipts[:CAPTURE_CAP]))
    raise UsageError(f"unknown key variant: {variant!r}")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of flows with unique ids."""

    name: str
    flows: tuple[FlowRecord, ...]
    label_set: frozenset[str] = field(default=frozenset())

    @classmethod
    def from_flows(cls, name: str, flows: Sequence[FlowRecord]) -> "Dataset":
        flows = tuple(flows)
        seen: set[str] = set()
        for f in flows:
            if f.id in seen:
                raise UsageError(f"duplicate flow id {f.id!r} in dataset {name!r}")
            seen.add(f.id)
        return cls(name=name, flows=flows, label_set=frozenset(f.label for f in flows))

    def __len__(self) -> int:
        return len(self.flows)

    def __iter__(self) -> Iterator[FlowRecord]:
        return iter(self.flows)

    def by_id(self) -> dict[str, FlowRecord]:
        return {f.id: f for f in self.flows}
