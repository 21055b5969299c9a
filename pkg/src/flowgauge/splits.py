"""Deterministic train/validation/test partitioning strategies.

Four strategies: uniform random, chronological (training strictly precedes
testing), disjoint entity keys (no endpoint key spans two partitions), and
fixed assignments read from a file. Plans are value objects; the same
dataset, parameters, and seed always reproduce the identical plan.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, UsageError
from .model import Dataset, FlowRecord


class Partition(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

    def __str__(self) -> str:
        return self.value


class SplitStrategy(Enum):
    RANDOM = "random"
    TIME = "time"
    DISJOINT_KEY = "disjoint_key"
    FIXED = "fixed"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SplitPlan:
    strategy: SplitStrategy
    seed: int
    assignment: dict[str, Partition]
    params: dict = field(default_factory=dict)
    excluded: tuple[str, ...] = ()

    def ids(self, part: Partition) -> list[str]:
        return [fid for fid, p in self.assignment.items() if p is part]

    def counts(self) -> dict[Partition, int]:
        out = {p: 0 for p in Partition}
        for p in self.assignment.values():
            out[p] += 1
        return out


@dataclass(frozen=True)
class RepeatedSplits:
    plans: tuple[SplitPlan, ...]

    @property
    def n_reps(self) -> int:
        return len(self.plans)


def _check_fracs(fracs: Sequence[float]) -> tuple[float, float, float]:
    if len(fracs) != 3:
        raise UsageError("expected three fractions (train, val, test)")
    train, val, test = (float(f) for f in fracs)
    for f in (train, val, test):
        if not 0.0 <= f <= 1.0:
            raise UsageError(f"fraction {f} outside [0, 1]")
    if abs(train + val + test - 1.0) > 1e-9:
        raise UsageError(f"fractions must sum to 1, got {train + val + test}")
    return train, val, test


def random_split(
    ds: Dataset, fracs: Sequence[float], seed: int
) -> SplitPlan:
    """Uniform shuffle keyed by ``seed``; sizes are floored per fraction and
    the remainder goes to TRAIN."""
    train_f, val_f, test_f = _check_fracs(fracs)
    n = len(ds)
    n_val = math.floor(n * val_f)
    n_test = math.floor(n * test_f)
    n_train = n - n_val - n_test  # flooring remainder goes to TRAIN
    order = np.random.default_rng(seed).permutation(n)
    part_of = np.empty(n, dtype=np.int8)
    part_of[order[:n_train]] = 0
    part_of[order[n_train : n_train + n_val]] = 1
    part_of[order[n_train + n_val :]] = 2
    palette = (Partition.TRAIN, Partition.VAL, Partition.TEST)
    assignment = {f.id: palette[part_of[i]] for i, f in enumerate(ds.flows)}
    return SplitPlan(
        strategy=SplitStrategy.RANDOM,
        seed=seed,
        assignment=assignment,
        params={"fracs": [train_f, val_f, test_f]},
    )


def time_split(
    ds: Dataset,
    boundaries: tuple[int, int, int],
    val_frac: float = 0.0,
) -> SplitPlan:
    """Chronological split: TRAIN is everything before ``t_train_end``, TEST
    is [t_test_start, t_test_end). A requested validation fraction is carved
    from the latest-timestamped tail of the training window, so validation
    stays causally before testing. Out-of-window flows are excluded."""
    t_train_end, t_test_start, t_test_end = boundaries
    if not (t_train_end <= t_test_start < t_test_end):
        raise UsageError(
            f"boundaries must satisfy t_train_end <= t_test_start < t_test_end, "
            f"got {boundaries}"
        )
    if not 0.0 <= val_frac < 1.0:
        raise UsageError("val_frac must be in [0, 1)")

    train_pos = [i for i, f in enumerate(ds.flows) if f.ts_ms < t_train_end]
    test_pos = [
        i for i, f in enumerate(ds.flows) if t_test_start <= f.ts_ms < t_test_end
    ]
    covered = set(train_pos) | set(test_pos)
    excluded = tuple(f.id for i, f in enumerate(ds.flows) if i not in covered)

    n_val = math.floor(len(train_pos) * val_frac)
    val_pos: set[int] = set()
    if n_val > 0:
        by_ts = sorted(train_pos, key=lambda i: (ds.flows[i].ts_ms, i))
        val_pos = set(by_ts[len(by_ts) - n_val :])

    test_set = set(test_pos)
    assignment: dict[str, Partition] = {}
    for i in sorted(covered):
        flow = ds.flows[i]
        if i in val_pos:
            assignment[flow.id] = Partition.VAL
        elif i in test_set:
            assignment[flow.id] = Partition.TEST
        else:
            assignment[flow.id] = Partition.TRAIN
    return SplitPlan(
        strategy=SplitStrategy.TIME,
        seed=0,
        assignment=assignment,
        params={
            "boundaries": [t_train_end, t_test_start, t_test_end],
            "val_frac": val_frac,
            "n_excluded": len(excluded),
        },
        excluded=excluded,
    )


def disjoint_key_split(
    ds: Dataset,
    key_of: Callable[[FlowRecord], str],
    fracs: Sequence[float],
    seed: int,
) -> SplitPlan:
    """Shuffle distinct entity keys and deal them to partitions until each
    partition's flow-count target is first reached; the final non-empty
    partition absorbs the remaining keys. No key ever spans partitions, so
    realized fractions can deviate from the request (they are recorded in
    the plan's params)."""
    train_f, val_f, test_f = _check_fracs(fracs)
    n = len(ds)
    flows_per_key: dict[str, list[str]] = defaultdict(list)
    for f in ds.flows:
        flows_per_key[key_of(f)].append(f.id)
    keys = list(flows_per_key)
    active = [
        (part, frac)
        for part, frac in (
            (Partition.TRAIN, train_f),
            (Partition.VAL, val_f),
            (Partition.TEST, test_f),
        )
        if frac > 0
    ]
    if len(keys) < len(active):
        raise UsageError(
            f"{len(keys)} distinct keys cannot fill {len(active)} non-empty partitions"
        )

    order = np.random.default_rng(seed).permutation(len(keys))
    shuffled = [keys[i] for i in order]
    key_part: dict[str, Partition] = {}
    cursor = 0
    for slot, (part, frac) in enumerate(active):
        if slot == len(active) - 1:
            for key in shuffled[cursor:]:
                key_part[key] = part
            cursor = len(shuffled)
            break
        target = frac * n
        taken = 0
        # leave enough keys for the remaining partitions
        reserve = len(active) - slot - 1
        while cursor < len(shuffled) - reserve and taken < target:
            key = shuffled[cursor]
            key_part[key] = part
            taken += len(flows_per_key[key])
            cursor += 1

    assignment = {f.id: key_part[key_of(f)] for f in ds.flows}
    counts = {p: 0 for p in Partition}
    for p in assignment.values():
        counts[p] += 1
    return SplitPlan(
        strategy=SplitStrategy.DISJOINT_KEY,
        seed=seed,
        assignment=assignment,
        params={
            "fracs": [train_f, val_f, test_f],
            "realized_fracs": [counts[p] / n for p in Partition],
            "n_keys": len(keys),
        },
    )


_PARTITION_BY_NAME = {p.value: p for p in Partition}


def fixed_split(ds: Dataset, assignment_file: str | Path) -> SplitPlan:
    """Mirror a prepared assignment file (``flow_id,partition`` CSV) that
    must cover every flow id exactly once."""
    path = Path(assignment_file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    file_assignment = _parse_plan_csv(text, source=str(path))

    known = {f.id for f in ds.flows}
    for fid in file_assignment:
        if fid not in known:
            raise DataError(f"{path}: unknown flow id {fid!r}")
    for fid in known:
        if fid not in file_assignment:
            raise DataError(f"{path}: missing flow id {fid!r}")
    assignment = {f.id: file_assignment[f.id] for f in ds.flows}
    return SplitPlan(
        strategy=SplitStrategy.FIXED,
        seed=0,
        assignment=assignment,
        params={"file": str(path)},
    )


def repeat(
    split_ctor: Callable[[int], SplitPlan], n_reps: int, base_seed: int
) -> RepeatedSplits:
    """Build ``n_reps`` plans with seeds ``base_seed .. base_seed+n_reps-1``."""
    if n_reps < 1:
        raise UsageError("n_reps must be >= 1")
    return RepeatedSplits(
        plans=tuple(split_ctor(base_seed + k) for k in range(n_reps))
    )


# ---------------------------------------------------------------------------
# plan serialization: flow_id,partition CSV
# ---------------------------------------------------------------------------


def plan_csv(plan: SplitPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["flow_id", "partition"])
    for fid, part in plan.assignment.items():
        writer.writerow([fid, part.value])
    return buf.getvalue()


def write_plan_csv(plan: SplitPlan, path: str | Path) -> None:
    Path(path).write_text(plan_csv(plan), encoding="utf-8")


def _parse_plan_csv(text: str, source: str) -> dict[str, Partition]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty assignment file")
    if header != ["flow_id", "partition"]:
        raise DataError(f"{source}: expected header flow_id,partition")
    assignment: dict[str, Partition] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"{source}: malformed row {row!r}")
        fid, part_name = row
        if fid in assignment:
            raise DataError(f"{source}: duplicated flow id {fid!r}")
        part = _PARTITION_BY_NAME.get(part_name)
        if part is None:
            raise DataError(f"{source}: unknown partition {part_name!r} for {fid!r}")
        assignment[fid] = part
    return assignment


def read_plan_csv(path: str | Path, strategy: SplitStrategy = SplitStrategy.FIXED) -> SplitPlan:
    """Load a serialized plan; used by the CLI to evaluate saved splits."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    assignment = _parse_plan_csv(text, source=str(path))
    return SplitPlan(strategy=strategy, seed=0, assignment=assignment, params={"file": str(path)})
