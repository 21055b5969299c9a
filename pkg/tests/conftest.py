"""Shared builders for synthetic flows, datasets, and vector corpora."""

from __future__ import annotations

import numpy as np

from flowgauge import Dataset, FlowRecord


def make_flow(
    fid: str,
    label: str = "A",
    sizes=(100, 200),
    dirs=None,
    ipts=None,
    ts_ms: int = 0,
    src_key: str = "s0",
    dst_key: str = "d0",
) -> FlowRecord:
    sizes = tuple(sizes)
    if dirs is None:
        dirs = tuple(1 if i % 2 == 0 else -1 for i in range(len(sizes)))
    if ipts is None:
        ipts = (0.0,) + tuple(float(i) for i in range(1, len(sizes)))
    return FlowRecord(
        id=fid,
        label=label,
        ts_ms=ts_ms,
        src_key=src_key,
        dst_key=dst_key,
        sizes=sizes,
        dirs=tuple(dirs),
        ipts=tuple(ipts),
    )


def random_flow(rng: np.random.Generator, fid: str, label: str, **kw) -> FlowRecord:
    n = int(rng.integers(1, 31))
    sizes = tuple(int(v) for v in rng.integers(0, 1501, n))
    dirs = tuple(int(v) for v in rng.choice([1, -1], n))
    # dyadic millisecond grid keeps float comparisons exact
    ipts = (0.0,) + tuple(float(v) / 8.0 for v in rng.integers(0, 8001, n - 1))
    return make_flow(fid, label, sizes, dirs, ipts, **kw)


def random_dataset(
    rng: np.random.Generator,
    n_flows: int,
    labels=("A", "B", "C"),
    dup_fraction: float = 0.4,
    mixed_fraction: float = 0.3,
    name: str = "synthetic",
) -> Dataset:
    """Random flows with planted duplicate clusters.

    ``dup_fraction`` of the flows are copies of earlier flows; of those,
    ``mixed_fraction`` get a fresh random label (possibly creating a mixed
    cluster), the rest inherit the original's label.
    """
    flows: list[FlowRecord] = []
    for i in range(n_flows):
        if flows and rng.random() < dup_fraction:
            src = flows[int(rng.integers(0, len(flows)))]
            label = (
                str(rng.choice(labels)) if rng.random() < mixed_fraction else src.label
            )
            flows.append(
                make_flow(
                    f"f{i}",
                    label,
                    src.sizes,
                    src.dirs,
                    src.ipts,
                    ts_ms=int(rng.integers(0, 10_000)),
                    src_key=f"h{int(rng.integers(0, 50))}",
                    dst_key=f"r{int(rng.integers(0, 20))}",
                )
            )
        else:
            flows.append(
                random_flow(
                    rng,
                    f"f{i}",
                    str(rng.choice(labels)),
                    ts_ms=int(rng.integers(0, 10_000)),
                    src_key=f"h{int(rng.integers(0, 50))}",
                    dst_key=f"r{int(rng.integers(0, 20))}",
                )
            )
    return Dataset.from_flows(name, flows)


def dyadic_matrix(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    """Random vectors on a 1/8 grid: every L1 distance is exact in float64,
    so any summation order gives bit-identical results."""
    return rng.integers(0, 12_001, size=(n, width)).astype(np.float64) / 8.0
