"""Exact L1 nearest-neighbor search with top-1 and radius-vote prediction.

The index is a dense float64 matrix scanned exhaustively, so every answer
is exact. The top-1 scan is a tiled, row-unrolled numba kernel with a
coordinate-chunked early exit: a candidate row is dropped once its partial
distance exceeds the current best, which cannot change the result because
per-coordinate contributions are non-negative. Results are bit-identical
for any tile size and thread count because each query's accumulation order
is fixed.

Tie rule everywhere: lower training-row ordinal wins among equal distances;
radius votes break label-frequency ties by nearest voter, then ordinal.
"""

from __future__ import annotations

import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import DataError, UsageError
from .features import FeatureVector, ScalingConfig
from .metrics import EvalResult, weighted_f1

INDEX_MAGIC = b"FGIX1"

_QUERY_TILE = 512
_COORD_CHUNK = 30


@dataclass(frozen=True)
class VotingConfig:
    """Distance radius within which all training samples vote."""

    t_maj: float

    def __post_init__(self) -> None:
        if not self.t_maj >= 0:
            raise UsageError("t_maj must be non-negative")


@dataclass(frozen=True)
class Prediction:
    label: str
    nn_distance: float
    n_voters: int = 1


@dataclass
class NeighborIndex:
    """Immutable training matrix plus parallel labels.

    ``label_table`` holds unique labels in first-appearance order and
    ``label_ids`` maps each row into it; ``labels`` reconstructs the
    per-row label sequence.
    """

    vectors: np.ndarray
    label_ids: np.ndarray
    label_table: tuple[str, ...]
    cfg: ScalingConfig | None = None

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.label_table[i] for i in self.label_ids)

    @classmethod
    def from_matrix(
        cls,
        vectors: np.ndarray,
        labels: Sequence[str],
        cfg: ScalingConfig | None = None,
    ) -> "NeighborIndex":
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise UsageError("training set must be a non-empty 2-D matrix")
        if len(labels) != vectors.shape[0]:
            raise UsageError("labels and vectors must have equal counts")
        table: list[str] = []
        table_pos: dict[str, int] = {}
        ids = np.empty(vectors.shape[0], dtype=np.int64)
        for i, lab in enumerate(labels):
            pos = table_pos.get(lab)
            if pos is None:
                pos = len(table)
                table_pos[lab] = pos
                table.append(lab)
            ids[i] = pos
        return cls(vectors=vectors, label_ids=ids, label_table=tuple(table), cfg=cfg)


def build(
    train: Iterable[tuple[FeatureVector, str]], cfg: ScalingConfig | None = None
) -> NeighborIndex:
    """Build an exact index from (vector, label) pairs."""
    pairs = list(train)
    if not pairs:
        raise UsageError("cannot build an index from an empty training set")
    widths = {len(v) for v, _ in pairs}
    if len(widths) != 1:
        raise UsageError(f"training vectors have mixed widths: {sorted(widths)}")
    matrix = np.vstack([np.asarray(v, dtype=np.float64) for v, _ in pairs])
    return NeighborIndex.from_matrix(matrix, [lab for _, lab in pairs], cfg=cfg)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@numba.njit(parallel=True, cache=True)
def _top1_scan(train, queries_t, tile, chunk, out_idx, out_dist):  # pragma: no cover
    n, w = train.shape
    nq = queries_t.shape[1]
    ntiles = (nq + tile - 1) // tile
    for t in numba.prange(ntiles):
        q0 = t * tile
        m = min(q0 + tile, nq) - q0
        best = np.full(m, np.inf)
        best_i = np.full(m, -1, np.int64)
        acc0 = np.empty(m)
        acc1 = np.empty(m)
        acc2 = np.empty(m)
        acc3 = np.empty(m)
        i = 0
        while i + 3 < n:
            for k in range(m):
                acc0[k] = 0.0
                acc1[k] = 0.0
                acc2[k] = 0.0
                acc3[k] = 0.0
            alive = m
            j0 = 0
            while j0 < w and alive > 0:
                j1 = min(j0 + chunk, w)
                for j in range(j0, j1):
                    v0 = train[i, j]
                    v1 = train[i + 1, j]
                    v2 = train[i + 2, j]
                    v3 = train[i + 3, j]
                    for k in range(m):
                        q = queries_t[j, q0 + k]
                        acc0[k] += abs(v0 - q)
                        acc1[k] += abs(v1 - q)
                        acc2[k] += abs(v2 - q)
                        acc3[k] += abs(v3 - q)
                alive = 0
                for k in range(m):
                    b = best[k]
                    if acc0[k] < b or acc1[k] < b or acc2[k] < b or acc3[k] < b:
                        alive += 1
                j0 = j1
            if j0 == w:
                for k in range(m):
                    if acc0[k] < best[k]:
                        best[k] = acc0[k]
                        best_i[k] = i
                    if acc1[k] < best[k]:
                        best[k] = acc1[k]
                        best_i[k] = i + 1
                    if acc2[k] < best[k]:
                        best[k] = acc2[k]
                        best_i[k] = i + 2
                    if acc3[k] < best[k]:
                        best[k] = acc3[k]
                        best_i[k] = i + 3
            i += 4
        while i < n:
            for k in range(m):
                acc0[k] = 0.0
            for j in range(w):
                v0 = train[i, j]
                for k in range(m):
                    acc0[k] += abs(v0 - queries_t[j, q0 + k])
            for k in range(m):
                if acc0[k] < best[k]:
                    best[k] = acc0[k]
                    best_i[k] = i
            i += 1
        for k in range(m):
            out_idx[q0 + k] = best_i[k]
            out_dist[q0 + k] = best[k]


@numba.njit(parallel=True, cache=True)
def _vote_scan(
    train, label_ids, n_labels, queries, t_maj, out_label, out_dist, out_nv
):  # pragma: no cover
    n, w = train.shape
    for qi in numba.prange(queries.shape[0]):
        counts = np.zeros(n_labels, np.int64)
        mind = np.full(n_labels, np.inf)
        mino = np.full(n_labels, -1, np.int64)
        best = np.inf
        best_i = -1
        n_voters = 0
        for i in range(n):
            lim = t_maj if t_maj > best else best
            acc = 0.0
            abandoned = False
            for j in range(w):
                acc += abs(train[i, j] - queries[qi, j])
                if acc > lim:
                    abandoned = True
                    break
            if abandoned:
                continue
            if acc < best:
                best = acc
                best_i = i
            if acc <= t_maj:
                lab = label_ids[i]
                counts[lab] += 1
                n_voters += 1
                if acc < mind[lab]:
                    mind[lab] = acc
                    mino[lab] = i
        if n_voters == 0:
            out_label[qi] = label_ids[best_i]
            out_dist[qi] = best
            out_nv[qi] = 1
        else:
            top = 0
            for lab in range(n_labels):
                if counts[lab] > top:
                    top = counts[lab]
            pick = -1
            for lab in range(n_labels):
                if counts[lab] != top:
                    continue
                if (
                    pick < 0
                    or mind[lab] < mind[pick]
                    or (mind[lab] == mind[pick] and mino[lab] < mino[pick])
                ):
                    pick = lab
            out_label[qi] = pick
            out_dist[qi] = best
            out_nv[qi] = n_voters


# ---------------------------------------------------------------------------
# thread control
# ---------------------------------------------------------------------------


def configured_threads() -> int | None:
    """Worker cap from the FLOWGAUGE_THREADS environment variable, if set."""
    raw = os.environ.get("FLOWGAUGE_THREADS")
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"FLOWGAUGE_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise UsageError("FLOWGAUGE_THREADS must be >= 1")
    return value


@contextmanager
def _thread_cap(threads: int | None):
    if threads is None:
        threads = configured_threads()
    if threads is None:
        yield
        return
    previous = numba.get_num_threads()
    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    try:
        yield
    finally:
        numba.set_num_threads(previous)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def _as_query_matrix(idx: NeighborIndex, queries) -> np.ndarray:
    q = np.ascontiguousarray(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
    if q.shape[1] != idx.width:
        raise UsageError(f"query width {q.shape[1]} != index width {idx.width}")
    return q


def predict_top1_batch(
    idx: NeighborIndex, queries, threads: int | None = None
) -> list[Prediction]:
    """Exact nearest-neighbor label for each query row, in input order."""
    q = _as_query_matrix(idx, queries)
    if q.shape[0] == 0:
        return []
    qt = np.ascontiguousarray(q.T)
    out_idx = np.empty(q.shape[0], dtype=np.int64)
    out_dist = np.empty(q.shape[0], dtype=np.float64)
    with _thread_cap(threads):
        _top1_scan(idx.vectors, qt, _QUERY_TILE, _COORD_CHUNK, out_idx, out_dist)
    table = idx.label_table
    ids = idx.label_ids
    return [
        Prediction(label=table[ids[out_idx[k]]], nn_distance=float(out_dist[k]))
        for k in range(q.shape[0])
    ]


def predict_top1(idx: NeighborIndex, q: FeatureVector) -> Prediction:
    return predict_top1_batch(idx, [q])[0]


def predict_vote_batch(
    idx: NeighborIndex, queries, voting: VotingConfig, threads: int | None = None
) -> list[Prediction]:
    """Radius-majority prediction; falls back to top-1 on an empty radius."""
    q = _as_query_matrix(idx, queries)
    if q.shape[0] == 0:
        return []
    out_label = np.empty(q.shape[0], dtype=np.int64)
    out_dist = np.empty(q.shape[0], dtype=np.float64)
    out_nv = np.empty(q.shape[0], dtype=np.int64)
    with _thread_cap(threads):
        _vote_scan(
            idx.vectors,
            idx.label_ids,
            len(idx.label_table),
            q,
            float(voting.t_maj),
            out_label,
            out_dist,
            out_nv,
        )
    table = idx.label_table
    return [
        Prediction(
            label=table[out_label[k]],
            nn_distance=float(out_dist[k]),
            n_voters=int(out_nv[k]),
        )
        for k in range(q.shape[0])
    ]


def predict_vote(idx: NeighborIndex, q: FeatureVector, voting: VotingConfig) -> Prediction:
    return predict_vote_batch(idx, [q], voting)[0]


@dataclass
class EvalOutcome:
    """Per-sample predictions in input order plus aggregate metrics."""

    predictions: list[Prediction]
    result: EvalResult

    @property
    def accuracy(self) -> float:
        return self.result.accuracy


def evaluate(
    idx: NeighborIndex,
    test: Iterable[tuple[FeatureVector, str]],
    voting: VotingConfig | None = None,
    threads: int | None = None,
) -> EvalOutcome:
    """Predict every test sample (top-1, or radius vote when ``voting`` is
    given) and attach accuracy and weighted F1."""
    pairs = list(test)
    truth = [lab for _, lab in pairs]
    if not pairs:
        raise UsageError("empty test set")
    matrix = np.vstack([np.asarray(v, dtype=np.float64) for v, _ in pairs])
    if voting is None:
        preds = predict_top1_batch(idx, matrix, threads=threads)
    else:
        preds = predict_vote_batch(idx, matrix, voting, threads=threads)
    result = weighted_f1([p.label for p in preds], truth)
    return EvalOutcome(predictions=preds, result=result)


# ---------------------------------------------------------------------------
# serialization (FGIX1)
# ---------------------------------------------------------------------------


def save_index(idx: NeighborIndex, path: str | Path) -> None:
    """Write the index as a single binary artifact.

    Layout, all little-endian: magic ``FGIX1``, u32 width, u64 row count,
    u32 label-table size then (u32 byte length + UTF-8 bytes) per unique
    label, u32 label index per row, then the raw float64 row-major matrix.
    The build-time scaling config is not part of the artifact.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<IQ", idx.width, idx.n_rows))
        fh.write(struct.pack("<I", len(idx.label_table)))
        for label in idx.label_table:
            raw = label.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(idx.label_ids.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(idx.vectors, dtype="<f8").tobytes())


def load_index(path: str | Path) -> NeighborIndex:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(INDEX_MAGIC))
        if magic != INDEX_MAGIC:
            raise DataError(f"{path}: not a FGIX1 index file")
        width, n_rows = struct.unpack("<IQ", fh.read(12))
        (n_labels,) = struct.unpack("<I", fh.read(4))
        table = []
        for _ in range(n_labels):
            (length,) = struct.unpack("<I", fh.read(4))
            table.append(fh.read(length).decode("utf-8"))
        ids = np.frombuffer(fh.read(4 * n_rows), dtype="<u4").astype(np.int64)
        raw = fh.read(8 * n_rows * width)
        if len(raw) != 8 * n_rows * width:
            raise DataError(f"{path}: truncated index file")
        vectors = np.frombuffer(raw, dtype="<f8").reshape(n_rows, width).copy()
    return NeighborIndex(
        vectors=vectors, label_ids=ids, label_table=tuple(table), cfg=None
    )
