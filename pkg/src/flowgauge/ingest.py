"""Loading, validating, and writing flow datasets in the flowrec-v1 formats.

flowrec-v1 CSV: header ``id,label,ts_ms,src_key,dst_key,sizes,dirs,ipts``,
sequence cells ``|``-separated, sizes and dirs integers, ipts decimals with
up to 3 fractional digits, UTF-8, LF line endings. The JSONL variant mirrors
the same fields with arrays. Files ending in ``.gz`` are gzip-compressed.

Structurally broken rows are rejected, never repaired; the one exception is
a nonzero first inter-packet time, which is normalized to 0 and counted.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable

from .errors import DataError, UsageError
from .model import CAPTURE_CAP, Dataset, FlowRecord

CSV_HEADER = ["id", "label", "ts_ms", "src_key", "dst_key", "sizes", "dirs", "ipts"]


class FileFormat(Enum):
    CSV = "csv"
    JSONL = "jsonl"

    def __str__(self) -> str:
        return self.value


@dataclass
class IngestReport:
    """Counts describing one load (or one dataset summary).

    ``rejection_reasons`` covers rejected rows only; rows whose first
    inter-packet time was normalized to 0 are accepted and tallied in
    ``n_ipt0_fixed``.
    """

    n_rows_read: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    rejection_reasons: dict[str, int] = field(default_factory=dict)
    label_histogram: dict[str, int] = field(default_factory=dict)
    length_histogram: dict[int, int] = field(default_factory=dict)
    n_ipt0_fixed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "n_rows_read": self.n_rows_read,
            "n_accepted": self.n_accepted,
            "n_rejected": self.n_rejected,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "label_histogram": dict(sorted(self.label_histogram.items())),
            "length_histogram": {
                str(k): v for k, v in sorted(self.length_histogram.items())
            },
            "n_ipt0_fixed": self.n_ipt0_fixed,
        }


def infer_format(path: str | Path) -> FileFormat:
    name = Path(path).name
    if name.endswith(".gz"):
        name = name[: -len(".gz")]
    suffix = Path(name).suffix.lower()
    if suffix == ".csv":
        return FileFormat.CSV
    if suffix in (".jsonl", ".ndjson", ".json"):
        return FileFormat.JSONL
    raise UsageError(f"cannot infer format from filename {Path(path).name!r}")


def dataset_name_from_path(path: str | Path) -> str:
    name = Path(path).name
    if name.endswith(".gz"):
        name = name[: -len(".gz")]
    return Path(name).stem


def _open_text(path: Path, mode: str) -> IO[str]:
    if path.name.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


class _RowRejected(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _parse_int_seq(cell: str) -> list[int]:
    return [int(tok) for tok in cell.split("|")] if cell else []


def _parse_float_seq(cell: str) -> list[float]:
    return [float(tok) for tok in cell.split("|")] if cell else []


def _validate_row(
    row_id: str,
    label: str,
    ts_ms: int,
    src_key: str,
    dst_key: str,
    sizes: list[int],
    dirs: list[int],
    ipts: list[float],
    seen_ids: set[str],
    report: IngestReport,
) -> FlowRecord:
    if not (len(sizes) == len(dirs) == len(ipts)):
        raise _RowRejected("ragged")
    if len(sizes) == 0:
        raise _RowRejected("empty_seq")
    # Capture cap: keep the first CAPTURE_CAP packets of over-long rows.
    if len(sizes) > CAPTURE_CAP:
        sizes = sizes[:CAPTURE_CAP]
        dirs = dirs[:CAPTURE_CAP]
        ipts = ipts[:CAPTURE_CAP]
    if any(d not in (1, -1) for d in dirs):
        raise _RowRejected("bad_dir")
    if any(t < 0 for t in ipts):
        raise _RowRejected("bad_ipt")
    if any(s < 0 for s in sizes):
        raise _RowRejected("bad_size")
    if ts_ms < 0:
        raise _RowRejected("bad_ts")
    if not row_id:
        raise _RowRejected("missing_id")
    if row_id in seen_ids:
        raise _RowRejected("duplicate_id")
    if ipts[0] != 0:
        ipts = [0.0] + ipts[1:]
        report.n_ipt0_fixed += 1
    return FlowRecord(
        id=row_id,
        label=label,
        ts_ms=ts_ms,
        src_key=src_key,
        dst_key=dst_key,
        sizes=tuple(sizes),
        dirs=tuple(dirs),
        ipts=tuple(float(t) for t in ipts),
    )


def _iter_csv_rows(fh: IO[str]) -> Iterable[tuple]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: missing flowrec-v1 header")
    if header != CSV_HEADER:
        raise DataError(
            f"bad flowrec-v1 header: expected {','.join(CSV_HEADER)}, "
            f"got {','.join(header)}"
        )
    for cells in reader:
        yield tuple(cells)


def load_dataset(
    path: str | Path, fmt: FileFormat | None = None
) -> tuple[Dataset, IngestReport]:
    """Load a flowrec-v1 file, returning the dataset and an ingest report.

    ``fmt`` defaults to inference from the filename. Unreadable files and
    broken headers are fatal (DataError); broken rows are rejected and
    tallied under a reason code.
    """
    path = Path(path)
    if fmt is None:
        fmt = infer_format(path)
    report = IngestReport()
    rejections: Counter[str] = Counter()
    flows: list[FlowRecord] = []
    seen_ids: set[str] = set()

    try:
        fh = _open_text(path, "r")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    with fh:
        if fmt is FileFormat.CSV:
            rows = _iter_csv_rows(fh)
        else:
            rows = _iter_jsonl_rows(fh)
        for raw in rows:
            report.n_rows_read += 1
            try:
                flow = _parse_row(raw, fmt, seen_ids, report)
            except _RowRejected as rej:
                report.n_rejected += 1
                rejections[rej.reason] += 1
                continue
            seen_ids.add(flow.id)
            flows.append(flow)
            report.n_accepted += 1

    report.rejection_reasons = dict(rejections)
    ds = Dataset.from_flows(dataset_name_from_path(path), flows)
    report.label_histogram = dict(Counter(f.label for f in flows))
    report.length_histogram = dict(Counter(f.seq_len for f in flows))
    return ds, report


def _parse_row(raw, fmt: FileFormat, seen_ids: set[str], report: IngestReport) -> FlowRecord:
    if fmt is FileFormat.CSV:
        if len(raw) != len(CSV_HEADER):
            raise _RowRejected("malformed")
        row_id, label, ts_cell, src_key, dst_key, sizes_cell, dirs_cell, ipts_cell = raw
        try:
            ts_ms = int(ts_cell)
            sizes = _parse_int_seq(sizes_cell)
            dirs = _parse_int_seq(dirs_cell)
            ipts = _parse_float_seq(ipts_cell)
        except ValueError:
            raise _RowRejected("malformed")
    else:
        obj = raw
        try:
            row_id = str(obj["id"])
            label = str(obj["label"])
            ts_ms = int(obj["ts_ms"])
            src_key = str(obj["src_key"])
            dst_key = str(obj["dst_key"])
            sizes = [int(v) for v in obj["sizes"]]
            dirs = [int(v) for v in obj["dirs"]]
            ipts = [float(v) for v in obj["ipts"]]
        except (KeyError, TypeError, ValueError):
            raise _RowRejected("malformed")
    return _validate_row(
        row_id, label, ts_ms, src_key, dst_key, sizes, dirs, ipts, seen_ids, report
    )


def _iter_jsonl_rows(fh: IO[str]) -> Iterable[dict]:
    for line in fh:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            yield {}  # surfaces as "malformed" in _parse_row
            continue
        yield obj if isinstance(obj, dict) else {}


def _format_ipt(value: float) -> str:
    """Render an inter-packet time with at most 3 fractional digits."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text else "0"


def save_dataset(ds: Dataset, path: str | Path, fmt: FileFormat | None = None) -> None:
    """Write a dataset in flowrec-v1; gzip when the filename ends in .gz.

    IPTs are rendered with at most 3 fractional digits, so values beyond
    millisecond-microsecond precision are rounded by the format itself.
    """
    path = Path(path)
    if fmt is None:
        fmt = infer_format(path)
    with _open_text(path, "w") as fh:
        if fmt is FileFormat.CSV:
            _write_csv(ds, fh)
        else:
            _write_jsonl(ds, fh)


def _write_csv(ds: Dataset, fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for f in ds.flows:
        writer.writerow(
            [
                f.id,
                f.label,
                f.ts_ms,
                f.src_key,
                f.dst_key,
                "|".join(str(s) for s in f.sizes),
                "|".join(str(d) for d in f.dirs),
                "|".join(_format_ipt(t) for t in f.ipts),
            ]
        )


def _write_jsonl(ds: Dataset, fh: IO[str]) -> None:
    for f in ds.flows:
        obj = {
            "id": f.id,
            "label": f.label,
            "ts_ms": f.ts_ms,
            "src_key": f.src_key,
            "dst_key": f.dst_key,
            "sizes": list(f.sizes),
            "dirs": list(f.dirs),
            "ipts": [float(_format_ipt(t)) for t in f.ipts],
        }
        fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def summarize(ds: Dataset) -> IngestReport:
    """Exact histograms over an in-memory dataset."""
    return IngestReport(
        n_rows_read=len(ds),
        n_accepted=len(ds),
        n_rejected=0,
        rejection_reasons={},
        label_histogram=dict(Counter(f.label for f in ds.flows)),
        length_histogram=dict(Counter(f.seq_len for f in ds.flows)),
        n_ipt0_fixed=0,
    )


def dumps_dataset(ds: Dataset, fmt: FileFormat) -> str:
    """Serialize to a string (used for byte-identity checks)."""
    buf = io.StringIO()
    if fmt is FileFormat.CSV:
        _write_csv(ds, buf)
    else:
        _write_jsonl(ds, buf)
    return buf.getvalue()
