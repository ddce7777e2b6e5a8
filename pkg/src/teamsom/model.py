"""Work-item and message records, file ingestion, and the task feature matrix."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DataError,
    EmptyDataset,
    MissingFile,
    ReferentialIntegrityError,
    SchemaError,
    TooFewRows,
)

log = logging.getLogger(__name__)

WORK_ITEM_FIELDS = (
    "id",
    "kind",
    "iteration",
    "time_taken_days",
    "priority",
    "comment_count",
    "developer_count",
    "role_count",
)
MESSAGE_FIELDS = ("id", "work_item_id", "author_id", "timestamp", "text")
KINDS = ("support", "defect", "enhancement")
FEATURE_COLUMNS = (
    "iteration",
    "time_taken",
    "priority",
    "comment_count",
    "developer_count",
    "role_count",
)
DEFAULT_ITERATIONS = 30


@dataclass(frozen=True)
class WorkItem:
    id: str
    kind: str
    iteration: int
    time_taken_days: float
    priority: float
    comment_count: int
    developer_count: int
    role_count: int


@dataclass(frozen=True)
class Message:
    id: str
    work_item_id: str
    author_id: str
    text: str
    timestamp: datetime | None = None
    # empty text is tolerated but marked so scoring can skip it
    degenerate: bool = False


@dataclass(frozen=True)
class Dataset:
    work_items: tuple[WorkItem, ...]
    messages: tuple[Message, ...] = ()
    n_iterations: int = DEFAULT_ITERATIONS
    diagnostics: tuple[DataError, ...] = ()
    reconciled: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [w.id for w in self.work_items]
        if len(set(ids)) != len(ids):
            raise SchemaError(None, "id", "work item ids must be unique")
        mids = [m.id for m in self.messages]
        if len(set(mids)) != len(mids):
            raise SchemaError(None, "id", "message ids must be unique")
        known = set(ids)
        for m in self.messages:
            if m.work_item_id not in known:
                raise ReferentialIntegrityError(m.id, f"unknown work item {m.work_item_id!r}")

    def messages_by_item(self) -> dict[str, list[Message]]:
        grouped: dict[str, list[Message]] = {w.id: [] for w in self.work_items}
        for m in self.messages:
            grouped[m.work_item_id].append(m)
        return grouped


@dataclass(frozen=True)
class ColumnScaling:
    mean: float
    sd: float
    zero_variance: bool


@dataclass(frozen=True)
class FeatureMatrix:
    row_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray
    normalization: tuple[ColumnScaling, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("feature values must be a 2-D array")
        if values.shape != (len(self.row_ids), len(self.column_names)):
            raise DataError(
                f"values shape {values.shape} does not match "
                f"{len(self.row_ids)} rows x {len(self.column_names)} columns"
            )
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("column names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def to_csv(self) -> str:
        lines = [",".join(("row_id",) + self.column_names)]
        for rid, row in zip(self.row_ids, self.values):
            lines.append(",".join([rid] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> "FeatureMatrix":
        path = Path(path)
        if not path.exists():
            raise MissingFile(path)
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "row_id":
            raise SchemaError(None, None, "missing row_id header", str(path))
        columns = tuple(rows[0][1:])
        ids = tuple(r[0] for r in rows[1:])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
        return cls(ids, columns, values.reshape(len(ids), len(columns)))


# ---------------------------------------------------------------- parsing


def _parse_int(value, column: str, row: int, source: str) -> int:
    if isinstance(value, bool):
        raise SchemaError(row, column, "expected an integer", source)
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise SchemaError(row, column, f"expected an integer, got {value!r}", source)
    try:
        return int(str(value).strip())
    except ValueError:
        raise SchemaError(row, column, f"expected an integer, got {value!r}", source) from None


def _parse_real(value, column: str, row: int, source: str) -> float:
    if isinstance(value, bool):
        raise SchemaError(row, column, "expected a real number", source)
    try:
        out = float(value.strip() if isinstance(value, str) else value)
    except (TypeError, ValueError):
        raise SchemaError(row, column, f"expected a real number, got {value!r}", source) from None
    if not math.isfinite(out):
        raise SchemaError(row, column, "value must be finite", source)
    return out


def _parse_timestamp(value, row: int, source: str) -> datetime | None:
    if value is None:
        return None
    text = str(value).strip()
    if not text:
        return None
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise SchemaError(row, "timestamp", f"not an ISO-8601 instant: {value!r}", source) from None


def _require(record: dict, column: str, row: int, source: str):
    value = record.get(column)
    if value is None:
        raise SchemaError(row, column, "missing value", source)
    return value


def parse_work_item(record: dict, row: int, n_iterations: int, source: str = "") -> WorkItem:
    ident = str(_require(record, "id", row, source)).strip()
    if not ident:
        raise SchemaError(row, "id", "empty id", source)
    kind = str(_require(record, "kind", row, source)).strip().lower()
    if kind not in KINDS:
        raise SchemaError(row, "kind", f"kind must be one of {', '.join(KINDS)}", source)
    iteration = _parse_int(_require(record, "iteration", row, source), "iteration", row, source)
    if not 1 <= iteration <= n_iterations:
        raise SchemaError(row, "iteration", f"iteration within [1,{n_iterations}]", source)
    time_taken = _parse_real(_require(record, "time_taken_days", row, source), "time_taken_days", row, source)
    if time_taken < 0:
        raise SchemaError(row, "time_taken_days", "time_taken_days >= 0", source)
    priority = _parse_real(_require(record, "priority", row, source), "priority", row, source)
    if not 1.0 <= priority <= 4.0:
        raise SchemaError(row, "priority", "priority within [1,4]", source)
    comments = _parse_int(_require(record, "comment_count", row, source), "comment_count", row, source)
    if comments < 0:
        raise SchemaError(row, "comment_count", "comment_count >= 0", source)
    developers = _parse_int(_require(record, "developer_count", row, source), "developer_count", row, source)
    if developers < 1:
        raise SchemaError(row, "developer_count", "developer_count >= 1", source)
    roles = _parse_int(_require(record, "role_count", row, source), "role_count", row, source)
    if roles < 1:
        raise SchemaError(row, "role_count", "role_count >= 1", source)
    return WorkItem(ident, kind, iteration, time_taken, priority, comments, developers, roles)


def parse_message(record: dict, row: int, source: str = "") -> Message:
    ident = str(_require(record, "id", row, source)).strip()
    if not ident:
        raise SchemaError(row, "id", "empty id", source)
    item = str(_require(record, "work_item_id", row, source)).strip()
    author = str(record.get("author_id") or "").strip()
    text = record.get("text")
    text = "" if text is None else str(text)
    stamp = _parse_timestamp(record.get("timestamp"), row, source)
    return Message(ident, item, author, text, stamp, degenerate=not text.strip())


def _read_records(path: Path, expected: Sequence[str]) -> Iterator[tuple[int, dict | DataError]]:
    """Yield ``(row_number, record)`` pairs; malformed rows yield an error instead."""
    source = path.name
    suffix = path.suffix.lower()
    if suffix in (".json", ".jsonl"):
        text = path.read_text(encoding="utf-8")
        if suffix == ".jsonl":
            records = []
            for line in text.splitlines():
                if line.strip():
                    try:
                        records.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        records.append(SchemaError(len(records) + 1, None, f"invalid JSON: {exc.msg}", source))
        else:
            try:
                records = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(None, None, f"invalid JSON: {exc}", source) from None
            if not isinstance(records, list):
                raise SchemaError(None, None, "expected a JSON array of records", source)
        for i, rec in enumerate(records, start=1):
            if isinstance(rec, DataError):
                yield i, rec
            elif not isinstance(rec, dict):
                yield i, SchemaError(i, None, "record is not an object", source)
            else:
                unknown = sorted(set(rec) - set(expected))
                if unknown:
                    yield i, SchemaError(i, unknown[0], "unknown field", source)
                else:
                    yield i, rec
        return

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(None, None, "empty file (header row required)", source) from None
        if header and header[0].startswith("﻿"):
            header[0] = header[0][1:]
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing or extra or len(set(header)) != len(header):
            raise SchemaError(
                None, None, f"header must be {','.join(expected)} (got {','.join(header)})", source
            )
        for i, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                yield i, SchemaError(i, None, f"expected {len(header)} fields, found {len(cells)}", source)
            else:
                yield i, dict(zip(header, cells))


def ingest_dataset(
    work_item_path,
    message_path=None,
    *,
    n_iterations: int = DEFAULT_ITERATIONS,
    strict: bool = True,
    messages_authoritative: bool = False,
) -> Dataset:
    """Read and validate work items (and optionally their messages).

    With ``strict`` the first invalid row raises. Otherwise invalid rows are
    dropped and each contributes exactly one entry to ``Dataset.diagnostics``.

    A ``comment_count`` that disagrees with the number of supplied messages
    raises ``ReferentialIntegrityError`` unless ``messages_authoritative`` is
    set, in which case the count is overwritten from the messages and a
    warning is logged.
    """
    wi_path = Path(work_item_path)
    if not wi_path.exists():
        raise MissingFile(wi_path)
    msg_path = Path(message_path) if message_path is not None else None
    if msg_path is not None and not msg_path.exists():
        raise MissingFile(msg_path)

    diagnostics: list[DataError] = []

    def reject(err: DataError):
        if strict:
            raise err
        diagnostics.append(err)

    items: list[WorkItem] = []
    seen: set[str] = set()
    for row, rec in _read_records(wi_path, WORK_ITEM_FIELDS):
        if isinstance(rec, DataError):
            reject(rec)
            continue
        try:
            item = parse_work_item(rec, row, n_iterations, wi_path.name)
        except SchemaError as err:
            reject(err)
            continue
        if item.id in seen:
            reject(SchemaError(row, "id", f"duplicate work item id {item.id!r}", wi_path.name))
            continue
        seen.add(item.id)
        items.append(item)

    messages: list[Message] = []
    reconciled: list[str] = []
    if msg_path is not None:
        mseen: set[str] = set()
        for row, rec in _read_records(msg_path, MESSAGE_FIELDS):
            if isinstance(rec, DataError):
                reject(rec)
                continue
            try:
                msg = parse_message(rec, row, msg_path.name)
            except SchemaError as err:
                reject(err)
                continue
            if msg.id in mseen:
                reject(SchemaError(row, "id", f"duplicate message id {msg.id!r}", msg_path.name))
                continue
            if msg.work_item_id not in seen:
                reject(ReferentialIntegrityError(msg.id, f"unknown work item {msg.work_item_id!r}"))
                continue
            mseen.add(msg.id)
            messages.append(msg)

        counts: dict[str, int] = {}
        for m in messages:
            counts[m.work_item_id] = counts.get(m.work_item_id, 0) + 1
        for pos, item in enumerate(items):
            actual = counts.get(item.id, 0)
            if actual == item.comment_count:
                continue
            if not messages_authoritative:
                raise ReferentialIntegrityError(
                    item.id,
                    f"work item declares comment_count={item.comment_count} "
                    f"but {actual} messages reference it",
                )
            log.warning("work item %s: comment_count %d replaced by message count %d", item.id, item.comment_count, actual)
            items[pos] = replace(item, comment_count=actual)
            reconciled.append(item.id)

    return Dataset(tuple(items), tuple(messages), n_iterations, tuple(diagnostics), tuple(reconciled))


# ---------------------------------------------------------------- writing


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_work_items(items: Iterable[WorkItem], path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        records = [{f: getattr(w, f) for f in WORK_ITEM_FIELDS} for w in items]
        path.write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WORK_ITEM_FIELDS)
        for w in items:
            writer.writerow([_fmt(getattr(w, f)) for f in WORK_ITEM_FIELDS])


def write_messages(messages: Iterable[Message], path) -> None:
    path = Path(path)

    def stamp(m: Message) -> str:
        return m.timestamp.isoformat() if m.timestamp is not None else ""

    if path.suffix.lower() == ".json":
        records = [
            {"id": m.id, "work_item_id": m.work_item_id, "author_id": m.author_id,
             "timestamp": stamp(m) or None, "text": m.text}
            for m in messages
        ]
        path.write_text(json.dumps(records, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_ALL)
        writer.writerow(MESSAGE_FIELDS)
        for m in messages:
            writer.writerow([m.id, m.work_item_id, m.author_id, stamp(m), m.text])


# ---------------------------------------------------------------- features


def build_feature_matrix(dataset: Dataset) -> FeatureMatrix:
    if not dataset.work_items:
        raise EmptyDataset("dataset has no work items")
    values = np.array(
        [
            [w.iteration, w.time_taken_days, w.priority, w.comment_count, w.developer_count, w.role_count]
            for w in dataset.work_items
        ],
        dtype=float,
    )
    return FeatureMatrix(tuple(w.id for w in dataset.work_items), FEATURE_COLUMNS, values)


def zscore_normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Standardize each column with the sample (n-1) standard deviation.

    Zero-variance columns become all zeros and are flagged in the returned
    ``normalization`` record instead of raising.
    """
    n = matrix.values.shape[0]
    if n < 2:
        raise TooFewRows(f"z-scoring needs at least 2 rows, got {n}")
    x = matrix.values
    means = x.mean(axis=0)
    centered = x - means
    sds = np.sqrt((centered**2).sum(axis=0) / (n - 1))
    out = np.zeros_like(x)
    scaling = []
    for j in range(x.shape[1]):
        # relative threshold so float noise on a constant column does not count as spread
        zero = not sds[j] > 1e-12 * max(1.0, abs(means[j]))
        if not zero:
            out[:, j] = centered[:, j] / sds[j]
        scaling.append(ColumnScaling(float(means[j]), float(sds[j]), zero))
    return FeatureMatrix(matrix.row_ids, matrix.column_names, out, tuple(scaling))


def denormalize_column(values: np.ndarray, scaling: ColumnScaling) -> np.ndarray:
    """Map standardized values back to original units."""
    if scaling.zero_variance:
        return np.full(np.shape(values), scaling.mean, dtype=float)
    return np.asarray(values, dtype=float) * scaling.sd + scaling.mean


def normalization_to_json(matrix: FeatureMatrix) -> list[dict] | None:
    if matrix.normalization is None:
        return None
    return [
        {"column": name, "mean": s.mean, "sd": s.sd, "zero_variance": s.zero_variance}
        for name, s in zip(matrix.column_names, matrix.normalization)
    ]


def normalization_from_json(records: list[dict]) -> tuple[ColumnScaling, ...]:
    return tuple(ColumnScaling(float(r["mean"]), float(r["sd"]), bool(r["zero_variance"])) for r in records)


__all__ = [
    "ColumnScaling",
    "Dataset",
    "FEATURE_COLUMNS",
    "FeatureMatrix",
    "KINDS",
    "Message",
    "WorkItem",
    "build_feature_matrix",
    "denormalize_column",
    "ingest_dataset",
    "write_messages",
    "write_work_items",
    "zscore_normalize",
]
