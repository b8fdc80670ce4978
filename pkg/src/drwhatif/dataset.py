"""Tabular dataset container, CSV ingestion and per-feature statistics.

Rows are named observations, columns are named numeric features. The value
matrix is immutable after construction so it can be shared freely between
sessions and worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class FeatureStats:
    """Population statistics for one feature column."""

    mean: float
    std: float
    min: float
    max: float

    def to_json(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


class Dataset:
    """n named rows by d named numeric features, finite values only.

    Invariants: n >= 2, d >= 2, unique row ids, unique feature names, no
    non-finite entries. The value matrix is frozen (writeable=False).
    """

    def __init__(self, row_ids: list[str], feature_names: list[str], values) -> None:
        values = np.array(values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-D matrix", code="bad_shape")
        n, d = values.shape
        if n < 2 or d < 2:
            raise DataError(
                f"need at least 2 rows and 2 features, got {n}x{d}", code="too_small"
            )
        if len(row_ids) != n:
            raise DataError("row_ids length does not match value rows", code="bad_shape")
        if len(feature_names) != d:
            raise DataError(
                "feature_names length does not match value columns", code="bad_shape"
            )
        seen: set[str] = set()
        for rid in row_ids:
            if rid in seen:
                raise DataError(f"duplicate row id {rid!r}", code="duplicate_row_id")
            seen.add(rid)
        if len(set(feature_names)) != d:
            raise DataError("duplicate feature names", code="duplicate_feature")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DataError(
                f"non-finite value at row {row_ids[i]!r}, column {feature_names[j]!r}",
                code="non_finite_value",
            )
        values.setflags(write=False)
        self.row_ids = list(row_ids)
        self.feature_names = list(feature_names)
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def row_index(self, row_id: str) -> int:
        try:
            return self.row_ids.index(row_id)
        except ValueError:
            raise DataError(f"unknown row id {row_id!r}", code="unknown_row") from None

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}", code="unknown_feature") from None

    def to_json(self) -> dict:
        return {
            "row_ids": self.row_ids,
            "feature_names": self.feature_names,
            "values": [[float(v) for v in row] for row in self.values],
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj: dict | str) -> "Dataset":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["row_ids"], obj["feature_names"], obj["values"])


def feature_stats(ds: Dataset, i: int) -> FeatureStats:
    """Population statistics (divide by n) for feature column i."""
    if not 0 <= i < ds.d:
        raise DataError(f"feature index {i} out of range 0..{ds.d - 1}", code="bad_index")
    col = ds.values[:, i]
    return FeatureStats(
        mean=float(col.mean()),
        std=float(col.std()),  # population: ddof=0
        min=float(col.min()),
        max=float(col.max()),
    )


def all_stats(ds: Dataset) -> list[FeatureStats]:
    return [feature_stats(ds, i) for i in range(ds.d)]


def _parse_cell(text: str, row_id: str, column: str) -> float:
    stripped = text.strip()
    if stripped == "":
        raise DataError(
            f"blank cell at row {row_id!r}, column {column!r}", code="non_numeric_cell"
        )
    try:
        value = float(stripped)
    except ValueError:
        raise DataError(
            f"non-numeric cell {text!r} at row {row_id!r}, column {column!r}",
            code="non_numeric_cell",
        ) from None
    if not math.isfinite(value):
        raise DataError(
            f"non-finite cell {text!r} at row {row_id!r}, column {column!r}",
            code="non_finite_value",
        )
    return value


def load_csv(data: bytes | str, id_column: str | int = 0) -> Dataset:
    """Parse an RFC-4180 CSV with a header row into a Dataset.

    ``id_column`` selects the identifier column by header name or position;
    every other column must parse as a finite real number.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"CSV is not valid UTF-8: {exc}", code="bad_encoding") from None
    else:
        text = data
    if text.strip() == "":
        raise DataError("empty dataset", code="empty_dataset")

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty dataset", code="empty_dataset") from None
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise DataError("need an id column plus at least 2 features", code="too_small")

    if isinstance(id_column, int):
        id_idx = id_column
        if not -len(header) <= id_idx < len(header):
            raise DataError(f"id column index {id_column} out of range", code="bad_id_column")
        id_idx %= len(header)
    else:
        if id_column not in header:
            raise DataError(f"id column {id_column!r} not in header", code="bad_id_column")
        id_idx = header.index(id_column)

    feature_names = [h for k, h in enumerate(header) if k != id_idx]
    row_ids: list[str] = []
    rows: list[list[float]] = []
    for line_no, record in enumerate(reader, start=2):
        if not record or (len(record) == 1 and record[0].strip() == ""):
            continue  # trailing blank line
        if len(record) != len(header):
            raise DataError(
                f"row at line {line_no} has {len(record)} cells, expected {len(header)}",
                code="ragged_row",
            )
        rid = record[id_idx].strip()
        if rid == "":
            raise DataError(f"blank row id at line {line_no}", code="blank_row_id")
        values = [
            _parse_cell(cell, rid, header[k])
            for k, cell in enumerate(record)
            if k != id_idx
        ]
        row_ids.append(rid)
        rows.append(values)

    if len(rows) < 2 or len(feature_names) < 2:
        raise DataError(
            f"need at least 2 rows and 2 features, got {len(rows)}x{len(feature_names)}",
            code="too_small",
        )
    return Dataset(row_ids, feature_names, np.array(rows, dtype=float))


def dataset_to_csv(ds: Dataset, id_header: str = "id") -> str:
    """Serialize with repr-precision floats so a round trip is bit-exact."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([id_header, *ds.feature_names])
    for rid, row in zip(ds.row_ids, ds.values):
        writer.writerow([rid, *[repr(float(v)) for v in row]])
    return out.getvalue()
