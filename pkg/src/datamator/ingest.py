"""CSV ingestion with column type inference.

A dataset is one or more CSV tables, each with a header row. Column types
are inferred from the data: a column whose non-empty values are all ISO
dates or bare 4-digit years is temporal, an all-numeric column is
numerical, anything else is categorical. Explicit hints override
inference and are checked against the data.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Optional

from .model import (
    Column,
    ColumnType,
    Dataset,
    Schema,
    Table,
    parse_number,
    temporal_key,
)

TypeHints = dict[str, dict[str, ColumnType]]


class IngestError(Exception):
    """Base class for ingestion failures."""


class EmptyFile(IngestError):
    def __init__(self, table: str):
        super().__init__(f"{table}: file has no header row")
        self.table = table


class RaggedRows(IngestError):
    def __init__(self, table: str, line: int, got: int, want: int):
        super().__init__(f"{table}: line {line} has {got} fields, expected {want}")
        self.table = table
        self.line = line


class TypeConflict(IngestError):
    def __init__(self, table: str, column: str, hint: ColumnType, value: str):
        super().__init__(
            f"{table}.{column}: hinted {hint.value} but value {value!r} does not parse"
        )
        self.table = table
        self.column = column


def _is_temporal(text: str) -> bool:
    return temporal_key(text) is not None


def _is_numeric(text: str) -> bool:
    return parse_number(text) is not None


def infer_column_type(values: Iterable[str]) -> ColumnType:
    """Inference rule: all dates/years -> temporal, all numeric -> numerical,
    else categorical. Empty cells are ignored; an all-empty column is
    categorical."""
    non_empty = [v.strip() for v in values if v is not None and v.strip() != ""]
    if not non_empty:
        return ColumnType.CATEGORICAL
    if all(_is_temporal(v) for v in non_empty):
        return ColumnType.TEMPORAL
    if all(_is_numeric(v) for v in non_empty):
        return ColumnType.NUMERICAL
    return ColumnType.CATEGORICAL


def _check_hint(table: str, column: str, hint: ColumnType, values: list[str]) -> None:
    for v in values:
        if v is None or v.strip() == "":
            continue
        if hint is ColumnType.NUMERICAL and not _is_numeric(v):
            raise TypeConflict(table, column, hint, v)
        if hint is ColumnType.TEMPORAL and not _is_temporal(v):
            raise TypeConflict(table, column, hint, v)


def read_csv_table(
    name: str, text: str, hints: Optional[dict[str, ColumnType]] = None
) -> tuple[Table, tuple[tuple, ...]]:
    """Parse one CSV stream into a typed table plus its raw rows."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile(name)
    header = [h.strip() for h in header]
    if not header or all(h == "" for h in header):
        raise EmptyFile(name)
    rows: list[tuple] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise RaggedRows(name, line_no, len(row), len(header))
        rows.append(tuple(row))

    hints = hints or {}
    columns = []
    for idx, col_name in enumerate(header):
        values = [row[idx] for row in rows]
        if col_name in hints:
            hint = hints[col_name]
            _check_hint(name, col_name, hint, values)
            columns.append(Column(col_name, hint))
        else:
            columns.append(Column(col_name, infer_column_type(values)))
    return Table(name, tuple(columns)), tuple(rows)


def build_dataset(
    files: dict[str, str], hints: Optional[TypeHints] = None
) -> Dataset:
    """Assemble a dataset from named CSV texts (table name -> CSV content)."""
    if not files:
        raise IngestError("at least one CSV file is required")
    hints = hints or {}
    tables = []
    rows: dict[str, tuple[tuple, ...]] = {}
    for name, text in files.items():
        table, table_rows = read_csv_table(name, text, hints.get(name))
        tables.append(table)
        rows[name] = table_rows
    return Dataset(Schema(tuple(tables)), rows)


def load_dataset_dir(path: str | Path) -> Dataset:
    """Load a dataset directory: one ``<table>.csv`` per table, with an
    optional ``_types.json`` sidecar mapping table -> column -> type."""
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"{root} is not a directory")
    hints: TypeHints = {}
    sidecar = root / "_types.json"
    if sidecar.exists():
        raw = json.loads(sidecar.read_text(encoding="utf-8"))
        hints = {
            table: {col: ColumnType(t) for col, t in cols.items()}
            for table, cols in raw.items()
        }
    files = {}
    for csv_path in sorted(root.glob("*.csv")):
        files[csv_path.stem] = csv_path.read_text(encoding="utf-8")
    if not files:
        raise IngestError(f"{root} contains no CSV files")
    return build_dataset(files, hints)
