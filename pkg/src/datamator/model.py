"""Core domain types: datasets, schemas, analysis pipelines, step results.

Everything here is an immutable value object; instances are safe to share
between threads without synchronization. Pipelines are ordered lists of
operation steps whose arguments may back-reference earlier steps (``#k``,
1-based); constructors reject forward references and pipelines that do not
start with SELECT.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

Value = Union[None, str, float]


class ColumnType(Enum):
    CATEGORICAL = "categorical"
    NUMERICAL = "numerical"
    TEMPORAL = "temporal"


class Comparator(Enum):
    EQ = "="
    NEQ = "!="
    GT = ">"
    LT = "<"
    GE = ">="
    LE = "<="

    @property
    def is_ordering(self) -> bool:
        return self in (Comparator.GT, Comparator.LT, Comparator.GE, Comparator.LE)


class AggMethod(Enum):
    COUNT = "count"
    MAX = "max"
    MIN = "min"
    SUM = "sum"
    AVG = "avg"
    MEDIAN = "median"


class Op(Enum):
    SELECT = "SELECT"
    PROJECT = "PROJECT"
    FILTER = "FILTER"
    SUPERLATIVE = "SUPERLATIVE"
    AGGREGATE = "AGGREGATE"
    GROUP = "GROUP"
    SORT = "SORT"


class SortDir(Enum):
    ASC = "asc"
    DESC = "desc"


class SuperKind(Enum):
    MAX = "max"
    MIN = "min"


_WS_RUN = re.compile(r"[\s_]+")


def normalize_identifier(name: str) -> str:
    """Lowercase and collapse runs of spaces/underscores to one underscore.

    Makes display names like "Birth Year" match the column ``birth_year``.
    """
    return _WS_RUN.sub("_", name.strip().lower())


class ModelError(Exception):
    """Base class for domain-model errors."""


class NotFound(ModelError):
    def __init__(self, name: str):
        super().__init__(f"no table or column named {name!r}")
        self.name = name


class Ambiguous(ModelError):
    def __init__(self, name: str, candidates: list[str]):
        super().__init__(
            f"column name {name!r} is ambiguous: {', '.join(sorted(candidates))}"
        )
        self.name = name
        self.candidates = candidates


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def column_index(self, column_name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == column_name:
                return i
        raise NotFound(column_name)

    def column(self, column_name: str) -> Column:
        return self.columns[self.column_index(column_name)]


@dataclass(frozen=True)
class Schema:
    """Named typed tables. Table names unique; column names unique per table."""

    tables: tuple[Table, ...]

    def __post_init__(self):
        if not self.tables:
            raise ValueError("schema must declare at least one table")
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate table names in schema")
        for t in self.tables:
            if not t.columns:
                raise ValueError(f"table {t.name!r} has no columns")
            cnames = [c.name for c in t.columns]
            if len(set(cnames)) != len(cnames):
                raise ValueError(f"duplicate column names in table {t.name!r}")

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise NotFound(name)


def make_schema(tables: Sequence[tuple[str, Sequence[tuple[str, ColumnType]]]]) -> Schema:
    """Convenience constructor from nested name/type pairs."""
    return Schema(
        tuple(
            Table(tname, tuple(Column(cname, ctype) for cname, ctype in cols))
            for tname, cols in tables
        )
    )


@dataclass(frozen=True)
class AttributeRef:
    """A resolved reference to a table or to one of its columns."""

    table_name: str
    column_name: Optional[str] = None

    @property
    def kind(self) -> str:
        return "column" if self.column_name is not None else "table"

    def display(self) -> str:
        if self.column_name is None:
            return self.table_name
        return f"{self.table_name}.{self.column_name}"


def resolve_attribute(name_text: str, schema: Schema) -> AttributeRef:
    """Resolve a display name to a table or column in the schema.

    Matching is case-insensitive after identifier normalization, so
    "Birth Year" resolves to ``birth_year``. Column names may be qualified
    as ``table.column``. Raises :class:`NotFound` for absent names and
    :class:`Ambiguous` when an unqualified column name occurs in several
    tables.
    """
    norm = normalize_identifier(name_text)
    if "." in norm:
        tpart, cpart = norm.split(".", 1)
        for t in schema.tables:
            if normalize_identifier(t.name) == tpart:
                for c in t.columns:
                    if normalize_identifier(c.name) == cpart:
                        return AttributeRef(t.name, c.name)
                raise NotFound(name_text)
        raise NotFound(name_text)

    for t in schema.tables:
        if normalize_identifier(t.name) == norm:
            return AttributeRef(t.name)

    hits = [
        AttributeRef(t.name, c.name)
        for t in schema.tables
        for c in t.columns
        if normalize_identifier(c.name) == norm
    ]
    if not hits:
        raise NotFound(name_text)
    if len(hits) > 1:
        raise Ambiguous(name_text, [h.display() for h in hits])
    return hits[0]


# -- temporal values ---------------------------------------------------------

_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_YEAR = re.compile(r"^\d{4}$")


def temporal_key(value: Value) -> Optional[tuple[int, int, int]]:
    """Chronological sort key for a temporal value, or None if unparsable.

    Accepts ISO-8601 dates and bare 4-digit years; a bare year sorts before
    every full date within that year.
    """
    if value is None:
        return None
    if isinstance(value, float):
        if value.is_integer() and 1000 <= value <= 9999:
            return (int(value), 0, 0)
        return None
    text = str(value).strip()
    m = _ISO_DATE.match(text)
    if m:
        y, mo, d = (int(g) for g in m.groups())
        if 1 <= mo <= 12 and 1 <= d <= 31:
            return (y, mo, d)
        return None
    if _YEAR.match(text):
        return (int(text), 0, 0)
    return None


def canonical_temporal_text(value: Value) -> Optional[str]:
    """Canonical textual form of a temporal value ("2000" or "2000-05-17")."""
    key = temporal_key(value)
    if key is None:
        return None
    y, mo, d = key
    if mo == 0:
        return f"{y:04d}"
    return f"{y:04d}-{mo:02d}-{d:02d}"


def parse_number(value: Value) -> Optional[float]:
    if value is None:
        return None
    if isinstance(value, float):
        return value
    try:
        return float(str(value).strip())
    except ValueError:
        return None


@dataclass(frozen=True)
class Dataset:
    """A schema plus per-table rows; the universe pipelines run over.

    Row values are normalized at construction: numerical cells to floats,
    temporal cells to their canonical text form. Empty strings become nulls.
    """

    schema: Schema
    rows: dict[str, tuple[tuple[Value, ...], ...]]

    def __post_init__(self):
        normalized: dict[str, tuple[tuple[Value, ...], ...]] = {}
        for table in self.schema.tables:
            raw = self.rows.get(table.name, ())
            out_rows = []
            for rownum, row in enumerate(raw):
                if len(row) != len(table.columns):
                    raise ValueError(
                        f"row {rownum} of {table.name!r} has {len(row)} values, "
                        f"expected {len(table.columns)}"
                    )
                out_rows.append(
                    tuple(
                        _normalize_cell(v, col.type, table.name, col.name, rownum)
                        for v, col in zip(row, table.columns)
                    )
                )
            normalized[table.name] = tuple(out_rows)
        object.__setattr__(self, "rows", normalized)

    def table_rows(self, table_name: str) -> tuple[tuple[Value, ...], ...]:
        return self.rows[table_name]

    def cell(self, table_name: str, row_id: int, column_name: str) -> Value:
        col_idx = self.schema.table(table_name).column_index(column_name)
        return self.rows[table_name][row_id][col_idx]


def _normalize_cell(
    value: Value, ctype: ColumnType, table: str, column: str, rownum: int
) -> Value:
    if value is None:
        return None
    if isinstance(value, str) and value.strip() == "":
        return None
    if ctype is ColumnType.NUMERICAL:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            num = float(value)
        else:
            parsed = parse_number(value)
            if parsed is None:
                raise ValueError(
                    f"{table}.{column} row {rownum}: {value!r} is not numeric"
                )
            num = parsed
        if num != num or num in (float("inf"), float("-inf")):
            raise ValueError(f"{table}.{column} row {rownum}: non-finite number")
        return num
    if ctype is ColumnType.TEMPORAL:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = _format_integral(float(value))
        canonical = canonical_temporal_text(value)
        if canonical is None:
            raise ValueError(
                f"{table}.{column} row {rownum}: {value!r} is not a date or year"
            )
        return canonical
    return str(value)


def _format_integral(num: float) -> str:
    if num.is_integer():
        return str(int(num))
    return repr(num)


def schema_of(dataset: Dataset) -> Schema:
    """The dataset's embedded schema, unchanged."""
    return dataset.schema


# -- pipeline steps ----------------------------------------------------------


@dataclass(frozen=True)
class AttrArg:
    """A table/column display name; resolved against a schema when validated."""

    name: str


@dataclass(frozen=True)
class RefArg:
    """Back-reference to the result of an earlier step (1-based)."""

    step: int


@dataclass(frozen=True)
class CondArg:
    """Comparison condition: column (by name or by projection ref) vs literal."""

    column: Union[AttrArg, RefArg]
    cmp: Comparator
    literal: "Literal"


@dataclass(frozen=True)
class MethodArg:
    method: AggMethod


@dataclass(frozen=True)
class DirArg:
    dir: SortDir


@dataclass(frozen=True)
class SuperArg:
    kind: SuperKind


Arg = Union[AttrArg, RefArg, CondArg, MethodArg, DirArg, SuperArg]


@dataclass(frozen=True)
class Literal:
    """A typed condition literal: text, number, or temporal."""

    kind: str  # "text" | "number" | "temporal"
    value: Union[str, float]

    @staticmethod
    def text(value: str) -> "Literal":
        return Literal("text", value)

    @staticmethod
    def number(value: float) -> "Literal":
        return Literal("number", float(value))

    @staticmethod
    def temporal(value: str) -> "Literal":
        return Literal("temporal", value)

    def display(self) -> str:
        if self.kind == "number":
            return _format_integral(float(self.value))
        return str(self.value)


@dataclass(frozen=True)
class QdmrStep:
    op: Op
    args: tuple[Arg, ...]

    def refs(self) -> list[int]:
        """All back-reference indices this step uses, in argument order."""
        out = []
        for arg in self.args:
            if isinstance(arg, RefArg):
                out.append(arg.step)
            elif isinstance(arg, CondArg) and isinstance(arg.column, RefArg):
                out.append(arg.column.step)
        return out


@dataclass(frozen=True)
class QdmrPipeline:
    """Ordered, non-empty list of steps; acyclic by back-reference-only rule."""

    steps: tuple[QdmrStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("pipeline must contain at least one step")
        if self.steps[0].op is not Op.SELECT:
            raise ValueError("pipeline must start with SELECT")
        for i, step in enumerate(self.steps, start=1):
            for ref in step.refs():
                if ref < 1:
                    raise ValueError(f"step {i} references step {ref} (< 1)")
                if ref >= i:
                    raise ValueError(
                        f"step {i} references step {ref} (forward references forbidden)"
                    )

    def __len__(self) -> int:
        return len(self.steps)


# -- step results ------------------------------------------------------------


@dataclass(frozen=True)
class Records:
    """A set of rows of one table, in display order, with provenance ids.

    ``focus`` names a column when the records were selected through one
    (SELECT over a column keeps full rows but marks that column).
    """

    table: str
    row_ids: tuple[int, ...]
    focus: Optional[str] = None


@dataclass(frozen=True)
class Projection:
    """Column values aligned 1:1 with the record set they project from."""

    table: str
    column: str
    row_ids: tuple[int, ...]
    values: tuple[Value, ...]

    def __post_init__(self):
        if len(self.row_ids) != len(self.values):
            raise ValueError("projection values must align with row ids")


@dataclass(frozen=True)
class GroupEntry:
    key: Value
    member_row_ids: tuple[int, ...]
    aggregate: Value


@dataclass(frozen=True)
class Groups:
    """Disjoint groups keyed by distinct values; members partition the input."""

    table: str
    key_column: str
    entries: tuple[GroupEntry, ...]

    def __post_init__(self):
        seen: set[int] = set()
        for entry in self.entries:
            for rid in entry.member_row_ids:
                if rid in seen:
                    raise ValueError("group member sets must be disjoint")
                seen.add(rid)


@dataclass(frozen=True)
class Scalar:
    value: Value


StepResult = Union[Records, Projection, Groups, Scalar]


def result_row_ids(result: StepResult) -> tuple[int, ...]:
    if isinstance(result, (Records, Projection)):
        return result.row_ids
    if isinstance(result, Groups):
        return tuple(rid for e in result.entries for rid in e.member_row_ids)
    return ()
