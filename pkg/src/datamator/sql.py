"""Pipeline-to-SQL transpilation and the execution-accuracy harness.

The transpiler emits a single SELECT statement per pipeline; running it on
a reference relational engine (stdlib sqlite3) provides an oracle that is
independent of the interpreter in :mod:`datamator.executor`. The harness
compares the answers of generated pipelines against gold pipelines and
reports accuracy overall and per hardness bucket.
"""

from __future__ import annotations

import json
import re
import sqlite3
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .executor import EmptyInput, ExecError, execute
from .model import (
    AggMethod,
    AttrArg,
    AttributeRef,
    ColumnType,
    CondArg,
    Dataset,
    Literal,
    Op,
    QdmrPipeline,
    RefArg,
    Schema,
    SortDir,
    SuperKind,
    canonical_temporal_text,
    resolve_attribute,
)
from .text import parse, validate

HARDNESS_LEVELS = ("easy", "medium", "hard", "extra_hard")


class TranspileError(Exception):
    pass


class Unsupported(TranspileError):
    def __init__(self, feature: str):
        super().__init__(f"no portable SQL form for {feature}")
        self.feature = feature


@dataclass(frozen=True)
class SqlDialect:
    """Rendering hooks; the default targets SQLite."""

    name: str = "sqlite"
    # median has no portable SQL form; dialects may supply one
    median_expr: Optional[Callable[[str], str]] = None


DEFAULT_DIALECT = SqlDialect()

_SAFE_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_SQL_KEYWORDS = {
    "select", "from", "where", "group", "order", "by", "table", "index",
    "values", "union", "join", "on", "as", "and", "or", "not", "null",
}


def _ident(name: str) -> str:
    if _SAFE_IDENT.match(name) and name.lower() not in _SQL_KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def _quote_text(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def _render_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _render_literal(literal: Literal, ctype: ColumnType) -> str:
    if ctype is ColumnType.NUMERICAL:
        return _render_number(float(literal.value))
    if ctype is ColumnType.TEMPORAL:
        canonical = canonical_temporal_text(
            float(literal.value) if literal.kind == "number" else str(literal.value)
        )
        if canonical is None:
            raise TranspileError(f"{literal.display()!r} is not a date or year")
        return _quote_text(canonical)
    return _quote_text(str(literal.value))


class _Transpiler:
    def __init__(self, pipeline: QdmrPipeline, schema: Schema, dialect: SqlDialect):
        self.pipeline = pipeline
        self.schema = schema
        self.dialect = dialect
        self.table: Optional[str] = None
        self.where: list[str] = []
        # later sorts take precedence; earlier ones remain as tiebreaks
        self.order_by: list[str] = []
        # operand column an aggregate would apply to (projection or focus)
        self.operand: Optional[AttributeRef] = None
        self.select_exprs: list[str] = ["*"]
        self.group_key: Optional[str] = None
        self.shape = "rows"  # rows | column | scalar | groups

    def resolve_column(self, name: str) -> AttributeRef:
        if self.table is not None and "." not in name:
            try:
                return resolve_attribute(f"{self.table}.{name}", self.schema)
            except Exception:
                pass
        ref = resolve_attribute(name, self.schema)
        if ref.kind != "column":
            raise TranspileError(f"{name!r} does not name a column")
        return ref

    def column_of_step(self, step_index: int) -> AttributeRef:
        """Column a PROJECT/SELECT-with-focus step exposes."""
        step = self.pipeline.steps[step_index - 1]
        if step.op is Op.PROJECT:
            return self.resolve_column(step.args[0].name)
        if step.op is Op.SELECT:
            ref = resolve_attribute(step.args[0].name, self.schema)
            if ref.kind == "column":
                return ref
        if step.op in (Op.FILTER, Op.SUPERLATIVE, Op.SORT):
            inner = next(a for a in step.args if isinstance(a, RefArg))
            return self.column_of_step(inner.step)
        raise TranspileError(f"step {step_index} exposes no column")

    def column_type(self, ref: AttributeRef) -> ColumnType:
        return self.schema.table(ref.table_name).column(ref.column_name).type

    def cond_sql(self, cond: CondArg) -> str:
        if isinstance(cond.column, AttrArg):
            col = self.resolve_column(cond.column.name)
        else:
            col = self.column_of_step(cond.column.step)
        lit = _render_literal(cond.literal, self.column_type(col))
        return f"{_ident(col.column_name)} {cond.cmp.value} {lit}"

    def run(self) -> str:
        for i, step in enumerate(self.pipeline.steps, start=1):
            getattr(self, f"op_{step.op.value.lower()}")(i, step)
        return self.render()

    def op_select(self, i, step):
        ref = resolve_attribute(step.args[0].name, self.schema)
        self.table = ref.table_name
        if ref.kind == "column":
            self.operand = ref
            self.select_exprs = [_ident(ref.column_name)]
            self.shape = "column"

    def op_project(self, i, step):
        col = self.resolve_column(step.args[0].name)
        self.operand = col
        self.select_exprs = [_ident(col.column_name)]
        self.shape = "column"

    def op_filter(self, i, step):
        self.where.append(self.cond_sql(step.args[1]))

    def op_superlative(self, i, step):
        _, col_arg, super_arg = step.args
        if isinstance(col_arg, AttrArg):
            col = self.resolve_column(col_arg.name)
        else:
            col = self.column_of_step(col_arg.step)
        func = "MAX" if super_arg.kind is SuperKind.MAX else "MIN"
        inner_where = f" WHERE {' AND '.join(self.where)}" if self.where else ""
        sub = f"(SELECT {func}({_ident(col.column_name)}) FROM {_ident(self.table)}{inner_where})"
        self.where.append(f"{_ident(col.column_name)} = {sub}")

    def op_aggregate(self, i, step):
        method = step.args[0].method
        self.select_exprs = [self.agg_expr(method)]
        self.order_by = []
        self.shape = "scalar"

    def op_group(self, i, step):
        method, vals_ref, keys_ref = step.args
        key_col = self.column_of_step(keys_ref.step)
        # the aggregate applies to the values chain, not the keys projection
        vals_step = self.pipeline.steps[vals_ref.step - 1]
        saved = self.operand
        if vals_step.op is Op.PROJECT or (
            vals_step.op is Op.SELECT and saved is not None
        ) or vals_step.op in (Op.FILTER, Op.SUPERLATIVE, Op.SORT):
            try:
                self.operand = self.column_of_step(vals_ref.step)
            except TranspileError:
                self.operand = None
        else:
            self.operand = None
        agg = self.agg_expr(method.method)
        self.group_key = _ident(key_col.column_name)
        self.select_exprs = [self.group_key, agg]
        self.order_by = []
        self.shape = "groups"

    def op_sort(self, i, step):
        col = self.resolve_column(step.args[1].name)
        direction = "ASC" if step.args[2].dir is SortDir.ASC else "DESC"
        self.order_by.insert(0, f"{_ident(col.column_name)} {direction} NULLS LAST")

    def agg_expr(self, method: AggMethod) -> str:
        col = _ident(self.operand.column_name) if self.operand is not None else None
        if method is AggMethod.COUNT:
            return f"COUNT({col})" if col else "COUNT(*)"
        if col is None:
            raise TranspileError(f"{method.value} needs a column operand")
        if method is AggMethod.SUM:
            return f"COALESCE(SUM({col}), 0)"
        if method is AggMethod.MEDIAN:
            if self.dialect.median_expr is None:
                raise Unsupported("median")
            return self.dialect.median_expr(col)
        return f"{method.value.upper()}({col})"

    def render(self) -> str:
        parts = [f"SELECT {', '.join(self.select_exprs)}", f"FROM {_ident(self.table)}"]
        if self.where:
            parts.append("WHERE " + " AND ".join(self.where))
        if self.group_key:
            parts.append(f"GROUP BY {self.group_key}")
        if self.order_by:
            # rowid pins tie order to insertion order, matching the
            # interpreter's stable sort
            keys = ", ".join(self.order_by + ["rowid ASC"])
            parts.append(f"ORDER BY {keys}")
        return " ".join(parts)


def transpile_to_sql(
    pipeline: QdmrPipeline, schema: Schema, dialect: SqlDialect = DEFAULT_DIALECT
) -> str:
    """Emit a single SELECT statement equivalent to the pipeline."""
    return _Transpiler(pipeline, schema, dialect).run()


def answer_shape(pipeline: QdmrPipeline, schema: Schema) -> str:
    """Final answer shape: rows | column | scalar | groups."""
    t = _Transpiler(pipeline, schema, DEFAULT_DIALECT)
    for i, step in enumerate(pipeline.steps, start=1):
        getattr(t, f"op_{step.op.value.lower()}")(i, step)
    return t.shape


# -- reference engine ---------------------------------------------------------

_SQLITE_TYPES = {
    ColumnType.NUMERICAL: "REAL",
    ColumnType.TEMPORAL: "TEXT",
    ColumnType.CATEGORICAL: "TEXT",
}


def dataset_to_sqlite(dataset: Dataset, conn: Optional[sqlite3.Connection] = None) -> sqlite3.Connection:
    """Load a dataset into an in-memory SQLite database."""
    if conn is None:
        conn = sqlite3.connect(":memory:")
    for table in dataset.schema.tables:
        cols = ", ".join(
            f"{_ident(c.name)} {_SQLITE_TYPES[c.type]}" for c in table.columns
        )
        conn.execute(f"CREATE TABLE {_ident(table.name)} ({cols})")
        placeholders = ", ".join("?" for _ in table.columns)
        conn.executemany(
            f"INSERT INTO {_ident(table.name)} VALUES ({placeholders})",
            dataset.table_rows(table.name),
        )
    conn.commit()
    return conn


def sql_answer(
    pipeline: QdmrPipeline, dataset: Dataset, conn: Optional[sqlite3.Connection] = None
):
    """Execute the transpiled pipeline on SQLite; answer in the executor's
    presentation space (scalar, value list, row list, or key/agg pairs)."""
    sql = transpile_to_sql(pipeline, dataset.schema)
    shape = answer_shape(pipeline, dataset.schema)
    if conn is None:
        conn = dataset_to_sqlite(dataset)
    rows = conn.execute(sql).fetchall()
    if shape == "scalar":
        return rows[0][0] if rows else None
    if shape == "column":
        return [r[0] for r in rows]
    if shape == "groups":
        return [(r[0], r[1]) for r in rows]
    return [list(r) for r in rows]


# -- answer comparison --------------------------------------------------------


def _num_equal(a: float, b: float, tol: float = 1e-9) -> bool:
    if a == b:
        return True
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _values_equal(a, b) -> bool:
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return _num_equal(float(a), float(b))
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    return a == b


def _canon_key(value) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canon_key(v) for v in value) + "]"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return format(float(value), ".9e")
    if value is None:
        return "\x00"
    return "s:" + str(value)


def answers_equal(a, b, ordered: bool = False) -> bool:
    """Canonical answer comparison: numeric tolerance 1e-9 relative,
    order-insensitive for result lists unless ``ordered``."""
    a_list = isinstance(a, (list, tuple))
    b_list = isinstance(b, (list, tuple))
    if a_list != b_list:
        return False
    if not a_list:
        return _values_equal(a, b)
    if len(a) != len(b):
        return False
    if not ordered:
        a = sorted(a, key=_canon_key)
        b = sorted(b, key=_canon_key)
    return all(_values_equal(x, y) for x, y in zip(a, b))


# -- hardness -----------------------------------------------------------------


def hardness_of(pipeline: QdmrPipeline) -> str:
    """Component-count approximation of question hardness.

    Complexity components are GROUP/SORT/SUPERLATIVE steps; length counts
    steps beyond SELECT. The harder of the two signals wins:
    components 0/1/2/3+ and length <=2/3/4/5+ map to the four levels.
    """
    components = sum(
        1 for s in pipeline.steps if s.op in (Op.GROUP, Op.SORT, Op.SUPERLATIVE)
    )
    beyond = len(pipeline.steps) - 1
    by_components = min(components, 3)
    if beyond <= 2:
        by_length = 0
    elif beyond == 3:
        by_length = 1
    elif beyond == 4:
        by_length = 2
    else:
        by_length = 3
    return HARDNESS_LEVELS[max(by_components, by_length)]


# -- evaluation harness -------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    question: str
    dataset_ref: str
    gold_pipeline: str
    hardness: Optional[str] = None


@dataclass
class BucketStats:
    n: int = 0
    n_correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n if self.n else 0.0


@dataclass
class EvalSummary:
    buckets: dict[str, BucketStats] = field(default_factory=dict)
    overall: BucketStats = field(default_factory=BucketStats)
    failures: list[tuple[int, str]] = field(default_factory=list)
    metadata: dict = field(default_factory=lambda: {"hardness": "approximate-hardness"})

    def to_json(self) -> str:
        payload = {
            "overall": {
                "n": self.overall.n,
                "n_correct": self.overall.n_correct,
                "accuracy": self.overall.accuracy,
            },
            "per_hardness": {
                level: {
                    "n": stats.n,
                    "n_correct": stats.n_correct,
                    "accuracy": stats.accuracy,
                }
                for level, stats in self.buckets.items()
            },
            "metadata": self.metadata,
            "failures": self.failures,
        }
        return json.dumps(payload, indent=2)

    def format_table(self) -> str:
        headers = ["Easy", "Medium", "Hard", "Extra-Hard", "Overall"]
        cells = []
        for level in HARDNESS_LEVELS:
            stats = self.buckets.get(level, BucketStats())
            cells.append(f"{stats.accuracy * 100:.1f}% ({stats.n_correct}/{stats.n})")
        cells.append(
            f"{self.overall.accuracy * 100:.1f}% ({self.overall.n_correct}/{self.overall.n})"
        )
        width = max(len(h) for h in headers + cells) + 2
        line1 = "".join(h.ljust(width) for h in headers)
        line2 = "".join(c.ljust(width) for c in cells)
        return line1.rstrip() + "\n" + line2.rstrip()


def resolve_dataset_ref(ref: str) -> Dataset:
    """Load a dataset by reference: ``bundled:<name>`` or a directory path."""
    if ref.startswith("bundled:"):
        from .corpus import bundled_dataset

        return bundled_dataset(ref.split(":", 1)[1])
    from .ingest import load_dataset_dir

    return load_dataset_dir(ref)


_EMPTY = object()  # outcome marker for empty-input failures


def _outcome(pipeline: QdmrPipeline, dataset: Dataset):
    try:
        return execute(pipeline, dataset).answer
    except EmptyInput:
        return _EMPTY


def run_eval(
    corpus: list[EvalRecord],
    system_under_test: Callable[[EvalRecord], str],
    load_dataset: Callable[[str], Dataset] = resolve_dataset_ref,
) -> EvalSummary:
    """Execution accuracy of a question->pipeline system over a corpus.

    A record counts as correct when the generated pipeline parses,
    validates, and its executed answer equals the gold pipeline's answer
    under canonical comparison (order-insensitive unless the gold pipeline
    ends in SORT). Per-record failures are logged and count as incorrect;
    they never abort the run.
    """
    summary = EvalSummary()
    datasets: dict[str, Dataset] = {}
    for idx, record in enumerate(corpus):
        level = record.hardness
        correct = False
        try:
            if record.dataset_ref not in datasets:
                datasets[record.dataset_ref] = load_dataset(record.dataset_ref)
            dataset = datasets[record.dataset_ref]
            gold = parse(record.gold_pipeline)
            gold_report = validate(gold, dataset.schema)
            if not gold_report.valid:
                raise ValueError(f"gold pipeline invalid: {gold_report.summary()}")
            if level is None:
                level = hardness_of(gold)
            gold_outcome = _outcome(gold, dataset)
            try:
                candidate_text = system_under_test(record)
                candidate = parse(candidate_text)
                report = validate(candidate, dataset.schema)
                if report.valid:
                    cand_outcome = _outcome(candidate, dataset)
                    if gold_outcome is _EMPTY or cand_outcome is _EMPTY:
                        correct = gold_outcome is cand_outcome
                    else:
                        ordered = gold.steps[-1].op is Op.SORT
                        correct = answers_equal(cand_outcome, gold_outcome, ordered)
                else:
                    summary.failures.append((idx, f"candidate invalid: {report.summary()}"))
            except Exception as exc:
                summary.failures.append((idx, f"candidate failed: {exc}"))
        except Exception as exc:
            summary.failures.append((idx, f"record failed: {exc}"))
        if level is None:
            level = "easy"
        bucket = summary.buckets.setdefault(level, BucketStats())
        bucket.n += 1
        summary.overall.n += 1
        if correct:
            bucket.n_correct += 1
            summary.overall.n_correct += 1
    return summary
