"""Interpret a validated pipeline over a dataset, step by step.

Each step produces a :class:`StepResult` with full row provenance so the
datamation compiler can animate identity-stable units. Null handling is
SQL-like throughout: nulls never satisfy a comparison, are excluded from
aggregates (count counts non-null values when a column operand is present,
all rows otherwise), and sort after every non-null value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from .model import (
    AggMethod,
    AttrArg,
    AttributeRef,
    ColumnType,
    Comparator,
    CondArg,
    Dataset,
    DirArg,
    GroupEntry,
    Groups,
    Literal,
    MethodArg,
    Op,
    Projection,
    QdmrPipeline,
    QdmrStep,
    Records,
    RefArg,
    Scalar,
    Schema,
    SortDir,
    StepResult,
    SuperArg,
    SuperKind,
    Value,
    resolve_attribute,
    temporal_key,
)

Answer = Union[Value, list]


class ExecError(Exception):
    """Base class for execution failures."""


class TypeMismatch(ExecError):
    """Comparator or aggregate applied to an incompatible column.

    Defense in depth behind validation; a validated pipeline never hits it.
    """


class EmptyInput(ExecError):
    """Extremum or mean requested over zero comparable values."""


@dataclass(frozen=True)
class Trace:
    """Per-step results, index-aligned with the pipeline, plus the answer."""

    per_step: tuple[StepResult, ...]
    answer: Answer


def _resolve_column(name: str, schema: Schema, base_table: Optional[str]) -> AttributeRef:
    if base_table is not None and "." not in name:
        try:
            return resolve_attribute(f"{base_table}.{name}", schema)
        except Exception:
            pass
    return resolve_attribute(name, schema)


def _sort_value_key(value: Value, ctype: ColumnType):
    if ctype is ColumnType.TEMPORAL:
        return temporal_key(value)
    return value


def _coerce_literal(literal: Literal, ctype: ColumnType):
    """Literal comparison key for the given column type."""
    if ctype is ColumnType.NUMERICAL:
        if literal.kind != "number":
            raise TypeMismatch(f"cannot compare a numerical column to {literal.display()!r}")
        return float(literal.value)
    if ctype is ColumnType.TEMPORAL:
        key = temporal_key(
            float(literal.value) if literal.kind == "number" else str(literal.value)
        )
        if key is None:
            raise TypeMismatch(f"{literal.display()!r} is not a date or year")
        return key
    if literal.kind != "text":
        raise TypeMismatch(f"cannot compare a categorical column to {literal.display()!r}")
    return str(literal.value)


def _value_key(value: Value, ctype: ColumnType):
    """Comparison key for a cell value, or None when the value is null."""
    if value is None:
        return None
    if ctype is ColumnType.TEMPORAL:
        return temporal_key(value)
    return value


_CMP_FUNCS: dict[Comparator, Callable] = {
    Comparator.EQ: lambda a, b: a == b,
    Comparator.NEQ: lambda a, b: a != b,
    Comparator.GT: lambda a, b: a > b,
    Comparator.LT: lambda a, b: a < b,
    Comparator.GE: lambda a, b: a >= b,
    Comparator.LE: lambda a, b: a <= b,
}


class _Interpreter:
    def __init__(self, pipeline: QdmrPipeline, dataset: Dataset, tie_policy: str):
        if tie_policy not in ("keep_all", "first_by_row_order"):
            raise ValueError(f"unknown tie policy {tie_policy!r}")
        self.pipeline = pipeline
        self.dataset = dataset
        self.schema = dataset.schema
        self.tie_policy = tie_policy
        self.results: list[StepResult] = []
        self.base_table: Optional[str] = None

    def run(self) -> Trace:
        for step in self.pipeline.steps:
            handler = getattr(self, f"op_{step.op.value.lower()}")
            self.results.append(handler(step))
        return Trace(tuple(self.results), self.present(self.results[-1]))

    # -- step handlers --

    def op_select(self, step: QdmrStep) -> Records:
        ref = resolve_attribute(step.args[0].name, self.schema)
        self.base_table = ref.table_name
        n_rows = len(self.dataset.table_rows(ref.table_name))
        return Records(ref.table_name, tuple(range(n_rows)), focus=ref.column_name)

    def op_project(self, step: QdmrStep) -> Projection:
        name_arg, ref_arg = step.args
        source = self.input_result(ref_arg)
        col = _resolve_column(name_arg.name, self.schema, self.base_table)
        row_ids = source.row_ids
        values = self.column_values(col, row_ids)
        return Projection(col.table_name, col.column_name, row_ids, values)

    def op_filter(self, step: QdmrStep):
        ref_arg, cond = step.args
        source = self.input_result(ref_arg)
        keep = self.condition_mask(cond, source)
        return _subset(source, keep)

    def op_superlative(self, step: QdmrStep):
        ref_arg, col_arg, super_arg = step.args
        source = self.input_result(ref_arg)
        if not source.row_ids:
            raise EmptyInput("SUPERLATIVE over zero rows")
        values, ctype = self.column_operand(col_arg, source)
        keys = [_value_key(v, ctype) for v in values]
        comparable = [k for k in keys if k is not None]
        if not comparable:
            return _subset(source, [False] * len(keys))
        best = max(comparable) if super_arg.kind is SuperKind.MAX else min(comparable)
        mask = [k == best for k in keys]
        if self.tie_policy == "first_by_row_order":
            first = mask.index(True)
            mask = [i == first for i in range(len(mask))]
        return _subset(source, mask)

    def op_aggregate(self, step: QdmrStep) -> Scalar:
        method_arg, ref_arg = step.args
        source = self.input_result(ref_arg)
        values, ctype = self.operand_values(source)
        return Scalar(_aggregate(method_arg.method, source.row_ids, values, ctype, strict=True))

    def op_group(self, step: QdmrStep) -> Groups:
        method_arg, vals_ref, keys_ref = step.args
        vals_source = self.input_result(vals_ref)
        keys_result = self.results[keys_ref.step - 1]
        if not isinstance(keys_result, Projection):
            raise ExecError("GROUP keys must reference a projection")
        key_by_row = dict(zip(keys_result.row_ids, keys_result.values))
        operand_values, ctype = self.operand_values(vals_source)
        value_by_row: dict[int, Value] = {}
        if operand_values is not None:
            value_by_row = dict(zip(vals_source.row_ids, operand_values))

        order: list[Value] = []
        members: dict[Value, list[int]] = {}
        for rid in vals_source.row_ids:
            if rid not in key_by_row:
                raise ExecError("GROUP keys do not cover the grouped records")
            key = key_by_row[rid]
            if key not in members:
                members[key] = []
                order.append(key)
            members[key].append(rid)

        entries = []
        for key in order:
            rids = tuple(members[key])
            if operand_values is None:
                group_vals = None
            else:
                group_vals = tuple(value_by_row[r] for r in rids)
            agg = _aggregate(method_arg.method, rids, group_vals, ctype, strict=False)
            entries.append(GroupEntry(key, rids, agg))
        return Groups(vals_source.table, keys_result.column, tuple(entries))

    def op_sort(self, step: QdmrStep):
        ref_arg, name_arg, dir_arg = step.args
        source = self.input_result(ref_arg)
        col = _resolve_column(name_arg.name, self.schema, self.base_table)
        ctype = self.schema.table(col.table_name).column(col.column_name).type
        values = self.column_values(col, source.row_ids)
        keyed = list(zip(source.row_ids, values))
        non_null = [(r, v) for r, v in keyed if v is not None]
        nulls = [(r, v) for r, v in keyed if v is None]
        non_null.sort(
            key=lambda rv: _sort_value_key(rv[1], ctype),
            reverse=dir_arg.dir is SortDir.DESC,
        )
        new_order = [r for r, _ in non_null] + [r for r, _ in nulls]
        mask_order = {r: i for i, r in enumerate(new_order)}
        return _reorder(source, sorted(source.row_ids, key=lambda r: mask_order[r]))

    # -- helpers --

    def input_result(self, ref: RefArg) -> Union[Records, Projection]:
        result = self.results[ref.step - 1]
        if not isinstance(result, (Records, Projection)):
            raise ExecError(f"#{ref.step} is not a record set or projection")
        return result

    def column_values(self, col: AttributeRef, row_ids: tuple[int, ...]) -> tuple[Value, ...]:
        table = self.schema.table(col.table_name)
        idx = table.column_index(col.column_name)
        rows = self.dataset.table_rows(col.table_name)
        return tuple(rows[r][idx] for r in row_ids)

    def column_operand(self, col_arg, source) -> tuple[tuple[Value, ...], ColumnType]:
        """Values of a column argument (name or projection ref) over source rows."""
        if isinstance(col_arg, AttrArg):
            col = _resolve_column(col_arg.name, self.schema, self.base_table)
            ctype = self.schema.table(col.table_name).column(col.column_name).type
            return self.column_values(col, source.row_ids), ctype
        proj = self.results[col_arg.step - 1]
        if not isinstance(proj, Projection):
            raise ExecError(f"#{col_arg.step} is not a projection")
        by_row = dict(zip(proj.row_ids, proj.values))
        if any(r not in by_row for r in source.row_ids):
            raise ExecError(f"#{col_arg.step} does not cover the input records")
        ctype = self.schema.table(proj.table).column(proj.column).type
        return tuple(by_row[r] for r in source.row_ids), ctype

    def operand_values(self, source) -> tuple[Optional[tuple[Value, ...]], Optional[ColumnType]]:
        """Aggregate operand: projection values, or focus-column values, or none."""
        if isinstance(source, Projection):
            ctype = self.schema.table(source.table).column(source.column).type
            return source.values, ctype
        if source.focus is not None:
            col = AttributeRef(source.table, source.focus)
            ctype = self.schema.table(source.table).column(source.focus).type
            return self.column_values(col, source.row_ids), ctype
        return None, None

    def condition_mask(self, cond: CondArg, source) -> list[bool]:
        values, ctype = self.column_operand(cond.column, source)
        lit_key = _coerce_literal(cond.literal, ctype)
        if cond.cmp.is_ordering and ctype is ColumnType.CATEGORICAL:
            raise TypeMismatch(f"{cond.cmp.value} needs a numerical or temporal column")
        cmp_func = _CMP_FUNCS[cond.cmp]
        mask = []
        for v in values:
            key = _value_key(v, ctype)
            mask.append(key is not None and bool(cmp_func(key, lit_key)))
        return mask

    def present(self, result: StepResult) -> Answer:
        """The answer a result presents as: the paper-facing value shape."""
        if isinstance(result, Scalar):
            return result.value
        if isinstance(result, Projection):
            return list(result.values)
        if isinstance(result, Records):
            if result.focus is not None:
                col = AttributeRef(result.table, result.focus)
                return list(self.column_values(col, result.row_ids))
            rows = self.dataset.table_rows(result.table)
            return [list(rows[r]) for r in result.row_ids]
        return [(e.key, e.aggregate) for e in result.entries]


def _subset(source, mask: list[bool]):
    if isinstance(source, Projection):
        kept = [(r, v) for r, v, m in zip(source.row_ids, source.values, mask) if m]
        return Projection(
            source.table,
            source.column,
            tuple(r for r, _ in kept),
            tuple(v for _, v in kept),
        )
    kept_ids = tuple(r for r, m in zip(source.row_ids, mask) if m)
    return Records(source.table, kept_ids, focus=source.focus)


def _reorder(source, new_row_ids: list[int]):
    if isinstance(source, Projection):
        by_row = dict(zip(source.row_ids, source.values))
        return Projection(
            source.table,
            source.column,
            tuple(new_row_ids),
            tuple(by_row[r] for r in new_row_ids),
        )
    return Records(source.table, tuple(new_row_ids), focus=source.focus)


def _aggregate(
    method: AggMethod,
    row_ids: tuple[int, ...],
    values: Optional[tuple[Value, ...]],
    ctype: Optional[ColumnType],
    strict: bool,
) -> Value:
    """Aggregate non-null values; ``strict`` raises EmptyInput instead of None.

    count falls back to the row count when there is no column operand;
    count and sum of nothing are 0.
    """
    if method is AggMethod.COUNT:
        if values is None:
            return float(len(row_ids))
        return float(sum(1 for v in values if v is not None))
    if values is None:
        raise TypeMismatch(f"{method.value} needs a column operand")
    present = [v for v in values if v is not None]
    if method is AggMethod.SUM:
        return float(sum(float(v) for v in present))
    if not present:
        if strict:
            raise EmptyInput(f"{method.value} over zero values")
        return None
    if method in (AggMethod.MAX, AggMethod.MIN):
        keyed = [(_value_key(v, ctype), v) for v in present]
        chosen = max(keyed) if method is AggMethod.MAX else min(keyed)
        return chosen[1]
    nums = [float(v) for v in present]
    if method is AggMethod.AVG:
        return sum(nums) / len(nums)
    # median: mean of the two middle values for an even count
    nums.sort()
    mid = len(nums) // 2
    if len(nums) % 2 == 1:
        return nums[mid]
    return (nums[mid - 1] + nums[mid]) / 2.0


def execute(pipeline: QdmrPipeline, dataset: Dataset, tie_policy: str = "keep_all") -> Trace:
    """Evaluate the pipeline's steps in order and extract the answer.

    Callers are expected to validate first; runtime checks remain as a
    second line of defense. Pure function of its inputs.
    """
    return _Interpreter(pipeline, dataset, tie_policy).run()
