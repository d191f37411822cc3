"""Compile executed pipelines into staged low-level actions.

Each operation expands into one or two stages of data, visual, and
annotation actions; within a stage the data action comes first, then
visual, then annotation. Filtering operations expand into two stages so
the matching units are highlighted before the rest are hidden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from ..executor import Trace
from ..model import (
    AttrArg,
    AttributeRef,
    ColumnType,
    CondArg,
    Op,
    Projection,
    QdmrPipeline,
    QdmrStep,
    Records,
    RefArg,
    Scalar,
    Schema,
    StepResult,
    SuperKind,
    Value,
    resolve_attribute,
)

DATA_KINDS = ("select", "filter", "aggregate", "sort")
VISUAL_KINDS = ("layout", "x_axis", "y_axis", "size", "color")
ANNOTATION_KINDS = ("highlight", "hide", "annotate")

FAMILY_OF = {
    **{k: "data" for k in DATA_KINDS},
    **{k: "visual" for k in VISUAL_KINDS},
    **{k: "annotation" for k in ANNOTATION_KINDS},
}

EASING = "slow-in-slow-out"
STAGE_MS = 1000
ANNOTATION_STAGE_MS = 400

MAX_COLOR_CATEGORIES = 8


class CompileError(Exception):
    pass


class ChannelConflict(CompileError):
    def __init__(self, column: str, bound: dict[str, str]):
        super().__init__(
            f"no free visual channel for {column!r}; bound: {bound}"
        )
        self.column = column


@dataclass(frozen=True)
class Action:
    family: str
    kind: str
    params: dict

    def __post_init__(self):
        if FAMILY_OF.get(self.kind) != self.family:
            raise ValueError(f"action kind {self.kind!r} is not in family {self.family!r}")


def action(kind: str, **params) -> Action:
    return Action(FAMILY_OF[kind], kind, params)


@dataclass(frozen=True)
class Stage:
    actions: tuple[Action, ...]
    duration_ms: int
    easing: str
    caption: str
    source_step: int  # 1-based pipeline step

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")


# -- captions -----------------------------------------------------------------


def _load_caption_resource() -> dict:
    text = (resources.files("datamator") / "resources" / "captions.json").read_text(
        encoding="utf-8"
    )
    return json.loads(text)


_CAPTIONS = _load_caption_resource()


def format_value(value: Value) -> str:
    """Numbers get thousands separators and at most two decimals."""
    if value is None:
        return "null"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        text = f"{float(value):,.2f}"
        if "." in text:
            text = text.rstrip("0").rstrip(".")
        return text
    return str(value)


def caption_for(
    step: QdmrStep,
    result: StepResult,
    *,
    table: str,
    column: Optional[str] = None,
    column_type: Optional[ColumnType] = None,
    key: Optional[str] = None,
    count: Optional[int] = None,
) -> str:
    """Fill the per-operation caption template."""
    templates = _CAPTIONS["templates"]
    if step.op is Op.SELECT:
        n = count if count is not None else len(result.row_ids)
        if column:
            return templates["select_column"].format(count=n, table=table, column=column)
        return templates["select"].format(count=n, table=table)
    if step.op is Op.PROJECT:
        return templates["project"].format(column=column, table=table)
    if step.op is Op.FILTER:
        cond: CondArg = step.args[1]
        cmp_word = _CAPTIONS["comparators"][cond.cmp.value]
        if column_type is ColumnType.TEMPORAL:
            from ..model import canonical_temporal_text

            literal = canonical_temporal_text(
                float(cond.literal.value)
                if cond.literal.kind == "number"
                else str(cond.literal.value)
            ) or str(cond.literal.value)
        elif cond.literal.kind == "number":
            literal = format_value(float(cond.literal.value))
        else:
            literal = str(cond.literal.value)
        return templates["filter"].format(
            table=table, column=column, cmp=cmp_word, literal=literal
        )
    if step.op is Op.SUPERLATIVE:
        extremum = "maximum" if step.args[2].kind is SuperKind.MAX else "minimum"
        return templates["superlative"].format(table=table, extremum=extremum, column=column)
    if step.op is Op.AGGREGATE:
        method = step.args[0].method
        value = format_value(result.value if isinstance(result, Scalar) else None)
        if method.value == "count" or column is None:
            return templates["aggregate_count"].format(table=table, value=value)
        return templates["aggregate"].format(
            method=_CAPTIONS["methods"][method.value],
            column=column,
            table=table,
            value=value,
        )
    if step.op is Op.GROUP:
        method = step.args[0].method
        if method.value == "count" or column is None:
            return templates["group_count"].format(table=table, key=key)
        return templates["group"].format(
            method=_CAPTIONS["methods"][method.value],
            column=column,
            table=table,
            key=key,
        )
    direction = "ascending" if step.args[2].dir.value == "asc" else "descending"
    return templates["sort"].format(table=table, column=column, direction=direction)


# -- channel policy -----------------------------------------------------------


def channel_preferences(ctype: ColumnType, n_distinct: int) -> list[str]:
    """Eligible channels in preference order (Table-driven policy:
    temporal prefers x, categorical prefers x then color, numbers map to
    size; color is skipped beyond 8 categories)."""
    if ctype is ColumnType.NUMERICAL:
        return ["size"]
    if ctype is ColumnType.TEMPORAL:
        return ["x_axis", "y_axis"]
    prefs = ["x_axis"]
    if n_distinct <= MAX_COLOR_CATEGORIES:
        prefs.append("color")
    prefs.append("y_axis")
    return prefs


def choose_channel(
    ctype: ColumnType, n_distinct: int, bound: dict[str, str], column: str
) -> str:
    if column in bound.values():
        # re-projecting an already-bound column reuses its channel
        for channel, col in bound.items():
            if col == column:
                return channel
    for channel in channel_preferences(ctype, n_distinct):
        if channel not in bound:
            return channel
    raise ChannelConflict(column, bound)


def group_axis(ctype: ColumnType, bound: dict[str, str], column: str) -> str:
    """GROUP keys: temporal keys band the x axis, categorical keys the y
    axis; fall back to the other axis when taken."""
    if column in bound.values():
        for channel, col in bound.items():
            if col == column and channel in ("x_axis", "y_axis"):
                return channel
    preferred = "x_axis" if ctype is ColumnType.TEMPORAL else "y_axis"
    other = "y_axis" if preferred == "x_axis" else "x_axis"
    if preferred not in bound:
        return preferred
    if other not in bound:
        return other
    raise ChannelConflict(column, bound)


# -- compilation --------------------------------------------------------------


def _resolve_scoped(name: str, schema: Schema, base_table: Optional[str]) -> AttributeRef:
    if base_table is not None and "." not in name:
        try:
            return resolve_attribute(f"{base_table}.{name}", schema)
        except Exception:
            pass
    return resolve_attribute(name, schema)


class _Compiler:
    def __init__(self, pipeline: QdmrPipeline, trace: Trace, dataset):
        self.pipeline = pipeline
        self.trace = trace
        self.schema = dataset.schema
        self.stages: list[Stage] = []
        self.bound: dict[str, str] = {}
        self.table = self.trace.per_step[0].table
        self.rows = dataset.table_rows(self.table)

    def column_name(self, step_index: int, arg) -> Optional[str]:
        """Display column for an AttrArg or projection RefArg."""
        if isinstance(arg, AttrArg):
            ref = _resolve_scoped(arg.name, self.schema, self.table)
            return ref.column_name
        result = self.trace.per_step[arg.step - 1]
        if isinstance(result, Projection):
            return result.column
        if isinstance(result, Records):
            return result.focus
        return None

    def column_type(self, column: str) -> ColumnType:
        return self.schema.table(self.table).column(column).type

    def distinct_count(self, column: str, row_ids: tuple[int, ...]) -> int:
        # distinct values the binding will need to encode
        table = self.schema.table(self.table)
        idx = table.column_index(column)
        return len({self.rows[r][idx] for r in row_ids})

    def compile(self) -> list[Stage]:
        for i, step in enumerate(self.pipeline.steps, start=1):
            getattr(self, f"op_{step.op.value.lower()}")(i, step)
        return self.stages

    def push(self, i: int, step, result, actions: list[Action], **caption_ctx) -> None:
        column = caption_ctx.get("column")
        if column is not None and "column_type" not in caption_ctx:
            caption_ctx["column_type"] = self.column_type(column)
        caption = caption_for(step, result, table=self.table, **caption_ctx)
        annotation_only = all(a.family == "annotation" for a in actions)
        self.stages.append(
            Stage(
                tuple(actions),
                ANNOTATION_STAGE_MS if annotation_only else STAGE_MS,
                EASING,
                caption,
                i,
            )
        )

    def op_select(self, i, step):
        result: Records = self.trace.per_step[i - 1]
        acts = [
            action("select", table=self.table, count=len(result.row_ids)),
            action("layout", layout="grid"),
        ]
        self.push(i, step, result, acts, column=result.focus)

    def _feeds_group_keys(self, i: int) -> bool:
        for later in self.pipeline.steps[i:]:
            if later.op is Op.GROUP and later.args[2].step == i:
                return True
        return False

    def op_project(self, i, step):
        result: Projection = self.trace.per_step[i - 1]
        column = result.column
        ctype = self.column_type(column)
        if self._feeds_group_keys(i):
            # a keys projection is the grouping view; use the group axis rule
            channel = group_axis(ctype, self.bound, column)
        else:
            n_distinct = self.distinct_count(column, result.row_ids)
            channel = choose_channel(ctype, n_distinct, self.bound, column)
        self.bound[channel] = column
        self.push(i, step, result, [action(channel, column=column)], column=column)

    def _two_stage_narrow(self, i, step, result, data_action: Action, column) -> None:
        input_ref = next(a for a in step.args if isinstance(a, RefArg))
        input_ids = self.trace.per_step[input_ref.step - 1].row_ids
        kept = set(result.row_ids)
        matching = [r for r in input_ids if r in kept]
        hidden = [r for r in input_ids if r not in kept]
        self.push(
            i, step, result,
            [data_action, action("highlight", unit_ids=matching)],
            column=column,
        )
        self.push(i, step, result, [action("hide", unit_ids=hidden)], column=column)

    def op_filter(self, i, step):
        result = self.trace.per_step[i - 1]
        cond: CondArg = step.args[1]
        column = self.column_name(i, cond.column)
        data_action = action(
            "filter",
            column=column,
            cmp=cond.cmp.value,
            literal=cond.literal.value,
        )
        self._two_stage_narrow(i, step, result, data_action, column)

    def op_superlative(self, i, step):
        result = self.trace.per_step[i - 1]
        column = self.column_name(i, step.args[1])
        data_action = action("filter", column=column, extremum=step.args[2].kind.value)
        self._two_stage_narrow(i, step, result, data_action, column)

    def op_aggregate(self, i, step):
        result: Scalar = self.trace.per_step[i - 1]
        method = step.args[0].method
        source = self.trace.per_step[step.args[1].step - 1]
        column = None
        if isinstance(source, Projection):
            column = source.column
        elif isinstance(source, Records):
            column = source.focus
        acts = [
            action("aggregate", method=method.value, value=result.value),
            action(
                "annotate",
                text=format_value(result.value),
                unit_ids=list(source.row_ids),
            ),
        ]
        self.push(i, step, result, acts, column=column, count=len(source.row_ids))

    def op_group(self, i, step):
        from ..model import Groups

        result: Groups = self.trace.per_step[i - 1]
        key_column = result.key_column
        ctype = self.column_type(key_column)
        axis = group_axis(ctype, self.bound, key_column)
        self.bound[axis] = key_column
        vals_source = self.trace.per_step[step.args[1].step - 1]
        column = None
        if isinstance(vals_source, Projection):
            column = vals_source.column
        elif isinstance(vals_source, Records):
            column = vals_source.focus
        annotations = [
            {"group_key": format_value(e.key), "text": format_value(e.aggregate)}
            for e in result.entries
        ]
        acts = [
            action(axis, column=key_column),
            action("annotate", groups=annotations),
        ]
        self.push(i, step, result, acts, column=column, key=key_column)

    def op_sort(self, i, step):
        result = self.trace.per_step[i - 1]
        column = self.column_name(i, step.args[1])
        acts = [action("sort", column=column, direction=step.args[2].dir.value)]
        self.push(i, step, result, acts, column=column)


def compile_actions(pipeline: QdmrPipeline, trace: Trace, dataset) -> list[Stage]:
    """Expand each executed operation into its action stages.

    The dataset supplies the schema (channel eligibility is keyed on
    column types) and the rows behind the color-channel distinct-value
    policy.
    """
    return _Compiler(pipeline, trace, dataset).compile()
