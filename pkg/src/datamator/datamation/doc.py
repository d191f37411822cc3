"""Datamation documents: staged actions plus key-frame geometry.

A document has one key-frame per stage boundary (stage count + 1; frame 0
is the empty canvas before the select stage plays). Unit ids are source
row ids and persist across frames, so a record can be tracked through the
whole animation; frames only ever drop ids after a hide stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from ..config import Config
from ..executor import Trace, execute
from ..model import (
    ColumnType,
    Dataset,
    Groups,
    QdmrPipeline,
    Value,
    temporal_key,
)
from .actions import Stage, compile_actions, format_value
from .layout import (
    Band,
    Canvas,
    layout_grid,
    layout_grouped,
    layout_matrix,
    layout_pack,
)

VERSION = "datamation/v1"

# 8 categorical colors + 1 accent (index 8); the UI owns final styling.
PALETTE = (
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759",
    "#76b7b2", "#edc949", "#b07aa1", "#9c755f",
    "#ff3b30",
)
ACCENT_INDEX = 8

BASE_RADIUS = 12.0
MIN_SIZE_FACTOR = 0.55
MAX_SIZE_FACTOR = 1.6


@dataclass(frozen=True)
class Unit:
    id: int
    x: float
    y: float
    radius: float
    color: int
    opacity: float


@dataclass(frozen=True)
class Axis:
    column: str
    bands: tuple[Band, ...]


@dataclass(frozen=True)
class Annotation:
    text: str
    unit_ids: Optional[tuple[int, ...]] = None
    group_key: Optional[str] = None


@dataclass(frozen=True)
class KeyFrame:
    units: tuple[Unit, ...]
    x_axis: Optional[Axis]
    y_axis: Optional[Axis]
    annotations: tuple[Annotation, ...]
    caption: str


@dataclass(frozen=True)
class DatamationDoc:
    stages: tuple[Stage, ...]
    keyframes: tuple[KeyFrame, ...]
    canvas: tuple[float, float]
    palette: tuple[str, ...]

    def __post_init__(self):
        if len(self.keyframes) != len(self.stages) + 1:
            raise ValueError("keyframe count must be stage count + 1")


def _round(v: float) -> float:
    return round(v, 2)


def _band_order(values: list[Value], ctype: ColumnType) -> list[Value]:
    """Distinct band keys: chronological for temporal, first-appearance
    otherwise; nulls band last."""
    seen: list[Value] = []
    for v in values:
        if v not in seen:
            seen.append(v)
    non_null = [v for v in seen if v is not None]
    nulls = [v for v in seen if v is None]
    if ctype is ColumnType.TEMPORAL:
        non_null.sort(key=temporal_key)
    return non_null + nulls


class _FrameBuilder:
    def __init__(self, pipeline: QdmrPipeline, trace: Trace, dataset: Dataset, canvas: Canvas):
        self.pipeline = pipeline
        self.trace = trace
        self.dataset = dataset
        self.canvas = canvas
        self.table = trace.per_step[0].table
        self.schema_table = dataset.schema.table(self.table)
        self.rows = dataset.table_rows(self.table)

        self.display_order: list[int] = []
        self.bound: dict[str, str] = {}
        self.color_map: dict[Value, int] = {}
        self.highlight: set[int] = set()
        self.prev_units: dict[int, Unit] = {}

    def cell(self, row_id: int, column: str) -> Value:
        idx = self.schema_table.column_index(column)
        return self.rows[row_id][idx]

    def column_type(self, column: str) -> ColumnType:
        return self.schema_table.column(column).type

    # -- per-stage application --

    def apply(self, stage: Stage) -> KeyFrame:
        result = self.trace.per_step[stage.source_step - 1]
        kinds = [a.kind for a in stage.actions]
        relayout = any(
            k in ("select", "sort", "aggregate", "layout", "x_axis", "y_axis", "size", "color")
            for k in kinds
        )
        hidden_now: set[int] = set()

        for act in stage.actions:
            if act.kind == "select":
                self.display_order = list(result.row_ids)
            elif act.kind in ("x_axis", "y_axis", "size", "color"):
                column = act.params["column"]
                self.bound[act.kind] = column
                if act.kind == "color" and not self.color_map:
                    self._assign_colors(column)
            elif act.kind == "sort":
                self.display_order = list(result.row_ids)
            elif act.kind == "highlight":
                self.highlight = set(act.params["unit_ids"])
            elif act.kind == "hide":
                hidden_now = set(act.params["unit_ids"])

        if relayout:
            self.highlight = set()
            units = self._layout()
        else:
            units = []
            for rid in self.display_order:
                prev = self.prev_units.get(rid)
                if prev is None:
                    continue
                opacity = 0.0 if rid in hidden_now else prev.opacity
                units.append(
                    Unit(rid, prev.x, prev.y, prev.radius, self._color_of(rid), opacity)
                )

        annotations = self._annotations(stage)
        frame = KeyFrame(
            tuple(units),
            self._axis_payload("x_axis", units),
            self._axis_payload("y_axis", units),
            annotations,
            stage.caption,
        )
        self.prev_units = {u.id: u for u in units}
        if hidden_now:
            self.display_order = [r for r in self.display_order if r not in hidden_now]
        return frame

    # -- geometry --

    def _sizes(self) -> Optional[dict[int, float]]:
        column = self.bound.get("size")
        if column is None:
            return None
        values = {rid: self.cell(rid, column) for rid in self.display_order}
        numeric = [v for v in values.values() if v is not None]
        if not numeric:
            return {rid: BASE_RADIUS for rid in self.display_order}
        lo, hi = min(numeric), max(numeric)
        span = (hi - lo) or 1.0
        out = {}
        for rid, v in values.items():
            if v is None:
                factor = MIN_SIZE_FACTOR
            else:
                factor = MIN_SIZE_FACTOR + (v - lo) / span * (MAX_SIZE_FACTOR - MIN_SIZE_FACTOR)
            out[rid] = BASE_RADIUS * factor
        return out

    def _group_result(self) -> Optional[Groups]:
        for result in reversed(self.trace.per_step):
            if isinstance(result, Groups):
                return result
        return None

    def _band_members(self, column: str) -> list[tuple[str, list[int]]]:
        ctype = self.column_type(column)
        values = [self.cell(rid, column) for rid in self.display_order]
        order = _band_order(values, ctype)
        members = {v: [] for v in order}
        for rid, v in zip(self.display_order, values):
            members[v].append(rid)
        return [(format_value(v) if v is not None else "null", members[v]) for v in order]

    def _layout(self) -> list[Unit]:
        sizes = self._sizes()
        x_col = self.bound.get("x_axis")
        y_col = self.bound.get("y_axis")
        self._bands_x: list[Band] = []
        self._bands_y: list[Band] = []

        if x_col and y_col:
            x_groups = self._band_members(x_col)
            y_groups = self._band_members(y_col)
            cell_members: dict[tuple[str, str], list[int]] = {}
            y_of = {}
            for label, rids in y_groups:
                for rid in rids:
                    y_of[rid] = label
            for x_label, rids in x_groups:
                for rid in rids:
                    cell_members.setdefault((x_label, y_of[rid]), []).append(rid)
            positions, radii, bx, by = layout_matrix(
                [g[0] for g in x_groups],
                [g[0] for g in y_groups],
                cell_members,
                self.canvas,
                BASE_RADIUS,
                sizes,
            )
            self._bands_x, self._bands_y = list(bx), list(by)
        elif x_col or y_col:
            axis = "x" if x_col else "y"
            groups = self._band_members(x_col or y_col)
            positions, radii, bands = layout_grouped(
                groups, axis, self.canvas, BASE_RADIUS, sizes
            )
            if axis == "x":
                self._bands_x = list(bands)
            else:
                self._bands_y = list(bands)
        elif sizes is not None:
            ordered = list(self.display_order)
            pos_list, rad_list = layout_pack([sizes[r] for r in ordered], self.canvas)
            positions = dict(zip(ordered, pos_list))
            radii = dict(zip(ordered, rad_list))
        else:
            pos_list, r = layout_grid(len(self.display_order), self.canvas, BASE_RADIUS)
            positions = dict(zip(self.display_order, pos_list))
            radii = {rid: r for rid in self.display_order}

        units = []
        for rid in self.display_order:
            x, y = positions[rid]
            units.append(
                Unit(rid, _round(x), _round(y), _round(radii[rid]), self._color_of(rid), 1.0)
            )
        return units

    def _assign_colors(self, column: str) -> None:
        mapping: dict[Value, int] = {}
        for rid in self.display_order:
            v = self.cell(rid, column)
            if v not in mapping:
                mapping[v] = len(mapping) % 8
        self.color_map = mapping

    def _color_of(self, rid: int) -> int:
        if rid in self.highlight:
            return ACCENT_INDEX
        column = self.bound.get("color")
        if column is not None and self.color_map:
            return self.color_map.get(self.cell(rid, column), 0)
        return 0

    def _axis_payload(self, channel: str, units: list[Unit]) -> Optional[Axis]:
        column = self.bound.get(channel)
        if column is None:
            return None
        bands = self._bands_x if channel == "x_axis" else self._bands_y
        return Axis(column, tuple(bands))

    def _annotations(self, stage: Stage) -> tuple[Annotation, ...]:
        out = []
        for act in stage.actions:
            if act.kind != "annotate":
                continue
            if "groups" in act.params:
                for entry in act.params["groups"]:
                    out.append(Annotation(entry["text"], group_key=entry["group_key"]))
            else:
                out.append(
                    Annotation(
                        act.params["text"], unit_ids=tuple(act.params.get("unit_ids", ()))
                    )
                )
        return tuple(out)


def build_frames(
    pipeline: QdmrPipeline, trace: Trace, dataset: Dataset, stages: list[Stage], canvas: Canvas
) -> list[KeyFrame]:
    builder = _FrameBuilder(pipeline, trace, dataset, canvas)
    frames = [KeyFrame((), None, None, (), "")]
    for stage in stages:
        frames.append(builder.apply(stage))
    return frames


def generate(
    pipeline: QdmrPipeline, dataset: Dataset, config: Optional[Config] = None
) -> DatamationDoc:
    """Execute, compile to stages, and lay out every key-frame.

    Deterministic: identical inputs produce identical documents.
    """
    config = config or Config()
    canvas = Canvas(float(config.canvas_width), float(config.canvas_height))
    trace = execute(pipeline, dataset, tie_policy=config.tie_policy)
    stages = compile_actions(pipeline, trace, dataset)
    frames = build_frames(pipeline, trace, dataset, stages, canvas)
    return DatamationDoc(
        tuple(stages), tuple(frames), (canvas.width, canvas.height), PALETTE
    )


# -- serialization ------------------------------------------------------------


def doc_to_dict(doc: DatamationDoc) -> dict:
    def frame_dict(frame: KeyFrame) -> dict:
        def axis_dict(axis: Optional[Axis]):
            if axis is None:
                return None
            return {
                "column": axis.column,
                "bands": [
                    {"label": b.label, "start": _round(b.start), "end": _round(b.end)}
                    for b in axis.bands
                ],
            }

        annotations = []
        for a in frame.annotations:
            entry: dict = {"text": a.text}
            if a.unit_ids is not None:
                entry["unit_ids"] = list(a.unit_ids)
            if a.group_key is not None:
                entry["group_key"] = a.group_key
            annotations.append(entry)
        return {
            "units": [
                {
                    "id": u.id,
                    "x": u.x,
                    "y": u.y,
                    "radius": u.radius,
                    "color": u.color,
                    "opacity": u.opacity,
                }
                for u in frame.units
            ],
            "axes": {"x": axis_dict(frame.x_axis), "y": axis_dict(frame.y_axis)},
            "annotations": annotations,
            "caption": frame.caption,
        }

    return {
        "version": VERSION,
        "canvas": {"width": doc.canvas[0], "height": doc.canvas[1]},
        "palette": list(doc.palette),
        "stages": [
            {
                "actions": [
                    {"family": a.family, "kind": a.kind, "params": a.params}
                    for a in stage.actions
                ],
                "duration_ms": stage.duration_ms,
                "easing": stage.easing,
                "caption": stage.caption,
                "source_step": stage.source_step,
            }
            for stage in doc.stages
        ],
        "keyframes": [frame_dict(f) for f in doc.keyframes],
    }


def doc_to_json(doc: DatamationDoc) -> str:
    return json.dumps(doc_to_dict(doc), separators=(",", ":"), sort_keys=True)


def load_doc_schema() -> dict:
    text = (
        resources.files("datamator") / "resources" / "datamation_v1.schema.json"
    ).read_text(encoding="utf-8")
    return json.loads(text)


def validate_doc(payload: dict) -> None:
    """Raise jsonschema.ValidationError when the payload is not a valid
    datamation/v1 document."""
    import jsonschema

    jsonschema.validate(payload, load_doc_schema())
