from __future__ import annotations

import math

import pytest

from datamator.datamation.actions import (
    ChannelConflict,
    caption_for,
    channel_preferences,
    choose_channel,
    compile_actions,
    format_value,
)
from datamator.datamation.doc import (
    ACCENT_INDEX,
    doc_to_dict,
    doc_to_json,
    generate,
    validate_doc,
)
from datamator.datamation.layout import (
    Canvas,
    Rect,
    grid_shape,
    layout_grid,
    layout_grid_rect,
    layout_grouped,
    layout_matrix,
    layout_pack,
)
from datamator.datamation.svg import render_keyframe_svg
from datamator.executor import execute
from datamator.model import ColumnType, Dataset, Op, make_schema
from datamator.text import parse

from conftest import FIG2_TEXT, students_dataset

CANVAS = Canvas(640, 480)


def compiled(text, dataset):
    pipeline = parse(text)
    trace = execute(pipeline, dataset)
    return pipeline, trace, compile_actions(pipeline, trace, dataset)


# -- Table 1(b) mapping fidelity ----------------------------------------------

TABLE_1B = {
    Op.SELECT: {"data": {"select"}, "visual": {"layout"}, "annotation": set()},
    Op.PROJECT: {"data": set(), "visual": {"size", "color", "x_axis", "y_axis"}, "annotation": set()},
    Op.FILTER: {"data": {"filter"}, "visual": set(), "annotation": {"highlight", "hide"}},
    Op.SUPERLATIVE: {"data": {"filter"}, "visual": set(), "annotation": {"highlight", "hide"}},
    Op.AGGREGATE: {"data": {"aggregate"}, "visual": set(), "annotation": {"annotate"}},
    Op.GROUP: {"data": set(), "visual": {"x_axis", "y_axis"}, "annotation": {"annotate"}},
    Op.SORT: {"data": {"sort"}, "visual": set(), "annotation": set()},
}

PIPELINES_COVERING_ALL_OPS = [
    FIG2_TEXT,
    "SELECT['students']; SUPERLATIVE[#1, 'id', max]",
    "SELECT['students']; PROJECT['dept', #1]; GROUP[count, #1, #2]",
    "SELECT['students']; SORT[#1, 'name', desc]",
    "SELECT['students']; PROJECT['id', #1]; AGGREGATE[sum, #2]",
]


class TestTable1bFidelity:
    @pytest.mark.parametrize("text", PIPELINES_COVERING_ALL_OPS)
    def test_emitted_families_match_table(self, text):
        ds = students_dataset()
        pipeline, trace, stages = compiled(text, ds)
        per_op: dict[int, dict[str, set]] = {}
        for stage in stages:
            bucket = per_op.setdefault(
                stage.source_step, {"data": set(), "visual": set(), "annotation": set()}
            )
            for act in stage.actions:
                bucket[act.family].add(act.kind)
        for step_index, families in per_op.items():
            op = pipeline.steps[step_index - 1].op
            expected = TABLE_1B[op]
            for family in ("data", "visual", "annotation"):
                got = families[family]
                want = expected[family]
                if op in (Op.PROJECT, Op.GROUP) and family == "visual":
                    assert len(got) == 1 and got <= want, (op, family, got)
                else:
                    assert got == want, (op, family, got)

    def test_all_seven_ops_covered(self):
        seen = set()
        for text in PIPELINES_COVERING_ALL_OPS:
            for step in parse(text).steps:
                seen.add(step.op)
        assert seen == set(Op)


class TestCompile:
    def test_fig2_stage_sequence(self):
        ds = students_dataset()
        _, _, stages = compiled(FIG2_TEXT, ds)
        kinds = [[a.kind for a in s.actions] for s in stages]
        assert kinds == [
            ["select", "layout"],
            ["x_axis"],
            ["filter", "highlight"],
            ["hide"],
            ["aggregate", "annotate"],
        ]

    def test_select_only(self):
        ds = students_dataset()
        _, _, stages = compiled("SELECT['students']", ds)
        assert [[a.kind for a in s.actions] for s in stages] == [["select", "layout"]]

    def test_numerical_projection_binds_size(self):
        ds = students_dataset()
        _, _, stages = compiled("SELECT['students']; PROJECT['id', #1]", ds)
        assert [a.kind for a in stages[1].actions] == ["size"]

    def test_highlight_before_hide(self):
        ds = students_dataset()
        for text in [
            FIG2_TEXT,
            "SELECT['students']; SUPERLATIVE[#1, 'id', max]",
            "SELECT['students']; FILTER[#1, 'dept' = 'CS']; FILTER[#2, 'id' > 1]",
        ]:
            _, _, stages = compiled(text, ds)
            highlight_at = [
                i for i, s in enumerate(stages)
                if any(a.kind == "highlight" for a in s.actions)
            ]
            hide_at = [
                i for i, s in enumerate(stages)
                if any(a.kind == "hide" for a in s.actions)
            ]
            assert len(highlight_at) == len(hide_at)
            paired = {}
            for s, i in [(stages[i], i) for i in highlight_at + hide_at]:
                paired.setdefault(s.source_step, []).append(i)
            for indices in paired.values():
                assert indices[0] < indices[1]

    def test_data_before_visual_before_annotation_within_stage(self):
        ds = students_dataset()
        order = {"data": 0, "visual": 1, "annotation": 2}
        for text in PIPELINES_COVERING_ALL_OPS:
            _, _, stages = compiled(text, ds)
            for stage in stages:
                ranks = [order[a.family] for a in stage.actions]
                assert ranks == sorted(ranks)

    def test_channel_conflict_fallback(self):
        schema = make_schema(
            [
                (
                    "t",
                    [
                        ("c1", ColumnType.CATEGORICAL),
                        ("c2", ColumnType.CATEGORICAL),
                        ("c3", ColumnType.CATEGORICAL),
                        ("c4", ColumnType.CATEGORICAL),
                    ],
                )
            ]
        )
        rows = tuple((f"a{i}", f"b{i}", f"c{i}", f"d{i}") for i in range(3))
        ds = Dataset(schema, {"t": rows})
        text = (
            "SELECT['t']; PROJECT['c1', #1]; PROJECT['c2', #2]; "
            "PROJECT['c3', #3]; PROJECT['c4', #4]"
        )
        pipeline = parse(text)
        trace = execute(pipeline, ds)
        with pytest.raises(ChannelConflict):
            compile_actions(pipeline, trace, ds)

    def test_color_skipped_beyond_eight_categories(self):
        prefs = channel_preferences(ColumnType.CATEGORICAL, 9)
        assert "color" not in prefs
        prefs = channel_preferences(ColumnType.CATEGORICAL, 8)
        assert "color" in prefs

    def test_choose_channel_prefers_x_for_temporal(self):
        assert choose_channel(ColumnType.TEMPORAL, 3, {}, "when") == "x_axis"
        assert (
            choose_channel(ColumnType.TEMPORAL, 3, {"x_axis": "other"}, "when")
            == "y_axis"
        )


class TestCaptions:
    def test_aggregate_count_caption(self):
        ds = students_dataset()
        pipeline = parse(FIG2_TEXT)
        trace = execute(pipeline, ds)
        got = caption_for(
            pipeline.steps[3], trace.per_step[3], table="students", column="birth_year"
        )
        assert got == "the total count of the following students is 2"

    def test_filter_caption(self):
        ds = students_dataset()
        pipeline = parse(FIG2_TEXT)
        trace = execute(pipeline, ds)
        got = caption_for(
            pipeline.steps[2],
            trace.per_step[2],
            table="students",
            column="birth_year",
            column_type=ColumnType.TEMPORAL,
        )
        assert got == "keep the students whose birth_year is 2000"

    def test_select_caption(self):
        ds = students_dataset()
        pipeline = parse("SELECT['students']")
        trace = execute(pipeline, ds)
        got = caption_for(pipeline.steps[0], trace.per_step[0], table="students")
        assert got == "select all 4 records from students"

    def test_number_formatting(self):
        assert format_value(2.0) == "2"
        assert format_value(2000.5) == "2,000.5"
        assert format_value(1234567.0) == "1,234,567"
        assert format_value(3.14159) == "3.14"
        assert format_value(None) == "null"
        assert format_value("CS") == "CS"


class TestGridLayout:
    def test_perfect_square_symmetric(self):
        points, r = layout_grid(9, CANVAS, 12.0)
        assert grid_shape(9) == (3, 3)
        xs = sorted({p[0] for p in points})
        ys = sorted({p[1] for p in points})
        assert len(xs) == 3 and len(ys) == 3
        # symmetric about canvas center
        assert xs[1] == pytest.approx(CANVAS.cx)
        assert ys[1] == pytest.approx(CANVAS.cy)
        assert xs[0] + xs[2] == pytest.approx(2 * CANVAS.cx)

    def test_single_unit_centered(self):
        points, _ = layout_grid(1, CANVAS, 12.0)
        assert points == [(CANVAS.cx, CANVAS.cy)]

    def test_ten_units_hand_computed(self):
        # oracle: by the stated rule, cols=ceil(sqrt(10))=4, rows=3,
        # pitch=2.5r, block centered; last row holds 2 units
        r = 12.0
        points, r_eff = layout_grid(10, CANVAS, r)
        assert r_eff == r  # no shrink needed at this size
        cols, rows = grid_shape(10)
        assert (cols, rows) == (4, 3)
        pitch = 2.5 * r
        block_w = (2 * 4 + 0.5 * 3) * r
        block_h = (2 * 3 + 0.5 * 2) * r
        x0 = CANVAS.cx - block_w / 2 + r
        y0 = CANVAS.cy - block_h / 2 + r
        expected = [
            (x0 + (i % 4) * pitch, y0 + (i // 4) * pitch) for i in range(10)
        ]
        assert points == pytest.approx(expected)
        assert len([p for p in points if p[1] == points[-1][1]]) == 2

    def test_zero_units(self):
        assert layout_grid(0, CANVAS, 12.0)[0] == []

    def test_radius_shrinks_to_fit(self):
        points, r = layout_grid(400, CANVAS, 30.0)
        assert r < 30.0
        for x, y in points:
            assert CANVAS.margin - 1e-9 <= x - r and x + r <= CANVAS.width - CANVAS.margin + 1e-9
            assert CANVAS.margin - 1e-9 <= y - r and y + r <= CANVAS.height - CANVAS.margin + 1e-9


class TestPackLayout:
    def test_single_unit_centered(self):
        positions, radii = layout_pack([10.0], CANVAS)
        assert positions == [(CANVAS.cx, CANVAS.cy)]
        assert radii == [10.0]

    def test_two_equal_radii_touch_exactly(self):
        positions, radii = layout_pack([8.0, 8.0], CANVAS)
        d = math.dist(positions[0], positions[1])
        assert d == pytest.approx(radii[0] + radii[1], abs=1e-9)

    def test_random_radii_no_overlap(self):
        import random

        rng = random.Random(99)
        radii = [rng.uniform(3.0, 18.0) for _ in range(20)]
        positions, out_radii = layout_pack(radii, CANVAS)
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                d = math.dist(positions[i], positions[j])
                assert d >= out_radii[i] + out_radii[j] - 0.5

    def test_fits_canvas(self):
        import random

        rng = random.Random(7)
        radii = [rng.uniform(5.0, 25.0) for _ in range(120)]
        positions, out_radii = layout_pack(radii, CANVAS)
        for (x, y), r in zip(positions, out_radii):
            assert 0 <= x - r and x + r <= CANVAS.width
            assert 0 <= y - r and y + r <= CANVAS.height


class TestGroupedLayout:
    def test_three_bands_with_member_grids(self):
        groups = [("CS", [0, 2]), ("EE", [1]), ("ME", [3])]
        positions, radii, bands = layout_grouped(groups, "x", CANVAS, 12.0)
        assert [b.label for b in bands] == ["CS", "EE", "ME"]
        # members sit inside their band extent
        for band, (_, members) in zip(bands, groups):
            for m in members:
                assert band.start <= positions[m][0] <= band.end
        # per-band grid oracle: band CS holds a 2-unit grid centered in band
        cs = bands[0]
        sub_positions, _ = layout_grid_rect(
            2,
            Rect(cs.start, CANVAS.margin, cs.end - cs.start, CANVAS.avail_h),
            12.0,
        )
        got = [positions[0], positions[2]]
        want = sub_positions
        for g, w in zip(got, want):
            assert g[0] != w[0] or True  # placeholder replaced below
        # positions match the padded cell grid; recompute with the padding
        pad = min(cs.end - cs.start, CANVAS.avail_h) * 0.08
        inner = Rect(
            cs.start + pad, CANVAS.margin + pad,
            (cs.end - cs.start) - 2 * pad, CANVAS.avail_h - 2 * pad,
        )
        want, _ = layout_grid_rect(2, inner, 12.0)
        assert got == pytest.approx(want)

    def test_bands_partition_axis_exactly(self):
        groups = [(f"g{i}", [i]) for i in range(7)]
        _, _, bands = layout_grouped(groups, "x", CANVAS, 10.0)
        assert bands[0].start == pytest.approx(CANVAS.margin)
        assert bands[-1].end == pytest.approx(CANVAS.width - CANVAS.margin)
        for a, b in zip(bands, bands[1:]):
            assert a.end == pytest.approx(b.start, abs=1e-9)
        total = sum(b.end - b.start for b in bands)
        assert total == pytest.approx(CANVAS.avail_w, abs=1.0)

    def test_single_group_spans_full_width(self):
        _, _, bands = layout_grouped([("all", [0, 1, 2])], "x", CANVAS, 10.0)
        assert len(bands) == 1
        assert bands[0].end - bands[0].start == pytest.approx(CANVAS.avail_w)

    def test_two_by_two_matrix(self):
        members = {
            ("a", "x"): [0],
            ("a", "y"): [1],
            ("b", "x"): [2],
            ("b", "y"): [3],
        }
        positions, _, x_bands, y_bands = layout_matrix(
            ["a", "b"], ["x", "y"], members, CANVAS, 10.0
        )
        assert len(x_bands) == 2 and len(y_bands) == 2
        assert len(positions) == 4
        assert positions[0][0] < positions[2][0]  # a-cells left of b-cells
        assert positions[0][1] < positions[1][1]  # x-cells above y-cells


class TestGenerate:
    def test_fig2_doc_shape(self):
        ds = students_dataset()
        doc = generate(parse(FIG2_TEXT), ds)
        assert len(doc.stages) == 5
        assert len(doc.keyframes) == 6
        final = doc.keyframes[-1]
        assert [a.text for a in final.annotations] == ["2"]

    def test_select_only_two_frames(self):
        ds = students_dataset()
        doc = generate(parse("SELECT['students']"), ds)
        assert len(doc.stages) == 1
        assert len(doc.keyframes) == 2
        assert doc.keyframes[0].units == ()
        assert len(doc.keyframes[1].units) == 4

    def test_empty_filter_hides_all_and_counts_zero(self):
        ds = students_dataset()
        doc = generate(
            parse(
                "SELECT['students']; FILTER[#1, 'birth_year' > 2001]; "
                "AGGREGATE[count, #2]"
            ),
            ds,
        )
        hide_frame = doc.keyframes[3]
        assert all(u.opacity == 0.0 for u in hide_frame.units)
        final = doc.keyframes[-1]
        assert final.units == ()
        assert [a.text for a in final.annotations] == ["0"]

    def test_object_constancy(self):
        ds = students_dataset()
        doc = generate(parse(FIG2_TEXT), ds)
        prev_ids = None
        for frame in doc.keyframes[1:]:
            ids = {u.id for u in frame.units}
            if prev_ids is not None:
                assert ids <= prev_ids  # ids only ever disappear
            visible = {u.id for u in frame.units if u.opacity > 0}
            assert visible <= ids
            prev_ids = {u.id for u in frame.units if u.opacity > 0}

    def test_highlight_uses_accent_color(self):
        ds = students_dataset()
        doc = generate(parse(FIG2_TEXT), ds)
        highlight_frame = doc.keyframes[3]
        accents = {u.id for u in highlight_frame.units if u.color == ACCENT_INDEX}
        assert accents == {0, 2}

    def test_hidden_units_keep_position(self):
        ds = students_dataset()
        doc = generate(parse(FIG2_TEXT), ds)
        before = {u.id: (u.x, u.y) for u in doc.keyframes[3].units}
        after = {u.id: (u.x, u.y) for u in doc.keyframes[4].units}
        assert before == after

    def test_group_pipeline_bands_and_annotations(self):
        ds = students_dataset()
        doc = generate(
            parse("SELECT['students']; PROJECT['dept', #1]; GROUP[count, #1, #2]"), ds
        )
        final = doc.keyframes[-1]
        assert final.y_axis is not None  # categorical keys band the y axis
        assert [b.label for b in final.y_axis.bands] == ["CS", "EE", "ME"]
        assert {(a.group_key, a.text) for a in final.annotations} == {
            ("CS", "2"),
            ("EE", "1"),
            ("ME", "1"),
        }

    def test_sort_reorders_grid(self):
        ds = students_dataset()
        doc = generate(parse("SELECT['students']; SORT[#1, 'birth_year', desc]"), ds)
        frame = doc.keyframes[-1]
        by_id = {u.id: u for u in frame.units}
        # row 3 (Dee, 2001) takes the first grid slot: topmost then leftmost
        first = min(frame.units, key=lambda u: (u.y, u.x))
        assert first.id == 3

    def test_deterministic_byte_identical(self):
        ds = students_dataset()
        a = doc_to_json(generate(parse(FIG2_TEXT), ds))
        b = doc_to_json(generate(parse(FIG2_TEXT), ds))
        assert a == b

    def test_docs_validate_against_schema(self):
        ds = students_dataset()
        for text in PIPELINES_COVERING_ALL_OPS:
            validate_doc(doc_to_dict(generate(parse(text), ds)))

    def test_size_projection_packs_circles(self):
        ds = students_dataset()
        doc = generate(parse("SELECT['students']; PROJECT['id', #1]"), ds)
        frame = doc.keyframes[-1]
        radii = {u.id: u.radius for u in frame.units}
        assert radii[3] > radii[0]  # id 4 maps to a larger unit than id 1
        for u in frame.units:
            for v in frame.units:
                if u.id < v.id:
                    d = math.dist((u.x, u.y), (v.x, v.y))
                    assert d >= u.radius + v.radius - 0.5


class TestSvg:
    def test_renders_each_frame(self):
        ds = students_dataset()
        doc = generate(parse(FIG2_TEXT), ds)
        for i in range(len(doc.keyframes)):
            svg = render_keyframe_svg(doc, i)
            assert svg.startswith("<svg")
            assert svg.endswith("</svg>")
        final = render_keyframe_svg(doc, len(doc.keyframes) - 1)
        assert 'data-unit-id="0"' in final
        assert ">2</text>" in final
