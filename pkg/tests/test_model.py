from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from datamator.model import (
    Ambiguous,
    AttributeRef,
    ColumnType,
    Dataset,
    Groups,
    GroupEntry,
    NotFound,
    QdmrPipeline,
    QdmrStep,
    Op,
    AttrArg,
    RefArg,
    Schema,
    canonical_temporal_text,
    make_schema,
    normalize_identifier,
    resolve_attribute,
    schema_of,
    temporal_key,
)


class TestResolveAttribute:
    def test_table_by_display_name(self, schema):
        assert resolve_attribute("Students", schema) == AttributeRef("students")

    def test_unique_column(self, schema):
        assert resolve_attribute("birth_year", schema) == AttributeRef(
            "students", "birth_year"
        )

    def test_display_spacing_matches_underscores(self, schema):
        assert resolve_attribute("Birth Year", schema) == AttributeRef(
            "students", "birth_year"
        )

    def test_absent_name(self, schema):
        with pytest.raises(NotFound):
            resolve_attribute("gpa", schema)

    def test_qualified_column(self, schema):
        assert resolve_attribute("students.dept", schema) == AttributeRef(
            "students", "dept"
        )

    def test_ambiguous_across_tables(self):
        schema = make_schema(
            [
                ("a", [("name", ColumnType.CATEGORICAL)]),
                ("b", [("name", ColumnType.CATEGORICAL)]),
            ]
        )
        with pytest.raises(Ambiguous):
            resolve_attribute("name", schema)
        # qualification disambiguates
        assert resolve_attribute("a.name", schema) == AttributeRef("a", "name")

    def test_deterministic(self, schema):
        assert resolve_attribute("dept", schema) == resolve_attribute("dept", schema)


class TestSchemaInvariants:
    def test_empty_schema_rejected(self):
        with pytest.raises(ValueError):
            Schema(())

    def test_duplicate_tables_rejected(self):
        with pytest.raises(ValueError):
            make_schema(
                [
                    ("t", [("a", ColumnType.NUMERICAL)]),
                    ("t", [("b", ColumnType.NUMERICAL)]),
                ]
            )

    def test_table_without_columns_rejected(self):
        with pytest.raises(ValueError):
            make_schema([("t", [])])


class TestDataset:
    def test_schema_of_returns_embedded_schema(self, dataset, schema):
        assert schema_of(dataset) == schema
        assert len(schema_of(dataset).tables) == 1
        assert len(schema_of(dataset).tables[0].columns) == 4

    def test_schema_of_ignores_rows(self, schema):
        empty = Dataset(schema, {"students": ()})
        assert schema_of(empty) == schema

    def test_two_table_schema_order_preserved(self):
        schema = make_schema(
            [
                ("first", [("x", ColumnType.NUMERICAL)]),
                ("second", [("y", ColumnType.NUMERICAL)]),
            ]
        )
        ds = Dataset(schema, {"first": ((1.0,),), "second": ((2.0,),)})
        assert [t.name for t in schema_of(ds).tables] == ["first", "second"]

    def test_ragged_row_rejected(self, schema):
        with pytest.raises(ValueError):
            Dataset(schema, {"students": ((1.0, "Amy", "2000"),)})

    def test_non_numeric_cell_rejected(self, schema):
        with pytest.raises(ValueError):
            Dataset(schema, {"students": (("oops", "Amy", "2000", "CS"),)})

    def test_bad_temporal_cell_rejected(self, schema):
        with pytest.raises(ValueError):
            Dataset(schema, {"students": ((1.0, "Amy", "May 2000", "CS"),)})

    def test_empty_string_becomes_null(self, schema):
        ds = Dataset(schema, {"students": ((1.0, "", "2000", "CS"),)})
        assert ds.cell("students", 0, "name") is None


class TestTemporal:
    def test_year_before_date_in_same_year(self):
        assert temporal_key("2000") < temporal_key("2000-01-01")

    def test_chronological_order(self):
        assert temporal_key("1999-12-31") < temporal_key("2000")
        assert temporal_key("2000-05-17") < temporal_key("2001")

    def test_number_year(self):
        assert temporal_key(2000.0) == (2000, 0, 0)
        assert temporal_key(2000.5) is None

    def test_canonical_text(self):
        assert canonical_temporal_text(2000.0) == "2000"
        assert canonical_temporal_text("2000-5-17") is None  # not zero-padded
        assert canonical_temporal_text("2000-05-17") == "2000-05-17"

    def test_garbage(self):
        assert temporal_key("May 2000") is None
        assert temporal_key("20000") is None


class TestPipelineInvariants:
    def test_must_start_with_select(self):
        step = QdmrStep(Op.PROJECT, (AttrArg("x"), RefArg(1)))
        with pytest.raises(ValueError):
            QdmrPipeline((step,))

    def test_forward_reference_rejected(self):
        select = QdmrStep(Op.SELECT, (AttrArg("t"),))
        bad = QdmrStep(Op.PROJECT, (AttrArg("x"), RefArg(2)))
        with pytest.raises(ValueError):
            QdmrPipeline((select, bad))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            QdmrPipeline(())


class TestGroupsInvariant:
    def test_overlapping_members_rejected(self):
        with pytest.raises(ValueError):
            Groups(
                "t",
                "k",
                (
                    GroupEntry("a", (0, 1), 2.0),
                    GroupEntry("b", (1,), 1.0),
                ),
            )


@given(st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd", "Zs"), whitelist_characters="_"), min_size=1, max_size=30))
def test_normalize_identifier_idempotent(name):
    once = normalize_identifier(name)
    assert normalize_identifier(once) == once
    assert "  " not in once and " " not in once
