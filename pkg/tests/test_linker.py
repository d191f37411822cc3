from __future__ import annotations

import pytest

from datamator.linker import (
    ConstantScorer,
    LexicalScorer,
    RankedSchema,
    link,
    load_synonyms,
    neutral_ranking,
    serialize_schema,
)
from datamator.model import AttributeRef, ColumnType, make_schema


class TestSerializeSchema:
    def test_students_format(self, schema):
        out = serialize_schema(schema)
        assert out.text == (
            "<T> students | <C> id:num | <C> name:cat | <C> birth_year:tmp | <C> dept:cat"
        )

    def test_spans_cover_names(self, schema):
        out = serialize_schema(schema)
        for attr, (start, end) in out.spans:
            name = attr.column_name or attr.table_name
            assert out.text[start:end] == name

    def test_spans_disjoint(self, schema):
        out = serialize_schema(schema)
        ranges = sorted(span for _, span in out.spans)
        for (s1, e1), (s2, e2) in zip(ranges, ranges[1:]):
            assert e1 <= s2

    def test_two_tables_in_declaration_order(self):
        schema = make_schema(
            [
                ("alpha", [("x", ColumnType.NUMERICAL)]),
                ("beta", [("y", ColumnType.CATEGORICAL)]),
            ]
        )
        out = serialize_schema(schema)
        assert out.text == "<T> alpha | <C> x:num <T> beta | <C> y:cat"


class TestLexicalScorer:
    def test_worked_example_scores(self, schema):
        ranked = link("how many students were born in 2000?", schema)
        by_attr = {s.attribute.display(): s for s in ranked.scores}
        # exact token match on the table name
        assert by_attr["students"].p_rel == 1.0
        assert by_attr["students"].relevant
        # synonym born->birth scores the first token 0.9, averaged over 2 tokens
        assert by_attr["students.birth_year"].p_rel == pytest.approx(0.45)
        # ranked above the unmatched column
        order = [s.attribute.display() for s in ranked.scores]
        assert order.index("students.birth_year") < order.index("students.dept")

    def test_empty_question_rejected(self, schema):
        with pytest.raises(ValueError):
            link("", schema)

    def test_no_overlap_keeps_declaration_order(self, schema):
        ranked = link("zzz qqq xyzzy", schema)
        assert all(not s.relevant for s in ranked.scores)
        assert [s.attribute.display() for s in ranked.scores] == [
            "students",
            "students.id",
            "students.name",
            "students.birth_year",
            "students.dept",
        ]

    def test_exact_name_dominance(self, schema):
        ranked = link("average birth year of students", schema)
        by_attr = {s.attribute.display(): s.p_rel for s in ranked.scores}
        for attr, score in by_attr.items():
            if attr not in ("students", "students.birth_year"):
                assert by_attr["students.birth_year"] >= score

    def test_table_inherits_half_best_column(self):
        schema = make_schema(
            [("payroll", [("salary", ColumnType.NUMERICAL), ("city", ColumnType.CATEGORICAL)])]
        )
        ranked = link("what is the average salary?", schema)
        by_attr = {s.attribute.display(): s.p_rel for s in ranked.scores}
        assert by_attr["payroll.salary"] == 1.0
        assert by_attr["payroll"] == 0.5  # inherited, no token overlap of its own

    def test_determinism(self, schema):
        q = "how many students were born in 2000?"
        assert link(q, schema) == link(q, schema)

    def test_synonym_table_loads(self):
        table = load_synonyms()
        assert table["born"] == "birth"
        assert table["pay"] == "salary"


class TestScorerContract:
    def test_constant_scorer_yields_valid_ranking(self, schema):
        ranked = link("anything at all", schema, scorer=ConstantScorer(0.7))
        assert isinstance(ranked, RankedSchema)
        assert len(ranked.scores) == 5  # 1 table + 4 columns
        assert all(s.p_rel == 0.7 and s.relevant for s in ranked.scores)
        # declaration order preserved on full tie
        assert ranked.scores[0].attribute == AttributeRef("students")

    def test_threshold_boundary_is_relevant(self, schema):
        ranked = link("x", schema, scorer=ConstantScorer(0.5))
        assert all(s.relevant for s in ranked.scores)

    def test_out_of_range_scores_rejected(self, schema):
        with pytest.raises(ValueError):
            link("x", schema, scorer=ConstantScorer(1.5))

    def test_ranking_is_permutation(self, schema):
        ranked = link("students born in 2000", schema)
        names = sorted(s.attribute.display() for s in ranked.scores)
        assert names == [
            "students",
            "students.birth_year",
            "students.dept",
            "students.id",
            "students.name",
        ]

    def test_reordered_serialization_ranks_columns(self, schema):
        ranked = link("birth year please", schema)
        assert ranked.serialized.text.startswith("<T> students | <C> birth_year:tmp")


class TestNeutralRanking:
    def test_declaration_order_zero_scores(self, schema):
        ranked = neutral_ranking(schema)
        assert [s.p_rel for s in ranked.scores] == [0.0] * 5
        assert ranked.serialized.text == serialize_schema(schema).text
