from __future__ import annotations

from collections import Counter

import pytest

from datamator.executor import EmptyInput, Trace, execute
from datamator.model import Groups, Projection, Records, Scalar
from datamator.text import parse, validate

from conftest import FIG2_TEXT, STUDENT_ROWS


def run(text, dataset, **kwargs) -> Trace:
    pipeline = parse(text)
    report = validate(pipeline, dataset.schema, strict=False)
    assert report.valid, report.summary()
    return execute(pipeline, dataset, **kwargs)


class TestWorkedExample:
    def test_count_students_born_2000(self, dataset):
        # independent oracle: brute-force row enumeration
        expected = sum(1 for row in STUDENT_ROWS if row[2] == "2000")
        assert expected == 2
        trace = run(FIG2_TEXT, dataset)
        assert trace.answer == 2
        assert len(trace.per_step) == 4

    def test_step_results_carry_provenance(self, dataset):
        trace = run(FIG2_TEXT, dataset)
        assert isinstance(trace.per_step[0], Records)
        assert trace.per_step[0].row_ids == (0, 1, 2, 3)
        assert isinstance(trace.per_step[1], Projection)
        assert trace.per_step[1].values == ("2000", "1999", "2000", "2001")
        assert isinstance(trace.per_step[2], Projection)
        assert trace.per_step[2].row_ids == (0, 2)
        assert isinstance(trace.per_step[3], Scalar)


class TestSuperlative:
    def test_max_birth_year_unique(self, dataset):
        # oracle: enumerate — 2001 is the unique max, held by row 4 (Dee)
        years = [row[2] for row in STUDENT_ROWS]
        assert max(years) == "2001" and years.count("2001") == 1
        trace = run("SELECT['students']; SUPERLATIVE[#1, 'birth_year', max]", dataset)
        result = trace.per_step[-1]
        assert result.row_ids == (3,)
        assert trace.answer == [[4.0, "Dee", "2001", "ME"]]

    def test_ties_kept_by_default(self, dataset):
        trace = run("SELECT['students']; SUPERLATIVE[#1, 'birth_year', min]", dataset)
        assert trace.per_step[-1].row_ids == (1,)  # 1999 unique min
        trace = run(
            "SELECT['students']; FILTER[#1, 'birth_year' = 2000]; "
            "SUPERLATIVE[#2, 'birth_year', max]",
            dataset,
        )
        assert trace.per_step[-1].row_ids == (0, 2)  # both 2000 rows kept

    def test_first_by_row_order_policy(self, dataset):
        trace = run(
            "SELECT['students']; FILTER[#1, 'birth_year' = 2000]; "
            "SUPERLATIVE[#2, 'birth_year', max]",
            dataset,
            tie_policy="first_by_row_order",
        )
        assert trace.per_step[-1].row_ids == (0,)

    def test_empty_input_raises(self, dataset):
        with pytest.raises(EmptyInput):
            run(
                "SELECT['students']; FILTER[#1, 'birth_year' > 2001]; "
                "SUPERLATIVE[#2, 'birth_year', max]",
                dataset,
            )


class TestGroup:
    def test_count_by_dept(self, dataset):
        # oracle: Counter over the raw tuples
        expected = Counter(row[3] for row in STUDENT_ROWS)
        assert expected == {"CS": 2, "EE": 1, "ME": 1}
        trace = run(
            "SELECT['students']; PROJECT['dept', #1]; GROUP[count, #1, #2]", dataset
        )
        groups = trace.per_step[-1]
        assert isinstance(groups, Groups)
        assert {e.key: e.aggregate for e in groups.entries} == {
            "CS": 2,
            "EE": 1,
            "ME": 1,
        }
        assert trace.answer == [("CS", 2.0), ("EE", 1.0), ("ME", 1.0)]

    def test_groups_partition_input(self, dataset):
        trace = run(
            "SELECT['students']; PROJECT['dept', #1]; GROUP[count, #1, #2]", dataset
        )
        groups = trace.per_step[-1]
        members = [rid for e in groups.entries for rid in e.member_row_ids]
        assert sorted(members) == [0, 1, 2, 3]
        assert len(set(members)) == len(members)

    def test_avg_per_group(self, dataset):
        # oracle: brute-force per-dept mean of id
        by_dept = {}
        for row in STUDENT_ROWS:
            by_dept.setdefault(row[3], []).append(row[0])
        expected = {k: sum(v) / len(v) for k, v in by_dept.items()}
        trace = run(
            "SELECT['students']; PROJECT['id', #1]; PROJECT['dept', #1]; "
            "GROUP[avg, #2, #3]",
            dataset,
        )
        groups = trace.per_step[-1]
        assert {e.key: e.aggregate for e in groups.entries} == expected


class TestAggregate:
    def test_avg_birth_year_is_numeric_only(self, dataset):
        # avg over temporal column is rejected by validation; use id instead
        expected = sum(row[0] for row in STUDENT_ROWS) / 4
        trace = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[avg, #2]", dataset
        )
        assert trace.answer == pytest.approx(expected)

    def test_count_of_empty_filter_is_zero(self, dataset):
        trace = run(
            "SELECT['students']; FILTER[#1, 'birth_year' > 2001]; "
            "AGGREGATE[count, #2]",
            dataset,
        )
        assert trace.answer == 0

    def test_sum_of_empty_is_zero(self, dataset):
        trace = run(
            "SELECT['students']; FILTER[#1, 'id' > 99]; PROJECT['id', #2]; "
            "AGGREGATE[sum, #3]",
            dataset,
        )
        assert trace.answer == 0

    def test_max_over_temporal_returns_value(self, dataset):
        trace = run(
            "SELECT['students']; PROJECT['birth_year', #1]; AGGREGATE[max, #2]",
            dataset,
        )
        assert trace.answer == "2001"

    def test_median_even_count(self, dataset):
        # ids 1..4 -> median (2+3)/2
        trace = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[median, #2]", dataset
        )
        assert trace.answer == 2.5

    def test_avg_over_empty_raises(self, dataset):
        with pytest.raises(EmptyInput):
            run(
                "SELECT['students']; FILTER[#1, 'id' > 99]; PROJECT['id', #2]; "
                "AGGREGATE[avg, #3]",
                dataset,
            )


class TestSortAndFilter:
    def test_sort_desc(self, dataset):
        trace = run("SELECT['students']; SORT[#1, 'birth_year', desc]", dataset)
        years = [row[2] for row in trace.answer]
        assert years == sorted(years, reverse=True)

    def test_sort_stable_on_ties(self, dataset):
        trace = run("SELECT['students']; SORT[#1, 'birth_year', asc]", dataset)
        # 1999 first, then the two 2000 rows in original order (Amy before Cal)
        assert trace.per_step[-1].row_ids == (1, 0, 2, 3)

    def test_filter_subset_and_order(self, dataset):
        trace = run("SELECT['students']; FILTER[#1, 'dept' = 'CS']", dataset)
        assert trace.per_step[-1].row_ids == (0, 2)

    def test_filter_with_projection_column_ref(self, dataset):
        trace = run(
            "SELECT['students']; PROJECT['birth_year', #1]; FILTER[#1, #2 != 2000]",
            dataset,
        )
        assert trace.per_step[-1].row_ids == (1, 3)

    def test_nulls_never_match_and_sort_last(self, schema):
        from datamator.model import Dataset

        rows = (
            (1.0, "Amy", "2000", "CS"),
            (2.0, None, None, "EE"),
            (3.0, "Cal", "1999", None),
        )
        ds = Dataset(schema, {"students": rows})
        eq = run("SELECT['students']; FILTER[#1, 'birth_year' = 2000]", ds)
        assert eq.per_step[-1].row_ids == (0,)
        ne = run("SELECT['students']; FILTER[#1, 'birth_year' != 2000]", ds)
        assert ne.per_step[-1].row_ids == (2,)  # null excluded from != too
        s = run("SELECT['students']; SORT[#1, 'birth_year', desc]", ds)
        assert s.per_step[-1].row_ids == (0, 2, 1)  # null last

    def test_temporal_ordering_across_forms(self, schema):
        from datamator.model import Dataset

        rows = (
            (1.0, "a", "2000-06-15", "CS"),
            (2.0, "b", "2000", "CS"),
            (3.0, "c", "1999-12-31", "CS"),
        )
        ds = Dataset(schema, {"students": rows})
        trace = run("SELECT['students']; SORT[#1, 'birth_year', asc]", ds)
        assert trace.per_step[-1].row_ids == (2, 1, 0)


class TestInvariantsProperties:
    def test_monotone_shrink(self, dataset):
        trace = run("SELECT['students']; FILTER[#1, 'id' >= 2]", dataset)
        assert set(trace.per_step[1].row_ids) <= set(trace.per_step[0].row_ids)

    def test_extremum_witness(self, dataset):
        trace = run("SELECT['students']; SUPERLATIVE[#1, 'id', max]", dataset)
        winner_ids = trace.per_step[-1].row_ids
        all_vals = [row[0] for row in STUDENT_ROWS]
        for rid in winner_ids:
            assert STUDENT_ROWS[rid][0] == max(all_vals)

    def test_count_avg_sum_consistency(self, dataset):
        count = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[count, #2]", dataset
        ).answer
        total = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[sum, #2]", dataset
        ).answer
        avg = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[avg, #2]", dataset
        ).answer
        mn = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[min, #2]", dataset
        ).answer
        mx = run(
            "SELECT['students']; PROJECT['id', #1]; AGGREGATE[max, #2]", dataset
        ).answer
        assert abs(avg * count - total) <= 1e-9 * max(1.0, abs(total))
        assert mn <= avg <= mx

    def test_sort_is_permutation(self, dataset):
        trace = run("SELECT['students']; SORT[#1, 'name', desc]", dataset)
        assert sorted(trace.per_step[-1].row_ids) == [0, 1, 2, 3]

    def test_determinism(self, dataset):
        a = run(FIG2_TEXT, dataset)
        b = run(FIG2_TEXT, dataset)
        assert a == b

    def test_select_of_column_keeps_rows_with_focus(self, dataset):
        trace = run("SELECT['students.name']", dataset)
        records = trace.per_step[0]
        assert records.row_ids == (0, 1, 2, 3)
        assert records.focus == "name"
        assert trace.answer == ["Amy", "Bob", "Cal", "Dee"]
