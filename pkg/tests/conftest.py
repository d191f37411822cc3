from __future__ import annotations

import pytest

from datamator.model import ColumnType, Dataset, make_schema

STUDENT_ROWS = [
    (1.0, "Amy", "2000", "CS"),
    (2.0, "Bob", "1999", "EE"),
    (3.0, "Cal", "2000", "CS"),
    (4.0, "Dee", "2001", "ME"),
]

FIG2_TEXT = (
    "SELECT['Students']; PROJECT['Birth Year', #1]; "
    "FILTER[#2, 'Birth Year' = 2000]; AGGREGATE[count, #3]"
)


def students_schema():
    return make_schema(
        [
            (
                "students",
                [
                    ("id", ColumnType.NUMERICAL),
                    ("name", ColumnType.CATEGORICAL),
                    ("birth_year", ColumnType.TEMPORAL),
                    ("dept", ColumnType.CATEGORICAL),
                ],
            )
        ]
    )


def students_dataset() -> Dataset:
    return Dataset(students_schema(), {"students": tuple(STUDENT_ROWS)})


@pytest.fixture
def schema():
    return students_schema()


@pytest.fixture
def dataset():
    return students_dataset()
