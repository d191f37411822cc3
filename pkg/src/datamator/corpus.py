"""Corpus tooling: bundled desk datasets, a seeded pipeline generator for
property tests and oracles, and JSONL corpus loading.

The bundled datasets are synthetic but mirror the shapes of the three desk
datasets used in the system's case studies (flights 168x9, graduates 136x9,
vehicles 389x9) plus the tiny four-row students table.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .ingest import load_dataset_dir
from .model import (
    AggMethod,
    AttrArg,
    Column,
    ColumnType,
    CondArg,
    Comparator,
    Dataset,
    DirArg,
    Literal,
    MethodArg,
    Op,
    QdmrPipeline,
    QdmrStep,
    RefArg,
    Schema,
    SortDir,
    SuperArg,
    SuperKind,
    Table,
)
from .sql import EvalRecord, hardness_of
from .text import serialize, validate

BUNDLED_DATASETS = ("students", "flights", "graduates", "vehicles")


def bundled_dataset_path(name: str) -> Path:
    if name not in BUNDLED_DATASETS:
        raise KeyError(f"no bundled dataset named {name!r}")
    return Path(str(resources.files("datamator") / "resources" / "datasets" / name))


def bundled_dataset(name: str) -> Dataset:
    return load_dataset_dir(bundled_dataset_path(name))


# -- pipeline generator -------------------------------------------------------


@dataclass
class PipelineGenerator:
    """Grammar-directed random pipelines that always validate.

    Identical seeds yield identical pipeline sequences. When a dataset is
    supplied, filter literals are drawn from actual column values so almost
    every generated pipeline executes without running out of rows.
    """

    seed: int
    max_steps: int
    schema: Schema
    dataset: Optional[Dataset] = None
    rng: random.Random = field(init=False)

    def __post_init__(self):
        self.rng = random.Random(self.seed)
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def _columns_of(table: Table, *types: ColumnType) -> list[Column]:
    if not types:
        return list(table.columns)
    return [c for c in table.columns if c.type in types]


def _literal_for(gen: PipelineGenerator, table: Table, col: Column, ordering: bool) -> Literal:
    rng = gen.rng
    values: list = []
    if gen.dataset is not None:
        idx = table.column_index(col.name)
        values = [
            row[idx] for row in gen.dataset.table_rows(table.name) if row[idx] is not None
        ]
    if col.type is ColumnType.NUMERICAL:
        if values:
            v = float(rng.choice(values))
        else:
            v = float(rng.randint(0, 100))
        return Literal.number(v)
    if col.type is ColumnType.TEMPORAL:
        if values:
            v = str(rng.choice(values))
        else:
            v = str(rng.randint(1990, 2024))
        if "-" in v:
            return Literal.temporal(v)
        return Literal.number(float(v))
    if values:
        return Literal.text(str(rng.choice(values)))
    return Literal.text(rng.choice(["alpha", "beta", "gamma"]))


def gen_pipeline(gen: PipelineGenerator) -> QdmrPipeline:
    """Emit one random pipeline; guaranteed to pass validation."""
    rng = gen.rng
    table = rng.choice(gen.schema.tables)
    steps: list[QdmrStep] = []

    focus: Optional[Column] = None
    if rng.random() < 0.15:
        focus = rng.choice(list(table.columns))
        steps.append(QdmrStep(Op.SELECT, (AttrArg(f"{table.name}.{focus.name}"),)))
    else:
        steps.append(QdmrStep(Op.SELECT, (AttrArg(table.name),)))

    # Chain tip state: 1-based index, result shape, and the column an
    # aggregate over the tip would apply to.
    tip = 1
    tip_kind = "records"
    tip_column: Optional[Column] = focus

    budget = rng.randint(0, gen.max_steps - 1)
    n_filters = 0

    def qualified(col: Column) -> str:
        return f"{table.name}.{col.name}"

    while budget > 0:
        budget -= 1
        choices = ["project", "sort"]
        if n_filters < 2:
            choices.append("filter")
        if _columns_of(table, ColumnType.NUMERICAL, ColumnType.TEMPORAL):
            choices.append("superlative")
        op = rng.choice(choices)
        if op == "project":
            col = rng.choice(list(table.columns))
            steps.append(QdmrStep(Op.PROJECT, (AttrArg(qualified(col)), RefArg(tip))))
            tip = len(steps)
            tip_kind = "projection"
            tip_column = col
        elif op == "filter":
            n_filters += 1
            if tip_kind == "projection" and rng.random() < 0.4:
                col = tip_column
                column_arg: AttrArg | RefArg = RefArg(tip)
            else:
                col = rng.choice(list(table.columns))
                column_arg = AttrArg(qualified(col))
            if col.type is ColumnType.CATEGORICAL:
                cmp = rng.choice([Comparator.EQ, Comparator.NEQ])
            else:
                cmp = rng.choice(list(Comparator))
            literal = _literal_for(gen, table, col, cmp.is_ordering)
            steps.append(QdmrStep(Op.FILTER, (RefArg(tip), CondArg(column_arg, cmp, literal))))
            tip = len(steps)
        elif op == "superlative":
            candidates = _columns_of(table, ColumnType.NUMERICAL, ColumnType.TEMPORAL)
            if (
                tip_kind == "projection"
                and tip_column is not None
                and tip_column.type in (ColumnType.NUMERICAL, ColumnType.TEMPORAL)
                and rng.random() < 0.4
            ):
                col_arg: AttrArg | RefArg = RefArg(tip)
            else:
                col_arg = AttrArg(qualified(rng.choice(candidates)))
            kind = rng.choice([SuperKind.MAX, SuperKind.MIN])
            steps.append(QdmrStep(Op.SUPERLATIVE, (RefArg(tip), col_arg, SuperArg(kind))))
            tip = len(steps)
        else:  # sort
            col = rng.choice(list(table.columns))
            direction = rng.choice([SortDir.ASC, SortDir.DESC])
            steps.append(
                QdmrStep(Op.SORT, (RefArg(tip), AttrArg(qualified(col)), DirArg(direction)))
            )
            tip = len(steps)

    # Terminal: aggregate, group, or bare chain.
    roll = rng.random()
    if roll < 0.45:
        methods = [AggMethod.COUNT]
        if tip_column is not None:
            if tip_column.type is ColumnType.NUMERICAL:
                methods = list(AggMethod)
            elif tip_column.type is ColumnType.TEMPORAL:
                methods = [AggMethod.COUNT, AggMethod.MAX, AggMethod.MIN]
        method = rng.choice(methods)
        steps.append(QdmrStep(Op.AGGREGATE, (MethodArg(method), RefArg(tip))))
    elif roll < 0.70:
        key_candidates = _columns_of(table, ColumnType.CATEGORICAL, ColumnType.TEMPORAL)
        if key_candidates:
            key = rng.choice(key_candidates)
            if rng.random() < 0.5:
                # count the tip's records per key
                steps.append(QdmrStep(Op.PROJECT, (AttrArg(qualified(key)), RefArg(tip))))
                steps.append(
                    QdmrStep(
                        Op.GROUP,
                        (MethodArg(AggMethod.COUNT), RefArg(tip), RefArg(len(steps))),
                    )
                )
            else:
                # aggregate a numeric projection per key
                numeric = _columns_of(table, ColumnType.NUMERICAL)
                if numeric:
                    val = rng.choice(numeric)
                    method = rng.choice(
                        [AggMethod.SUM, AggMethod.AVG, AggMethod.MAX, AggMethod.MIN]
                    )
                    steps.append(
                        QdmrStep(Op.PROJECT, (AttrArg(qualified(val)), RefArg(tip)))
                    )
                    steps.append(
                        QdmrStep(Op.PROJECT, (AttrArg(qualified(key)), RefArg(tip)))
                    )
                    steps.append(
                        QdmrStep(
                            Op.GROUP,
                            (
                                MethodArg(method),
                                RefArg(len(steps) - 1),
                                RefArg(len(steps)),
                            ),
                        )
                    )
                else:
                    steps.append(
                        QdmrStep(Op.PROJECT, (AttrArg(qualified(key)), RefArg(tip)))
                    )
                    steps.append(
                        QdmrStep(
                            Op.GROUP,
                            (MethodArg(AggMethod.COUNT), RefArg(tip), RefArg(len(steps))),
                        )
                    )

    pipeline = QdmrPipeline(tuple(steps))
    report = validate(pipeline, gen.schema)
    if not report.valid:  # pragma: no cover - generator bug guard
        raise AssertionError(f"generator emitted invalid pipeline: {report.summary()}")
    return pipeline


# -- corpus loading -----------------------------------------------------------


@dataclass(frozen=True)
class CorpusLoad:
    records: tuple[EvalRecord, ...]
    errors: tuple[tuple[int, str], ...]  # (line number, message)


def load_corpus(path: str | Path, validate_gold: bool = True) -> CorpusLoad:
    """Parse a JSON-lines corpus; collect per-line errors without aborting."""
    from .text import parse as parse_pipeline

    records: list[EvalRecord] = []
    errors: list[tuple[int, str]] = []
    datasets: dict[str, Dataset] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            record = EvalRecord(
                question=obj["question"],
                dataset_ref=obj["dataset_ref"],
                gold_pipeline=obj["gold_pipeline"],
                hardness=obj.get("hardness"),
            )
            if validate_gold:
                from .sql import resolve_dataset_ref

                if record.dataset_ref not in datasets:
                    datasets[record.dataset_ref] = resolve_dataset_ref(record.dataset_ref)
                dataset = datasets[record.dataset_ref]
                pipeline = parse_pipeline(record.gold_pipeline)
                report = validate(pipeline, dataset.schema)
                if not report.valid:
                    raise ValueError(f"gold pipeline invalid: {report.summary()}")
            records.append(record)
        except Exception as exc:
            errors.append((line_no, str(exc)))
    return CorpusLoad(tuple(records), tuple(errors))


def write_corpus(records: list[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "question": r.question,
                "dataset_ref": r.dataset_ref,
                "gold_pipeline": r.gold_pipeline,
            }
            if r.hardness:
                obj["hardness"] = r.hardness
            fh.write(json.dumps(obj) + "\n")


def make_synthetic_corpus(
    n: int, seed: int, dataset_names: tuple[str, ...] = ("flights", "graduates", "vehicles")
) -> list[EvalRecord]:
    """Generate an n-record corpus over bundled datasets, covering every
    hardness bucket when n allows it."""
    rng = random.Random(seed)
    gens = []
    for name in dataset_names:
        ds = bundled_dataset(name)
        gens.append((name, ds, PipelineGenerator(seed, 6, ds.schema, ds)))
    records: list[EvalRecord] = []
    bucket_counts: dict[str, int] = {}
    want_each = max(1, n // 10)
    attempts = 0
    while len(records) < n and attempts < n * 50:
        attempts += 1
        name, ds, gen = gens[rng.randrange(len(gens))]
        pipeline = gen_pipeline(gen)
        hardness = hardness_of(pipeline)
        remaining = n - len(records)
        missing = sum(
            max(0, want_each - bucket_counts.get(b, 0))
            for b in ("easy", "medium", "hard", "extra_hard")
        )
        if bucket_counts.get(hardness, 0) >= want_each and remaining <= missing:
            continue  # hold space for under-filled buckets
        text = serialize(pipeline)
        records.append(
            EvalRecord(
                question=f"[synthetic] {text}",
                dataset_ref=f"bundled:{name}",
                gold_pipeline=text,
                hardness=hardness,
            )
        )
        bucket_counts[hardness] = bucket_counts.get(hardness, 0) + 1
    return records
