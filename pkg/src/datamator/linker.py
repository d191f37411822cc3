"""Schema serialization and question-schema linking.

Scores every data attribute's relevance to a question, classifies
relevant/irrelevant against a threshold, and emits a relevance-ranked
schema for downstream decomposition. The default scorer is lexical
(token matching plus a small synonym table); any scorer producing [0,1]
probabilities can be plugged in behind the same interface.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol

from .model import AttributeRef, ColumnType, Schema, normalize_identifier

THETA = 0.5

_TYPE_ABBREV = {
    ColumnType.NUMERICAL: "num",
    ColumnType.CATEGORICAL: "cat",
    ColumnType.TEMPORAL: "tmp",
}

_WORD = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class SerializedSchema:
    text: str
    spans: tuple[tuple[AttributeRef, tuple[int, int]], ...]


@dataclass(frozen=True)
class LinkScore:
    attribute: AttributeRef
    p_rel: float
    relevant: bool


@dataclass(frozen=True)
class RankedSchema:
    scores: tuple[LinkScore, ...]
    serialized: SerializedSchema

    def relevant(self) -> tuple[LinkScore, ...]:
        return tuple(s for s in self.scores if s.relevant)

    def top_table(self) -> Optional[str]:
        for score in self.scores:
            if score.attribute.kind == "table":
                return score.attribute.table_name
        return None


def serialize_schema(schema: Schema, order: Optional[list[AttributeRef]] = None) -> SerializedSchema:
    """Emit ``<T> table | <C> col:type | ...`` with recorded name spans.

    ``order`` optionally reorders tables and the columns within each table;
    it never moves a column out of its table block.
    """
    table_order = [t.name for t in schema.tables]
    column_order = {t.name: [c.name for c in t.columns] for t in schema.tables}
    if order:
        seen_tables = [a.table_name for a in order if a.kind == "table"]
        table_order = seen_tables + [t for t in table_order if t not in seen_tables]
        for t in schema.tables:
            ranked = [
                a.column_name
                for a in order
                if a.kind == "column" and a.table_name == t.name
            ]
            column_order[t.name] = ranked + [
                c for c in column_order[t.name] if c not in ranked
            ]

    parts: list[str] = []
    spans: list[tuple[AttributeRef, tuple[int, int]]] = []
    pos = 0

    def emit(text: str) -> None:
        nonlocal pos
        parts.append(text)
        pos += len(text)

    for ti, tname in enumerate(table_order):
        table = schema.table(tname)
        if ti:
            emit(" ")
        emit("<T> ")
        spans.append((AttributeRef(tname), (pos, pos + len(tname))))
        emit(tname)
        for cname in column_order[tname]:
            col = table.column(cname)
            emit(" | <C> ")
            spans.append((AttributeRef(tname, cname), (pos, pos + len(cname))))
            emit(cname)
            emit(f":{_TYPE_ABBREV[col.type]}")
    return SerializedSchema("".join(parts), tuple(spans))


# -- scorers ------------------------------------------------------------------


class Scorer(Protocol):
    """Maps (question, schema) to a relevance probability per attribute."""

    def score_schema(self, question: str, schema: Schema) -> dict[AttributeRef, float]:
        ...


def question_tokens(question: str) -> list[str]:
    return _WORD.findall(question.lower())


def attribute_tokens(name: str) -> list[str]:
    return [t for t in normalize_identifier(name).split("_") if t]


def _strip_suffix(token: str) -> str:
    for suffix in ("ies", "ing", "ed", "es", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            if suffix == "ies":
                return token[: -len(suffix)] + "y"
            return token[: -len(suffix)]
    return token


def load_synonyms(path: Optional[str | Path] = None) -> dict[str, str]:
    """Read the term<TAB>stem synonym table ('#' starts a comment line)."""
    if path is None:
        path = Path(str(resources.files("datamator") / "resources" / "synonyms.txt"))
    table: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            term, stem = line.split("\t", 1)
        else:
            term, stem = line.split(None, 1)
        table[term.strip().lower()] = stem.strip().lower()
    return table


class LexicalScorer:
    """Deterministic lexical stand-in for a learned linking model.

    Per attribute-name token, the best question-token evidence wins:
    exact match 1.0, synonym-class match 0.9, prefix/stem match 0.8, or
    normalized edit similarity when it reaches 0.75. Token scores are
    averaged over the attribute's name tokens, and a table additionally
    inherits half of its best column score (columns often appear in
    questions whose table is never named).
    """

    def __init__(self, synonyms: Optional[dict[str, str]] = None):
        self.synonyms = load_synonyms() if synonyms is None else dict(synonyms)

    def _stem_class(self, token: str) -> str:
        stripped = _strip_suffix(token)
        return self.synonyms.get(stripped, stripped)

    def token_score(self, name_token: str, q_tokens: list[str]) -> float:
        best = 0.0
        name_class = self._stem_class(name_token)
        for q in q_tokens:
            if q == name_token:
                return 1.0
            score = 0.0
            if self._stem_class(q) == name_class:
                score = 0.9
            elif (
                len(q) >= 4
                and len(name_token) >= 4
                and (name_token.startswith(q) or q.startswith(name_token))
            ):
                score = 0.8
            else:
                ratio = difflib.SequenceMatcher(None, q, name_token).ratio()
                if ratio >= 0.75:
                    score = ratio
            best = max(best, score)
        return best

    def name_score(self, name: str, q_tokens: list[str]) -> float:
        tokens = attribute_tokens(name)
        if not tokens:
            return 0.0
        return sum(self.token_score(t, q_tokens) for t in tokens) / len(tokens)

    def score_schema(self, question: str, schema: Schema) -> dict[AttributeRef, float]:
        q_tokens = question_tokens(question)
        scores: dict[AttributeRef, float] = {}
        for table in schema.tables:
            col_scores = []
            for col in table.columns:
                s = self.name_score(col.name, q_tokens)
                scores[AttributeRef(table.name, col.name)] = s
                col_scores.append(s)
            own = self.name_score(table.name, q_tokens)
            inherited = 0.5 * max(col_scores) if col_scores else 0.0
            scores[AttributeRef(table.name)] = max(own, inherited)
        return scores


class ConstantScorer:
    """Stub scorer for contract tests."""

    def __init__(self, value: float):
        self.value = value

    def score_schema(self, question: str, schema: Schema) -> dict[AttributeRef, float]:
        out = {}
        for table in schema.tables:
            out[AttributeRef(table.name)] = self.value
            for col in table.columns:
                out[AttributeRef(table.name, col.name)] = self.value
        return out


# -- linking ------------------------------------------------------------------


def _declaration_order(schema: Schema) -> dict[AttributeRef, int]:
    order = {}
    i = 0
    for table in schema.tables:
        order[AttributeRef(table.name)] = i
        i += 1
        for col in table.columns:
            order[AttributeRef(table.name, col.name)] = i
            i += 1
    return order


def link(
    question: str,
    schema: Schema,
    scorer: Optional[Scorer] = None,
    theta: float = THETA,
) -> RankedSchema:
    """Score, classify, and rank every attribute of the schema.

    Scores sort non-increasing with ties broken by schema declaration
    order; an attribute is relevant when its probability reaches theta.
    """
    if not question:
        raise ValueError("question must be non-empty")
    scorer = scorer if scorer is not None else LexicalScorer()
    raw = scorer.score_schema(question, schema)
    decl = _declaration_order(schema)
    missing = [a for a in decl if a not in raw]
    if missing:
        raise ValueError(f"scorer did not score: {missing}")
    scores = []
    for attr in decl:
        p = float(raw[attr])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"score for {attr.display()} outside [0,1]: {p}")
        scores.append(LinkScore(attr, p, p >= theta))
    scores.sort(key=lambda s: (-s.p_rel, decl[s.attribute]))
    ranked_attrs = [s.attribute for s in scores]
    return RankedSchema(tuple(scores), serialize_schema(schema, ranked_attrs))


def neutral_ranking(schema: Schema) -> RankedSchema:
    """Declaration-order ranking with zero scores (no question context)."""
    decl = _declaration_order(schema)
    scores = tuple(LinkScore(a, 0.0, False) for a in decl)
    return RankedSchema(scores, serialize_schema(schema))
