"""Question decomposition: rule-based templates plus a remote-model client.

The rule patterns cover the common analytic question forms (counting,
aggregating, grouping, superlatives, sorting) and instantiate pipeline
templates with attributes chosen through the ranked schema. A remote
instruction-following model can supply beam candidates as a fallback; the
first candidate that parses and validates wins either way.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Protocol

import httpx

from .config import Config, RemoteModelConfig
from .linker import LexicalScorer, RankedSchema, link, question_tokens
from .model import (
    AttributeRef,
    ColumnType,
    Comparator,
    Dataset,
    QdmrPipeline,
    Schema,
)
from .text import NoValidCandidate, first_valid, parse, validate


class DecomposeError(Exception):
    pass


class NoPatternMatch(DecomposeError):
    def __init__(self, question: str):
        super().__init__(f"no rule pattern matches {question!r}")
        self.question = question


class Transport(DecomposeError):
    """Remote model unreachable or timed out."""


class Protocol_(DecomposeError):
    """Remote model returned a malformed response."""


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[tuple[str, float], ...]  # (pipeline text, score), best first
    source: str  # "rules" | "remote"

    def texts(self) -> list[str]:
        return [c[0] for c in self.candidates]


@dataclass(frozen=True)
class Resolution:
    pipeline: QdmrPipeline
    candidates: CandidateSet
    ranked: RankedSchema
    chosen_index: int


# -- span resolution ----------------------------------------------------------

_AGG_WORDS = {
    "maximum": "max", "max": "max", "highest": "max", "largest": "max",
    "minimum": "min", "min": "min", "lowest": "min", "smallest": "min",
    "average": "avg", "avg": "avg", "mean": "avg",
    "total": "sum", "sum": "sum",
    "median": "median",
    "number": "count", "count": "count",
}

_SUPER_WORDS = {
    "most": "max", "highest": "max", "maximum": "max", "largest": "max",
    "greatest": "max", "longest": "max", "biggest": "max",
    "least": "min", "lowest": "min", "minimum": "min", "smallest": "min",
    "fewest": "min", "shortest": "min",
}

# cmp-words scanned most-specific first
_CMP_WORDS: list[tuple[str, str]] = [
    ("at least", ">="),
    ("at most", "<="),
    ("is not", "!="),
    ("not", "!="),
    ("more than", ">"),
    ("greater than", ">"),
    ("less than", "<"),
    ("fewer than", "<"),
    ("over", ">"),
    ("above", ">"),
    ("under", "<"),
    ("below", "<"),
    ("after", ">"),
    ("before", "<"),
    ("equals", "="),
    ("equal to", "="),
    ("is", "="),
    ("in", "="),
    ("=", "="),
]

_STOPWORDS = {
    "the", "a", "an", "of", "all", "any", "each", "their", "its", "there",
    "are", "be", "been", "being", "do", "does", "did", "that",
    "who", "which", "was", "were", "have", "has", "had", "with",
}

_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class _SpanResolver:
    """Maps question spans to schema attributes via lexical scores, with
    the ranked schema breaking ties."""

    def __init__(self, schema: Schema, ranked: RankedSchema, scorer: LexicalScorer):
        self.schema = schema
        self.ranked = ranked
        self.scorer = scorer
        self.rank_of = {s.attribute: i for i, s in enumerate(ranked.scores)}

    def resolve_table(self, span: str) -> Optional[str]:
        tokens = question_tokens(span)
        best: Optional[tuple[float, int, str]] = None
        for table in self.schema.tables:
            score = self.scorer.name_score(table.name, tokens)
            if score < 0.5:
                continue
            key = (-score, self.rank_of[AttributeRef(table.name)], table.name)
            if best is None or key < best:
                best = key
        if best is not None:
            return best[2]
        return None

    def resolve_column(
        self, span: str, table: Optional[str] = None, types: Optional[tuple[ColumnType, ...]] = None,
        threshold: float = 0.4,
    ) -> Optional[AttributeRef]:
        tokens = question_tokens(span)
        best: Optional[tuple[float, int]] = None
        best_attr: Optional[AttributeRef] = None
        for t in self.schema.tables:
            if table is not None and t.name != table:
                continue
            for col in t.columns:
                if types is not None and col.type not in types:
                    continue
                score = self.scorer.name_score(col.name, tokens)
                if score < threshold:
                    continue
                attr = AttributeRef(t.name, col.name)
                key = (-score, self.rank_of[attr])
                if best is None or key < best:
                    best = key
                    best_attr = attr
        return best_attr

    def table_of(self, span: str, fallback_col: Optional[AttributeRef]) -> Optional[str]:
        table = self.resolve_table(span) if span else None
        if table:
            return table
        if fallback_col is not None:
            return fallback_col.table_name
        return self.ranked.top_table()


def _parse_condition(
    text: str, resolver: _SpanResolver, table: Optional[str]
) -> Optional[tuple[AttributeRef, str, str]]:
    """Parse "<col words> <cmp-word> <literal>" into pipeline condition parts."""
    tokens = text.strip().rstrip("?.!").split()
    lowered = [t.lower() for t in tokens]
    for phrase, op in _CMP_WORDS:
        words = phrase.split()
        for i in range(len(lowered) - len(words) + 1):
            if lowered[i : i + len(words)] == words:
                left = " ".join(t for t in tokens[:i] if t.lower() not in _STOPWORDS)
                right = " ".join(tokens[i + len(words):]).strip().strip("'\"")
                if not left or not right:
                    continue
                col = resolver.resolve_column(left, table)
                if col is None:
                    continue
                return col, op, right
    return None


def _literal_text(raw: str, col_type: ColumnType) -> str:
    raw = raw.strip().rstrip("?.!").strip("'\"")
    if col_type is ColumnType.CATEGORICAL:
        return f"'{raw}'"
    if _ISO_DATE.match(raw):
        return raw
    try:
        num = float(raw.replace(",", ""))
        if num.is_integer():
            return str(int(num))
        return repr(num)
    except ValueError:
        return f"'{raw}'"


# -- rule patterns ------------------------------------------------------------

_P1 = re.compile(
    r"^how many (?P<x>.+?)"
    r"(?:\s+(?:where|with|that|who|whose|which|were|was|are|is|have|has|had)\s+(?P<c>.+))?[?.!]?$",
    re.IGNORECASE,
)
_P2 = re.compile(
    r"^(?:what(?:'s| is| are)?|find|show(?: me)?|tell me|give me|compute|get)\s+(?:the\s+)?"
    r"(?P<agg>maximum|minimum|average|mean|total|sum|median|max|min|avg|highest|lowest|largest|smallest|number)"
    r"\s+(?:(?:number|value|amount)\s+)?(?:of\s+)?(?P<y>.+?)"
    r"(?:\s+(?:of|for|among)\s+(?:the\s+)?(?P<x>[\w ]+?))?"
    r"(?:\s+(?:where|with|whose|that|who|which|born|arriving|departing)\s+(?P<c>.+))?[?.!]?$",
    re.IGNORECASE,
)
_P3 = re.compile(
    r"^(?:what (?:is|are)\s+)?(?:the\s+)?"
    r"(?P<agg>maximum|minimum|average|mean|total|sum|median|max|min|avg|count|number)"
    r"\s+(?:of\s+)?(?P<y>.+?)\s+(?:for each|for every|by|per|grouped by|in each)\s+(?P<k>.+?)[?.!]?$",
    re.IGNORECASE,
)
_P4 = re.compile(
    r"^which (?P<x>.+?)\s+(?:has|have|had|got|with)\s+the\s+"
    r"(?P<s>most|least|highest|lowest|maximum|minimum|largest|smallest|greatest|fewest|longest|shortest|biggest)"
    r"\s*(?P<y>.*?)[?.!]?$",
    re.IGNORECASE,
)
_P5 = re.compile(
    r"^(?:list|show|display)(?:\s+(?:all|the|me))*\s+(?P<x>.+?)\s+"
    r"(?:sorted|ordered|arranged|ranked)\s+by\s+(?P<y>.+?)"
    r"(?:\s+in)?(?:\s+(?P<dir>asc|ascending|desc|descending))?(?:\s+order)?[?.!]?$",
    re.IGNORECASE,
)


def _quote(name: str) -> str:
    return "'" + name.replace("'", "''") + "'"


class _Rules:
    def __init__(self, schema: Schema, ranked: RankedSchema, scorer: Optional[LexicalScorer] = None):
        self.schema = schema
        self.resolver = _SpanResolver(schema, ranked, scorer or LexicalScorer())

    def filter_steps(self, table: str, cond, first_ref: int) -> Optional[list[str]]:
        """PROJECT + FILTER step pair for a parsed condition."""
        col, op, raw = cond
        col_type = self.schema.table(col.table_name).column(col.column_name).type
        if col_type is ColumnType.CATEGORICAL and op not in ("=", "!="):
            return None
        lit = _literal_text(raw, col_type)
        return [
            f"PROJECT[{_quote(col.column_name)}, #{first_ref}]",
            f"FILTER[#{first_ref + 1}, {_quote(col.column_name)} {op} {lit}]",
        ]

    def p1_count(self, m) -> Optional[str]:
        x, c = m.group("x"), m.group("c")
        table = self.resolver.table_of(x, None)
        if table is None:
            return None
        steps = [f"SELECT[{_quote(table)}]"]
        if c:
            cond = _parse_condition(c, self.resolver, table)
            if cond is not None:
                extra = self.filter_steps(table, cond, 1)
                if extra is None:
                    return None
                steps.extend(extra)
        steps.append(f"AGGREGATE[count, #{len(steps)}]")
        return "; ".join(steps)

    def p2_aggregate(self, m) -> Optional[str]:
        agg = _AGG_WORDS.get(m.group("agg").lower())
        if agg is None:
            return None
        y_span, x_span, c = m.group("y"), m.group("x"), m.group("c")
        types = (
            (ColumnType.NUMERICAL,)
            if agg in ("sum", "avg", "median")
            else (ColumnType.NUMERICAL, ColumnType.TEMPORAL)
            if agg in ("max", "min")
            else None
        )
        col = self.resolver.resolve_column(y_span, types=types)
        if col is None and agg != "count":
            return None
        table = self.resolver.table_of(x_span or "", col)
        if table is None:
            return None
        if col is not None and col.table_name != table:
            return None
        steps = [f"SELECT[{_quote(table)}]"]
        if c:
            cond = _parse_condition(c, self.resolver, table)
            if cond is not None:
                extra = self.filter_steps(table, cond, 1)
                if extra is None:
                    return None
                steps.extend(extra)
        if col is not None:
            steps.append(f"PROJECT[{_quote(col.column_name)}, #{len(steps)}]")
        steps.append(f"AGGREGATE[{agg}, #{len(steps)}]")
        return "; ".join(steps)

    def p3_group(self, m) -> Optional[str]:
        agg = _AGG_WORDS.get(m.group("agg").lower())
        if agg is None:
            return None
        y_span, k_span = m.group("y"), m.group("k")
        key = self.resolver.resolve_column(
            k_span, types=(ColumnType.CATEGORICAL, ColumnType.TEMPORAL)
        )
        if key is None:
            return None
        table = key.table_name
        if agg == "count":
            return "; ".join(
                [
                    f"SELECT[{_quote(table)}]",
                    f"PROJECT[{_quote(key.column_name)}, #1]",
                    "GROUP[count, #1, #2]",
                ]
            )
        val = self.resolver.resolve_column(y_span, table, types=(ColumnType.NUMERICAL,))
        if val is None:
            return None
        return "; ".join(
            [
                f"SELECT[{_quote(table)}]",
                f"PROJECT[{_quote(val.column_name)}, #1]",
                f"PROJECT[{_quote(key.column_name)}, #1]",
                f"GROUP[{agg}, #2, #3]",
            ]
        )

    def p4_superlative(self, m) -> Optional[str]:
        kind = _SUPER_WORDS.get(m.group("s").lower())
        if kind is None:
            return None
        x_span, y_span = m.group("x"), m.group("y")
        col = self.resolver.resolve_column(
            y_span or "", types=(ColumnType.NUMERICAL, ColumnType.TEMPORAL)
        )
        if col is None:
            return None
        table = self.resolver.table_of(x_span, col)
        if table is None or col.table_name != table:
            return None
        return (
            f"SELECT[{_quote(table)}]; "
            f"SUPERLATIVE[#1, {_quote(col.column_name)}, {kind}]"
        )

    def p5_sort(self, m) -> Optional[str]:
        x_span, y_span = m.group("x"), m.group("y")
        direction = (m.group("dir") or "asc").lower()
        direction = "desc" if direction.startswith("desc") else "asc"
        col = self.resolver.resolve_column(y_span)
        if col is None:
            return None
        table = self.resolver.table_of(x_span, col)
        if table is None or col.table_name != table:
            return None
        return (
            f"SELECT[{_quote(table)}]; "
            f"SORT[#1, {_quote(col.column_name)}, {direction}]"
        )


_PATTERNS = [
    ("P1", _P1, "p1_count"),
    ("P3", _P3, "p3_group"),  # before P2: "average Y by K" is a grouping
    ("P2", _P2, "p2_aggregate"),
    ("P4", _P4, "p4_superlative"),
    ("P5", _P5, "p5_sort"),
]


def decompose_rules(
    question: str, ranked: RankedSchema, schema: Schema
) -> CandidateSet:
    """Instantiate pipeline templates for every matching rule pattern.

    Candidates are ordered by pattern priority; each one is guaranteed to
    parse and validate against the schema.
    """
    rules = _Rules(schema, ranked)
    question = question.strip()
    candidates: list[tuple[str, float]] = []
    score = 1.0
    for _, pattern, method in _PATTERNS:
        m = pattern.match(question)
        if not m:
            continue
        text = getattr(rules, method)(m)
        if text is None:
            continue
        try:
            report = validate(parse(text), schema)
        except Exception:  # pragma: no cover - template bug guard
            continue
        if report.valid and text not in [c[0] for c in candidates]:
            candidates.append((text, score))
            score -= 0.1
    if not candidates:
        raise NoPatternMatch(question)
    return CandidateSet(tuple(candidates), "rules")


# -- remote client ------------------------------------------------------------


class RemoteModelClient(Protocol):
    def complete(self, prompt: str, n: int) -> list[tuple[str, float]]:
        ...


def load_prompt_template() -> str:
    return (resources.files("datamator") / "resources" / "prompt_template.txt").read_text(
        encoding="utf-8"
    )


class HttpModelClient:
    """POSTs {prompt, n} to an endpoint returning {"candidates":
    [{"text": ..., "score": ...}, ...]}."""

    def __init__(self, config: RemoteModelConfig):
        self.config = config

    def complete(self, prompt: str, n: int) -> list[tuple[str, float]]:
        headers = {}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        attempts = self.config.retry_budget + 1
        last_exc: Optional[Exception] = None
        for _ in range(attempts):
            try:
                response = httpx.post(
                    self.config.endpoint,
                    json={"prompt": prompt, "n": n},
                    headers=headers,
                    timeout=self.config.timeout_ms / 1000.0,
                )
                response.raise_for_status()
                payload = response.json()
                out = []
                for item in payload["candidates"]:
                    out.append((str(item["text"]), float(item.get("score", 0.0))))
                return out
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_exc = exc
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise Protocol_(f"malformed remote response: {exc}") from exc
            except httpx.HTTPStatusError as exc:
                raise Protocol_(f"remote returned {exc.response.status_code}") from exc
        raise Transport(f"remote model unreachable: {last_exc}") from last_exc


def decompose_remote(
    question: str, ranked: RankedSchema, client: RemoteModelClient, beam_size: int = 5
) -> CandidateSet:
    """Ask a remote model for up to ``beam_size`` candidate pipelines.

    The prompt embeds the ranked serialized schema verbatim; the ranking
    order is the information channel. Candidates come back in model-score
    order and are NOT filtered here; validation is the selector's job.
    """
    prompt = load_prompt_template().format(
        question=question, schema=ranked.serialized.text
    )
    raw = client.complete(prompt, beam_size)
    return CandidateSet(tuple(raw[:beam_size] if beam_size else raw), "remote")


# -- top-level resolution -----------------------------------------------------


def resolve(
    question: str,
    dataset: Dataset,
    config: Optional[Config] = None,
    client: Optional[RemoteModelClient] = None,
) -> Resolution:
    """Link, decompose (rules first, remote fallback), pick the first valid.

    Raises NoPatternMatch when neither route yields candidates, and
    NoValidCandidate when candidates exist but none validates.
    """
    config = config or Config()
    schema = dataset.schema
    ranked = link(question, schema, theta=config.theta)
    if client is None and config.remote is not None:
        client = HttpModelClient(config.remote)

    candidate_sets: list[CandidateSet] = []
    rules_error: Optional[NoPatternMatch] = None
    try:
        candidate_sets.append(decompose_rules(question, ranked, schema))
    except NoPatternMatch as exc:
        rules_error = exc
    if client is not None and (not candidate_sets or not config.rules_first):
        beam = config.remote.beam_size if config.remote else 5
        candidate_sets.append(decompose_remote(question, ranked, client, beam))

    if not candidate_sets:
        raise rules_error or NoPatternMatch(question)

    texts: list[str] = []
    merged: list[tuple[str, float]] = []
    for cset in candidate_sets:
        for text, score in cset.candidates:
            if text not in texts:
                texts.append(text)
                merged.append((text, score))
    source = candidate_sets[0].source if len(candidate_sets) == 1 else "rules+remote"
    index, pipeline = first_valid(texts, schema)
    return Resolution(pipeline, CandidateSet(tuple(merged), source), ranked, index)
