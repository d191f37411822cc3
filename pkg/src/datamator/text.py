"""Concrete textual grammar for analysis pipelines.

Grammar::

    pipeline := step (";" step)*
    step     := OPNAME "[" arg ("," arg)* "]"
    arg      := "'" text "'" | "#" int | column CMP literal
              | methodname | "asc" | "desc" | "max" | "min"
    column   := "'" text "'" | "#" int
    CMP      := "=" | "!=" | ">" | "<" | ">=" | "<="
    literal  := "'" text "'" | number | ISO-date

Step references (``#k``) are 1-based in textual order and may only point to
earlier steps. Condition literals are typed by shape: quoted text, bare
number, or an unquoted ISO date. The grammar is a public, stable format
shared by the CLI, the HTTP service, and evaluation corpora.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .model import (
    AggMethod,
    Ambiguous,
    AttrArg,
    AttributeRef,
    ColumnType,
    Comparator,
    CondArg,
    DirArg,
    Literal,
    MethodArg,
    NotFound,
    Op,
    QdmrPipeline,
    QdmrStep,
    RefArg,
    Schema,
    SortDir,
    SuperArg,
    SuperKind,
    resolve_attribute,
)

# Expected argument kinds per operation, by position.
# "name" = quoted attribute, "ref" = #k, "cond" = comparison,
# "method"/"dir"/"super" = bare keywords, "column" = name or ref.
_SIGNATURES: dict[Op, tuple[str, ...]] = {
    Op.SELECT: ("name",),
    Op.PROJECT: ("name", "ref"),
    Op.FILTER: ("ref", "cond"),
    Op.SUPERLATIVE: ("ref", "column", "super"),
    Op.AGGREGATE: ("method", "ref"),
    Op.GROUP: ("method", "ref", "ref"),
    Op.SORT: ("ref", "name", "dir"),
}

_METHOD_WORDS = {m.value for m in AggMethod}
_DIR_WORDS = {d.value for d in SortDir}
_CMP_BY_TEXT = {c.value: c for c in Comparator}


class ParseError(Exception):
    """Parse failure with a source position and a stable kind."""

    KINDS = ("Lexical", "UnknownOp", "BadArity", "BadArgKind", "ForwardRef", "DanglingRef")

    def __init__(self, position: tuple[int, int], kind: str, message: str):
        assert kind in self.KINDS
        super().__init__(f"{kind} at {position[0]}:{position[1]}: {message}")
        self.position = position
        self.kind = kind
        self.message = message


@dataclass(frozen=True)
class Violation:
    rule_id: str
    step_index: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.valid:
            return "valid"
        return "; ".join(f"{v.rule_id}@{v.step_index}: {v.message}" for v in self.violations)


class NoValidCandidate(Exception):
    """No beam candidate parsed and validated."""

    def __init__(self, failures: list[tuple[int, str]]):
        self.failures = failures
        lines = ", ".join(f"[{i}] {msg}" for i, msg in failures)
        super().__init__(f"no valid candidate: {lines}")


# -- lexer --------------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # STRING REF CMP WORD NUMBER DATE PUNCT EOF
    value: Union[str, float, int]
    pos: tuple[int, int]


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def here() -> tuple[int, int]:
        return (line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start = here()
        if ch == "'":
            j = i + 1
            buf = []
            while j < n:
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":  # doubled quote escape
                        buf.append("'")
                        j += 2
                        continue
                    break
                if text[j] == "\n":
                    raise ParseError(start, "Lexical", "unterminated string")
                buf.append(text[j])
                j += 1
            else:
                raise ParseError(start, "Lexical", "unterminated string")
            tokens.append(_Token("STRING", "".join(buf), start))
            col += (j + 1) - i
            i = j + 1
            continue
        if ch == "#":
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            if j == i + 1:
                raise ParseError(start, "Lexical", "expected digits after '#'")
            tokens.append(_Token("REF", int(text[i + 1 : j]), start))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in (">=", "<=", "!="):
            tokens.append(_Token("CMP", two, start))
            i += 2
            col += 2
            continue
        if ch in "=<>":
            tokens.append(_Token("CMP", ch, start))
            i += 1
            col += 1
            continue
        if ch in "[],;":
            tokens.append(_Token("PUNCT", ch, start))
            i += 1
            col += 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1 if ch == "-" else i
            while j < n and text[j].isdigit():
                j += 1
            # ISO date: exactly 4 digits then -MM-DD
            if (
                ch != "-"
                and j - i == 4
                and text[j : j + 1] == "-"
                and _looks_like_date(text, i)
            ):
                tokens.append(_Token("DATE", text[i : i + 10], start))
                col += 10
                i += 10
                continue
            k = j
            if k < n and text[k] == "." and k + 1 < n and text[k + 1].isdigit():
                k += 1
                while k < n and text[k].isdigit():
                    k += 1
            if k < n and text[k] in "eE":
                m = k + 1
                if m < n and text[m] in "+-":
                    m += 1
                if m < n and text[m].isdigit():
                    while m < n and text[m].isdigit():
                        m += 1
                    k = m
            tokens.append(_Token("NUMBER", float(text[i:k]), start))
            col += k - i
            i = k
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("WORD", text[i:j], start))
            col += j - i
            i = j
            continue
        raise ParseError(start, "Lexical", f"unexpected character {ch!r}")
    tokens.append(_Token("EOF", "", here()))
    return tokens


def _looks_like_date(text: str, i: int) -> bool:
    cand = text[i : i + 10]
    if len(cand) != 10:
        return False
    return (
        cand[4] == "-"
        and cand[7] == "-"
        and cand[:4].isdigit()
        and cand[5:7].isdigit()
        and cand[8:10].isdigit()
    )


# -- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_punct(self, ch: str) -> _Token:
        tok = self.next()
        if tok.kind != "PUNCT" or tok.value != ch:
            raise ParseError(tok.pos, "Lexical", f"expected {ch!r}")
        return tok

    def parse_pipeline(self) -> QdmrPipeline:
        steps = [self.parse_step(1)]
        while self.peek().kind == "PUNCT" and self.peek().value == ";":
            self.next()
            steps.append(self.parse_step(len(steps) + 1))
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError(tok.pos, "Lexical", "trailing input after pipeline")
        return QdmrPipeline(tuple(steps))

    def parse_step(self, index: int) -> QdmrStep:
        tok = self.next()
        if tok.kind != "WORD":
            raise ParseError(tok.pos, "Lexical", "expected operation name")
        try:
            op = Op(tok.value)
        except ValueError:
            raise ParseError(tok.pos, "UnknownOp", f"unknown operation {tok.value!r}")
        op_pos = tok.pos
        self.expect_punct("[")
        raw_args: list[tuple[object, tuple[int, int]]] = [self.parse_arg(index)]
        while self.peek().kind == "PUNCT" and self.peek().value == ",":
            self.next()
            raw_args.append(self.parse_arg(index))
        self.expect_punct("]")
        return _coerce_step(op, raw_args, op_pos, index)

    def parse_arg(self, step_index: int) -> tuple[object, tuple[int, int]]:
        tok = self.next()
        if tok.kind == "STRING":
            if self.peek().kind == "CMP":
                return (self.parse_condition(AttrArg(str(tok.value)), step_index), tok.pos)
            return (AttrArg(str(tok.value)), tok.pos)
        if tok.kind == "REF":
            ref = _checked_ref(int(tok.value), step_index, tok.pos)
            if self.peek().kind == "CMP":
                return (self.parse_condition(ref, step_index), tok.pos)
            return (ref, tok.pos)
        if tok.kind == "WORD":
            return (str(tok.value), tok.pos)
        raise ParseError(tok.pos, "Lexical", "expected argument")

    def parse_condition(self, column: Union[AttrArg, RefArg], step_index: int) -> CondArg:
        cmp_tok = self.next()
        cmp = _CMP_BY_TEXT[str(cmp_tok.value)]
        lit_tok = self.next()
        if lit_tok.kind == "STRING":
            literal = Literal.text(str(lit_tok.value))
        elif lit_tok.kind == "NUMBER":
            literal = Literal.number(float(lit_tok.value))
        elif lit_tok.kind == "DATE":
            literal = Literal.temporal(str(lit_tok.value))
        else:
            raise ParseError(lit_tok.pos, "Lexical", "expected condition literal")
        return CondArg(column, cmp, literal)


def _checked_ref(k: int, step_index: int, pos: tuple[int, int]) -> RefArg:
    if k < 1:
        raise ParseError(pos, "DanglingRef", f"#{k} does not reference any step")
    if k >= step_index:
        raise ParseError(pos, "ForwardRef", f"#{k} references step {k} from step {step_index}")
    return RefArg(k)


def _coerce_step(
    op: Op,
    raw_args: list[tuple[object, tuple[int, int]]],
    op_pos: tuple[int, int],
    index: int,
) -> QdmrStep:
    sig = _SIGNATURES[op]
    if len(raw_args) != len(sig):
        raise ParseError(
            op_pos,
            "BadArity",
            f"{op.value} takes {len(sig)} arguments, got {len(raw_args)}",
        )
    args = []
    for (raw, pos), want in zip(raw_args, sig):
        args.append(_coerce_arg(op, raw, pos, want))
    return QdmrStep(op, tuple(args))


def _coerce_arg(op: Op, raw: object, pos: tuple[int, int], want: str):
    if want == "name":
        if isinstance(raw, AttrArg):
            return raw
    elif want == "ref":
        if isinstance(raw, RefArg):
            return raw
    elif want == "column":
        if isinstance(raw, (AttrArg, RefArg)):
            return raw
    elif want == "cond":
        if isinstance(raw, CondArg):
            return raw
    elif want == "method":
        if isinstance(raw, str) and raw in _METHOD_WORDS:
            return MethodArg(AggMethod(raw))
    elif want == "dir":
        if isinstance(raw, str) and raw in _DIR_WORDS:
            return DirArg(SortDir(raw))
    elif want == "super":
        if isinstance(raw, str) and raw in ("max", "min"):
            return SuperArg(SuperKind(raw))
    raise ParseError(
        pos, "BadArgKind", f"{op.value} expected a {want} argument here"
    )


def parse(text: str) -> QdmrPipeline:
    """Parse pipeline text into a structurally well-formed pipeline."""
    return _Parser(_lex(text)).parse_pipeline()


def parse_step(text: str, step_index: int) -> QdmrStep:
    """Parse one step as if it appeared at 1-based position ``step_index``."""
    parser = _Parser(_lex(text))
    step = parser.parse_step(step_index)
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError(tok.pos, "Lexical", "trailing input after step")
    return step


# -- serializer ---------------------------------------------------------------


def _quote(name: str) -> str:
    return "'" + name.replace("'", "''") + "'"


def _serialize_arg(arg) -> str:
    if isinstance(arg, AttrArg):
        return _quote(arg.name)
    if isinstance(arg, RefArg):
        return f"#{arg.step}"
    if isinstance(arg, CondArg):
        col = _quote(arg.column.name) if isinstance(arg.column, AttrArg) else f"#{arg.column.step}"
        lit = arg.literal
        if lit.kind == "text":
            lit_text = _quote(str(lit.value))
        else:
            lit_text = lit.display()
        return f"{col} {arg.cmp.value} {lit_text}"
    if isinstance(arg, MethodArg):
        return arg.method.value
    if isinstance(arg, DirArg):
        return arg.dir.value
    if isinstance(arg, SuperArg):
        return arg.kind.value
    raise TypeError(f"unknown argument {arg!r}")


def serialize(pipeline: QdmrPipeline) -> str:
    """Canonical pipeline text; ``parse(serialize(p))`` equals ``p``."""
    return "; ".join(
        f"{step.op.value}[{', '.join(_serialize_arg(a) for a in step.args)}]"
        for step in pipeline.steps
    )


# -- validator ----------------------------------------------------------------

# Static result kind of each step; refs may only target record-shaped results.
_RECORDISH = ("records", "projection")


def _result_kinds(pipeline: QdmrPipeline) -> list[str]:
    kinds: list[str] = []
    for step in pipeline.steps:
        if step.op is Op.SELECT:
            kinds.append("records")
        elif step.op is Op.PROJECT:
            kinds.append("projection")
        elif step.op in (Op.FILTER, Op.SUPERLATIVE, Op.SORT):
            ref = next((a for a in step.args if isinstance(a, RefArg)), None)
            if ref is not None and 1 <= ref.step <= len(kinds):
                kinds.append(kinds[ref.step - 1])
            else:
                kinds.append("invalid")
        elif step.op is Op.AGGREGATE:
            kinds.append("scalar")
        elif step.op is Op.GROUP:
            kinds.append("groups")
        else:  # pragma: no cover
            kinds.append("invalid")
    return kinds


def _projection_source(pipeline: QdmrPipeline, step_index: int) -> Optional[int]:
    """Input ref of a PROJECT step (1-based), or None if not a PROJECT."""
    step = pipeline.steps[step_index - 1]
    if step.op is not Op.PROJECT:
        return None
    return step.args[1].step


def _ancestor_chain(pipeline: QdmrPipeline, step_index: int) -> set[int]:
    """Steps reachable from ``step_index`` by following primary input refs.

    Every ancestor's record set is a superset of the step's own rows, so a
    projection over any ancestor covers the step's records.
    """
    chain = {step_index}
    current = step_index
    while True:
        step = pipeline.steps[current - 1]
        if step.op in (Op.SELECT, Op.AGGREGATE, Op.GROUP):
            return chain
        ref = next((a for a in step.args if isinstance(a, RefArg)), None)
        if ref is None or ref.step in chain:
            return chain
        chain.add(ref.step)
        current = ref.step


class _Validator:
    def __init__(self, pipeline: QdmrPipeline, schema: Schema, strict: bool):
        self.pipeline = pipeline
        self.schema = schema
        self.strict = strict
        self.violations: list[Violation] = []
        self.kinds = _result_kinds(pipeline)
        self.base_table: Optional[str] = None
        self.tables_used: dict[str, int] = {}

    def report(self) -> ValidationReport:
        self.check_v4_select_first()
        for i, step in enumerate(self.pipeline.steps, start=1):
            self.check_step(i, step)
        self.check_v7_dead_steps()
        self.check_v8_single_table()
        return ValidationReport(tuple(self.violations))

    def fail(self, rule: str, step_index: int, message: str) -> None:
        self.violations.append(Violation(rule, step_index, message))

    def resolve(self, name: str, step_index: int, rule: str) -> Optional[AttributeRef]:
        # Prefer a column of the pipeline's table for unqualified names.
        if self.base_table is not None and "." not in name:
            try:
                return resolve_attribute(f"{self.base_table}.{name}", self.schema)
            except NotFound:
                pass
        try:
            ref = resolve_attribute(name, self.schema)
        except (NotFound, Ambiguous) as exc:
            self.fail(rule, step_index, str(exc))
            return None
        return ref

    def note_table(self, table: str, step_index: int) -> None:
        self.tables_used.setdefault(table, step_index)

    def column_type(self, ref: AttributeRef) -> ColumnType:
        return self.schema.table(ref.table_name).column(ref.column_name).type

    # V4: pipeline starts with SELECT whose argument resolves.
    def check_v4_select_first(self) -> None:
        first = self.pipeline.steps[0]
        if first.op is not Op.SELECT:
            self.fail("V4", 1, "step 1 must be SELECT")
            return
        arg = first.args[0] if first.args else None
        if not isinstance(arg, AttrArg):
            self.fail("V4", 1, "SELECT takes an attribute name")
            return
        try:
            ref = resolve_attribute(arg.name, self.schema)
        except (NotFound, Ambiguous) as exc:
            self.fail("V4", 1, str(exc))
            return
        self.base_table = ref.table_name
        self.note_table(ref.table_name, 1)

    def check_step(self, i: int, step: QdmrStep) -> None:
        sig = _SIGNATURES[step.op]
        if len(step.args) != len(sig) or any(
            not _arg_matches(a, want) for a, want in zip(step.args, sig)
        ):
            self.fail("V1", i, f"{step.op.value} arguments do not match its signature")
            return
        for ref in step.refs():
            if not (1 <= ref < i):
                self.fail("V3", i, f"#{ref} does not reference an earlier step")
                return
        handler = getattr(self, f"check_{step.op.value.lower()}")
        handler(i, step)

    def check_select(self, i: int, step: QdmrStep) -> None:
        if i != 1:
            # A later SELECT never feeds the chain legally; V7 will also fire.
            self.fail("V1", i, "SELECT is only allowed as step 1")

    def check_project(self, i: int, step: QdmrStep) -> None:
        name_arg, ref_arg = step.args
        if not self.require_recordish(i, ref_arg.step, "PROJECT input"):
            return
        ref = self.resolve(name_arg.name, i, "V2")
        if ref is None:
            return
        if ref.kind != "column":
            self.fail("V2", i, f"{name_arg.name!r} names a table, not a column")
            return
        self.note_table(ref.table_name, i)

    def check_filter(self, i: int, step: QdmrStep) -> None:
        ref_arg, cond = step.args
        if not self.require_recordish(i, ref_arg.step, "FILTER input"):
            return
        ctype = self.cond_column_type(i, cond, ref_arg.step)
        if ctype is None:
            return
        if cond.cmp.is_ordering and ctype is ColumnType.CATEGORICAL:
            self.fail("V6", i, f"{cond.cmp.value} needs a numerical or temporal column")
        self.check_literal(i, cond, ctype)

    def check_superlative(self, i: int, step: QdmrStep) -> None:
        ref_arg, col_arg, _ = step.args
        if not self.require_recordish(i, ref_arg.step, "SUPERLATIVE input"):
            return
        if isinstance(col_arg, AttrArg):
            ref = self.resolve(col_arg.name, i, "V6")
            if ref is None:
                return
            if ref.kind != "column":
                self.fail("V6", i, f"{col_arg.name!r} names a table, not a column")
                return
            self.note_table(ref.table_name, i)
            ctype = self.column_type(ref)
        else:
            ctype = self.projection_column_type(i, col_arg.step, ref_arg.step, "V6")
            if ctype is None:
                return
        if ctype not in (ColumnType.NUMERICAL, ColumnType.TEMPORAL):
            self.fail("V6", i, "SUPERLATIVE needs a numerical or temporal column")

    def check_aggregate(self, i: int, step: QdmrStep) -> None:
        method_arg, ref_arg = step.args
        if not self.require_recordish(i, ref_arg.step, "AGGREGATE input"):
            return
        self.check_method(i, method_arg.method, ref_arg.step)

    def check_group(self, i: int, step: QdmrStep) -> None:
        method_arg, vals_ref, keys_ref = step.args
        if not self.require_recordish(i, vals_ref.step, "GROUP values"):
            return
        if self.kinds[keys_ref.step - 1] != "projection":
            self.fail("V1", i, "GROUP keys must reference a PROJECT step")
            return
        self.check_method(i, method_arg.method, vals_ref.step)
        key_type = self.projection_column_type(i, keys_ref.step, vals_ref.step, "V5")
        if key_type is ColumnType.NUMERICAL:
            self.fail("V5", i, "GROUP keys must be categorical or temporal")

    def check_sort(self, i: int, step: QdmrStep) -> None:
        ref_arg, name_arg, _ = step.args
        if not self.require_recordish(i, ref_arg.step, "SORT input"):
            return
        ref = self.resolve(name_arg.name, i, "V6")
        if ref is None:
            return
        if ref.kind != "column":
            self.fail("V6", i, f"{name_arg.name!r} names a table, not a column")
            return
        self.note_table(ref.table_name, i)

    # -- shared helpers --

    def require_recordish(self, i: int, target: int, what: str) -> bool:
        if self.kinds[target - 1] not in _RECORDISH:
            self.fail("V1", i, f"{what} #{target} is not a record set or projection")
            return False
        return True

    def projection_column_type(
        self, i: int, proj_step: int, over_step: Optional[int], rule: str
    ) -> Optional[ColumnType]:
        if self.kinds[proj_step - 1] != "projection":
            self.fail(rule, i, f"#{proj_step} is not a projection")
            return None
        if over_step is not None and proj_step != over_step:
            over_chain = _ancestor_chain(self.pipeline, over_step)
            source = _projection_source(self.pipeline, proj_step)
            if proj_step not in over_chain and (
                source is None or source not in over_chain
            ):
                self.fail(
                    rule,
                    i,
                    f"#{proj_step} does not project over the records of #{over_step}",
                )
                return None
        ref = self.exposed_column(proj_step, i, rule)
        if ref is None:
            return None
        return self.column_type(ref)

    def exposed_column(self, step_index: int, i: int, rule: str) -> Optional[AttributeRef]:
        """The column a projection-shaped step carries, walking through
        row-subsetting steps to the underlying PROJECT or focused SELECT."""
        step = self.pipeline.steps[step_index - 1]
        if step.op is Op.PROJECT:
            ref = self.resolve(step.args[0].name, i, rule)
            if ref is None:
                return None
            if ref.kind != "column":
                self.fail(rule, i, f"{step.args[0].name!r} names a table, not a column")
                return None
            return ref
        if step.op is Op.SELECT:
            try:
                ref = resolve_attribute(step.args[0].name, self.schema)
            except (NotFound, Ambiguous):
                return None
            return ref if ref.kind == "column" else None
        if step.op in (Op.FILTER, Op.SUPERLATIVE, Op.SORT):
            inner = next((a for a in step.args if isinstance(a, RefArg)), None)
            if inner is not None:
                return self.exposed_column(inner.step, i, rule)
        self.fail(rule, i, f"#{step_index} exposes no column")
        return None

    def cond_column_type(self, i: int, cond: CondArg, input_step: int) -> Optional[ColumnType]:
        if isinstance(cond.column, AttrArg):
            ref = self.resolve(cond.column.name, i, "V6")
            if ref is None:
                return None
            if ref.kind != "column":
                self.fail("V6", i, f"{cond.column.name!r} names a table, not a column")
                return None
            self.note_table(ref.table_name, i)
            return self.column_type(ref)
        return self.projection_column_type(i, cond.column.step, input_step, "V6")

    def check_literal(self, i: int, cond: CondArg, ctype: ColumnType) -> None:
        lit = cond.literal
        if ctype is ColumnType.NUMERICAL:
            if lit.kind != "number":
                self.fail("V6", i, "numerical column needs a numeric literal")
        elif ctype is ColumnType.TEMPORAL:
            from .model import temporal_key

            if temporal_key(lit.value if lit.kind != "number" else float(lit.value)) is None:
                self.fail("V6", i, f"{lit.display()!r} is not a date or year")
        else:
            if lit.kind != "text":
                self.fail("V6", i, "categorical column needs a text literal")
            if cond.cmp not in (Comparator.EQ, Comparator.NEQ):
                self.fail("V6", i, "categorical columns support only = and !=")

    def check_method(self, i: int, method: AggMethod, operand_step: int) -> None:
        operand_type = self.operand_column_type(operand_step)
        if method is AggMethod.COUNT:
            return
        if operand_type is None:
            self.fail("V5", i, f"{method.value} needs a column operand")
            return
        if method in (AggMethod.SUM, AggMethod.AVG, AggMethod.MEDIAN):
            if operand_type is not ColumnType.NUMERICAL:
                self.fail("V5", i, f"{method.value} needs a numerical operand")
        elif method in (AggMethod.MAX, AggMethod.MIN):
            if operand_type not in (ColumnType.NUMERICAL, ColumnType.TEMPORAL):
                self.fail("V5", i, f"{method.value} needs a numerical or temporal operand")

    def operand_column_type(self, step_index: int) -> Optional[ColumnType]:
        """Column type an aggregate over step ``step_index`` would apply to."""
        step = self.pipeline.steps[step_index - 1]
        if step.op is Op.PROJECT:
            ref = self.resolve(step.args[0].name, step_index, "V5")
            if ref is None or ref.kind != "column":
                return None
            return self.column_type(ref)
        if step.op is Op.SELECT:
            try:
                ref = resolve_attribute(step.args[0].name, self.schema)
            except (NotFound, Ambiguous):
                return None
            if ref.kind == "column":
                return self.column_type(ref)
            return None
        if step.op in (Op.FILTER, Op.SUPERLATIVE, Op.SORT):
            inner = next((a for a in step.args if isinstance(a, RefArg)), None)
            if inner is None:
                return None
            return self.operand_column_type(inner.step)
        return None

    # V7: every step except the last must be referenced by a later step.
    def check_v7_dead_steps(self) -> None:
        if not self.strict:
            return
        n = len(self.pipeline.steps)
        referenced: set[int] = set()
        for step in self.pipeline.steps:
            referenced.update(step.refs())
        for i in range(1, n):
            if i not in referenced:
                self.fail("V7", i, f"step {i} is never referenced by a later step")

    # V8: all attributes belong to one table.
    def check_v8_single_table(self) -> None:
        if len(self.tables_used) > 1:
            names = sorted(self.tables_used)
            worst = max(self.tables_used.values())
            self.fail("V8", worst, f"pipeline spans multiple tables: {', '.join(names)}")


def _arg_matches(arg, want: str) -> bool:
    if want == "name":
        return isinstance(arg, AttrArg)
    if want == "ref":
        return isinstance(arg, RefArg)
    if want == "column":
        return isinstance(arg, (AttrArg, RefArg))
    if want == "cond":
        return isinstance(arg, CondArg)
    if want == "method":
        return isinstance(arg, MethodArg)
    if want == "dir":
        return isinstance(arg, DirArg)
    if want == "super":
        return isinstance(arg, SuperArg)
    return False


def validate(pipeline: QdmrPipeline, schema: Schema, strict: bool = True) -> ValidationReport:
    """Apply rules V1..V8; the report carries one entry per violation.

    ``strict=False`` disables V7 (dead-step detection) only.
    """
    return _Validator(pipeline, schema, strict).report()


def first_valid(
    candidates: Sequence[str], schema: Schema, strict: bool = True
) -> tuple[int, QdmrPipeline]:
    """Parse and validate candidates in order; return the first that passes.

    The returned index is 0-based. Raises :class:`NoValidCandidate` with
    per-candidate failure summaries when nothing passes.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    failures: list[tuple[int, str]] = []
    for i, text in enumerate(candidates):
        try:
            pipeline = parse(text)
        except ParseError as exc:
            failures.append((i, str(exc)))
            continue
        report = validate(pipeline, schema, strict=strict)
        if report.valid:
            return i, pipeline
        failures.append((i, report.summary()))
    raise NoValidCandidate(failures)
