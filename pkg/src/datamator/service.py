"""HTTP service: dataset ingestion, question answering, pipeline editing,
and datamation retrieval.

Sessions live in memory (optionally snapshotted to disk); every stored
pipeline validates against its session's dataset, and edits are atomic: a
failed edit leaves the stored pipeline, trace, and document untouched.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import Config
from .datamation.doc import DatamationDoc, doc_to_dict, generate
from .decomposer import (
    DecomposeError,
    NoPatternMatch,
    Resolution,
    Transport,
    resolve,
)
from .executor import ExecError, Trace, execute
from .ingest import IngestError, TypeHints, build_dataset
from .linker import neutral_ranking
from .model import (
    AttrArg,
    ColumnType,
    CondArg,
    Dataset,
    Op,
    QdmrPipeline,
    QdmrStep,
    RefArg,
)
from .text import NoValidCandidate, ParseError, parse, parse_step, serialize, validate


@dataclass
class PipelineEntry:
    pipeline: Optional[QdmrPipeline]  # None while drafting from scratch
    trace: Optional[Trace] = None
    doc: Optional[DatamationDoc] = None

    def payload(self, pipeline_id: str) -> dict:
        if self.pipeline is None:
            return {
                "pipeline_id": pipeline_id,
                "pipeline": None,
                "answer": None,
                "datamation": None,
            }
        return {
            "pipeline_id": pipeline_id,
            "pipeline": serialize(self.pipeline),
            "answer": _json_answer(self.trace.answer),
            "datamation": doc_to_dict(self.doc),
        }


@dataclass
class Session:
    id: str
    dataset: Dataset
    created_at: float = field(default_factory=time.time)
    pipelines: dict[str, PipelineEntry] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def _json_answer(answer):
    if isinstance(answer, list):
        return [_json_answer(a) for a in answer]
    if isinstance(answer, tuple):
        return [_json_answer(a) for a in answer]
    return answer


def _schema_payload(dataset: Dataset) -> dict:
    return {
        "tables": [
            {
                "name": t.name,
                "columns": [{"name": c.name, "type": c.type.value} for c in t.columns],
                "row_count": len(dataset.table_rows(t.name)),
            }
            for t in dataset.schema.tables
        ]
    }


class SessionStore:
    def __init__(self, persist_dir: Optional[str] = None):
        self._sessions: dict[str, Session] = {}
        self._pipeline_owner: dict[str, str] = {}
        self._lock = threading.Lock()
        self.persist_dir = Path(persist_dir) if persist_dir else None

    def create(self, dataset: Dataset) -> Session:
        session = Session(id=uuid.uuid4().hex[:12], dataset=dataset)
        with self._lock:
            self._sessions[session.id] = session
        self._snapshot(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def register_pipeline(self, session: Session, entry: PipelineEntry) -> str:
        pipeline_id = uuid.uuid4().hex[:12]
        session.pipelines[pipeline_id] = entry
        with self._lock:
            self._pipeline_owner[pipeline_id] = session.id
        self._snapshot(session)
        return pipeline_id

    def owner_of(self, pipeline_id: str) -> Session:
        with self._lock:
            sid = self._pipeline_owner.get(pipeline_id)
        if sid is None:
            raise KeyError(pipeline_id)
        return self.get(sid)

    def _snapshot(self, session: Session) -> None:
        if self.persist_dir is None:
            return
        self.persist_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "id": session.id,
            "created_at": session.created_at,
            "schema": _schema_payload(session.dataset),
            "rows": {t.name: [list(r) for r in session.dataset.table_rows(t.name)]
                     for t in session.dataset.schema.tables},
            "pipelines": {
                pid: (serialize(e.pipeline) if e.pipeline else None)
                for pid, e in session.pipelines.items()
            },
        }
        path = self.persist_dir / f"session-{session.id}.json"
        path.write_text(json.dumps(payload), encoding="utf-8")


# -- pipeline editing ---------------------------------------------------------


class InvalidEdit(Exception):
    def __init__(self, report_or_message):
        self.detail = report_or_message
        super().__init__(str(report_or_message))


def _shift_ref(ref: int, deleted: int) -> int:
    if ref == deleted:
        raise InvalidEdit(f"step {deleted} is still referenced after deletion")
    return ref - 1 if ref > deleted else ref


def _renumber_step(step: QdmrStep, deleted: int) -> QdmrStep:
    new_args = []
    for arg in step.args:
        if isinstance(arg, RefArg):
            new_args.append(RefArg(_shift_ref(arg.step, deleted)))
        elif isinstance(arg, CondArg) and isinstance(arg.column, RefArg):
            new_args.append(
                CondArg(RefArg(_shift_ref(arg.column.step, deleted)), arg.cmp, arg.literal)
            )
        else:
            new_args.append(arg)
    return QdmrStep(step.op, tuple(new_args))


def _rebuild(steps: list[QdmrStep], dataset: Dataset, config: Config) -> PipelineEntry:
    try:
        pipeline = QdmrPipeline(tuple(steps))
    except ValueError as exc:
        raise InvalidEdit(str(exc))
    report = validate(pipeline, dataset.schema)
    if not report.valid:
        raise InvalidEdit(report.summary())
    try:
        trace = execute(pipeline, dataset, tie_policy=config.tie_policy)
        doc = generate(pipeline, dataset, config)
    except ExecError as exc:
        raise InvalidEdit(f"pipeline does not execute: {exc}")
    return PipelineEntry(pipeline, trace, doc)


def edit_step(
    session: Session, entry: PipelineEntry, step_index: int, step_text: str, config: Config
) -> PipelineEntry:
    if entry.pipeline is None or not (1 <= step_index <= len(entry.pipeline.steps)):
        raise KeyError(step_index)
    step = parse_step(step_text, step_index)
    steps = list(entry.pipeline.steps)
    steps[step_index - 1] = step
    return _rebuild(steps, session.dataset, config)


def append_step(
    session: Session, entry: PipelineEntry, step_text: str, config: Config
) -> PipelineEntry:
    existing = list(entry.pipeline.steps) if entry.pipeline else []
    step = parse_step(step_text, len(existing) + 1)
    return _rebuild(existing + [step], session.dataset, config)


def delete_step(
    session: Session, entry: PipelineEntry, step_index: int, config: Config
) -> PipelineEntry:
    if entry.pipeline is None or not (1 <= step_index <= len(entry.pipeline.steps)):
        raise KeyError(step_index)
    kept = [
        _renumber_step(step, step_index)
        for i, step in enumerate(entry.pipeline.steps, start=1)
        if i != step_index
    ]
    if not kept:
        raise InvalidEdit("cannot delete the only step")
    return _rebuild(kept, session.dataset, config)


# -- question suggestions -----------------------------------------------------


def suggest_questions(dataset: Dataset, limit: int = 5) -> list[str]:
    """Schema-driven starter questions, one per rule pattern, deterministic."""
    ranking = neutral_ranking(dataset.schema)
    table = ranking.top_table()
    schema_table = dataset.schema.table(table)
    numeric = [c.name for c in schema_table.columns if c.type is ColumnType.NUMERICAL]
    categorical = [c.name for c in schema_table.columns if c.type is ColumnType.CATEGORICAL]
    suggestions = [f"how many {table}?"]
    if numeric:
        suggestions.append(f"what is the average {numeric[0]} of {table}?")
    if numeric and categorical:
        suggestions.append(f"average {numeric[0]} for each {categorical[0]}")
    if numeric:
        suggestions.append(f"which {table} has the highest {numeric[0]}?")
    first_col = schema_table.columns[0].name
    suggestions.append(f"list {table} sorted by {first_col}")
    return suggestions[:limit]


# -- FastAPI application ------------------------------------------------------


class AskBody(BaseModel):
    question: str


class PipelineBody(BaseModel):
    text: Optional[str] = None


class StepBody(BaseModel):
    text: str


def build_app(config: Optional[Config] = None, store: Optional[SessionStore] = None) -> FastAPI:
    config = config or Config()
    store = store or SessionStore(config.persist_dir)
    app = FastAPI(title="datamator", version="0.1.0")
    app.state.store = store
    app.state.config = config

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(404, detail={"error": "SessionNotFound", "session_id": session_id})

    def get_entry(session: Session, pipeline_id: str) -> PipelineEntry:
        entry = session.pipelines.get(pipeline_id)
        if entry is None:
            raise HTTPException(404, detail={"error": "PipelineNotFound", "pipeline_id": pipeline_id})
        return entry

    @app.post("/sessions")
    async def create_session(
        files: list[UploadFile] = File(...), types: Optional[str] = Form(None)
    ):
        hints: TypeHints = {}
        if types:
            try:
                raw = json.loads(types)
                hints = {
                    table: {col: ColumnType(t) for col, t in cols.items()}
                    for table, cols in raw.items()
                }
            except (ValueError, KeyError) as exc:
                raise HTTPException(400, detail={"error": "BadTypeHints", "message": str(exc)})
        csv_texts = {}
        for upload in files:
            name = Path(upload.filename or "table.csv").stem
            csv_texts[name] = (await upload.read()).decode("utf-8")
        try:
            dataset = build_dataset(csv_texts, hints)
        except (IngestError, ValueError) as exc:
            raise HTTPException(400, detail={"error": type(exc).__name__, "message": str(exc)})
        session = store.create(dataset)
        return {"session_id": session.id, "schema": _schema_payload(dataset)}

    @app.get("/sessions/{session_id}/schema")
    def get_schema(session_id: str):
        session = get_session(session_id)
        return _schema_payload(session.dataset)

    @app.post("/sessions/{session_id}/ask")
    def ask(session_id: str, body: AskBody):
        session = get_session(session_id)
        with session.lock:
            try:
                resolution: Resolution = resolve(body.question, session.dataset, config)
            except NoPatternMatch as exc:
                return JSONResponse(
                    status_code=422,
                    content={
                        "error": "NoPatternMatch",
                        "message": str(exc),
                        "suggestions": suggest_questions(session.dataset),
                    },
                )
            except NoValidCandidate as exc:
                return JSONResponse(
                    status_code=422,
                    content={
                        "error": "NoValidCandidate",
                        "message": str(exc),
                        "failures": exc.failures,
                        "suggestions": suggest_questions(session.dataset),
                    },
                )
            except Transport as exc:
                return JSONResponse(
                    status_code=502, content={"error": "Transport", "message": str(exc)}
                )
            except DecomposeError as exc:
                return JSONResponse(
                    status_code=422, content={"error": type(exc).__name__, "message": str(exc)}
                )
            trace = execute(resolution.pipeline, session.dataset, tie_policy=config.tie_policy)
            doc = generate(resolution.pipeline, session.dataset, config)
            entry = PipelineEntry(resolution.pipeline, trace, doc)
            pid = store.register_pipeline(session, entry)
            payload = entry.payload(pid)
            payload["candidates"] = [
                {"text": t, "score": s} for t, s in resolution.candidates.candidates
            ]
            payload["chosen_index"] = resolution.chosen_index
            payload["ranked_schema"] = [
                {
                    "attribute": s.attribute.display(),
                    "p_rel": s.p_rel,
                    "relevant": s.relevant,
                }
                for s in resolution.ranked.scores
            ]
            return payload

    @app.get("/sessions/{session_id}/suggestions")
    def suggestions(session_id: str):
        session = get_session(session_id)
        return {"questions": suggest_questions(session.dataset)}

    @app.post("/sessions/{session_id}/pipelines")
    def create_pipeline(session_id: str, body: PipelineBody):
        session = get_session(session_id)
        with session.lock:
            if body.text is None:
                entry = PipelineEntry(None)
            else:
                try:
                    pipeline = parse(body.text)
                except ParseError as exc:
                    raise HTTPException(400, detail={"error": "ParseError", "message": str(exc)})
                report = validate(pipeline, session.dataset.schema)
                if not report.valid:
                    raise HTTPException(
                        400, detail={"error": "InvalidPipeline", "message": report.summary()}
                    )
                trace = execute(pipeline, session.dataset, tie_policy=config.tie_policy)
                doc = generate(pipeline, session.dataset, config)
                entry = PipelineEntry(pipeline, trace, doc)
            pid = store.register_pipeline(session, entry)
            return entry.payload(pid)

    @app.get("/sessions/{session_id}/pipelines/{pipeline_id}")
    def get_pipeline(session_id: str, pipeline_id: str):
        session = get_session(session_id)
        return get_entry(session, pipeline_id).payload(pipeline_id)

    def _apply_edit(session: Session, pipeline_id: str, mutate) -> dict:
        with session.lock:
            entry = get_entry(session, pipeline_id)
            try:
                new_entry = mutate(entry)
            except KeyError as exc:
                raise HTTPException(404, detail={"error": "StepNotFound", "message": str(exc)})
            except ParseError as exc:
                raise HTTPException(
                    400, detail={"error": "InvalidEdit", "message": str(exc)}
                )
            except InvalidEdit as exc:
                raise HTTPException(
                    400, detail={"error": "InvalidEdit", "message": str(exc.detail)}
                )
            session.pipelines[pipeline_id] = new_entry
            store._snapshot(session)
            return new_entry.payload(pipeline_id)

    @app.patch("/sessions/{session_id}/pipelines/{pipeline_id}/steps/{step_index}")
    def patch_step(session_id: str, pipeline_id: str, step_index: int, body: StepBody):
        session = get_session(session_id)
        return _apply_edit(
            session,
            pipeline_id,
            lambda entry: edit_step(session, entry, step_index, body.text, config),
        )

    @app.post("/sessions/{session_id}/pipelines/{pipeline_id}/steps")
    def post_step(session_id: str, pipeline_id: str, body: StepBody):
        session = get_session(session_id)
        return _apply_edit(
            session,
            pipeline_id,
            lambda entry: append_step(session, entry, body.text, config),
        )

    @app.delete("/sessions/{session_id}/pipelines/{pipeline_id}/steps/{step_index}")
    def remove_step(session_id: str, pipeline_id: str, step_index: int):
        session = get_session(session_id)
        return _apply_edit(
            session,
            pipeline_id,
            lambda entry: delete_step(session, entry, step_index, config),
        )

    @app.get("/pipelines/{pipeline_id}/datamation")
    def get_datamation(pipeline_id: str):
        try:
            session = store.owner_of(pipeline_id)
        except KeyError:
            raise HTTPException(404, detail={"error": "PipelineNotFound"})
        entry = session.pipelines[pipeline_id]
        if entry.doc is None:
            raise HTTPException(409, detail={"error": "PipelineEmpty"})
        return doc_to_dict(entry.doc)

    return app
