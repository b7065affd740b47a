"""HTTP service over labeled domains: question corpora, SQL previews, execution."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .compiler import SQLITE_CAPABILITIES, CompiledQuery, compile_plan
from .errors import (
    CompileError,
    ExecutionError,
    GenerationError,
    LabelingError,
    PlanCheckError,
    PlanSyntaxError,
)
from .executor import execute, open_readonly
from .labeling import DomainLabeling, parse_labeling, validate_against_database
from .plan import PlanGraph, check_plan, parse_plan
from .questions import QuestionIndex, build_index, search
from .spacegen import CorpusRecord, GenerationCaps, enumerate_plans, read_corpus, write_corpus
from .taxonomy import BUILTIN_REGISTRY, OperationRegistry

__all__ = [
    "DomainSession",
    "default_corpus_path",
    "load_domain",
    "create_app",
]

log = logging.getLogger(__name__)

_LABELING_SUFFIX = ".labeling.json"


@dataclass(frozen=True)
class DomainSession:
    """One servable domain: labeling, database path, corpus, and search index."""

    labeling: DomainLabeling
    db_path: Path
    registry: OperationRegistry
    records: tuple[CorpusRecord, ...]
    index: QuestionIndex
    by_id: Mapping[str, CorpusRecord]

    @property
    def id(self) -> str:
        return self.labeling.id


def default_corpus_path(labeling_path: str | Path) -> Path:
    """Sidecar corpus path: the labeling file's base name plus ".questions"."""
    path = Path(labeling_path)
    name = path.name
    if name.endswith(_LABELING_SUFFIX):
        base = name[: -len(_LABELING_SUFFIX)]
    else:
        base = path.stem
    return path.with_name(base + ".questions")


def _meta_path(corpus_path: Path) -> Path:
    return corpus_path.with_name(corpus_path.name + ".meta")


def load_domain(
    labeling_path: str | Path,
    db_path: str | Path,
    registry: OperationRegistry = BUILTIN_REGISTRY,
    corpus_path: str | Path | None = None,
    caps: GenerationCaps | None = None,
) -> DomainSession:
    """Parse and validate a labeling, then load or regenerate its question corpus.

    The corpus sidecar carries a meta file recording the labeling file's
    sha256; a stale or missing corpus is regenerated from the database.
    """
    labeling_path = Path(labeling_path)
    db_path = Path(db_path)
    raw = labeling_path.read_bytes()
    labeling_hash = hashlib.sha256(raw).hexdigest()
    labeling = parse_labeling(json.loads(raw.decode("utf-8")))

    conn = open_readonly(db_path)
    try:
        report = validate_against_database(labeling, conn)
        if not report.ok:
            details = "; ".join(report.issues[:3])
            raise LabelingError(
                f"labeling {labeling.id!r} does not match database {db_path}: {details}"
            )
        corpus = Path(corpus_path) if corpus_path is not None else default_corpus_path(labeling_path)
        meta = _meta_path(corpus)
        if not _corpus_fresh(corpus, meta, labeling_hash):
            log.info("generating question corpus for %s at %s", labeling.id, corpus)
            count = write_corpus(corpus, enumerate_plans(labeling, registry, conn, caps=caps))
            meta.write_text(
                json.dumps(
                    {"labeling_sha256": labeling_hash, "question_count": count},
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )
    finally:
        conn.close()

    records = read_corpus(corpus)
    index = build_index((r.question_id, r.question_text) for r in records)
    by_id = {r.question_id: r for r in records}
    return DomainSession(labeling, db_path, registry, records, index, by_id)


def _corpus_fresh(corpus: Path, meta: Path, labeling_hash: str) -> bool:
    if not corpus.exists() or not meta.exists():
        return False
    try:
        doc = json.loads(meta.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(doc, dict) and doc.get("labeling_sha256") == labeling_hash


class PlanExecuteRequest(BaseModel):
    plan_text: str


def _diagnostic(exc: Exception) -> dict[str, Any]:
    if isinstance(exc, PlanSyntaxError):
        return {"kind": "syntax", "message": str(exc), "line": exc.line, "column": exc.column}
    if isinstance(exc, PlanCheckError):
        return {"kind": "check", "message": str(exc), "step_id": exc.step_id}
    if isinstance(exc, CompileError):
        return {"kind": "compile", "message": str(exc), "step_id": exc.step_id}
    raise exc


def create_app(sessions: list[DomainSession], static_dir: str | Path | None = None) -> FastAPI:
    """REST app over the given domains; mounts a static UI at / when present.

    Every database access opens a fresh read-only connection per request and
    nothing in the service ever writes.
    """
    domains: dict[str, DomainSession] = {}
    for session in sessions:
        if session.id in domains:
            raise GenerationError(f"duplicate domain id {session.id!r}")
        domains[session.id] = session

    app = FastAPI(title="infospace", docs_url=None, redoc_url=None)

    def _session(domain_id: str) -> DomainSession:
        session = domains.get(domain_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown domain {domain_id!r}")
        return session

    def _record(session: DomainSession, question_id: str) -> CorpusRecord:
        record = session.by_id.get(question_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown question {question_id!r}")
        return record

    def _compile_text(session: DomainSession, plan_text: str) -> tuple[PlanGraph, CompiledQuery]:
        try:
            plan = parse_plan(plan_text)
            check_plan(plan, session.registry, session.labeling)
            compiled = compile_plan(
                plan, session.registry, session.labeling, SQLITE_CAPABILITIES
            )
        except (PlanSyntaxError, PlanCheckError, CompileError) as exc:
            raise HTTPException(status_code=400, detail=_diagnostic(exc)) from exc
        return plan, compiled

    def _run(session: DomainSession, compiled: CompiledQuery) -> dict[str, Any]:
        conn = open_readonly(session.db_path)
        try:
            result = execute(conn, compiled)
        except ExecutionError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        finally:
            conn.close()
        columns = [
            {
                "label": col.label,
                "types": sorted(t.value for t in col.types),
                "units": col.units,
            }
            for col in result.columns
        ]
        return {
            "columns": columns,
            "rows": [list(row) for row in result.rows],
            "truncated": result.truncated,
        }

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "domains": sorted(domains)}

    @app.get("/api/domains")
    def list_domains() -> list[dict[str, Any]]:
        return [
            {
                "id": s.id,
                "name": s.labeling.name,
                "description": s.labeling.description,
                "entity_count": len(s.labeling.entities),
                "question_count": len(s.records),
            }
            for s in domains.values()
        ]

    @app.get("/api/domains/{domain_id}/questions")
    def list_questions(
        domain_id: str,
        q: str = "",
        limit: int = Query(50, ge=1, le=500),
        offset: int = Query(0, ge=0),
    ) -> dict[str, Any]:
        session = _session(domain_id)
        if q.strip():
            hits = search(session.index, q, limit=len(session.index.entries) or 1)
            total = len(hits)
            page = hits[offset : offset + limit]
            questions = [
                {
                    "question_id": h.question_id,
                    "text": h.text,
                    "template_id": session.by_id[h.question_id].template_id,
                }
                for h in page
            ]
        else:
            total = len(session.records)
            page = session.records[offset : offset + limit]
            questions = [
                {
                    "question_id": r.question_id,
                    "text": r.question_text,
                    "template_id": r.template_id,
                }
                for r in page
            ]
        return {"questions": questions, "total": total}

    @app.get("/api/domains/{domain_id}/questions/{question_id}")
    def question_detail(domain_id: str, question_id: str) -> dict[str, Any]:
        session = _session(domain_id)
        record = _record(session, question_id)
        _, compiled = _compile_text(session, record.plan_text)
        return {
            "question_id": record.question_id,
            "template_id": record.template_id,
            "text": record.question_text,
            "plan_text": record.plan_text,
            "sql_text": compiled.sql_text,
            "parameters": list(compiled.parameters),
        }

    @app.post("/api/domains/{domain_id}/questions/{question_id}/execute")
    def execute_question(domain_id: str, question_id: str) -> dict[str, Any]:
        session = _session(domain_id)
        record = _record(session, question_id)
        _, compiled = _compile_text(session, record.plan_text)
        return _run(session, compiled)

    @app.post("/api/domains/{domain_id}/plans/execute")
    def execute_plan(domain_id: str, request: PlanExecuteRequest) -> dict[str, Any]:
        session = _session(domain_id)
        _, compiled = _compile_text(session, request.plan_text)
        payload = _run(session, compiled)
        payload["sql_text"] = compiled.sql_text
        payload["parameters"] = list(compiled.parameters)
        return payload

    if static_dir is not None:
        static_dir = Path(static_dir)
        if static_dir.is_dir():
            app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
