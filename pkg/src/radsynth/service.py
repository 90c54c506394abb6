"""HTTP face of the observer study.

A small JSON API over the study module: session creation, item delivery
with server-stamped deadlines, response recording, reports, and raw
transcripts. Sessions persist to disk on every mutation, so a restarted
server resumes where observers left off. Optionally serves the static
web client from the same origin.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, field_validator

from . import study
from .errors import ConflictError, DataError, SequencingError


@dataclass
class ServiceConfig:
    real_dir: Path
    fake_dir: Path
    session_dir: Path
    n_each: int = 100
    per_image_seconds: float = 12.0
    grace_seconds: float = 1.0
    static_dir: Path | None = None


class CreateSessionRequest(BaseModel):
    observer: str = Field(min_length=1, max_length=80)
    deck_seed: int
    n_each: int | None = Field(default=None, ge=1)


class CreateSessionResponse(BaseModel):
    session_id: str
    total: int


class NextItemResponse(BaseModel):
    done: bool = False
    image_id: str | None = None
    image_url: str | None = None
    index: int | None = None
    total: int | None = None
    deadline_epoch_ms: int | None = None


class RecordRequest(BaseModel):
    image_id: str
    value: float
    elapsed_ms: int = Field(ge=0)

    @field_validator("value")
    @classmethod
    def _value_allowed(cls, v: float) -> float:
        if v not in study.ALLOWED_VALUES:
            raise ValueError(f"value must be one of {study.ALLOWED_VALUES}")
        return v


class RecordResponse(BaseModel):
    status: Literal["accepted", "timed_out"]


class ReportResponse(BaseModel):
    session_id: str
    observer: str
    tp: float
    tn: float
    fp: float
    fn: float
    u: int
    precision: float
    recall: float
    accuracy: float
    auc: float


def _png_refs(directory: Path) -> list[str]:
    return sorted(str(p) for p in Path(directory).glob("*.png"))


def create_app(cfg: ServiceConfig, clock: Callable[[], float] = time.time) -> FastAPI:
    app = FastAPI(title="observer-study")
    store = study.SessionStore(cfg.session_dir)
    sessions: dict[str, study.StudySession] = {}
    image_files: dict[str, str] = {}

    def register_deck(deck: study.StudyDeck) -> None:
        for item in deck.items:
            image_files[item.image_id] = item.file_ref

    for sid in store.list_ids():
        session = store.load(sid, clock=clock)
        sessions[sid] = session
        register_deck(session.deck)

    def get_session(session_id: str) -> study.StudySession:
        if session_id not in sessions:
            try:
                sessions[session_id] = store.load(session_id, clock=clock)
            except KeyError:
                raise HTTPException(status_code=404, detail="unknown session")
            register_deck(sessions[session_id].deck)
        return sessions[session_id]

    @app.post("/session", response_model=CreateSessionResponse, status_code=201)
    def create_session(req: CreateSessionRequest) -> CreateSessionResponse:
        try:
            deck = study.build_deck(
                _png_refs(cfg.real_dir),
                _png_refs(cfg.fake_dir),
                req.n_each or cfg.n_each,
                req.deck_seed,
            )
        except DataError as err:
            raise HTTPException(status_code=400, detail=str(err))
        session = study.StudySession.create(
            observer=req.observer,
            deck=deck,
            per_image_seconds=cfg.per_image_seconds,
            grace_seconds=cfg.grace_seconds,
            clock=clock,
        )
        sessions[session.session_id] = session
        register_deck(deck)
        store.save(session)
        return CreateSessionResponse(
            session_id=session.session_id, total=len(deck.items)
        )

    @app.get("/session/{session_id}/next", response_model=NextItemResponse,
             response_model_exclude_none=True)
    def get_next(session_id: str) -> NextItemResponse:
        session = get_session(session_id)
        with store.lock(session_id):
            item = study.next_item(session)
            if item is None:
                return NextItemResponse(done=True)
            store.save(session)
        return NextItemResponse(
            image_id=item.image_id,
            image_url=f"/image/{item.image_id}",
            index=item.index,
            total=item.total,
            deadline_epoch_ms=round(item.deadline_epoch * 1000),
        )

    @app.get("/image/{image_id}")
    def get_image(image_id: str) -> FileResponse:
        ref = image_files.get(image_id)
        if ref is None or not Path(ref).is_file():
            raise HTTPException(status_code=404, detail="unknown image")
        return FileResponse(ref, media_type="image/png")

    @app.post("/session/{session_id}/response", response_model=RecordResponse)
    def post_response(session_id: str, req: RecordRequest) -> RecordResponse:
        session = get_session(session_id)
        with store.lock(session_id):
            try:
                status = study.record_response(
                    session, req.image_id, req.value, req.elapsed_ms / 1000.0
                )
            except ConflictError as err:
                raise HTTPException(status_code=409, detail=str(err))
            except SequencingError as err:
                raise HTTPException(status_code=409, detail=str(err))
            except ValueError as err:
                raise HTTPException(status_code=422, detail=str(err))
            store.save(session)
        return RecordResponse(status=status)

    @app.get("/session/{session_id}/report", response_model=ReportResponse)
    def get_report(session_id: str) -> ReportResponse:
        session = get_session(session_id)
        try:
            report = study.score_session(session)
            _, auc = study.session_roc(session)
        except SequencingError as err:
            raise HTTPException(status_code=409, detail=str(err))
        return ReportResponse(
            session_id=session.session_id,
            observer=session.observer,
            tp=report.tp, tn=report.tn, fp=report.fp, fn=report.fn, u=report.u,
            precision=report.precision, recall=report.recall,
            accuracy=report.accuracy, auc=auc,
        )

    @app.get("/session/{session_id}/transcript.csv")
    def get_transcript(session_id: str) -> PlainTextResponse:
        session = get_session(session_id)
        return PlainTextResponse(study.transcript_csv(session), media_type="text/csv")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    if cfg.static_dir is not None and Path(cfg.static_dir).is_dir():
        app.mount("/app", StaticFiles(directory=cfg.static_dir, html=True), name="app")

    return app
