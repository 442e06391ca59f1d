"""Single-turn chat service over HTTP and WebSocket.

POST /api/query answers synchronously; the WebSocket endpoint streams one
stage event per pipeline stage followed by exactly one answer event. The
service keeps no state between requests: every query runs the full pipeline
against the shared read-only store.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from .llm import Backend
from .pipeline import Answer, PipelineConfig, PipelineStage, run_query
from .store import Store

log = logging.getLogger(__name__)


class QueryEnvelope(BaseModel):
    text: str
    include_trace: bool = False
    request_id: str = ""


@dataclass
class ServiceConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    include_prompts: bool = False
    static_dir: str | Path | None = None


def stage_event(stage: PipelineStage, request_id: str, include_prompts: bool = False) -> dict:
    event = {
        "type": "stage",
        "request_id": request_id,
        "stage": stage.name,
        "summary": stage.summary_line(),
        "duration": stage.duration,
    }
    if include_prompts and stage.prompt is not None:
        event["prompt_text"] = stage.prompt.flat_text
    return event


def answer_event(answer: Answer, request_id: str, include_trace: bool = False,
                 include_prompts: bool = False) -> dict:
    event = {
        "type": "answer",
        "request_id": request_id,
        "text": answer.text,
        "retrieved_ids": answer.retrieved_ids,
        "ok": answer.ok,
        "rows": _result_rows(answer),
    }
    if answer.failure_stage is not None:
        event["failure_stage"] = answer.failure_stage
    if include_trace:
        event["trace"] = [
            stage_event(stage, request_id, include_prompts) for stage in answer.trace]
    return event


def _result_rows(answer: Answer) -> list[dict]:
    for stage in answer.trace:
        if stage.name == "db_execute" and stage.parsed:
            result = stage.parsed["result"]
            return [
                {"id": rid, "record": dict(record.values)}
                for rid, record in zip(result.matched_ids, result.records)
            ]
    return []


def create_app(store: Store, backend: Backend,
               config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="bimq", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/categories")
    def categories():
        return {"categories": store.list_categories()}

    @app.get("/api/schema/{category}")
    def schema(category: str):
        resolved = store.resolve_category(category)
        if resolved is None:
            raise HTTPException(status_code=404, detail=f"unknown category {category!r}")
        return store.schema(resolved).to_json()

    @app.post("/api/query")
    async def query(envelope: QueryEnvelope):
        text = envelope.text.strip()
        if not text:
            raise HTTPException(status_code=400, detail="query text must be non-empty")
        answer = await run_in_threadpool(
            run_query, store, backend, config.pipeline, text)
        return answer_event(
            answer, envelope.request_id,
            include_trace=envelope.include_trace,
            include_prompts=config.include_prompts)

    @app.websocket("/ws/chat")
    async def chat(websocket: WebSocket):
        await websocket.accept()
        try:
            while True:
                frame = await websocket.receive_json()
                await _handle_ws_query(websocket, frame)
        except WebSocketDisconnect:
            pass

    async def _handle_ws_query(websocket: WebSocket, frame: dict) -> None:
        request_id = str(frame.get("request_id", ""))
        text = str(frame.get("text", "")).strip()
        if frame.get("type") != "query" or not text:
            await websocket.send_json({
                "type": "answer", "request_id": request_id,
                "text": "A query frame needs non-empty text.",
                "retrieved_ids": [], "rows": [], "ok": False,
                "failure_stage": "validation",
            })
            return
        loop = asyncio.get_running_loop()
        events: asyncio.Queue = asyncio.Queue()

        def on_stage(stage: PipelineStage) -> None:
            loop.call_soon_threadsafe(
                events.put_nowait,
                stage_event(stage, request_id, config.include_prompts))

        task = loop.run_in_executor(
            None, lambda: run_query(store, backend, config.pipeline, text, on_stage))
        while True:
            drained = asyncio.create_task(events.get())
            done, _ = await asyncio.wait(
                {drained, task}, return_when=asyncio.FIRST_COMPLETED)
            if drained in done:
                await websocket.send_json(drained.result())
                continue
            drained.cancel()
            break
        answer = await task
        while not events.empty():
            await websocket.send_json(events.get_nowait())
        await websocket.send_json(answer_event(
            answer, request_id, include_prompts=config.include_prompts))

    if config.static_dir is not None and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")

    return app
