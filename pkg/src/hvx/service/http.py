"""HTTP facade over the session manager, for browser clients.

Browsers cannot open raw TCP sockets, so the IDE talks to this FastAPI
app instead; it exposes the same methods and the same JSON shapes as the
line-protocol server. Notifications are queued per session and drained
with ``GET /sessions/{sid}/notifications``.
"""

from __future__ import annotations

from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from ..errors import HvxError
from ..session import FuelPolicy
from .manager import SessionManager, error_payload


class OpenRequest(BaseModel):
    text: str


class OpenResponse(BaseModel):
    sessionId: str
    instances: list[dict]
    diagnostics: list[dict]


class RenderResponse(BaseModel):
    renders: list[dict]
    diagnostics: list[dict]


class EventRequest(BaseModel):
    handlerId: str
    payload: Any = None


class EventResponse(BaseModel):
    deltas: list[dict]
    diagnostics: list[dict]


class TextEditRequest(BaseModel):
    span: list[int]
    replacement: str


class TextEditResponse(BaseModel):
    kept: list[str]
    added: list[str]
    removed: list[str]
    diagnostics: list[dict]


class InsertRequest(BaseModel):
    name: str
    offset: int


class InsertResponse(BaseModel):
    delta: dict
    diagnostics: list[dict]


class StatusResponse(BaseModel):
    status: str
    instances: list[dict]
    diagnostics: list[dict]


class RunResponse(BaseModel):
    status: str


class StopResponse(BaseModel):
    status: str


class SaveRequest(BaseModel):
    path: Optional[str] = None


class SaveResponse(BaseModel):
    text: str


class DefsResponse(BaseModel):
    defs: list[dict]


class NotificationsResponse(BaseModel):
    notifications: list[dict]


def create_app(manager: SessionManager | None = None, fuel_policy: FuelPolicy | None = None) -> FastAPI:
    mgr = manager or SessionManager(fuel_policy)
    app = FastAPI(title="hvx kernel", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.manager = mgr

    def call(method: str, params: dict):
        try:
            return mgr.handle(method, params)
        except KeyError:
            raise HTTPException(status_code=404, detail={"message": f"method not found: {method}"})
        except HvxError as exc:
            status = 404 if "unknown session" in exc.message else 400
            raise HTTPException(status_code=status, detail=error_payload(exc))

    @app.post("/sessions", response_model=OpenResponse)
    def open_session(req: OpenRequest):
        return call("session/open", {"text": req.text})

    @app.get("/sessions/{sid}", response_model=StatusResponse)
    def session_status(sid: str):
        return call("session/status", {"sessionId": sid})

    @app.post("/sessions/{sid}/render", response_model=RenderResponse)
    def render(sid: str):
        return call("session/render", {"sessionId": sid})

    @app.post("/sessions/{sid}/event", response_model=EventResponse)
    def event(sid: str, req: EventRequest):
        return call(
            "session/event",
            {"sessionId": sid, "handlerId": req.handlerId, "payload": req.payload},
        )

    @app.post("/sessions/{sid}/text-edit", response_model=TextEditResponse)
    def text_edit(sid: str, req: TextEditRequest):
        return call(
            "session/applyTextEdit",
            {"sessionId": sid, "span": req.span, "replacement": req.replacement},
        )

    @app.post("/sessions/{sid}/insert", response_model=InsertResponse)
    def insert(sid: str, req: InsertRequest):
        return call(
            "session/insertVisx",
            {"sessionId": sid, "name": req.name, "offset": req.offset},
        )

    @app.post("/sessions/{sid}/run", response_model=RunResponse)
    def run(sid: str):
        return call("session/run", {"sessionId": sid})

    @app.post("/sessions/{sid}/stop", response_model=StopResponse)
    def stop(sid: str):
        return call("session/stop", {"sessionId": sid})

    @app.post("/sessions/{sid}/save", response_model=SaveResponse)
    def save(sid: str, req: SaveRequest):
        return call("session/save", {"sessionId": sid, "path": req.path})

    @app.get("/sessions/{sid}/defs", response_model=DefsResponse)
    def defs(sid: str):
        return call("session/defs", {"sessionId": sid})

    @app.get("/sessions/{sid}/notifications", response_model=NotificationsResponse)
    def notifications(sid: str):
        return call("session/notifications", {"sessionId": sid})

    return app
