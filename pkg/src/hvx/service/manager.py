"""Session manager shared by every transport.

Each method takes already-decoded JSON params and returns a JSON-ready
result dict. Server-initiated notifications (renderUpdate, documentDelta,
diagnostic, runOutput, runDone) are queued per session and also pushed to
any registered subscriber, so stream transports can forward them live
while polling transports drain the queue.
"""

from __future__ import annotations

import threading

from ..errors import EvalError, HvxError
from ..reader import Span
from ..session import FuelPolicy, Session, UiEvent
from ..visx import instantiate_default
from ..wire import encode_ui, json_to_datum


def _require(params: dict, key: str):
    if key not in params:
        raise EvalError(f"missing required parameter '{key}'")
    return params[key]


def _span_from(value) -> Span:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) for v in value)
    ):
        raise EvalError("span must be a [start, end] byte pair")
    return Span(value[0], value[1])


class ManagedSession:
    def __init__(self, sid: str, session: Session):
        self.sid = sid
        self.session = session
        self.lock = threading.RLock()
        self.pending = []
        self.run_thread = None


class SessionManager:
    """Multiplexes sessions; one lock per session serializes its requests."""

    def __init__(self, fuel_policy: FuelPolicy | None = None):
        self.fuel_policy = fuel_policy
        self._sessions: dict[str, ManagedSession] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self._subscribers = []

    def subscribe(self, callback):
        """callback(method, params) is invoked for every notification."""
        self._subscribers.append(callback)

    def _notify(self, ms: ManagedSession, method: str, params: dict):
        params = {"sessionId": ms.sid, **params}
        with self._lock:
            ms.pending.append({"method": method, "params": params})
        for cb in list(self._subscribers):
            cb(method, params)

    def _get(self, params) -> ManagedSession:
        sid = _require(params, "sessionId")
        ms = self._sessions.get(sid)
        if ms is None:
            raise EvalError(f"unknown session '{sid}'")
        return ms

    # ---------------------------------------------------------- methods

    def open(self, params: dict) -> dict:
        text = _require(params, "text")
        if not isinstance(text, str):
            raise EvalError("'text' must be a string")
        with self._lock:
            self._seq += 1
            sid = f"s:{self._seq}"
        session = Session(text, self.fuel_policy)
        ms = ManagedSession(sid, session)
        self._sessions[sid] = ms
        return {
            "sessionId": sid,
            "instances": self._instances_payload(session),
            "diagnostics": [d.to_wire() for d in session.diagnostics()],
        }

    def _instances_payload(self, session: Session):
        out = []
        for li in session.live_instances:
            out.append(
                {
                    "key": f"{li.key[0]}#{li.key[1]}",
                    "name": li.inst.name,
                    "qualified": li.inst.qualified,
                    "resolved": li.inst.resolved,
                    "span": li.inst.span.as_list(),
                    "stateText": session_state_text(li),
                }
            )
        return out

    def render(self, params: dict) -> dict:
        ms = self._get(params)
        with ms.lock:
            renders, diags = ms.session.render_all()
            return {
                "renders": [
                    {"span": r.span.as_list(), "key": r.key, "tree": encode_ui(r.tree)}
                    for r in renders
                ],
                "diagnostics": [d.to_wire() for d in diags],
            }

    def event(self, params: dict) -> dict:
        ms = self._get(params)
        handler_id = _require(params, "handlerId")
        payload = params.get("payload")
        event = UiEvent(handler_id, json_to_datum(payload) if payload is not None else None)
        with ms.lock:
            result = ms.session.dispatch(event)
            for delta in result.deltas:
                self._notify(ms, "documentDelta", delta.to_wire())
            for r in result.renders:
                self._notify(
                    ms,
                    "renderUpdate",
                    {"span": r.span.as_list(), "key": r.key, "tree": encode_ui(r.tree)},
                )
            for d in result.diagnostics:
                self._notify(ms, "diagnostic", d.to_wire())
            return {
                "deltas": [d.to_wire() for d in result.deltas],
                "diagnostics": [d.to_wire() for d in result.diagnostics],
            }

    def apply_text_edit(self, params: dict) -> dict:
        ms = self._get(params)
        span = _span_from(_require(params, "span"))
        replacement = _require(params, "replacement")
        with ms.lock:
            report = ms.session.apply_text_edit(span, replacement)
            renders, diags = ms.session.render_all()
            for r in renders:
                self._notify(
                    ms,
                    "renderUpdate",
                    {"span": r.span.as_list(), "key": r.key, "tree": encode_ui(r.tree)},
                )
            for d in diags:
                self._notify(ms, "diagnostic", d.to_wire())
            return {
                "kept": report.kept,
                "added": report.added,
                "removed": report.removed,
                "diagnostics": [d.to_wire() for d in diags],
            }

    def insert_visx(self, params: dict) -> dict:
        ms = self._get(params)
        name = _require(params, "name")
        offset = _require(params, "offset")
        if not isinstance(offset, int):
            raise EvalError("'offset' must be an integer byte position")
        with ms.lock:
            delta = ms.session.insert_visx(name, offset)
            self._notify(ms, "documentDelta", delta.to_wire())
            renders, diags = ms.session.render_all()
            for r in renders:
                self._notify(
                    ms,
                    "renderUpdate",
                    {"span": r.span.as_list(), "key": r.key, "tree": encode_ui(r.tree)},
                )
            return {
                "delta": delta.to_wire(),
                "diagnostics": [d.to_wire() for d in diags],
            }

    def run(self, params: dict) -> dict:
        ms = self._get(params)
        with ms.lock:
            if ms.session.status == "running":
                raise EvalError("already running")

            def work():
                try:
                    result = ms.session.run(
                        on_output=lambda s: self._notify(ms, "runOutput", {"text": s})
                    )
                except HvxError as exc:
                    # lost the race with another run request; still answer
                    self._notify(ms, "runDone", {"error": exc.message, "span": None})
                    return
                if result.status == "ok":
                    self._notify(ms, "runDone", {"value": result.value_text})
                else:
                    self._notify(
                        ms,
                        "runDone",
                        {
                            "error": result.error,
                            "span": result.error_span.as_list() if result.error_span else None,
                        },
                    )

            thread = threading.Thread(target=work, name=f"hvx-run-{ms.sid}", daemon=True)
            ms.run_thread = thread
            thread.start()
            return {"status": "running"}

    def run_sync(self, params: dict) -> dict:
        """Blocking run used by transports that cannot push notifications."""
        ms = self._get(params)
        result = ms.session.run(
            on_output=lambda s: self._notify(ms, "runOutput", {"text": s})
        )
        payload = {"status": result.status, "output": result.output}
        if result.status == "ok":
            payload["value"] = result.value_text
            self._notify(ms, "runDone", {"value": result.value_text})
        else:
            payload["error"] = result.error
            self._notify(ms, "runDone", {"error": result.error})
        return payload

    def stop(self, params: dict) -> dict:
        ms = self._get(params)
        status = ms.session.stop()
        return {"status": status}

    def save(self, params: dict) -> dict:
        ms = self._get(params)
        with ms.lock:
            text = ms.session.save()
        path = params.get("path")
        if path:
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
        return {"text": text}

    def defs(self, params: dict) -> dict:
        ms = self._get(params)
        with ms.lock:
            session = ms.session
            names = session.registry.names()
            return {
                "defs": [
                    {
                        "name": name,
                        "instanceText": instantiate_default(
                            name, session.registry, session.world.current_ns
                        ),
                    }
                    for name in names
                ]
            }

    def status(self, params: dict) -> dict:
        ms = self._get(params)
        return {
            "status": ms.session.status,
            "instances": self._instances_payload(ms.session),
            "diagnostics": [d.to_wire() for d in ms.session.diagnostics()],
        }

    def drain_notifications(self, params: dict) -> dict:
        ms = self._get(params)
        with self._lock:
            pending, ms.pending = ms.pending, []
        return {"notifications": pending}

    def wait_run_done(self, sid: str, timeout: float = 10.0):
        ms = self._sessions.get(sid)
        if ms is not None and ms.run_thread is not None:
            ms.run_thread.join(timeout)

    METHODS = {
        "session/open": open,
        "session/render": render,
        "session/event": event,
        "session/applyTextEdit": apply_text_edit,
        "session/insertVisx": insert_visx,
        "session/run": run,
        "session/runSync": run_sync,
        "session/stop": stop,
        "session/save": save,
        "session/defs": defs,
        "session/status": status,
        "session/notifications": drain_notifications,
    }

    def handle(self, method: str, params: dict):
        fn = self.METHODS.get(method)
        if fn is None:
            raise KeyError(method)
        return fn(self, params or {})


def session_state_text(li) -> str:
    from ..reader import print_datum

    try:
        return print_datum(li.box.value)
    except (ValueError, AttributeError):
        return ""


def error_payload(exc: HvxError) -> dict:
    span = getattr(exc, "span", None)
    if isinstance(span, Span):
        span = span.as_list()
    elif isinstance(span, tuple):
        span = list(span)
    return {"message": exc.message, "span": span}
