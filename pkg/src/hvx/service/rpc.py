"""Newline-delimited JSON-RPC 2.0 subset over stdio or TCP localhost.

One message per line. Requests carry an ``id`` and get exactly one
response; server-initiated notifications carry no id. Responses are
serialized with sorted keys so replaying a recorded request log yields
byte-identical bodies.
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading

from ..errors import HvxError
from ..session import FuelPolicy
from .manager import SessionManager, error_payload

PARSE_ERROR = -32700
METHOD_NOT_FOUND = -32601
INVALID_REQUEST = -32600
APP_ERROR = 1


def _dumps(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def handle_message(manager: SessionManager, line: str):
    """One request line to one response dict (None for notifications in)."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        return {
            "jsonrpc": "2.0",
            "id": None,
            "error": {"code": PARSE_ERROR, "message": f"parse error: {exc.msg}"},
        }
    if not isinstance(msg, dict) or "method" not in msg:
        return {
            "jsonrpc": "2.0",
            "id": msg.get("id") if isinstance(msg, dict) else None,
            "error": {"code": INVALID_REQUEST, "message": "invalid request"},
        }
    mid = msg.get("id")
    method = msg["method"]
    params = msg.get("params") or {}
    try:
        result = manager.handle(method, params)
    except KeyError:
        return {
            "jsonrpc": "2.0",
            "id": mid,
            "error": {"code": METHOD_NOT_FOUND, "message": f"method not found: {method}"},
        }
    except HvxError as exc:
        return {
            "jsonrpc": "2.0",
            "id": mid,
            "error": {"code": APP_ERROR, "message": exc.message, "data": error_payload(exc)},
        }
    if mid is None:
        return None
    return {"jsonrpc": "2.0", "id": mid, "result": result}


class _Writer:
    """Serializes writes so responses and async notifications interleave
    cleanly on one stream."""

    def __init__(self, write_line):
        self._write_line = write_line
        self._lock = threading.Lock()

    def send(self, msg: dict):
        with self._lock:
            self._write_line(_dumps(msg))


def _serve_stream(manager: SessionManager, read_line, writer: _Writer):
    manager.subscribe(
        lambda method, params: writer.send(
            {"jsonrpc": "2.0", "method": method, "params": params}
        )
    )
    while True:
        line = read_line()
        if not line:
            return
        line = line.strip()
        if not line:
            continue
        response = handle_message(manager, line)
        if response is not None:
            writer.send(response)


def serve_stdio(fuel_policy: FuelPolicy | None = None):
    manager = SessionManager(fuel_policy)

    def write_line(s):
        sys.stdout.write(s + "\n")
        sys.stdout.flush()

    _serve_stream(manager, sys.stdin.readline, _Writer(write_line))


def serve_tcp(port: int, fuel_policy: FuelPolicy | None = None, ready_callback=None):
    """TCP server on localhost; each connection gets its own manager, so
    sessions on different connections are fully independent."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            manager = SessionManager(fuel_policy)

            def write_line(s):
                self.wfile.write((s + "\n").encode("utf-8"))
                self.wfile.flush()

            def read_line():
                raw = self.rfile.readline()
                return raw.decode("utf-8") if raw else ""

            try:
                _serve_stream(manager, read_line, _Writer(write_line))
            except (BrokenPipeError, ConnectionResetError):
                pass

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server(("127.0.0.1", port), Handler)
    if ready_callback is not None:
        ready_callback(server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
