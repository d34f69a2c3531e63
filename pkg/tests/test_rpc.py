import json
import socket
import threading
import time

from hvx.corpus import fixture_source
from hvx.service.manager import SessionManager
from hvx.service.rpc import handle_message, serve_tcp


def rpc(manager, method, params, mid=1):
    line = json.dumps({"jsonrpc": "2.0", "id": mid, "method": method, "params": params})
    return handle_message(manager, line)


def test_malformed_json_is_parse_error():
    out = handle_message(SessionManager(), "{nope")
    assert out["error"]["code"] == -32700


def test_unknown_method():
    out = rpc(SessionManager(), "session/frobnicate", {})
    assert out["error"]["code"] == -32601


def test_open_render_event_save_flow():
    m = SessionManager()
    opened = rpc(m, "session/open", {"text": fixture_source("counter")})["result"]
    sid = opened["sessionId"]
    assert opened["instances"][0]["stateText"] == "{:count 42}"

    rendered = rpc(m, "session/render", {"sessionId": sid})["result"]
    tree = rendered["renders"][0]["tree"]
    assert tree["tag"] == ":button" and tree["children"] == ["42"]
    hid = tree["attrs"][":on-click"]

    evt = rpc(m, "session/event", {"sessionId": sid, "handlerId": hid})["result"]
    assert evt["deltas"][0]["replacement"] == "{:count 43}"

    saved = rpc(m, "session/save", {"sessionId": sid})["result"]
    assert "{:count 43}" in saved["text"]

    notes = rpc(m, "session/notifications", {"sessionId": sid})["result"]["notifications"]
    methods = [n["method"] for n in notes]
    assert "documentDelta" in methods and "renderUpdate" in methods


def test_session_level_error_payload():
    m = SessionManager()
    out = rpc(m, "session/render", {"sessionId": "s:999"})
    assert out["error"]["code"] == 1
    assert "unknown session" in out["error"]["message"]
    sid = rpc(m, "session/open", {"text": fixture_source("counter")})["result"]["sessionId"]
    out = rpc(m, "session/event", {"sessionId": sid, "handlerId": "h:77"})
    assert "unknown handler" in out["error"]["message"]


def test_two_sessions_are_independent():
    m = SessionManager()
    a = rpc(m, "session/open", {"text": fixture_source("counter")})["result"]["sessionId"]
    b = rpc(m, "session/open", {"text": fixture_source("counter")})["result"]["sessionId"]
    ra = rpc(m, "session/render", {"sessionId": a})["result"]
    hid = ra["renders"][0]["tree"]["attrs"][":on-click"]
    rpc(m, "session/event", {"sessionId": a, "handlerId": hid})
    assert "{:count 43}" in rpc(m, "session/save", {"sessionId": a})["result"]["text"]
    assert "{:count 42}" in rpc(m, "session/save", {"sessionId": b})["result"]["text"]


def test_insert_visx_method():
    m = SessionManager()
    opened = rpc(m, "session/open", {"text": fixture_source("counter")})["result"]
    sid = opened["sessionId"]
    doc_len = len(rpc(m, "session/save", {"sessionId": sid})["result"]["text"].encode())
    out = rpc(m, "session/insertVisx", {"sessionId": sid, "name": "Counter", "offset": doc_len})["result"]
    assert "(Counter {:count 0})" in out["delta"]["replacement"]
    status = rpc(m, "session/status", {"sessionId": sid})["result"]
    assert len(status["instances"]) == 2


def test_protocol_determinism_replay():
    log = [
        {"id": 1, "method": "session/open", "params": {"text": fixture_source("counter")}},
        {"id": 2, "method": "session/render", "params": {"sessionId": "s:1"}},
        {"id": 3, "method": "session/event", "params": {"sessionId": "s:1", "handlerId": "h:1"}},
        {"id": 4, "method": "session/save", "params": {"sessionId": "s:1"}},
        {"id": 5, "method": "session/defs", "params": {"sessionId": "s:1"}},
    ]

    def replay():
        manager = SessionManager()
        out = []
        for msg in log:
            resp = handle_message(manager, json.dumps({"jsonrpc": "2.0", **msg}))
            out.append(json.dumps(resp, sort_keys=True))
        return out

    assert replay() == replay()


# ------------------------------------------------------------------
# live TCP server
# ------------------------------------------------------------------

class TcpClient:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.buf = b""
        self.mid = 0
        self.notifications = []

    def _read_message(self):
        while b"\n" not in self.buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line)

    def call(self, method, params):
        self.mid += 1
        msg = {"jsonrpc": "2.0", "id": self.mid, "method": method, "params": params}
        self.sock.sendall((json.dumps(msg) + "\n").encode())
        while True:
            got = self._read_message()
            if got.get("id") == self.mid:
                return got
            self.notifications.append(got)

    def wait_notification(self, method, pred=None, timeout=10):
        deadline = time.time() + timeout
        while time.time() < deadline:
            for n in self.notifications:
                if n.get("method") == method and (pred is None or pred(n)):
                    return n
            self.sock.settimeout(deadline - time.time())
            try:
                self.notifications.append(self._read_message())
            except (TimeoutError, socket.timeout):
                break
        raise AssertionError(f"no {method} notification")

    def close(self):
        self.sock.close()


def start_server():
    ready = {}
    event = threading.Event()

    def cb(port):
        ready["port"] = port
        event.set()

    t = threading.Thread(target=serve_tcp, args=(0,), kwargs={"ready_callback": cb}, daemon=True)
    t.start()
    assert event.wait(5)
    return ready["port"]


def test_tcp_end_to_end_counter_and_stop():
    port = start_server()
    c = TcpClient(port)
    try:
        opened = c.call("session/open", {"text": fixture_source("counter")})["result"]
        sid = opened["sessionId"]
        tree = c.call("session/render", {"sessionId": sid})["result"]["renders"][0]["tree"]
        hid = tree["attrs"][":on-click"]
        evt = c.call("session/event", {"sessionId": sid, "handlerId": hid})["result"]
        assert evt["deltas"][0]["replacement"] == "{:count 43}"
        delta_note = c.wait_notification("documentDelta")
        assert delta_note["params"]["replacement"] == "{:count 43}"

        # run then stop a looping program
        loop_sid = c.call("session/open", {"text": "(reduce + 0 (range 100000000000))"})["result"]["sessionId"]
        assert c.call("session/run", {"sessionId": loop_sid})["result"]["status"] == "running"
        time.sleep(0.05)
        assert c.call("session/stop", {"sessionId": loop_sid})["result"]["status"] == "stopped"
        done = c.wait_notification("runDone")
        assert done["params"]["error"] == "stopped"

        # a finished run reports its value
        ok_sid = c.call("session/open", {"text": "(+ 40 2)"})["result"]["sessionId"]
        c.call("session/run", {"sessionId": ok_sid})
        done = c.wait_notification("runDone", pred=lambda n: n["params"]["sessionId"] == ok_sid)
        assert done["params"]["value"] == "42"
    finally:
        c.close()
