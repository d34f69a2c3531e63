"""Executable fixtures with independent oracles and scripted transcripts.

Each fixture is a real ``.hvx`` document. ``fixture_check`` runs it both
with and without a session and compares the result against an oracle
implemented separately (hand formula, brute-force simulation, or the
plain-text twin of a hybrid program). ``fixture_events`` replays a
recorded gesture script and asserts the byte-level document deltas.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .kernel import run_program
from .reader import Datum, print_datum, read_document
from .session import Session, UiEvent
from .wire import json_to_datum

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_names():
    return sorted(load_manifest().keys())


def load_manifest() -> dict:
    with open(FIXTURES / "manifest.json", "r", encoding="utf-8") as f:
        return json.load(f)


def fixture_source(name: str) -> str:
    entry = load_manifest()[name]
    return (FIXTURES / entry["source"]).read_text(encoding="utf-8")


@dataclass
class CheckReport:
    name: str
    ok: bool
    details: list = field(default_factory=list)

    def add(self, ok: bool, what: str):
        self.details.append(("ok" if ok else "FAIL", what))
        if not ok:
            self.ok = False


# ------------------------------------------------------------------
# value conversion helpers for oracle comparison
# ------------------------------------------------------------------

def datum_to_py(d):
    """Reader data to plain Python for oracle-side comparisons."""
    if not isinstance(d, Datum):
        return d
    k = d.kind
    if k in ("number", "string", "boolean"):
        return d.val
    if k == "nil":
        return None
    if k == "keyword":
        return ":" + d.val
    if k == "symbol":
        return d.val
    if k in ("list", "vector"):
        return [datum_to_py(c) for c in d.val]
    if k == "map":
        return {_py_key(kd): datum_to_py(vd) for kd, vd in d.val}
    raise ValueError(k)


def _py_key(kd):
    value = datum_to_py(kd)
    if isinstance(value, (list, dict)):
        return print_datum(kd)  # unhashable keys fall back to their text
    return value


def tree_to_text(t) -> str:
    """Python tree tuple (color, left, value, right) to fixture syntax."""
    if t is None:
        return "nil"
    color, left, value, right = t
    return f"[:{color} {tree_to_text(left)} {value} {tree_to_text(right)}]"


def replace_last_form(text: str, replacement: str) -> str:
    """Swap the final top-level form of a program for a new driver form."""
    doc = read_document(text)
    last = doc.forms[-1]
    data = text.encode("utf-8")
    return (data[: last.span.start] + replacement.encode("utf-8") + data[last.span.end :]).decode("utf-8")


# ------------------------------------------------------------------
# oracles
# ------------------------------------------------------------------

def balance_oracle(t):
    """Okasaki rebalance over (color, left, value, right) tuples."""

    def red(x):
        return x is not None and x[0] == "red"

    if t is None or t[0] != "black":
        return t
    _, l, x_val, r = t
    if red(l) and red(l[1]):
        a, x, b = l[1][1], l[1][2], l[1][3]
        y, c = l[2], l[3]
        z, d = x_val, r
        return ("red", ("black", a, x, b), y, ("black", c, z, d))
    if red(l) and red(l[3]):
        a, x = l[1], l[2]
        b, y, c = l[3][1], l[3][2], l[3][3]
        z, d = x_val, r
        return ("red", ("black", a, x, b), y, ("black", c, z, d))
    if red(r) and red(r[1]):
        a, x = l, x_val
        b, y, c = r[1][1], r[1][2], r[1][3]
        z, d = r[2], r[3]
        return ("red", ("black", a, x, b), y, ("black", c, z, d))
    if red(r) and red(r[3]):
        a, x = l, x_val
        b, y = r[1], r[2]
        c, z, d = r[3][1], r[3][2], r[3][3]
        return ("red", ("black", a, x, b), y, ("black", c, z, d))
    return t


def rotation_inputs():
    """The four red-red shapes that require a rotation, plus one balanced."""
    leafy = lambda v: ("black", None, v, None)
    return [
        ("black", ("red", ("red", leafy(1), 2, leafy(3)), 4, leafy(5)), 6, leafy(7)),
        ("black", ("red", leafy(1), 2, ("red", leafy(3), 4, leafy(5))), 6, leafy(7)),
        ("black", leafy(1), 2, ("red", ("red", leafy(3), 4, leafy(5)), 6, leafy(7))),
        ("black", leafy(1), 2, ("red", leafy(3), 4, ("red", leafy(5), 6, leafy(7)))),
        ("black", leafy(1), 2, leafy(3)),
    ]


def random_tree(rng: random.Random, depth: int, counter):
    if depth == 0 or rng.random() < 0.25:
        return None
    color = rng.choice(["red", "black"])
    left = random_tree(rng, depth - 1, counter)
    value = next(counter)
    right = random_tree(rng, depth - 1, counter)
    return (color, left, value, right)


def random_trees(n: int, seed: int = 20240817, depth: int = 3):
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        counter = iter(range(1, 100))
        t = random_tree(rng, depth, counter)
        if t is not None:
            out.append(t)
    return out


def enumerate_trees(depth: int = 2):
    """Every tree shape/coloring up to the given depth (values fixed by
    position); exhaustive, so small depths only."""
    if depth == 0:
        return [None]
    below = enumerate_trees(depth - 1)
    out = [None]
    value = iter(range(1, 10_000))
    for color in ("red", "black"):
        for left in below:
            for right in below:
                out.append((color, left, next(value), right))
    return out


def midpoint_oracle(A, B, C, r):
    """Hand formula P = P1 + r*(P2 - P1), applied coordinate-wise."""

    def lerp(p, q):
        return [p[0] + r * (q[0] - p[0]), p[1] + r * (q[1] - p[1])]

    AB = lerp(A, B)
    BC = lerp(B, C)
    ABC = lerp(AB, BC)
    return {":AB": AB, ":BC": BC, ":ABC": ABC}


def protocol_oracle(trace) -> bool:
    """Direct simulation of the auth/req/done protocol: auth first (binds
    the token), req repeats with that token, done ends; only a finished
    session is accepted."""
    state = "start"
    token = None
    for call in trace:
        method, args = call["method"], call["args"]
        if state == "start" and method == "auth":
            token = call["result"]
            state = "good"
        elif state == "good" and method == "req" and len(args) > 1 and args[1] == token:
            state = "good"
        elif state == "good" and method == "done":
            state = "end"
        else:
            return False
    return state == "end"


def random_traces(n: int, seed: int = 7):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        trace = []
        token = "tok-%d" % rng.randint(1, 3)
        for _ in range(rng.randint(0, 5)):
            kind = rng.choice(["auth", "req", "req-bad", "done"])
            if kind == "auth":
                trace.append({"method": "auth", "args": ["u", "p"], "result": token})
            elif kind == "req":
                trace.append({"method": "req", "args": ["/x", token], "result": "data"})
            elif kind == "req-bad":
                trace.append({"method": "req", "args": ["/x", "tok-9"], "result": "data"})
            else:
                trace.append({"method": "done", "args": [], "result": None})
        out.append(trace)
    return out


def trace_to_text(trace) -> str:
    parts = []
    for call in trace:
        args = " ".join(json.dumps(a) for a in call["args"])
        result = "nil" if call["result"] is None else json.dumps(call["result"])
        parts.append('{:method %s :args [%s] :result %s}' % (json.dumps(call["method"]), args, result))
    return "[" + " ".join(parts) + "]"


# ------------------------------------------------------------------
# checks
# ------------------------------------------------------------------

def run_both_ways(text: str):
    """Plain expand+eval versus a session's Run action."""
    plain = run_program(text)
    session = Session(text)
    via_session = session.run()
    return plain, via_session


def _check_counter(report: CheckReport):
    text = fixture_source("counter")
    plain, via_session = run_both_ways(text)
    report.add(plain.value_text == "42", f"plain run gives 42 (got {plain.value_text})")
    report.add(via_session.value_text == "42", "session run agrees")


def _check_bezier(report: CheckReport):
    text = fixture_source("bezier")
    plain, via_session = run_both_ways(text)
    got = datum_to_py(plain.value)
    want = midpoint_oracle([0, 0], [2, 0], [2, 2], 0.5)
    for key in (":AB", ":BC", ":ABC"):
        same = all(abs(a - b) == 0 for a, b in zip(got[key], want[key]))
        report.add(same, f"{key} matches hand formula exactly (got {got[key]})")
    report.add(via_session.value_text == plain.value_text, "session run agrees")


def _check_tsuro_tile(report: CheckReport):
    text = fixture_source("tsuro-tile")
    plain, via_session = run_both_ways(text)
    got = datum_to_py(plain.value)
    want = {}
    for p, q in [["A", "E"], ["B", "F"], ["G", "H"]]:
        want[p], want[q] = q, p
    report.add(got == want, f"connection table matches oracle (got {got})")
    report.add(via_session.value_text == plain.value_text, "session run agrees")


def _tree_results_equal(a: Datum, b: Datum) -> bool:
    return a == b


def _check_rb_balance(report: CheckReport, n_random: int = 50):
    hybrid = fixture_source("rb-balance")
    textual = fixture_source("rb-balance-text")
    trees = rotation_inputs() + random_trees(n_random)
    mismatches = 0
    for t in trees:
        driver = f"(balance {tree_to_text(t)})"
        hv = run_program(replace_last_form(hybrid, driver)).value
        tv = run_program(replace_last_form(textual, driver)).value
        if not _tree_results_equal(hv, tv):
            mismatches += 1
            continue
        want = balance_oracle(t)
        if datum_to_py(hv) != datum_to_py_tree(want):
            mismatches += 1
    report.add(mismatches == 0, f"hybrid == textual == oracle on {len(trees)} trees ({mismatches} mismatches)")


def datum_to_py_tree(t):
    if t is None:
        return None
    color, left, value, right = t
    return [":" + color, datum_to_py_tree(left), value, datum_to_py_tree(right)]


def _check_state_machine(report: CheckReport, n_random: int = 30):
    text = fixture_source("state-machine")
    plain, via_session = run_both_ways(text)
    report.add(plain.value_text == "[true false false]", f"built-in traces (got {plain.value_text})")
    report.add(via_session.value_text == plain.value_text, "session run agrees")
    mismatches = []
    for trace in random_traces(n_random):
        driver = f"(check-protocol {trace_to_text(trace)})"
        got = run_program(replace_last_form(text, driver)).value_text == "true"
        want = protocol_oracle(trace)
        if got != want:
            mismatches.append(trace)
    report.add(not mismatches, f"{n_random} random traces match the simulation oracle")


def _check_form_builder(report: CheckReport):
    text = fixture_source("form-builder")
    plain, via_session = run_both_ways(text)
    report.add(plain.value_text == "{:score 7}", f"filled form elaborates to a dictionary (got {plain.value_text})")
    report.add(via_session.value_text == plain.value_text, "session run agrees")
    source_defs = {f.val[1].val for f in read_document(text).forms if f.kind == "list" and f.val and f.val[0].kind == "symbol" and f.val[0].val == "defvisx"}
    generated = {d.split("/")[-1] for d in plain.registry.names()} - source_defs
    report.add("GradeForm" in generated, f"registry holds a generated definition {sorted(generated)}")


def _check_color_picker(report: CheckReport):
    text = fixture_source("color-picker")
    plain, via_session = run_both_ways(text)
    report.add(
        plain.value_text == "{:r 200 :g 100 :b 50 :alpha 128}",
        f"nested code computes the alpha channel (got {plain.value_text})",
    )
    report.add(via_session.value_text == plain.value_text, "session run agrees")
    session = Session(text)
    names = [li.inst.name for li in session.live_instances]
    report.add(names == ["ColorPicker", "Slider"], f"scan finds nested instance, outer first (got {names})")


_CHECKS = {
    "counter": _check_counter,
    "bezier": _check_bezier,
    "tsuro-tile": _check_tsuro_tile,
    "rb-balance": _check_rb_balance,
    "state-machine": _check_state_machine,
    "form-builder": _check_form_builder,
    "color-picker": _check_color_picker,
}


def fixture_check(name: str) -> CheckReport:
    report = CheckReport(name, ok=True)
    check = _CHECKS.get(name)
    if check is None:
        report.add(False, f"no check registered for fixture '{name}'")
        return report
    check(report)
    return report


# ------------------------------------------------------------------
# scripted event transcripts
# ------------------------------------------------------------------

def _handler_for(session: Session, renders, instance_ordinal: int, attr: str):
    key = session.live_instances[instance_ordinal].key
    key_str = f"{key[0]}#{key[1]}"
    for r in renders:
        if r.key == key_str:
            hid = r.tree.find_handler(attr)
            if hid:
                return hid
    raise AssertionError(f"no handler {attr!r} on instance {instance_ordinal}")


def fixture_events(name: str) -> CheckReport:
    """Replay the fixture's recorded gesture script; every document delta
    must match the recording byte for byte."""
    report = CheckReport(name, ok=True)
    entry = load_manifest()[name]
    if "transcript" not in entry:
        report.add(False, f"fixture '{name}' has no transcript")
        return report
    with open(FIXTURES / entry["transcript"], "r", encoding="utf-8") as f:
        script = json.load(f)
    text = fixture_source(name)
    for old, new in script.get("patch", []):
        text = text.replace(old, new)
    session = Session(text)
    renders, _ = session.render_all()
    for i, step in enumerate(script["steps"]):
        hid = _handler_for(session, renders, step["instance"], step["attr"])
        payload = step.get("payload")
        event = UiEvent(hid, json_to_datum(payload) if payload is not None else None)
        result = session.dispatch(event)
        deltas = [(d.span.as_list(), d.replacement) for d in result.deltas]
        if "span" in step:
            report.add(
                deltas == [(step["span"], step["replacement"])],
                f"step {i}: delta is byte-exact (got {deltas})",
            )
        else:
            report.add(
                len(deltas) == 1 and deltas[0][1] == step["replacement"],
                f"step {i}: replacement matches (got {deltas})",
            )
        renders = result.renders or renders
    if "finalTextContains" in script:
        report.add(script["finalTextContains"] in session.doc.text, "final text contains expected state")
    if "finalRunValue" in script:
        run = session.run()
        report.add(run.value_text == script["finalRunValue"], f"final run gives {script['finalRunValue']} (got {run.value_text})")
    # persistence: reopening the saved text reproduces the state boxes
    reopened = Session(session.save())
    same = len(reopened.live_instances) == len(session.live_instances) and all(
        a.box.value == b.box.value for a, b in zip(reopened.live_instances, session.live_instances)
    )
    report.add(same, "saved text reopens to identical state boxes")
    return report
