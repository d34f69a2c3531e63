"""Acceptance suite: one test per release criterion, at its stated
tolerance. Each prints a PASS line so a full run reads as a checklist."""

import random
import subprocess
import sys
import threading
import time

import pytest

import hvx.corpus as corpus
from hvx.errors import HvxError, RunStopped
from hvx.kernel import compile_text, make_world, run_program
from hvx.lang import Fuel, active_world, eval_program
from hvx.reader import kw, map_get, print_datum, read_document
from hvx.session import FuelPolicy, Session, UiEvent
from hvx.wire import json_to_datum

PASS = "PASS: {}"


def done(msg):
    print(PASS.format(msg))


LOOPING_RENDER_DEF = """
(defvisx Looper
  (state :x 0)
  (render (fn [this] (reduce (fn [a b] a) 0 (range 100000000))))
  (elaborate (fn [st] 0)))
^{:visx Looper} (Looper {})
"""

ELABORATE_BOOM_DEF = """
(defvisx Boom
  (state :x 0)
  (render (fn [this] [:div {} "ok"]))
  (elaborate (fn [st] (error "elaborate boom"))))
^{:visx Boom} (Boom {})
"""


def click_counter(session, renders=None):
    renders = renders or session.render_all()[0]
    entry = next(r for r in renders if r.key.startswith("user/Counter"))
    return session.dispatch(UiEvent(entry.tree.find_handler("on-click")))


def test_counter_end_to_end(tmp_path):
    session = Session(corpus.fixture_source("counter"))
    click_counter(session)
    assert "{:count 43}" in session.doc.text
    saved = tmp_path / "counter_after_click.hvx"
    saved.write_text(session.save(), encoding="utf-8")
    out = subprocess.run(
        [sys.executable, "-m", "hvx.cli", "run", str(saved)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert out.returncode == 0 and out.stdout.strip() == "43", out
    done("counter end-to-end: click writes {:count 43}; cli run prints 43")


def test_backwards_compatibility_all_fixtures():
    names = ["counter", "bezier", "tsuro-tile", "rb-balance", "state-machine", "form-builder", "color-picker"]
    for name in names:
        text = corpus.fixture_source(name)
        plain = run_program(text)  # no session anywhere on this path
        via_session = Session(text).run()
        assert via_session.status == "ok", (name, via_session.error)
        assert plain.value == via_session.value, name
        assert plain.value_text == via_session.value_text, name
    done(f"backwards compatibility: cli run == session run on all {len(names)} fixtures")


def test_persistence_roundtrip_random_scripts():
    rng = random.Random(20240817)
    sequences = 0

    counter_text = corpus.fixture_source("counter")
    for _ in range(60):
        session = Session(counter_text)
        renders, _ = session.render_all()
        for _ in range(rng.randint(0, 6)):
            res = click_counter(session, renders)
            renders = res.renders or renders
        reopened = Session(session.save())
        assert [li.box.value for li in reopened.live_instances] == [
            li.box.value for li in session.live_instances
        ]
        sequences += 1

    bezier_text = corpus.fixture_source("bezier")
    for _ in range(60):
        session = Session(bezier_text)
        renders, _ = session.render_all()
        for _ in range(rng.randint(0, 4)):
            ratio = rng.choice(["0.1", "0.25", "0.8", "0.9", "1.0", str(rng.random())])
            entry = renders[0]
            res = session.dispatch(UiEvent(entry.tree.find_handler("on-change"), json_to_datum(ratio)))
            renders = res.renders or renders
        reopened = Session(session.save())
        assert [li.box.value for li in reopened.live_instances] == [
            li.box.value for li in session.live_instances
        ]
        sequences += 1

    assert sequences >= 100
    done(f"persistence round-trip: {sequences} random event scripts save+reopen to equal boxes")


def test_red_black_oracle():
    hybrid = corpus.fixture_source("rb-balance")
    textual = corpus.fixture_source("rb-balance-text")
    exhaustive = [t for t in corpus.enumerate_trees(2) if t is not None]
    trees = corpus.rotation_inputs()[:4] + exhaustive + corpus.random_trees(50)
    for t in trees:
        driver = f"(balance {corpus.tree_to_text(t)})"
        hv = run_program(corpus.replace_last_form(hybrid, driver)).value
        tv = run_program(corpus.replace_last_form(textual, driver)).value
        assert hv == tv, corpus.tree_to_text(t)  # exact structural equality
        assert corpus.datum_to_py(hv) == corpus.datum_to_py_tree(corpus.balance_oracle(t))
    done(f"red-black oracle: hybrid == textual == brute-force on {len(trees)} trees")


def test_bezier_numeric_check():
    text = corpus.fixture_source("bezier")
    got = corpus.datum_to_py(run_program(text).value)
    assert got[":AB"] == [1.0, 0.0]
    assert got[":BC"] == [2.0, 1.0]
    assert got[":ABC"] == [1.5, 0.5]

    text08 = text.replace("(Midpoints {:ratio 0.5})", "(Midpoints {:ratio 0.8})")
    got08 = corpus.datum_to_py(run_program(text08).value)
    want08 = corpus.midpoint_oracle([0, 0], [2, 0], [2, 2], 0.8)
    for key in (":AB", ":BC", ":ABC"):
        for a, b in zip(got08[key], want08[key]):
            assert abs(a - b) <= 1e-12, (key, a, b)
    done("bezier numeric: ratio 0.5 exact in binary64; ratio 0.8 within 1e-12 of hand formula")


def test_hygiene_under_alpha_renaming():
    sm = corpus.fixture_source("state-machine")
    template = sm + """
(let [VAR "user-token"]
  (vector VAR (check-protocol [{:method "auth" :args ["u" "p"] :result "tok"}
                               {:method "req" :args ["/x" "tok"] :result "ok"}
                               {:method "done" :args [] :result nil}])))
"""
    with_t = run_program(template.replace("VAR", "t")).value_text
    renamed = run_program(template.replace("VAR", "zz")).value_text
    assert with_t == renamed == '["user-token" true]'
    # the elaborator's own binder is a gensym with the same base name
    expanded, _ = compile_text(sm)
    printed = "\n".join(print_datum(f) for f in expanded)
    assert "t__" in printed
    done("hygiene: machinery's gensym 't' binder never captures the user's 't'")


def test_phase_and_crash_isolation():
    text = corpus.fixture_source("counter") + LOOPING_RENDER_DEF + ELABORATE_BOOM_DEF
    session = Session(text)
    # (b) elaborate exception surfaced as a compile diagnostic at open
    assert any("elaborate boom" in d.message for d in session.diagnostics())
    # (a) render infinite loop: a per-instance diagnostic, others render
    renders, diags = session.render_all()
    assert any(d.message == "fuel exhausted" for d in diags)
    assert any(r.key.startswith("user/Counter") for r in renders)
    # running this document crashes at compile; the session survives it
    result = session.run()
    assert result.status == "crashed" and "elaborate boom" in result.error
    renders, _ = session.render_all()
    res = click_counter(session, renders)
    assert res.deltas and "{:count 43}" in session.doc.text

    # (c) runtime exception in an otherwise healthy document
    session = Session(corpus.fixture_source("counter") + "\n(/ 1 0)\n")
    result = session.run()
    assert result.status == "crashed" and "division by zero" in result.error
    renders, _ = session.render_all()
    res = click_counter(session, renders)
    assert res.deltas and "{:count 43}" in session.doc.text

    # fresh run env carries zero edit-phase bindings
    ok_session = Session(corpus.fixture_source("counter"))
    ok_session.render_all()
    click_counter(ok_session)
    run = ok_session.run()
    handler_closures = {id(c) for c, _ in ok_session.handlers.values()}
    boxes = {id(li.box) for li in ok_session.live_instances}
    leaked = [
        (ns, name)
        for ns, name, value in run.run_world.all_bindings()
        if id(value) in handler_closures or id(value) in boxes or name.startswith("h:")
    ]
    assert leaked == []
    done("phase & crash isolation: render loop, elaborate error, runtime crash all survived; run env clean")


def test_meta_extension_add_field():
    text = corpus.fixture_source("form-builder")
    source_defs = {
        f.val[1].val
        for f in read_document(text).forms
        if f.kind == "list" and f.val and f.val[0].kind == "symbol" and f.val[0].val == "defvisx"
    }
    session = Session(text)
    renders, _ = session.render_all()
    hid = next(r.tree.find_handler("on-add-field") for r in renders if r.tree.find_handler("on-add-field"))
    session.dispatch(UiEvent(hid, json_to_datum({":name": "comments", ":default": 0})))
    generated = {n.split("/")[-1] for n in session.registry.names()} - source_defs
    assert "GradeForm" in generated
    result = session.run()
    assert result.status == "ok"
    assert map_get(result.value, kw("comments")) is not None
    assert result.value_text == "{:score 7 :comments 0}"
    done("meta-extension: add-field event grows a generated definition; instances elaborate with it")


def test_state_machine_compile_check():
    text = corpus.fixture_source("state-machine").replace(
        ':pred ""}\n                          {:from "good"',
        ':pred "(= result t)"}\n                          {:from "good"',
        1,
    )
    with pytest.raises(HvxError, match="out-of-scope variable t") as exc:
        run_program(text)
    span = exc.value.span
    start = span[0] if isinstance(span, tuple) else span.start
    end = span[1] if isinstance(span, tuple) else span.end
    instance_text = text.encode()[start:end].decode()
    assert instance_text.startswith("^{:visx Machine}") and "(Machine" in instance_text
    done("state-machine compile check: out-of-scope predicate variable fails at expand time, at the instance")


def test_fuel_and_stop():
    # a stop request lands mid-quantum; evaluation halts at the next
    # quantum boundary, never more than one quantum later
    quantum = 100_000
    request_at = 123_456
    expanded, _ = compile_text("(reduce + 0 (range 100000000000))")
    world = make_world("run")
    fuel = Fuel(None, quantum=quantum, stop_check=lambda: fuel.ticks >= request_at)
    with pytest.raises(RunStopped):
        with active_world(world):
            eval_program(expanded, world, fuel)
    assert fuel.ticks - request_at <= quantum, fuel.ticks

    # threaded session run stops promptly and the session stays usable
    session = Session("(reduce + 0 (range 100000000000))", FuelPolicy(quantum=10_000))
    outcome = {}
    t = threading.Thread(target=lambda: outcome.setdefault("r", session.run()))
    t.start()
    deadline = time.time() + 5
    while session.status != "running" and time.time() < deadline:
        time.sleep(0.005)
    session.stop()
    t.join(timeout=10)
    assert outcome["r"].status == "stopped" and outcome["r"].error == "stopped"

    # a looping render is a per-instance diagnostic, session still live
    text = corpus.fixture_source("counter") + LOOPING_RENDER_DEF
    session = Session(text)
    renders, diags = session.render_all()
    assert any(d.message == "fuel exhausted" for d in diags)
    assert any(r.key.startswith("user/Counter") for r in renders)
    res = click_counter(session, renders)
    assert res.deltas
    done("fuel/stop: run stops within one quantum of the request; looping render stays a per-instance diagnostic")
