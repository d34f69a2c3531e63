import threading
import time

import pytest

from hvx.corpus import fixture_source
from hvx.errors import EvalError
from hvx.kernel import run_program
from hvx.reader import Span, kw, map_get, print_datum, read_one
from hvx.session import FuelPolicy, Session, UiEvent
from hvx.wire import json_to_datum

LOOPING_RENDER = """
(ns user)
(defvisx Looper
  (state :x 0)
  (render (fn [this] (reduce (fn [a b] a) 0 (range 100000000))))
  (elaborate (fn [st] 0)))
^{:visx Looper} (Looper {})
"""


def open_counter():
    return Session(fixture_source("counter"))


def click(session, renders=None):
    renders = renders or session.render_all()[0]
    hid = renders[0].tree.find_handler("on-click")
    return session.dispatch(UiEvent(hid))


def test_open_counter():
    s = open_counter()
    assert len(s.live_instances) == 1
    assert print_datum(s.live_instances[0].box.value) == "{:count 42}"
    assert s.status == "idle"
    assert s.handlers == {}  # no render has run yet


def test_open_empty_file():
    s = Session("")
    assert s.live_instances == []
    assert s.run().value_text == "nil"


def test_open_unresolved_instance_stays_textual():
    s = Session("^{:visx Ghost} (Ghost {:n 1})")
    assert len(s.live_instances) == 1
    assert not s.live_instances[0].inst.resolved
    renders, diags = s.render_all()
    assert renders == []
    assert any("unresolved" in d.message for d in diags)


def test_open_parse_error_text_only_mode():
    s = Session("(def x 1")
    assert s.parse_error is not None
    assert any(d.phase == "read" for d in s.diagnostics())
    renders, diags = s.render_all()
    assert renders == [] and s.live_instances == []


def test_render_counter_tree():
    s = open_counter()
    renders, diags = s.render_all()
    assert diags == []
    tree = renders[0].tree
    assert tree.tag == "button"
    assert tree.children == ["42"]
    assert tree.attrs["on-click"].startswith("h:")


def test_render_fuel_diagnostic_isolates_instance():
    s = Session(fixture_source("counter") + LOOPING_RENDER.replace("(ns user)", ""))
    renders, diags = s.render_all()
    assert len(renders) == 1  # the counter still renders
    assert any(d.message == "fuel exhausted" for d in diags)
    assert s.status == "idle"
    # the session stays responsive
    res = click(s, renders)
    assert res.deltas and "{:count 43}" in s.doc.text


def test_dispatch_updates_text_and_rerenders():
    s = open_counter()
    res = click(s)
    assert [d.replacement for d in res.deltas] == ["{:count 43}"]
    assert "{:count 43}" in s.doc.text
    assert res.renders and res.renders[0].tree.children == ["43"]


def test_dispatch_unknown_and_stale_handlers():
    s = open_counter()
    renders, _ = s.render_all()
    hid = renders[0].tree.find_handler("on-click")
    with pytest.raises(EvalError, match="unknown handler"):
        s.dispatch(UiEvent("h:999"))
    s.dispatch(UiEvent(hid))  # re-renders, retiring hid
    with pytest.raises(EvalError, match="stale handler"):
        s.dispatch(UiEvent(hid))


def test_dispatch_handler_error_leaves_document_unchanged():
    text = """
(ns user)
(defvisx Bad
  (state :n 1)
  (render (fn [this]
    [:button {:on-click (fn [] (do (swap! this update :n inc) (error "late boom")))} "x"]))
  (elaborate (fn [st] (get st :n))))
^{:visx Bad} (Bad {:n 1})
"""
    s = Session(text)
    renders, _ = s.render_all()
    before = s.doc.text
    res = s.dispatch(UiEvent(renders[0].tree.find_handler("on-click")))
    assert res.deltas == []
    assert any("late boom" in d.message for d in res.diagnostics)
    assert s.doc.text == before
    assert print_datum(s.live_instances[0].box.value) == "{:n 1}"  # rolled back


def test_bezier_ratio_event_moves_derived_points():
    s = Session(fixture_source("bezier"))
    renders, _ = s.render_all()
    hid = renders[0].tree.find_handler("on-change")
    res = s.dispatch(UiEvent(hid, json_to_datum("0.8")))
    assert [d.replacement for d in res.deltas] == ["{:ratio 0.8}"]
    assert "(Midpoints {:ratio 0.8})" in s.doc.text
    # the re-rendered widget reflects the moved state
    retree = res.renders[0].tree

    def inputs(node, out):
        if node.tag == "text-input":
            out.append(node.attrs.get("value"))
        for c in node.children:
            if hasattr(c, "tag"):
                inputs(c, out)
        return out

    assert inputs(retree, []) == ["0.8"]
    run = s.run()
    ab = map_get(run.value, kw("AB"))
    assert [c.val for c in ab.val] == [1.6, 0.0]


def test_apply_text_edit_on_state_literal_rerenders():
    s = open_counter()
    li = s.live_instances[0]
    s.apply_text_edit(li.inst.state_span, "{:count 7}")
    assert print_datum(s.live_instances[0].box.value) == "{:count 7}"
    renders, _ = s.render_all()
    assert renders[0].tree.children == ["7"]


def test_apply_text_edit_keeps_box_identity():
    s = open_counter()
    box_before = s.live_instances[0].box
    report = s.apply_text_edit(s.live_instances[0].inst.state_span, "{:count 9}")
    assert report.kept == ["user/Counter#0"]
    assert s.live_instances[0].box is box_before


def test_delete_instance_removes_it():
    s = open_counter()
    li = s.live_instances[0]
    report = s.apply_text_edit(li.inst.span, "nil")
    assert report.removed == ["user/Counter#0"]
    assert s.live_instances == []
    renders, _ = s.render_all()
    assert renders == []


def test_insert_visx_text_appears_and_renders():
    s = open_counter()
    delta = s.insert_visx("Counter", s.doc.byte_length())
    assert "^{:visx Counter} (Counter {:count 0})" in delta.replacement
    assert len(s.live_instances) == 2
    renders, diags = s.render_all()
    assert len(renders) == 2 and diags == []


def test_run_counter_and_backwards_compat():
    s = open_counter()
    click(s)
    result = s.run()
    assert result.status == "ok" and result.value_text == "43"
    assert run_program(s.doc.text).value_text == "43"


def test_run_crash_keeps_widgets_alive():
    s = Session(fixture_source("counter") + "\n(/ 1 0)\n")
    result = s.run()
    assert result.status == "crashed" and "division by zero" in result.error
    assert s.status == "crashed"
    renders, diags = s.render_all()
    assert len(renders) == 1 and diags == []
    res = click(s, renders)
    assert res.deltas  # dispatch still works after the crash


def test_stop_when_idle_errors():
    s = open_counter()
    with pytest.raises(EvalError, match="not running"):
        s.stop()


def test_stop_interrupts_looping_run():
    # iterative burner: effectively unbounded, no deep recursion
    s = Session("(reduce + 0 (range 100000000000))", FuelPolicy(run_fuel=None, quantum=2000))
    done = {}

    def runner():
        done["result"] = s.run()

    t = threading.Thread(target=runner)
    t.start()
    deadline = time.time() + 5
    while s.status != "running" and time.time() < deadline:
        time.sleep(0.01)
    time.sleep(0.05)
    s.stop()
    t.join(timeout=5)
    assert done["result"].status == "stopped"
    assert done["result"].error == "stopped"
    assert s.status == "stopped"
    # session is still usable afterwards
    assert s.apply_text_edit(Span(0, s.doc.byte_length()), "(+ 1 2)").kept == []
    assert s.run().value_text == "3"


def test_phase_separation_run_env_clean():
    s = open_counter()
    s.render_all()
    click(s)
    result = s.run()
    world = result.run_world
    handler_closures = {id(c) for c, _ in s.handlers.values()}
    boxes = {id(li.box) for li in s.live_instances}
    for ns, name, value in world.all_bindings():
        assert id(value) not in handler_closures, (ns, name)
        assert id(value) not in boxes, (ns, name)
        assert not name.startswith("h:")


def test_writeback_equivalence_reopen():
    s = Session(fixture_source("counter"))
    renders, _ = s.render_all()
    for _ in range(3):
        res = click(s, renders)
        renders = res.renders
    reopened = Session(s.save())
    assert [li.box.value for li in reopened.live_instances] == [
        li.box.value for li in s.live_instances
    ]


def test_linked_views_bisimulation():
    # widget -> text: dispatch then scan equals box
    s = open_counter()
    click(s)
    from hvx.visx import scan

    insts = scan(s.doc, s.registry)
    assert print_datum(insts[0].state) == "{:count 43}"
    assert s.live_instances[0].box.value == read_one("{:count 43}")
    # text -> widget: splice a state literal, box follows
    s.apply_text_edit(s.live_instances[0].inst.state_span, "{:count 99}")
    assert s.live_instances[0].box.value == read_one("{:count 99}")


def test_stateless_instance_writeback_rewrites_whole_form():
    text = fixture_source("counter").replace(
        "^{:visx Counter} (Counter {:count 42})", "^{:visx Counter} (Counter)"
    )
    s = Session(text)
    assert print_datum(s.live_instances[0].box.value) == "{:count 0}"  # defaults fill
    renders, _ = s.render_all()
    res = s.dispatch(UiEvent(renders[0].tree.find_handler("on-click")))
    assert res.deltas and "^{:visx Counter} (Counter {:count 1})" in s.doc.text
    assert s.run().value_text == "1"


def test_malformed_visx_tag_is_flagged():
    s = Session("^:visx (Counter {:count 1})")
    assert len(s.live_instances) == 1
    inst = s.live_instances[0].inst
    assert not inst.resolved
    assert any("malformed" in d for d in inst.diagnostics)
    renders, diags = s.render_all()
    assert renders == [] and diags


def test_two_instances_update_independently():
    text = fixture_source("counter") + "\n^{:visx Counter} (Counter {:count 7})\n"
    s = Session(text)
    renders, _ = s.render_all()
    assert [r.tree.children for r in renders] == [["42"], ["7"]]
    second = next(r for r in renders if r.key == "user/Counter#1")
    s.dispatch(UiEvent(second.tree.find_handler("on-click")))
    assert "{:count 42}" in s.doc.text and "{:count 8}" in s.doc.text


def test_dispatch_after_insertion_above_updates_right_instance():
    # inserting a new instance above shifts ordinals; a handler minted
    # before the edit must still mutate the widget it was rendered for
    s = open_counter()
    renders, _ = s.render_all()
    old_handler = renders[0].tree.find_handler("on-click")
    s.insert_visx("Counter", 0)
    assert [li.key for li in s.live_instances] == [("user/Counter", 0), ("user/Counter", 1)]
    res = s.dispatch(UiEvent(old_handler))
    assert [d.replacement for d in res.deltas] == ["{:count 43}"]
    assert "{:count 0}" in s.doc.text  # the inserted instance is untouched
    assert "{:count 43}" in s.doc.text


def test_redefinition_replaces_and_rerenders():
    s = open_counter()
    renders, _ = s.render_all()
    assert renders[0].tree.tag == "button"
    new_render = '(render (fn [this] [:span {} (str "n=" (get @this :count))]))'
    text = s.doc.text.replace(
        '(render (fn [this]\n    [:button {:on-click (fn [] (swap! this update :count inc))}\n      (str (get @this :count))]))',
        new_render,
    )
    assert text != s.doc.text
    s.apply_text_edit(Span(0, s.doc.byte_length()), text)
    renders, diags = s.render_all()
    assert diags == []
    assert renders[0].tree.tag == "span"
    assert renders[0].tree.children == ["n=42"]


def test_code_editor_node_carries_state_path_and_span():
    s = Session(fixture_source("color-picker"))
    renders, diags = s.render_all()
    assert diags == []
    outer = next(r for r in renders if r.key.startswith("user/ColorPicker"))

    def find_editor(node):
        if getattr(node, "tag", None) == "code-editor":
            return node
        for c in getattr(node, "children", []):
            found = find_editor(c)
            if found:
                return found
        return None

    editor = find_editor(outer.tree)
    assert editor is not None
    assert editor.attrs["state-path"] == [":alpha-code"]
    start, end = editor.attrs["field-span"]
    assert s.doc.text.encode()[start:end].decode().startswith('"(* base-alpha')


def test_nested_instance_dispatch_writes_inside_string():
    s = Session(fixture_source("color-picker"))
    renders, _ = s.render_all()
    slider = next(r for r in renders if r.key.startswith("user/Slider"))
    hid = slider.tree.find_handler("on-change")
    res = s.dispatch(UiEvent(hid, json_to_datum("3")))
    assert res.deltas
    assert "(Slider {:value 3})" in s.doc.text
    run = s.run()
    assert map_get(run.value, kw("alpha")).val == 192  # 64 * 3
