"""Edit-time session engine.

A session owns one open document: it compiles the document to register
visual-syntax definitions, scans for instances, keeps one state box per
live instance, renders instances to abstract widget trees in a sandboxed
(fuel-bounded) edit phase, routes gesture events to handlers, writes
changed state back into the text eagerly, and runs the program in fresh
compile/run worlds so nothing from edit time can leak into a run.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .errors import EvalError, FuelExhausted, HvxError, ReadError, RunStopped
from .kernel import make_expand_ctx, make_world, run_program
from .lang import (
    Box,
    Builtin,
    Closure,
    Env,
    Fuel,
    active_world,
    call_value,
    expand_toplevel,
    top_env,
)
from .reader import (
    Datum,
    Document,
    Span,
    dnil,
    kw,
    map_get,
    read_document,
    replace_bytes,
    splice,
    insert_text,
)
from .visx import instantiate_default, merge_defaults, minimal_state, scan, serialize_state


@dataclass
class FuelPolicy:
    edit_fuel: int = 1_000_000
    compile_fuel: int = 1_000_000
    run_fuel: int | None = None
    quantum: int = 100_000


@dataclass
class Diagnostic:
    span: Span | None
    phase: str
    message: str

    def to_wire(self):
        return {
            "span": list(self.span.as_list()) if isinstance(self.span, Span) else (list(self.span) if self.span else None),
            "phase": self.phase,
            "message": self.message,
        }


@dataclass
class UiNode:
    """Abstract retained-mode widget node; the IDE maps tags to elements."""

    tag: str
    attrs: dict
    children: list

    def find_handler(self, attr_name: str):
        """First handler id under the given attribute, searching depth-first."""
        v = self.attrs.get(attr_name)
        if isinstance(v, str) and v.startswith("h:"):
            return v
        for c in self.children:
            if isinstance(c, UiNode):
                found = c.find_handler(attr_name)
                if found:
                    return found
        return None


@dataclass
class UiEvent:
    handler_id: str
    payload: Datum | None = None


@dataclass
class DocumentDelta:
    span: Span
    replacement: str

    def to_wire(self):
        return {"span": self.span.as_list(), "replacement": self.replacement}


@dataclass
class RenderEntry:
    span: Span
    tree: UiNode
    key: str


@dataclass
class DispatchResult:
    deltas: list = field(default_factory=list)
    renders: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


@dataclass
class ReconcileReport:
    kept: list
    added: list
    removed: list


@dataclass
class RunResult:
    status: str
    value: Datum | None = None
    value_text: str = ""
    output: str = ""
    error: str | None = None
    error_span: Span | None = None
    run_world: object = None


class LiveInstance:
    __slots__ = ("inst", "box", "key", "handler_ids")

    def __init__(self, inst, box, key):
        self.inst = inst
        self.box = box
        self.key = key
        self.handler_ids = []

    @property
    def span(self):
        return self.inst.span


def _values_equal(a, b):
    if isinstance(a, Datum) and isinstance(b, Datum):
        return a == b
    return a is b


def _key_str(key):
    return f"{key[0]}#{key[1]}"


class Session:
    """One open document plus its edit-time sandbox."""

    def __init__(self, text: str, fuel_policy: FuelPolicy | None = None):
        self.fuel_policy = fuel_policy or FuelPolicy()
        self.status = "idle"
        self.crash_reason = None
        self.open_diagnostics: list[Diagnostic] = []
        self.compile_diagnostics: list[Diagnostic] = []
        self.live_instances: list[LiveInstance] = []
        self.handlers: dict[str, tuple] = {}
        self.retired_handlers: set[str] = set()
        self._handler_seq = 0
        self._boxes_by_key: dict = {}
        self._starts_by_key: dict = {}
        self._stop_event = None
        self._run_lock = threading.Lock()
        self.parse_error = None
        self.world = None
        self.registry = None
        self.edit_env = None
        try:
            self.doc = read_document(text)
        except ReadError as exc:
            # text-only mode: the document stays editable as raw text
            self.doc = Document(text, ())
            self.parse_error = exc
            self.open_diagnostics.append(Diagnostic(Span(exc.offset, exc.offset), "read", exc.message))
        self._recompile()

    # -------------------------------------------------- compile & scan

    def _recompile(self, edit=None):
        """Fresh compile pass over the whole document.

        Registers every definition (including ones produced by expanding
        earlier forms); a failing form becomes a diagnostic, not a dead
        session. ``edit`` describes the byte edit that triggered the pass
        (start, end, new length) so box reconciliation can follow spans.
        """
        self.compile_diagnostics = []
        world = make_world("compile")
        ctx = make_expand_ctx(world, self.fuel_policy.compile_fuel)
        if self.parse_error is None:
            for form in self.doc.forms:
                ctx.fresh_fuel()
                try:
                    with active_world(world):
                        expand_toplevel(form, ctx)
                except HvxError as exc:
                    span = exc.span if exc.span is not None else form.span
                    if isinstance(span, tuple):
                        span = Span(span[0], span[1])
                    self.compile_diagnostics.append(Diagnostic(span, "compile", exc.message))
                except RecursionError:
                    self.compile_diagnostics.append(Diagnostic(form.span, "compile", "recursion too deep"))
        self.world = world
        self.ctx = ctx
        self.registry = ctx.registry
        self.edit_env = Env(world, parent=top_env(world), phase="edit")
        self._rescan(edit)

    def _expected_starts(self, edit):
        """Where each old instance's span start lands after a single edit:
        spans past the edited range shift by the length delta, earlier or
        containing spans stay anchored at their start."""
        start, end, new_len = edit
        delta = new_len - (end - start)
        expected = {}
        for key, old_start in self._starts_by_key.items():
            pos = old_start + delta if old_start >= end else old_start
            expected[(key[0], pos)] = key
        return expected

    def _rescan(self, edit=None):
        """Rebuild live instances, keeping box identity for survivors.

        Identity is named by (definition, ordinal); across a single text
        edit, boxes follow spans (an instance merely pushed down by an
        insertion keeps its box), otherwise ordinals match directly.
        """
        instances = scan(self.doc, self.registry) if self.parse_error is None else []
        expected = self._expected_starts(edit) if edit is not None else None
        counters: dict[str, int] = {}
        new_boxes = {}
        starts = {}
        keymap = {}
        live = []
        for inst in instances:
            base = inst.qualified or inst.name
            ordinal = counters.get(base, 0)
            counters[base] = ordinal + 1
            key = (base, ordinal)
            if expected is not None:
                old_key = expected.get((base, inst.span.start))
            else:
                old_key = key if key in self._boxes_by_key else None
            box = self._boxes_by_key.get(old_key) if old_key is not None else None
            if box is None:
                box = Box(dnil())
            elif old_key != key:
                keymap[old_key] = key
            vdef = self.registry.resolve(inst.qualified) if inst.qualified else None
            if vdef is not None:
                try:
                    box.value = merge_defaults(vdef, inst.state)
                except HvxError as exc:
                    inst.diagnostics.append(exc.message)
                    box.value = inst.state
            else:
                box.value = inst.state
            live.append(LiveInstance(inst, box, key))
            new_boxes[key] = box
            starts[key] = inst.span.start
        self._boxes_by_key = new_boxes
        self._starts_by_key = starts
        self.live_instances = live
        for hid, (closure, key) in list(self.handlers.items()):
            key = keymap.get(key, key)
            if key in new_boxes:
                self.handlers[hid] = (closure, key)
            else:
                del self.handlers[hid]
                self.retired_handlers.add(hid)

    def _live_by_key(self, key):
        for li in self.live_instances:
            if li.key == key:
                return li
        return None

    def diagnostics(self):
        return list(self.open_diagnostics) + list(self.compile_diagnostics)

    def save(self) -> str:
        return self.doc.text

    # -------------------------------------------------- rendering

    def _fresh_handler_id(self, closure, key, owner: LiveInstance) -> str:
        self._handler_seq += 1
        hid = f"h:{self._handler_seq}"
        self.handlers[hid] = (closure, key)
        owner.handler_ids.append(hid)
        return hid

    def _retire_handlers_for(self, key):
        """Retire every handler owned by the instance with this key; ids
        survive rescans because ownership is keyed, not object-bound."""
        for hid, (_, k) in list(self.handlers.items()):
            if k == key:
                del self.handlers[hid]
                self.retired_handlers.add(hid)

    def render_all(self):
        """Render every resolved instance; each gets its own fuel budget so
        one runaway render cannot take the session down."""
        renders, diags = [], []
        for li in self.live_instances:
            entry, d = self._render_one(li)
            if entry is not None:
                renders.append(entry)
            diags.extend(d)
        return renders, diags

    def _render_one(self, li: LiveInstance):
        inst = li.inst
        self._retire_handlers_for(li.key)
        if not inst.resolved:
            return None, [Diagnostic(inst.span, "edit", f"unresolved visx definition '{inst.name}'")]
        vdef = self.registry.resolve(inst.qualified)
        fuel = Fuel(self.fuel_policy.edit_fuel, quantum=self.fuel_policy.quantum)
        try:
            with active_world(self.world):
                tree_datum = call_value(vdef.render, [li.box], fuel, span=inst.span)
            node = self._to_ui(tree_datum, li)
        except FuelExhausted:
            return None, [Diagnostic(inst.span, "edit", "fuel exhausted")]
        except HvxError as exc:
            span = exc.span if exc.span is not None else inst.span
            if isinstance(span, tuple):
                span = Span(span[0], span[1])
            return None, [Diagnostic(span, "edit", exc.message)]
        except RecursionError:
            return None, [Diagnostic(inst.span, "edit", "recursion too deep")]
        if not isinstance(node, UiNode):
            return None, [Diagnostic(inst.span, "edit", "render must produce a widget tree")]
        return RenderEntry(inst.span, node, _key_str(li.key)), []

    def _to_ui(self, d, li: LiveInstance):
        if isinstance(d, Datum):
            if d.kind == "string":
                return d.val
            if d.kind == "number":
                return str(d.val)
            if d.kind == "boolean":
                return "true" if d.val else "false"
            if d.kind == "nil":
                return None
            if d.kind == "keyword":
                return ":" + d.val
            if d.kind == "vector" and d.val and d.val[0].kind == "keyword":
                tag = d.val[0].val
                rest = d.val[1:]
                attrs = {}
                if rest and rest[0].kind == "map":
                    attrs = self._convert_attrs(rest[0], li)
                    rest = rest[1:]
                children = []
                self._append_children(rest, children, li)
                node = UiNode(tag, attrs, children)
                if tag == "code-editor":
                    self._check_code_editor(node, li)
                return node
        raise EvalError("render produced an invalid widget node", span=li.inst.span)

    def _append_children(self, items, out, li):
        # list children splice in place, hiccup-style, so (map ...) output
        # embeds directly
        for c in items:
            if isinstance(c, Datum) and c.kind == "list":
                self._append_children(c.val, out, li)
                continue
            converted = self._to_ui(c, li)
            if converted is not None:
                out.append(converted)

    def _convert_attrs(self, m: Datum, li: LiveInstance) -> dict:
        out = {}
        for k, v in m.val:
            if k.kind != "keyword":
                raise EvalError("widget attribute names must be keywords", span=li.inst.span)
            out[k.val] = self._convert_attr_value(v, li)
        return out

    def _convert_attr_value(self, v, li: LiveInstance):
        if isinstance(v, (Closure, Builtin)):
            return self._fresh_handler_id(v, li.key, li)
        if isinstance(v, Datum):
            if v.kind in ("string",):
                return v.val
            if v.kind == "number":
                return v.val
            if v.kind == "boolean":
                return bool(v.val)
            if v.kind == "nil":
                return None
            if v.kind == "keyword":
                return ":" + v.val
            if v.kind == "vector":
                return [self._convert_attr_value(c, li) for c in v.val]
        raise EvalError("unsupported widget attribute value", span=li.inst.span)

    def _check_code_editor(self, node: UiNode, li: LiveInstance):
        path = node.attrs.get("state-path")
        if not isinstance(path, list) or not path:
            raise EvalError("a :code-editor node must carry a :state-path attribute", span=li.inst.span)
        span = self._state_field_span(li, path)
        if span is not None:
            node.attrs["field-span"] = span.as_list()

    def _state_field_span(self, li: LiveInstance, path):
        """Absolute span of the string literal a state path points at."""
        inst = li.inst
        if inst.state_span is None or inst.state.span is None:
            return None
        delta = inst.state_span.start - inst.state.span.start
        current = inst.state
        for step in path:
            if not (isinstance(current, Datum) and current.kind == "map"):
                return None
            name = step[1:] if isinstance(step, str) and step.startswith(":") else step
            current = map_get(current, kw(str(name)))
            if current is None:
                return None
        if current.span is None:
            return None
        return Span(current.span.start + delta, current.span.end + delta)

    # -------------------------------------------------- events

    def dispatch(self, event: UiEvent) -> DispatchResult:
        """Run one gesture handler; write changed state back into the text."""
        entry = self.handlers.get(event.handler_id)
        if entry is None:
            if event.handler_id in self.retired_handlers:
                raise EvalError("stale handler")
            raise EvalError(f"unknown handler '{event.handler_id}'")
        closure, key = entry
        li = self._live_by_key(key)
        if li is None:
            raise EvalError("stale handler")
        snapshot = [(l.key, l.box, l.box.value) for l in self.live_instances]
        payload = event.payload if event.payload is not None else dnil()
        wants_arg = isinstance(closure, Builtin) or closure.params or closure.rest
        fuel = Fuel(self.fuel_policy.edit_fuel, quantum=self.fuel_policy.quantum)
        try:
            with active_world(self.world):
                call_value(closure, [payload] if wants_arg else [], fuel, span=li.inst.span)
        except FuelExhausted:
            self._restore(snapshot)
            return DispatchResult(diagnostics=[Diagnostic(li.inst.span, "edit", "fuel exhausted")])
        except HvxError as exc:
            self._restore(snapshot)
            span = exc.span if exc.span is not None else li.inst.span
            if isinstance(span, tuple):
                span = Span(span[0], span[1])
            return DispatchResult(diagnostics=[Diagnostic(span, "edit", exc.message)])
        except RecursionError:
            self._restore(snapshot)
            return DispatchResult(diagnostics=[Diagnostic(li.inst.span, "edit", "recursion too deep")])
        deltas, diags = self._writeback(snapshot)
        renders = []
        if deltas:
            r, rd = self.render_all()
            renders.extend(r)
            diags.extend(rd)
        return DispatchResult(deltas=deltas, renders=renders, diagnostics=diags)

    def _restore(self, snapshot):
        for _, box, value in snapshot:
            box.value = value

    def _writeback(self, snapshot):
        """Serialize every changed box into the document, one splice per
        instance; the text and the boxes stay linked at all times."""
        changed = []
        for key, box, old in snapshot:
            if not _values_equal(box.value, old):
                changed.append((key, box.value, old))
        deltas, diags = [], []
        for key, new_value, old in changed:
            li = self._live_by_key(key)
            if li is None:
                continue
            vdef = self.registry.resolve(li.inst.qualified) if li.inst.qualified else None
            try:
                to_write = new_value
                if vdef is not None:
                    merged = merge_defaults(vdef, new_value)  # reject unknown keys
                    keep = [k for k, _ in li.inst.state.val]
                    to_write = minimal_state(vdef, merged, keep)
                text = serialize_state(to_write)
                if li.inst.container is not None and ('"' in text or "\\" in text):
                    # the instance lives inside a string literal; quotes in
                    # its state would break the enclosing field
                    raise EvalError("nested instance state must not contain strings")
            except HvxError as exc:
                li.box.value = old
                diags.append(Diagnostic(li.inst.span, "edit", exc.message))
                continue
            if li.inst.state_span is not None:
                span = li.inst.state_span
                replacement = text
            else:
                span = li.inst.span
                short = vdef.short if vdef is not None else li.inst.name
                replacement = f"^{{:visx {li.inst.name}}} ({short} {text})"
            try:
                if li.inst.container is None and li.inst.state_span is not None:
                    new_doc = splice(self.doc, span, replacement)
                else:
                    new_doc = replace_bytes(self.doc, span, replacement)
            except HvxError as exc:
                li.box.value = old
                diags.append(Diagnostic(li.inst.span, "edit", exc.message))
                continue
            self.doc = new_doc
            deltas.append(DocumentDelta(span, replacement))
            self._recompile(edit=(span.start, span.end, len(replacement.encode("utf-8"))))
            for key2, v2, _ in changed:
                if key2 != key and key2 in self._boxes_by_key:
                    self._boxes_by_key[key2].value = v2
        return deltas, diags

    # -------------------------------------------------- text edits

    def apply_text_edit(self, span: Span, replacement: str) -> ReconcileReport:
        old_keys = set(self._boxes_by_key)
        edit = None
        if span.start == 0 and span.end == self.doc.byte_length():
            doc = read_document(replacement)  # full reload; match by ordinal
            self.parse_error = None
            self.open_diagnostics = []
        else:
            if self.parse_error is not None:
                raise EvalError("document has a parse error; only whole-document edits are accepted")
            doc = splice(self.doc, span, replacement)
            edit = (span.start, span.end, len(replacement.encode("utf-8")))
        self.doc = doc
        self._recompile(edit)
        new_keys = set(self._boxes_by_key)
        return ReconcileReport(
            kept=sorted(_key_str(k) for k in old_keys & new_keys),
            added=sorted(_key_str(k) for k in new_keys - old_keys),
            removed=sorted(_key_str(k) for k in old_keys - new_keys),
        )

    def insert_visx(self, name: str, offset: int) -> DocumentDelta:
        text = instantiate_default(name, self.registry, current_ns=self.world.current_ns)
        doc, span, actual = insert_text(self.doc, offset, text)
        self.doc = doc
        self._recompile(edit=(offset, offset, len(actual.encode("utf-8"))))
        return DocumentDelta(span, actual)

    # -------------------------------------------------- run / stop

    def run(self, stop_check=None, on_output=None) -> RunResult:
        """Expand and evaluate the document in fresh compile/run worlds.

        State boxes are written back eagerly on every change, so the text
        already carries every instance's current state.
        """
        with self._run_lock:
            if self.status == "running":
                raise EvalError("already running")
            self.status = "running"
            stop_event = threading.Event()
            self._stop_event = stop_event
            text = self.doc.text
        outputs = []

        def hook(s):
            outputs.append(s)
            if on_output is not None:
                on_output(s)

        def stopped():
            if stop_event.is_set():
                return True
            return bool(stop_check()) if stop_check is not None else False

        try:
            result = run_program(
                text,
                run_fuel=self.fuel_policy.run_fuel,
                compile_fuel=self.fuel_policy.compile_fuel,
                quantum=self.fuel_policy.quantum,
                stop_check=stopped,
                output_hook=hook,
            )
        except RunStopped:
            with self._run_lock:
                self.status = "stopped"
                self._stop_event = None
            return RunResult(status="stopped", error="stopped", output="".join(outputs))
        except HvxError as exc:
            span = exc.span
            if isinstance(span, tuple):
                span = Span(span[0], span[1])
            with self._run_lock:
                self.status = "crashed"
                self.crash_reason = exc.message
                self._stop_event = None
            return RunResult(status="crashed", error=exc.message, error_span=span, output="".join(outputs))
        with self._run_lock:
            if self.status == "running":
                self.status = "idle"
            self._stop_event = None
        return RunResult(
            status="ok",
            value=result.value,
            value_text=result.value_text,
            output="".join(outputs),
            run_world=result.run_world,
        )

    def stop(self) -> str:
        with self._run_lock:
            if self.status != "running" or self._stop_event is None:
                raise EvalError("not running")
            self._stop_event.set()
            self.status = "stopped"
            return self.status


def open_session(text: str, fuel_policy: FuelPolicy | None = None) -> Session:
    return Session(text, fuel_policy)
