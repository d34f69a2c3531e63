"""Visual interactive syntax extensions.

``defvisx`` registers a definition: an ordered state schema with
defaults, a render closure (edit time, receives the state box), and an
elaborate closure (compile time, receives the plain state value and
returns code). An instance is an ordinary call form tagged with
``^{:visx Name}`` metadata; using one expands to whatever its elaborate
closure produces, which is then expanded again, so elaboration may emit
macros, further instances, or whole new definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EvalError, ExpandError, FuelExhausted, ReadError
from .lang import (
    Closure,
    ExpandCtx,
    PyMacro,
    call_value,
    expand,
)
from .reader import (
    Datum,
    Document,
    Span,
    dmap,
    kw,
    map_contains,
    map_get,
    print_datum,
    qualified_parts,
    read_all,
)

VISX_KEY = kw("visx")


@dataclass
class VisxDef:
    qualified: str
    short: str
    ns: str
    schema: list  # ordered (keyword Datum, default Datum) pairs
    render: Closure
    elaborate: Closure

    def schema_keys(self):
        return [k for k, _ in self.schema]

    def defaults_map(self) -> Datum:
        return dmap(self.schema)


class Registry:
    """Definitions visible to one expansion environment."""

    def __init__(self):
        self.defs: dict[str, VisxDef] = {}

    def register(self, vdef: VisxDef):
        self.defs[vdef.qualified] = vdef

    def resolve(self, name: str, prefer_ns: str | None = None) -> VisxDef | None:
        if name in self.defs:
            return self.defs[name]
        if prefer_ns is not None and f"{prefer_ns}/{name}" in self.defs:
            return self.defs[f"{prefer_ns}/{name}"]
        matches = [d for d in self.defs.values() if d.short == name]
        if len(matches) == 1:
            return matches[0]
        return None

    def names(self):
        return sorted(self.defs.keys())


@dataclass
class VisxInstance:
    name: str
    span: Span
    state: Datum
    state_span: Span | None
    qualified: str | None = None
    container: int | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def resolved(self) -> bool:
        return self.qualified is not None


# ------------------------------------------------------------------
# plain-data checks and serialization
# ------------------------------------------------------------------

def find_unserializable(value, path=()):
    """Path to the first non-plain-data leaf, or None when serializable."""
    if not isinstance(value, Datum):
        return path if path else ("value",)
    for i, child in enumerate(value.children):
        label = path
        if value.kind == "map" and i % 2 == 1:
            label = path + (print_datum(value.val[i // 2][0]),)
        bad = find_unserializable(child, label)
        if bad is not None:
            return bad
    return None


def is_plain_data(value) -> bool:
    return find_unserializable(value) is None


def minimal_state(vdef: VisxDef, merged: Datum, keep_keys) -> Datum:
    """Smallest literal that reopens to ``merged``: keys already written
    stay, plus any key whose value moved off its schema default."""
    pairs = []
    for k, default in vdef.schema:
        value = map_get(merged, k, default)
        if any(k == kept for kept in keep_keys) or value != default:
            pairs.append((k, value))
    return dmap(pairs)


def serialize_state(state: Datum) -> str:
    """Canonical text for a state map; reading it back reproduces the map."""
    if not (isinstance(state, Datum) and state.kind == "map"):
        raise EvalError("state must be a map")
    bad = find_unserializable(state)
    if bad is not None:
        where = bad[0] if bad else "value"
        raise EvalError(f"unserializable value at {where}")
    return print_datum(state)


def merge_defaults(vdef: VisxDef, state: Datum) -> Datum:
    """State with schema defaults filled in, in schema order.

    Keys outside the schema are rejected; missing keys take defaults.
    """
    if not (isinstance(state, Datum) and state.kind == "map"):
        raise ExpandError(f"{vdef.short} state must be a map literal", span=state.span if isinstance(state, Datum) else None)
    schema_keys = vdef.schema_keys()
    for k, _ in state.val:
        if not any(k == sk for sk in schema_keys):
            raise ExpandError(
                f"unknown state key {print_datum(k)} for {vdef.short}",
                span=k.span or state.span,
            )
    pairs = []
    for k, default in vdef.schema:
        provided = map_get(state, k)
        pairs.append((k, provided if provided is not None else default))
    return dmap(pairs)


# ------------------------------------------------------------------
# defvisx
# ------------------------------------------------------------------

def _clause_map(form: Datum):
    clauses = {}
    for clause in form.val[2:]:
        if not (clause.kind == "list" and clause.val and clause.val[0].kind == "symbol"):
            raise ExpandError("defvisx clauses must be (state ...), (render ...), (elaborate ...)", span=clause.span or form.span)
        head = qualified_parts(clause.val[0].val)[1]
        if head in clauses:
            raise ExpandError(f"duplicate {head} clause in defvisx", span=clause.span)
        clauses[head] = clause
    unknown = set(clauses) - {"state", "render", "elaborate"}
    if unknown:
        raise ExpandError(f"unknown defvisx clause '{sorted(unknown)[0]}'", span=form.span)
    return clauses


def _parse_schema(clause: Datum | None, form: Datum):
    if clause is None:
        return []
    entries = clause.val[1:]
    if len(entries) % 2 != 0:
        raise ExpandError("state clause expects keyword/default pairs", span=clause.span)
    schema = []
    for k, default in zip(entries[::2], entries[1::2]):
        if k.kind != "keyword":
            raise ExpandError("state field names must be keywords", span=k.span or clause.span)
        if any(k == seen for seen, _ in schema):
            raise ExpandError(f"duplicate state key {print_datum(k)}", span=k.span or clause.span)
        if not is_plain_data(default):
            raise ExpandError(f"state default for {print_datum(k)} is not plain data", span=k.span or clause.span)
        schema.append((k, default))
    return schema


def _eval_component(clauses, which, form, ctx: ExpandCtx, env):
    clause = clauses.get(which)
    if clause is None:
        raise ExpandError(f"defvisx {form.val[1].val} is missing its {which} clause", span=form.span)
    if len(clause.val) != 2:
        raise ExpandError(f"{which} clause expects exactly one function", span=clause.span)
    from .lang import eval_form

    value = eval_form(expand(clause.val[1], ctx, env), env, ctx.fuel)
    if not isinstance(value, Closure) or value.is_macro:
        raise ExpandError(f"{which} must be a function", span=clause.span)
    if len(value.params) != 1 or value.rest is not None:
        raise ExpandError(f"{which} must take exactly one parameter", span=clause.span)
    return value


def make_instance_macro(vdef: VisxDef, registry: Registry) -> PyMacro:
    def expand_instance(form: Datum, ctx: ExpandCtx, env):
        args = form.val[1:]
        if len(args) > 1:
            raise ExpandError(f"{vdef.short} instance takes at most one state literal", span=form.span)
        state = args[0] if args else dmap([])
        bad = find_unserializable(state)
        if bad is not None:
            raise ExpandError(f"{vdef.short} state must be literal data", span=form.span)
        merged = merge_defaults(vdef, state)
        try:
            result = call_value(vdef.elaborate, [merged], ctx.fuel, span=form.span)
        except (EvalError, ExpandError, FuelExhausted) as exc:
            # errors raised inside elaborate point at the instance, not at
            # the elaborator's own internals
            exc.span = form.span
            raise
        if not isinstance(result, Datum):
            raise ExpandError(f"elaborate of {vdef.short} returned a non-syntax value", span=form.span)
        return result

    return PyMacro(vdef.short, expand_instance)


def define_visx(form: Datum, ctx: ExpandCtx, env) -> list:
    """Top-level handler for ``defvisx``; registers and interns the macro."""
    if len(form.val) < 2 or form.val[1].kind != "symbol":
        raise ExpandError("defvisx expects a name symbol", span=form.span)
    name = form.val[1].val
    clauses = _clause_map(form)
    schema = _parse_schema(clauses.get("state"), form)
    render = _eval_component(clauses, "render", form, ctx, env)
    elaborate = _eval_component(clauses, "elaborate", form, ctx, env)
    ns = env.ns
    vdef = VisxDef(
        qualified=f"{ns}/{name}",
        short=name,
        ns=ns,
        schema=schema,
        render=render,
        elaborate=elaborate,
    )
    registry: Registry = ctx.registry
    registry.register(vdef)
    env.world.intern(ns, name, make_instance_macro(vdef, registry))
    return []


def install(ctx: ExpandCtx):
    if ctx.registry is None:
        ctx.registry = Registry()
    ctx.toplevel_handlers["defvisx"] = define_visx


def elaborate_instance(inst: VisxInstance, registry: Registry, ctx: ExpandCtx) -> Datum:
    """Elaborate one instance from its written state and re-expand the result."""
    vdef = registry.resolve(inst.qualified or inst.name)
    if vdef is None:
        raise ExpandError(f"unresolved visx definition '{inst.name}'", span=inst.span)
    merged = merge_defaults(vdef, inst.state)
    try:
        result = call_value(vdef.elaborate, [merged], ctx.fuel, span=inst.span)
    except (EvalError, ExpandError) as exc:
        raise exc.with_span(inst.span)
    if not isinstance(result, Datum):
        raise ExpandError(f"elaborate of {vdef.short} returned a non-syntax value", span=inst.span)
    return expand(result, ctx, ctx.env())


def instantiate_default(name: str, registry: Registry, current_ns: str = "user") -> str:
    """Canonical instance text for Insert VIsx, using all schema defaults."""
    vdef = registry.resolve(name, prefer_ns=current_ns)
    if vdef is None:
        raise EvalError(f"unknown visx definition '{name}'")
    written = vdef.short if vdef.ns == current_ns else vdef.qualified
    state_text = print_datum(vdef.defaults_map())
    return f"^{{:visx {written}}} ({vdef.short} {state_text})"


# ------------------------------------------------------------------
# scanning
# ------------------------------------------------------------------

def _tag_name(d: Datum):
    if d.meta is None or d.meta.kind != "map" or not map_contains(d.meta, VISX_KEY):
        return None
    value = map_get(d.meta, VISX_KEY)
    if value is not None and value.kind == "symbol":
        return value.val
    return "?"


def _instance_from(d: Datum, name: str, base: int = 0) -> VisxInstance:
    diagnostics = []
    state = dmap([])
    state_span = None
    if name == "?":
        diagnostics.append("malformed :visx tag (expected a definition name)")
        name = "?"
    if d.kind == "list" and d.val and d.val[0].kind == "symbol":
        if len(d.val) >= 2:
            if d.val[1].kind == "map":
                state = d.val[1]
                if d.val[1].span is not None:
                    state_span = Span(base + d.val[1].span.start, base + d.val[1].span.end)
            else:
                diagnostics.append("instance state must be a map literal")
        if len(d.val) > 2:
            diagnostics.append("instance call takes at most one state literal")
    else:
        diagnostics.append("instance form is not a call")
    return VisxInstance(
        name=name,
        span=Span(base + d.span.start, base + d.span.end),
        state=state,
        state_span=state_span,
        diagnostics=diagnostics,
    )


def _scan_datum(d: Datum, out: list, base: int, text_bytes: bytes):
    name = _tag_name(d)
    if name is not None:
        inst = _instance_from(d, name, base)
        out.append(inst)
        _scan_string_fields(inst, d, out, base, text_bytes)
    for child in d.children:
        _scan_datum(child, out, base, text_bytes)


def _scan_string_fields(inst: VisxInstance, d: Datum, out: list, base: int, text_bytes: bytes):
    """Nested code lives in string state fields; scan it when the raw text
    maps one-to-one onto document bytes (no escapes)."""
    if d.kind != "list" or len(d.val) < 2 or d.val[1].kind != "map":
        return
    for _, v in d.val[1].val:
        if v.kind != "string" or v.span is None:
            continue
        start, end = base + v.span.start, base + v.span.end
        raw = text_bytes[start + 1 : end - 1]
        if b"\\" in raw:
            continue
        try:
            forms = read_all(raw.decode("utf-8"))
        except ReadError:
            continue
        idx = len(out) - 1
        for f in forms:
            nested_start = len(out)
            _scan_datum(f, out, start + 1, text_bytes)
            for ni in out[nested_start:]:
                if ni.container is None:
                    ni.container = idx


def scan(doc: Document, registry: Registry | None = None) -> list[VisxInstance]:
    """Every metadata-tagged instance in document order, outer first.

    Unresolved names are flagged as diagnostics, never failures: the
    document must stay editable no matter what it references.
    """
    out: list[VisxInstance] = []
    text_bytes = doc.text.encode("utf-8")
    current_ns = "user"
    for top in doc.forms:
        if (
            top.kind == "list"
            and len(top.val) >= 2
            and top.val[0].kind == "symbol"
            and top.val[0].val == "ns"
            and top.val[1].kind == "symbol"
        ):
            current_ns = top.val[1].val
        before = len(out)
        _scan_datum(top, out, 0, text_bytes)
        for inst in out[before:]:
            if registry is not None and inst.name != "?":
                vdef = registry.resolve(inst.name, prefer_ns=current_ns)
                if vdef is not None:
                    inst.qualified = vdef.qualified
                else:
                    inst.diagnostics.append(f"unresolved visx definition '{inst.name}'")
            elif inst.name != "?":
                inst.diagnostics.append(f"unresolved visx definition '{inst.name}'")
    out.sort(key=lambda i: (i.span.start, -i.span.end))
    return out
