"""Evaluator and macro expander for the host language subset.

The language is a small Clojure-like core: functions, destructuring
``let``, mutable boxes (atoms), ``defmacro`` with gensym and quasiquote,
a ``match`` special form with or-patterns, and namespaces. Every
evaluation runs under a fuel budget so misbehaving code can be cut off
and treated as a pause rather than a crash.

Code runs in one of three phases (edit, compile, run); a ``World`` is
created per phase and worlds never share bindings, so phase isolation
holds by construction.
"""

from __future__ import annotations

import itertools
import re
import threading as _threading

from .errors import EvalError, ExpandError, FuelExhausted, LangUserError, RunStopped
from .reader import (
    Datum,
    dbool,
    dlist,
    dmap,
    dnil,
    dnum,
    dstr,
    dvec,
    kw,
    map_assoc,
    map_contains,
    map_get,
    print_datum,
    qualified_parts,
    read_all,
    sym,
)

SPECIAL_FORMS = frozenset(
    [
        "def",
        "defn",
        "fn",
        "let",
        "if",
        "do",
        "quote",
        "quasiquote",
        "unquote",
        "unquote-splicing",
        "defmacro",
        "match",
        "ns",
        "defvisx",
    ]
)

_GENSYM_COUNTER = itertools.count(1)
_GENSYM_NAME_RE = re.compile(r".*__[0-9]+#$")


def gensym(prefix: str = "g") -> Datum:
    """A symbol distinct from every one previously minted in this process.

    The name carries a ``#`` so it cannot collide with ordinary
    identifiers, yet still round-trips through print/read.
    """
    return sym(f"{prefix}__{next(_GENSYM_COUNTER)}#")


# ------------------------------------------------------------------
# values
# ------------------------------------------------------------------

class Box:
    """The only mutable value: a single cell, created with ``atom``."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __repr__(self):
        return f"<box {show(self.value)}>"


class Closure:
    __slots__ = ("name", "params", "rest", "body", "env", "is_macro")

    def __init__(self, name, params, rest, body, env, is_macro=False):
        self.name = name
        self.params = params
        self.rest = rest
        self.body = body
        self.env = env
        self.is_macro = is_macro

    def __repr__(self):
        return f"<{'macro' if self.is_macro else 'fn'} {self.name or 'anonymous'}>"


class Builtin:
    __slots__ = ("name", "fn")

    def __init__(self, name, fn):
        self.name = name
        self.fn = fn

    def __repr__(self):
        return f"<builtin {self.name}>"


class PyMacro:
    """Kernel-provided macro implemented in Python; expands whole forms."""

    __slots__ = ("name", "fn")

    def __init__(self, name, fn):
        self.name = name
        self.fn = fn

    def __repr__(self):
        return f"<macro {self.name}>"


def is_macro_value(v) -> bool:
    return isinstance(v, PyMacro) or (isinstance(v, Closure) and v.is_macro)


def truthy(v) -> bool:
    if isinstance(v, Datum):
        if v.kind == "nil":
            return False
        if v.kind == "boolean":
            return bool(v.val)
    return True


# ------------------------------------------------------------------
# fuel
# ------------------------------------------------------------------

DEFAULT_EDIT_FUEL = 1_000_000
DEFAULT_QUANTUM = 100_000


MAX_EVAL_DEPTH = 1200


class Fuel:
    """Step budget. ``remaining=None`` means unlimited, but a stop check
    still runs once per quantum so long evaluations stay interruptible.

    Nesting depth is budgeted too (the evaluator is recursive and has no
    tail calls), so runaway recursion is a budget error, not a crash."""

    __slots__ = ("remaining", "quantum", "stop_check", "ticks", "depth", "max_depth", "_since_check")

    def __init__(self, remaining=DEFAULT_EDIT_FUEL, quantum=DEFAULT_QUANTUM, stop_check=None, max_depth=MAX_EVAL_DEPTH):
        self.remaining = remaining
        self.quantum = quantum
        self.stop_check = stop_check
        self.ticks = 0
        self.depth = 0
        self.max_depth = max_depth
        self._since_check = 0

    def tick(self, span=None):
        self.ticks += 1
        self._since_check += 1
        if self._since_check >= self.quantum:
            self._since_check = 0
            if self.stop_check is not None and self.stop_check():
                raise RunStopped("stopped", span=span)
        if self.remaining is not None:
            if self.remaining <= 0:
                raise FuelExhausted("fuel exhausted", span=span)
            self.remaining -= 1

    def charge(self, n, span=None):
        for _ in range(n):
            self.tick(span)

    def enter(self, span=None):
        self.depth += 1
        if self.depth > self.max_depth:
            raise FuelExhausted("fuel exhausted: evaluation too deep", span=span)

    def leave(self):
        self.depth -= 1


# ------------------------------------------------------------------
# environments
# ------------------------------------------------------------------

_MISSING = object()


class World:
    """Namespace table plus phase-global state for one phase of execution."""

    __slots__ = ("namespaces", "aliases", "current_ns", "phase", "output_hook", "output_buffer")

    def __init__(self, phase: str):
        self.namespaces = {"core": {}, "user": {}}
        self.aliases = {}
        self.current_ns = "user"
        self.phase = phase
        self.output_hook = None
        self.output_buffer = []

    def ns_defs(self, ns: str) -> dict:
        return self.namespaces.setdefault(ns, {})

    def intern(self, ns: str, name: str, value):
        self.ns_defs(ns)[name] = value

    def resolve_alias(self, ns: str, alias: str) -> str:
        return self.aliases.get(ns, {}).get(alias, alias)

    def add_alias(self, ns: str, alias: str, target: str):
        self.aliases.setdefault(ns, {})[alias] = target

    def emit_output(self, text: str):
        if self.output_hook is not None:
            self.output_hook(text)
        else:
            self.output_buffer.append(text)

    def all_bindings(self):
        for ns, defs in self.namespaces.items():
            for name, value in defs.items():
                yield ns, name, value


class Env:
    """Lexical frame chain; resolves through its namespace, then core."""

    __slots__ = ("frame", "parent", "ns", "phase", "world")

    def __init__(self, world: World, frame=None, parent=None, ns=None, phase=None):
        self.world = world
        self.frame = frame if frame is not None else {}
        self.parent = parent
        self.ns = ns if ns is not None else (parent.ns if parent else world.current_ns)
        self.phase = phase if phase is not None else (parent.phase if parent else world.phase)

    def child(self, frame=None):
        return Env(self.world, frame=frame if frame is not None else {}, parent=self)

    def lookup_lexical(self, name):
        env = self
        while env is not None:
            if name in env.frame:
                return env.frame[name]
            env = env.parent
        return _MISSING

    def lookup(self, name):
        ns_part, base = qualified_parts(name)
        if ns_part is not None:
            target = self.world.resolve_alias(self.ns, ns_part)
            defs = self.world.namespaces.get(target)
            if defs is not None and base in defs:
                return defs[base]
            return _MISSING
        v = self.lookup_lexical(name)
        if v is not _MISSING:
            return v
        defs = self.world.namespaces.get(self.ns)
        if defs is not None and name in defs:
            return defs[name]
        core = self.world.namespaces["core"]
        if name in core:
            return core[name]
        return _MISSING

    def lexical_names(self):
        env = self
        while env is not None:
            yield from env.frame.keys()
            env = env.parent


def top_env(world: World) -> Env:
    return Env(world, ns=world.current_ns, phase=world.phase)


# ------------------------------------------------------------------
# evaluation
# ------------------------------------------------------------------

def eval_form(form: Datum, env: Env, fuel: Fuel):
    fuel.enter(form.span)
    try:
        return _eval_form(form, env, fuel)
    finally:
        fuel.leave()


def _eval_form(form: Datum, env: Env, fuel: Fuel):
    fuel.tick(form.span)
    k = form.kind
    if k == "symbol":
        v = env.lookup(form.val)
        if v is _MISSING:
            raise EvalError(f"unbound symbol '{form.val}'", span=form.span)
        if is_macro_value(v):
            raise EvalError(f"macro '{form.val}' used as a value", span=form.span)
        return v
    if k in ("number", "string", "keyword", "boolean", "nil"):
        return form
    if k == "vector":
        return dvec([eval_form(c, env, fuel) for c in form.val])
    if k == "map":
        out = dmap([])
        for kd, vd in form.val:
            out = map_assoc(out, eval_form(kd, env, fuel), eval_form(vd, env, fuel))
        return out
    if k == "list":
        if len(form.val) == 0:
            return form
        head = form.val[0]
        if head.kind == "symbol" and head.val in SPECIAL_FORMS and env.lookup_lexical(head.val) is _MISSING:
            return _eval_special(head.val, form, env, fuel)
        if head.kind == "symbol" and is_macro_value(env.lookup(head.val)):
            raise EvalError(
                f"macro '{head.val}' reached the evaluator unexpanded; expand the program first",
                span=form.span,
            )
        fn = eval_form(head, env, fuel)
        args = [eval_form(a, env, fuel) for a in form.val[1:]]
        return call_value(fn, args, fuel, span=form.span)
    raise EvalError(f"cannot evaluate datum of kind {k}", span=form.span)


def call_value(fn, args, fuel, span=None):
    fuel.tick(span)
    if isinstance(fn, Closure):
        if fn.is_macro:
            raise EvalError(f"macro '{fn.name}' called as a function", span=span)
        return _apply_closure(fn, args, fuel, span)
    if isinstance(fn, Builtin):
        return fn.fn(BuiltinCtx(fuel, span), *args)
    if isinstance(fn, Datum) and fn.kind == "keyword":
        if not 1 <= len(args) <= 2:
            raise EvalError(f"keyword lookup takes 1 or 2 arguments, got {len(args)}", span=span)
        coll = args[0]
        default = args[1] if len(args) == 2 else dnil()
        if isinstance(coll, Datum) and coll.kind == "map":
            return map_get(coll, fn, default)
        return default
    raise EvalError(f"value {show(fn)} is not callable", span=span)


def _apply_closure(fn: Closure, args, fuel, span=None):
    nfixed = len(fn.params)
    if fn.rest is None:
        if len(args) != nfixed:
            raise EvalError(
                f"arity mismatch calling {fn.name or 'fn'}: expected {nfixed}, got {len(args)}",
                span=span,
            )
    elif len(args) < nfixed:
        raise EvalError(
            f"arity mismatch calling {fn.name or 'fn'}: expected at least {nfixed}, got {len(args)}",
            span=span,
        )
    frame = dict(zip(fn.params, args))
    if fn.rest is not None:
        frame[fn.rest] = dlist(args[nfixed:])
    env = fn.env.child(frame)
    result = dnil()
    for b in fn.body:
        result = eval_form(b, env, fuel)
    return result


class BuiltinCtx:
    """Capabilities handed to builtins that need to call back into eval."""

    __slots__ = ("fuel", "span")

    def __init__(self, fuel, span=None):
        self.fuel = fuel
        self.span = span

    def call(self, fn, args):
        return call_value(fn, list(args), self.fuel, span=self.span)


# ---- special forms ----

def _eval_special(name, form, env, fuel):
    handler = _SPECIALS[name]
    return handler(form, env, fuel)


def _sf_quote(form, env, fuel):
    _expect(len(form.val) == 2, "quote expects one argument", form)
    return form.val[1]


def _sf_if(form, env, fuel):
    _expect(len(form.val) in (3, 4), "if expects a test, a then, and an optional else", form)
    if truthy(eval_form(form.val[1], env, fuel)):
        return eval_form(form.val[2], env, fuel)
    if len(form.val) == 4:
        return eval_form(form.val[3], env, fuel)
    return dnil()


def _sf_do(form, env, fuel):
    result = dnil()
    for f in form.val[1:]:
        result = eval_form(f, env, fuel)
    return result


def _sf_def(form, env, fuel):
    _expect(len(form.val) in (2, 3), "def expects a name and an optional value", form)
    name = form.val[1]
    _expect(name.kind == "symbol", "def expects a symbol name", form)
    _expect("/" not in name.val, "def name must be unqualified", form)
    value = eval_form(form.val[2], env, fuel) if len(form.val) == 3 else dnil()
    env.world.intern(env.ns, name.val, value)
    return value


def _make_closure(form, env, offset, name=None, is_macro=False):
    params_form = form.val[offset]
    _expect(params_form.kind == "vector", "parameter list must be a vector", form)
    params, rest = [], None
    seen_amp = False
    for p in params_form.val:
        _expect(p.kind == "symbol", "parameters must be symbols", form)
        if p.val == "&":
            _expect(not seen_amp, "only one & allowed in parameters", form)
            seen_amp = True
        elif seen_amp:
            _expect(rest is None, "only one rest parameter allowed", form)
            rest = p.val
        else:
            params.append(p.val)
    _expect(not (seen_amp and rest is None), "& must be followed by a rest parameter", form)
    body = form.val[offset + 1 :]
    frame = {}
    closure_env = env.child(frame)
    closure = Closure(name, params, rest, tuple(body), closure_env, is_macro=is_macro)
    if name is not None:
        frame[name] = closure
    return closure


def _sf_fn(form, env, fuel):
    _expect(len(form.val) >= 2, "fn expects parameters and a body", form)
    if form.val[1].kind == "symbol":
        _expect(len(form.val) >= 3, "fn expects parameters and a body", form)
        return _make_closure(form, env, 2, name=form.val[1].val)
    return _make_closure(form, env, 1)


def _sf_defn(form, env, fuel):
    _expect(len(form.val) >= 3, "defn expects a name, parameters, and a body", form)
    name = form.val[1]
    _expect(name.kind == "symbol", "defn expects a symbol name", form)
    closure = _make_closure(form, env, 2, name=name.val)
    env.world.intern(env.ns, name.val, closure)
    return closure


def _sf_let(form, env, fuel):
    _expect(len(form.val) >= 2, "let expects a binding vector", form)
    bindings = form.val[1]
    _expect(bindings.kind == "vector", "let bindings must be a vector", form)
    _expect(len(bindings.val) % 2 == 0, "let bindings must come in pairs", form)
    scope = env.child()
    for pat, vexpr in zip(bindings.val[::2], bindings.val[1::2]):
        value = eval_form(vexpr, scope, fuel)
        for bname, bval in destructure(pat, value):
            scope.frame[bname] = bval
    result = dnil()
    for b in form.val[2:]:
        result = eval_form(b, scope, fuel)
    return result


def _sf_defmacro(form, env, fuel):
    _expect(len(form.val) >= 3, "defmacro expects a name, parameters, and a body", form)
    name = form.val[1]
    _expect(name.kind == "symbol", "defmacro expects a symbol name", form)
    closure = _make_closure(form, env, 2, name=name.val, is_macro=True)
    env.world.intern(env.ns, name.val, closure)
    return dnil()


def _sf_ns(form, env, fuel):
    apply_ns_form(form, env.world)
    return dnil()


def apply_ns_form(form, world: World):
    _expect(len(form.val) >= 2, "ns expects a name", form)
    name = form.val[1]
    _expect(name.kind == "symbol", "ns expects a symbol name", form)
    world.current_ns = name.val
    world.ns_defs(name.val)
    for clause in form.val[2:]:
        _expect(
            clause.kind == "list" and len(clause.val) >= 1 and clause.val[0].kind == "keyword",
            "ns clauses must be lists headed by a keyword",
            form,
        )
        head = clause.val[0].val
        if head != "require":
            raise EvalError(f"unsupported ns clause :{head}", span=clause.span)
        for spec in clause.val[1:]:
            _expect(spec.kind == "vector" and len(spec.val) in (1, 3), "require spec must be [ns] or [ns :as alias]", form)
            target = spec.val[0]
            _expect(target.kind == "symbol", "require target must be a symbol", form)
            world.ns_defs(target.val)
            if len(spec.val) == 3:
                _expect(
                    spec.val[1].kind == "keyword" and spec.val[1].val == "as" and spec.val[2].kind == "symbol",
                    "require spec must be [ns :as alias]",
                    form,
                )
                world.add_alias(name.val, spec.val[2].val, target.val)


def _sf_unquote(form, env, fuel):
    raise EvalError("unquote outside quasiquote", span=form.span)


def _sf_defvisx_eval(form, env, fuel):
    # registration happens during expansion; at run time the definition
    # form is inert (its instances were already elaborated away)
    return dnil()


def _expect(cond, message, form):
    if not cond:
        raise EvalError(message, span=form.span)


# ---- destructuring ----

def destructure(pattern: Datum, value):
    """Bindings for ``let``: symbols, vectors (positional, missing -> nil),
    and ``{:keys [sym ...]}`` maps."""
    out = []
    _destructure_into(pattern, value, out)
    return out


def _destructure_into(pattern, value, out):
    if pattern.kind == "symbol":
        if pattern.val != "_":
            out.append((pattern.val, value))
        return
    if pattern.kind == "vector":
        items = ()
        if isinstance(value, Datum) and value.kind in ("list", "vector"):
            items = value.val
        elif isinstance(value, Datum) and value.kind == "nil":
            items = ()
        else:
            raise EvalError("vector binding needs a sequence value", span=pattern.span)
        for i, sub in enumerate(pattern.val):
            _destructure_into(sub, items[i] if i < len(items) else dnil(), out)
        return
    if pattern.kind == "map":
        keys_entry = map_get(pattern, kw("keys"))
        if keys_entry is None or keys_entry.kind != "vector":
            raise EvalError("map binding supports only {:keys [sym ...]}", span=pattern.span)
        is_map = isinstance(value, Datum) and value.kind == "map"
        if not (is_map or (isinstance(value, Datum) and value.kind == "nil")):
            raise EvalError("map binding needs a map value", span=pattern.span)
        for s in keys_entry.val:
            if s.kind != "symbol":
                raise EvalError("{:keys [...]} entries must be symbols", span=pattern.span)
            v = map_get(value, kw(s.val)) if is_map else None
            out.append((s.val, v if v is not None else dnil()))
        return
    raise EvalError("malformed binding pattern", span=pattern.span)


# ---- match ----

def _sf_match(form, env, fuel):
    _expect(len(form.val) >= 2, "match expects a scrutinee", form)
    _expect(len(form.val) % 2 == 0, "match clauses must come in pattern/body pairs", form)
    scrutinee = eval_form(form.val[1], env, fuel)
    clauses = form.val[2:]
    for pat, body in zip(clauses[::2], clauses[1::2]):
        binds = {}
        if match_pattern(pat, scrutinee, binds, fuel):
            return eval_form(body, env.child(binds), fuel)
    raise EvalError("no matching clause", span=form.span)


def match_pattern(pat: Datum, value, binds: dict, fuel: Fuel) -> bool:
    fuel.tick(pat.span)
    k = pat.kind
    if k == "symbol":
        if pat.val != "_":
            binds[pat.val] = value
        return True
    if k in ("number", "string", "keyword", "boolean", "nil"):
        return isinstance(value, Datum) and pat == value
    if k == "vector":
        if not (isinstance(value, Datum) and value.kind == "vector"):
            return False
        if len(pat.val) != len(value.val):
            return False
        return all(match_pattern(p, v, binds, fuel) for p, v in zip(pat.val, value.val))
    if k == "map":
        if not (isinstance(value, Datum) and value.kind == "map"):
            return False
        for key, sub in pat.val:
            if not map_contains(value, key):
                return False
            if not match_pattern(sub, map_get(value, key), binds, fuel):
                return False
        return True
    if k == "list" and len(pat.val) >= 1 and pat.val[0].kind == "keyword" and pat.val[0].val == "or":
        for alt in pat.val[1:]:
            trial = {}
            if match_pattern(alt, value, trial, fuel):
                binds.update(trial)
                return True
        return False
    raise EvalError("unsupported pattern", span=pat.span)


def pattern_binders(pat: Datum, span=None) -> list[str]:
    """All binder names (with duplicates) in a pattern; validates shape."""
    k = pat.kind
    if k == "symbol":
        return [] if pat.val == "_" else [pat.val]
    if k in ("number", "string", "keyword", "boolean", "nil"):
        return []
    if k == "vector":
        out = []
        for p in pat.val:
            out.extend(pattern_binders(p, span))
        return out
    if k == "map":
        out = []
        for key, sub in pat.val:
            if key.kind not in ("keyword", "string", "number", "boolean"):
                raise ExpandError("map pattern keys must be literals", span=key.span or span)
            out.extend(pattern_binders(sub, span))
        return out
    if k == "list" and len(pat.val) >= 1 and pat.val[0].kind == "keyword" and pat.val[0].val == "or":
        alts = pat.val[1:]
        if not alts:
            raise ExpandError("or-pattern needs at least one alternative", span=pat.span or span)
        sets = []
        for alt in alts:
            names = pattern_binders(alt, span)
            if len(names) != len(set(names)):
                raise ExpandError("non-linear pattern: duplicate binder", span=alt.span or pat.span or span)
            sets.append(set(names))
        if any(s != sets[0] for s in sets[1:]):
            raise ExpandError("or-pattern alternatives bind different sets of names", span=pat.span or span)
        return sorted(sets[0])
    raise ExpandError("unsupported pattern", span=pat.span or span)


def validate_match_form(form: Datum):
    if len(form.val) < 2 or len(form.val) % 2 != 0:
        raise ExpandError("match clauses must come in pattern/body pairs", span=form.span)
    for pat in form.val[2::2]:
        names = pattern_binders(pat, form.span)
        if len(names) != len(set(names)):
            raise ExpandError("non-linear pattern: duplicate binder", span=pat.span or form.span)


# ---- quasiquote ----

def _sf_quasiquote(form, env, fuel):
    _expect(len(form.val) == 2, "quasiquote expects one argument", form)
    return _qq(form.val[1], env, fuel, 1, {})


def _is_call(d, name):
    return (
        d.kind == "list"
        and len(d.val) == 2
        and d.val[0].kind == "symbol"
        and d.val[0].val == name
    )


def _qq(form, env, fuel, depth, gmap):
    fuel.tick(form.span)
    if _is_call(form, "unquote"):
        if depth == 1:
            return eval_form(form.val[1], env, fuel)
        return dlist([sym("unquote"), _qq(form.val[1], env, fuel, depth - 1, gmap)])
    if _is_call(form, "quasiquote"):
        return dlist([sym("quasiquote"), _qq(form.val[1], env, fuel, depth + 1, gmap)])
    if form.kind in ("list", "vector"):
        items = []
        for item in form.val:
            if _is_call(item, "unquote-splicing"):
                if depth == 1:
                    spliced = eval_form(item.val[1], env, fuel)
                    if not (isinstance(spliced, Datum) and spliced.kind in ("list", "vector")):
                        raise EvalError("unquote-splicing expects a sequence", span=item.span)
                    items.extend(spliced.val)
                else:
                    items.append(dlist([sym("unquote-splicing"), _qq(item.val[1], env, fuel, depth - 1, gmap)]))
            else:
                items.append(_qq(item, env, fuel, depth, gmap))
        return (dlist if form.kind == "list" else dvec)(items)
    if form.kind == "map":
        return dmap([
            (_qq(kd, env, fuel, depth, gmap), _qq(vd, env, fuel, depth, gmap)) for kd, vd in form.val
        ])
    if form.kind == "symbol":
        return _qq_symbol(form, env, gmap)
    return form


def _qq_symbol(s: Datum, env: Env, gmap: dict) -> Datum:
    name = s.val
    if name.endswith("#") and "/" not in name and not _GENSYM_NAME_RE.match(name):
        if name not in gmap:
            gmap[name] = gensym(name[:-1])
        return gmap[name]
    if "/" in name or name in SPECIAL_FORMS or name == "&":
        return s
    # namespace-qualify references to definitions visible where the
    # template is evaluated, so macro output resolves at its source
    defs = env.world.namespaces.get(env.ns, {})
    if name in defs:
        return sym(f"{env.ns}/{name}")
    return s


_SPECIALS = {
    "quote": _sf_quote,
    "if": _sf_if,
    "do": _sf_do,
    "def": _sf_def,
    "defn": _sf_defn,
    "fn": _sf_fn,
    "let": _sf_let,
    "defmacro": _sf_defmacro,
    "ns": _sf_ns,
    "quasiquote": _sf_quasiquote,
    "unquote": _sf_unquote,
    "unquote-splicing": _sf_unquote,
    "match": _sf_match,
    "defvisx": _sf_defvisx_eval,
}


# ------------------------------------------------------------------
# macro expansion
# ------------------------------------------------------------------

class ExpandCtx:
    """State for one compile-phase pass over a program.

    ``toplevel_handlers`` lets the kernel install extra definition forms
    (``defvisx``) without this module knowing about them.
    """

    def __init__(self, world: World, fuel_budget=DEFAULT_EDIT_FUEL, registry=None):
        self.world = world
        self.fuel_budget = fuel_budget
        self.registry = registry
        self.fuel = Fuel(fuel_budget)
        self.toplevel_handlers = {}

    def fresh_fuel(self):
        self.fuel = Fuel(self.fuel_budget)
        return self.fuel

    def env(self) -> Env:
        return top_env(self.world)


def _head_name(form: Datum):
    if form.kind == "list" and len(form.val) > 0 and form.val[0].kind == "symbol":
        return form.val[0].val
    return None


def _lookup_macro(form: Datum, env: Env):
    head = _head_name(form)
    if head is None or head in SPECIAL_FORMS:
        return None
    if env.lookup_lexical(head) is not _MISSING:
        return None
    v = env.lookup(head)
    return v if is_macro_value(v) else None


def macroexpand_1(form: Datum, ctx: ExpandCtx, env: Env):
    """One macro step; returns the input unchanged when nothing applies."""
    macro = _lookup_macro(form, env)
    if macro is None:
        return form
    ctx.fuel.tick(form.span)
    try:
        if isinstance(macro, PyMacro):
            result = macro.fn(form, ctx, env)
        else:
            result = _apply_closure(macro, list(form.val[1:]), ctx.fuel, span=form.span)
    except (EvalError, ExpandError, LangUserError) as exc:
        raise exc.with_span(form.span)
    if not isinstance(result, Datum):
        raise ExpandError(f"macro '{_head_name(form)}' returned a non-syntax value", span=form.span)
    if result.span is None:
        result = result.with_span(form.span)
    return result


def expand(form: Datum, ctx: ExpandCtx, env: Env) -> Datum:
    """Fully expand an expression; the result contains no macro calls."""
    while True:
        expanded = macroexpand_1(form, ctx, env)
        if expanded is form:
            break
        form = expanded
    k = form.kind
    if k == "vector":
        return Datum("vector", tuple(expand(c, ctx, env) for c in form.val), form.meta, form.span)
    if k == "map":
        return Datum(
            "map",
            tuple((expand(kd, ctx, env), expand(vd, ctx, env)) for kd, vd in form.val),
            form.meta,
            form.span,
        )
    if k != "list" or len(form.val) == 0:
        return form
    head = _head_name(form)
    if head in ("quote", "quasiquote"):
        return form
    if head in ("defmacro", "defvisx"):
        raise ExpandError(f"{head} is only allowed at the top level", span=form.span)
    if head == "ns":
        raise ExpandError("ns is only allowed at the top level", span=form.span)
    if head in ("fn", "defn") and len(form.val) >= 2:
        items = list(form.val)
        # params sit at index 2 for defn and named fn, else index 1
        pidx = 2 if head == "defn" or items[1].kind == "symbol" else 1
        for i in range(pidx + 1, len(items)):
            items[i] = expand(items[i], ctx, env)
        return Datum("list", tuple(items), form.meta, form.span)
    if head == "let" and len(form.val) >= 2 and form.val[1].kind == "vector":
        items = list(form.val)
        entries = list(items[1].val)
        for i in range(1, len(entries), 2):
            entries[i] = expand(entries[i], ctx, env)
        items[1] = Datum("vector", tuple(entries), items[1].meta, items[1].span)
        for i in range(2, len(items)):
            items[i] = expand(items[i], ctx, env)
        return Datum("list", tuple(items), form.meta, form.span)
    if head == "def" and len(form.val) == 3:
        return Datum(
            "list",
            (form.val[0], form.val[1], expand(form.val[2], ctx, env)),
            form.meta,
            form.span,
        )
    if head == "match":
        items = [form.val[0]] + [expand(c, ctx, env) for c in form.val[1:]]
        out = Datum("list", tuple(items), form.meta, form.span)
        validate_match_form(out)
        return out
    # ordinary call, or a remaining special form: expand sub-expressions
    return Datum("list", tuple(expand(c, ctx, env) for c in form.val), form.meta, form.span)


def expand_toplevel(form: Datum, ctx: ExpandCtx) -> list[Datum]:
    """Expand one top-level form into zero or more output forms.

    Definitions take effect immediately so later sibling forms see them:
    ``defmacro``/``defvisx`` register and vanish from the output, while
    ``def``/``defn`` are also evaluated into the compile-phase world.
    """
    env = ctx.env()
    head = _head_name(form)
    if head == "do":
        out = []
        for f in form.val[1:]:
            out.extend(expand_toplevel(f, ctx))
        return out
    if head == "ns":
        apply_ns_form(form, ctx.world)
        return [form]
    if head == "defmacro":
        original = form
        if len(form.val) >= 4:
            items = list(form.val)
            for i in range(3, len(items)):
                items[i] = expand(items[i], ctx, env)
            form = Datum("list", tuple(items), form.meta, form.span)
        _sf_defmacro(form, env, ctx.fuel)
        # definition forms stay in the output: re-running the expanded
        # program re-registers them, so the output runs identically
        return [original]
    if head in ctx.toplevel_handlers:
        ctx.toplevel_handlers[head](form, ctx, env)
        return [form]
    macro = _lookup_macro(form, env)
    if macro is not None:
        return expand_toplevel(macroexpand_1(form, ctx, env), ctx)
    expanded = expand(form, ctx, env)
    if _head_name(expanded) in ("def", "defn"):
        eval_form(expanded, env, ctx.fuel)
    return [expanded]


def expand_program(forms, ctx: ExpandCtx) -> list[Datum]:
    """Expand a whole program left to right, one fuel budget per form."""
    out = []
    for form in forms:
        ctx.fresh_fuel()
        try:
            out.extend(expand_toplevel(form, ctx))
        except (EvalError, ExpandError, FuelExhausted, LangUserError) as exc:
            raise exc.with_span(form.span)
    return out


def eval_program(forms, world: World, fuel: Fuel):
    """Evaluate expanded forms in order; result is the last form's value."""
    result = dnil()
    for form in forms:
        env = top_env(world)
        result = eval_form(form, env, fuel)
    return result


# ------------------------------------------------------------------
# printable rendering of arbitrary runtime values
# ------------------------------------------------------------------

def show(v, readable=True) -> str:
    """Best-effort rendering; unlike print_datum it tolerates closures,
    boxes, and builtins anywhere in a collection."""
    if isinstance(v, Box):
        return "#<atom " + show(v.value) + ">"
    if isinstance(v, (Closure, Builtin, PyMacro)):
        return repr(v)
    if not isinstance(v, Datum):
        return repr(v)
    k = v.kind
    if k == "string":
        return print_datum(v) if readable else v.val
    if k == "nil" and not readable:
        return ""
    if k == "list":
        return "(" + " ".join(show(c) for c in v.val) + ")"
    if k == "vector":
        return "[" + " ".join(show(c) for c in v.val) + "]"
    if k == "map":
        return "{" + " ".join(show(kd) + " " + show(vd) for kd, vd in v.val) + "}"
    return print_datum(v)


# ------------------------------------------------------------------
# builtins
# ------------------------------------------------------------------

def _num(v, ctx, what="number"):
    if isinstance(v, Datum) and v.kind == "number":
        return v.val
    raise EvalError(f"expected a {what}, got {show(v)}", span=ctx.span)


def _coll_items(v, ctx):
    if isinstance(v, Datum):
        if v.kind in ("list", "vector"):
            return list(v.val)
        if v.kind == "nil":
            return []
        if v.kind == "string":
            return [dstr(c) for c in v.val]
        if v.kind == "map":
            return [dvec([k, val]) for k, val in v.val]
    raise EvalError(f"expected a collection, got {show(v)}", span=ctx.span)


def _bi_add(ctx, *args):
    total = 0
    for a in args:
        total = total + _num(a, ctx)
    return dnum(total)


def _bi_sub(ctx, *args):
    if not args:
        raise EvalError("- expects at least one argument", span=ctx.span)
    if len(args) == 1:
        return dnum(-_num(args[0], ctx))
    total = _num(args[0], ctx)
    for a in args[1:]:
        total = total - _num(a, ctx)
    return dnum(total)


def _bi_mul(ctx, *args):
    total = 1
    for a in args:
        total = total * _num(a, ctx)
    return dnum(total)


def _bi_div(ctx, *args):
    if not args:
        raise EvalError("/ expects at least one argument", span=ctx.span)
    vals = [_num(a, ctx) for a in args]
    if len(vals) == 1:
        vals = [1, vals[0]]
    total = vals[0]
    for v in vals[1:]:
        if v == 0:
            raise EvalError("division by zero", span=ctx.span)
        if isinstance(total, int) and isinstance(v, int) and total % v == 0:
            total = total // v
        else:
            total = total / v
    return dnum(total)


def _bi_mod(ctx, a, b):
    bv = _num(b, ctx)
    if bv == 0:
        raise EvalError("division by zero", span=ctx.span)
    return dnum(_num(a, ctx) % bv)


def _compare_chain(ctx, args, op):
    if len(args) < 2:
        raise EvalError("comparison expects at least two arguments", span=ctx.span)
    vals = [_num(a, ctx) for a in args]
    return dbool(all(op(a, b) for a, b in zip(vals, vals[1:])))


def _values_equal(a, b) -> bool:
    if isinstance(a, Datum) and isinstance(b, Datum):
        return a == b
    return a is b


def _bi_eq(ctx, *args):
    if len(args) < 2:
        return dbool(True)
    return dbool(all(_values_equal(args[0], other) for other in args[1:]))


def _bi_get(ctx, coll, key, *default):
    dflt = default[0] if default else dnil()
    if isinstance(coll, Datum):
        if coll.kind == "map":
            return map_get(coll, key, dflt)
        if coll.kind in ("vector", "list"):
            if key.kind == "number" and isinstance(key.val, int) and 0 <= key.val < len(coll.val):
                return coll.val[key.val]
            return dflt
        if coll.kind == "nil":
            return dflt
    return dflt


def _bi_assoc(ctx, coll, *kvs):
    if len(kvs) < 2 or len(kvs) % 2 != 0:
        raise EvalError("assoc expects key/value pairs", span=ctx.span)
    if isinstance(coll, Datum) and coll.kind == "nil":
        coll = dmap([])
    if isinstance(coll, Datum) and coll.kind == "map":
        out = coll
        for k, v in zip(kvs[::2], kvs[1::2]):
            out = map_assoc(out, k, v)
        return out
    if isinstance(coll, Datum) and coll.kind == "vector":
        items = list(coll.val)
        for k, v in zip(kvs[::2], kvs[1::2]):
            if not (k.kind == "number" and isinstance(k.val, int) and 0 <= k.val <= len(items)):
                raise EvalError("vector assoc index out of range", span=ctx.span)
            if k.val == len(items):
                items.append(v)
            else:
                items[k.val] = v
        return dvec(items)
    raise EvalError(f"assoc expects a map or vector, got {show(coll)}", span=ctx.span)


def _bi_dissoc(ctx, coll, *keys):
    if not (isinstance(coll, Datum) and coll.kind == "map"):
        raise EvalError("dissoc expects a map", span=ctx.span)
    return dmap([(k, v) for k, v in coll.val if not any(k == key for key in keys)])


def _bi_conj(ctx, coll, *items):
    if isinstance(coll, Datum) and coll.kind == "nil":
        coll = dlist([])
    if not isinstance(coll, Datum):
        raise EvalError("conj expects a collection", span=ctx.span)
    if coll.kind == "vector":
        return dvec(list(coll.val) + list(items))
    if coll.kind == "list":
        out = list(coll.val)
        for item in items:
            out = [item] + out
        return dlist(out)
    if coll.kind == "map":
        out = coll
        for item in items:
            if isinstance(item, Datum) and item.kind == "vector" and len(item.val) == 2:
                out = map_assoc(out, item.val[0], item.val[1])
            elif isinstance(item, Datum) and item.kind == "map":
                for k, v in item.val:
                    out = map_assoc(out, k, v)
            else:
                raise EvalError("conj on a map expects [k v] pairs or maps", span=ctx.span)
        return out
    raise EvalError(f"conj expects a collection, got {show(coll)}", span=ctx.span)


def _bi_count(ctx, coll):
    if isinstance(coll, Datum):
        if coll.kind in ("list", "vector"):
            return dnum(len(coll.val))
        if coll.kind == "map":
            return dnum(len(coll.val))
        if coll.kind == "string":
            return dnum(len(coll.val))
        if coll.kind == "nil":
            return dnum(0)
    raise EvalError(f"count expects a collection, got {show(coll)}", span=ctx.span)


def _bi_first(ctx, coll):
    items = _coll_items(coll, ctx)
    return items[0] if items else dnil()


def _bi_second(ctx, coll):
    items = _coll_items(coll, ctx)
    return items[1] if len(items) > 1 else dnil()


def _bi_rest(ctx, coll):
    return dlist(_coll_items(coll, ctx)[1:])


def _bi_nth(ctx, coll, idx, *default):
    items = _coll_items(coll, ctx)
    i = _num(idx, ctx, "index")
    if isinstance(i, int) and 0 <= i < len(items):
        return items[i]
    if default:
        return default[0]
    raise EvalError(f"nth index {show(idx)} out of range", span=ctx.span)


def _bi_empty(ctx, coll):
    return dbool(len(_coll_items(coll, ctx)) == 0)


def _bi_contains(ctx, coll, key):
    if isinstance(coll, Datum) and coll.kind == "map":
        return dbool(map_contains(coll, key))
    if isinstance(coll, Datum) and coll.kind == "vector":
        return dbool(key.kind == "number" and isinstance(key.val, int) and 0 <= key.val < len(coll.val))
    raise EvalError("contains? expects a map or vector", span=ctx.span)


def _bi_keys(ctx, m):
    if not (isinstance(m, Datum) and m.kind == "map"):
        raise EvalError("keys expects a map", span=ctx.span)
    return dlist([k for k, _ in m.val])


def _bi_vals(ctx, m):
    if not (isinstance(m, Datum) and m.kind == "map"):
        raise EvalError("vals expects a map", span=ctx.span)
    return dlist([v for _, v in m.val])


def _bi_merge(ctx, *maps):
    out = dmap([])
    for m in maps:
        if isinstance(m, Datum) and m.kind == "nil":
            continue
        if not (isinstance(m, Datum) and m.kind == "map"):
            raise EvalError("merge expects maps", span=ctx.span)
        for k, v in m.val:
            out = map_assoc(out, k, v)
    return out


def _bi_update(ctx, m, key, f, *extra):
    current = _bi_get(ctx, m, key)
    return _bi_assoc(ctx, m, key, ctx.call(f, [current, *extra]))


def _bi_cons(ctx, x, coll):
    return dlist([x] + _coll_items(coll, ctx))


def _bi_concat(ctx, *colls):
    out = []
    for c in colls:
        items = _coll_items(c, ctx)
        ctx.fuel.charge(len(items))
        out.extend(items)
    return dlist(out)


def _bi_vec(ctx, coll):
    return dvec(_coll_items(coll, ctx))


def _bi_map(ctx, f, *colls):
    if not colls:
        raise EvalError("map expects at least one collection", span=ctx.span)
    seqs = [_coll_items(c, ctx) for c in colls]
    out = []
    for group in zip(*seqs):
        out.append(ctx.call(f, list(group)))
    return dlist(out)


def _bi_filter(ctx, f, coll):
    return dlist([x for x in _coll_items(coll, ctx) if truthy(ctx.call(f, [x]))])


def _bi_reduce(ctx, f, *rest):
    if len(rest) == 1:
        items = _coll_items(rest[0], ctx)
        if not items:
            return ctx.call(f, [])
        acc, items = items[0], items[1:]
    elif len(rest) == 2:
        acc, items = rest[0], _coll_items(rest[1], ctx)
    else:
        raise EvalError("reduce expects (reduce f coll) or (reduce f init coll)", span=ctx.span)
    for x in items:
        acc = ctx.call(f, [acc, x])
    return acc


def _bi_apply(ctx, f, *rest):
    if not rest:
        raise EvalError("apply expects a final argument collection", span=ctx.span)
    args = list(rest[:-1]) + _coll_items(rest[-1], ctx)
    return ctx.call(f, args)


def _dedupe(items):
    out = []
    for x in items:
        if not any(_values_equal(x, y) for y in out):
            out.append(x)
    return out


def _bi_range(ctx, *args):
    vals = [_num(a, ctx) for a in args]
    if not all(isinstance(v, int) for v in vals):
        raise EvalError("range expects integers", span=ctx.span)
    r = range(*vals) if vals else None
    if r is None:
        raise EvalError("range expects 1 to 3 arguments", span=ctx.span)
    ctx.fuel.charge(len(r))
    return dlist([dnum(i) for i in r])


def _bi_str(ctx, *args):
    return dstr("".join(show(a, readable=False) for a in args))


def _bi_pr_str(ctx, *args):
    return dstr(" ".join(show(a, readable=True) for a in args))


def _bi_println(ctx, *args):
    _world_stack()[-1].emit_output(" ".join(show(a, readable=False) for a in args) + "\n")
    return dnil()


def _bi_print(ctx, *args):
    _world_stack()[-1].emit_output(" ".join(show(a, readable=False) for a in args))
    return dnil()


def _bi_name(ctx, v):
    if isinstance(v, Datum) and v.kind in ("symbol", "keyword", "string"):
        if v.kind == "string":
            return v
        return dstr(qualified_parts(v.val)[1])
    raise EvalError("name expects a symbol, keyword, or string", span=ctx.span)


def _bi_keyword(ctx, v):
    if isinstance(v, Datum):
        if v.kind == "keyword":
            return v
        if v.kind in ("string", "symbol"):
            return kw(v.val)
    raise EvalError("keyword expects a string, symbol, or keyword", span=ctx.span)


def _bi_symbol(ctx, v):
    if isinstance(v, Datum):
        if v.kind == "symbol":
            return v
        if v.kind in ("string", "keyword"):
            return sym(v.val)
    raise EvalError("symbol expects a string, keyword, or symbol", span=ctx.span)


def _bi_gensym(ctx, *prefix):
    if prefix:
        if not (isinstance(prefix[0], Datum) and prefix[0].kind in ("string", "symbol")):
            raise EvalError("gensym prefix must be a string or symbol", span=ctx.span)
        return gensym(prefix[0].val)
    return gensym()


def _bi_atom(ctx, v):
    return Box(v)


def _bi_deref(ctx, b):
    if not isinstance(b, Box):
        raise EvalError(f"deref expects an atom, got {show(b)}", span=ctx.span)
    return b.value


def _bi_reset(ctx, b, v):
    if not isinstance(b, Box):
        raise EvalError("reset! expects an atom", span=ctx.span)
    b.value = v
    return v


def _bi_swap(ctx, b, f, *extra):
    if not isinstance(b, Box):
        raise EvalError("swap! expects an atom", span=ctx.span)
    b.value = ctx.call(f, [b.value, *extra])
    return b.value


def _bi_read_string(ctx, s):
    if not (isinstance(s, Datum) and s.kind == "string"):
        raise EvalError("read-string expects a string", span=ctx.span)
    forms = read_all(s.val)
    if not forms:
        raise EvalError("read-string: no forms in input", span=ctx.span)
    return forms[0]


def _bi_error(ctx, *args):
    raise LangUserError(" ".join(show(a, readable=False) for a in args) or "error", span=ctx.span)


def _bi_meta(ctx, v):
    if isinstance(v, Datum) and v.meta is not None:
        return v.meta
    return dnil()


def _bi_with_meta(ctx, v, m):
    if not isinstance(v, Datum):
        raise EvalError("with-meta expects a data value", span=ctx.span)
    if not (isinstance(m, Datum) and m.kind in ("map", "nil")):
        raise EvalError("with-meta expects a map", span=ctx.span)
    return v.with_meta(None if m.kind == "nil" else m)


def _kind_pred(kind):
    return lambda ctx, v: dbool(isinstance(v, Datum) and v.kind == kind)


def _install_numeric_tail(reg):
    import operator

    reg["<"] = lambda ctx, *a: _compare_chain(ctx, a, operator.lt)
    reg[">"] = lambda ctx, *a: _compare_chain(ctx, a, operator.gt)
    reg["<="] = lambda ctx, *a: _compare_chain(ctx, a, operator.le)
    reg[">="] = lambda ctx, *a: _compare_chain(ctx, a, operator.ge)
    reg["=="] = lambda ctx, *a: _compare_chain(ctx, a, operator.eq)


_BUILTINS = {
    "+": _bi_add,
    "-": _bi_sub,
    "*": _bi_mul,
    "/": _bi_div,
    "mod": _bi_mod,
    "inc": lambda ctx, v: dnum(_num(v, ctx) + 1),
    "dec": lambda ctx, v: dnum(_num(v, ctx) - 1),
    "abs": lambda ctx, v: dnum(abs(_num(v, ctx))),
    "min": lambda ctx, *a: dnum(min(_num(x, ctx) for x in a)),
    "max": lambda ctx, *a: dnum(max(_num(x, ctx) for x in a)),
    "=": _bi_eq,
    "not=": lambda ctx, *a: dbool(not truthy(_bi_eq(ctx, *a))),
    "not": lambda ctx, v: dbool(not truthy(v)),
    "get": _bi_get,
    "assoc": _bi_assoc,
    "dissoc": _bi_dissoc,
    "conj": _bi_conj,
    "count": _bi_count,
    "first": _bi_first,
    "second": _bi_second,
    "rest": _bi_rest,
    "nth": _bi_nth,
    "empty?": _bi_empty,
    "contains?": _bi_contains,
    "keys": _bi_keys,
    "vals": _bi_vals,
    "merge": _bi_merge,
    "update": _bi_update,
    "cons": _bi_cons,
    "concat": _bi_concat,
    "vec": _bi_vec,
    "map": _bi_map,
    "filter": _bi_filter,
    "reduce": _bi_reduce,
    "apply": _bi_apply,
    "range": _bi_range,
    "list": lambda ctx, *a: dlist(a),
    "vector": lambda ctx, *a: dvec(a),
    "hash-map": lambda ctx, *a: _bi_assoc(ctx, dmap([]), *a) if a else dmap([]),
    "str": _bi_str,
    "pr-str": _bi_pr_str,
    "println": _bi_println,
    "print": _bi_print,
    "name": _bi_name,
    "keyword": _bi_keyword,
    "symbol": _bi_symbol,
    "gensym": _bi_gensym,
    "atom": _bi_atom,
    "deref": _bi_deref,
    "reset!": _bi_reset,
    "swap!": _bi_swap,
    "read-string": _bi_read_string,
    "error": _bi_error,
    "throw": _bi_error,
    "meta": _bi_meta,
    "with-meta": _bi_with_meta,
    "distinct": lambda ctx, coll: dlist(_dedupe(_coll_items(coll, ctx))),
    "nil?": _kind_pred("nil"),
    "string?": _kind_pred("string"),
    "number?": _kind_pred("number"),
    "boolean?": _kind_pred("boolean"),
    "symbol?": _kind_pred("symbol"),
    "keyword?": _kind_pred("keyword"),
    "vector?": _kind_pred("vector"),
    "map?": _kind_pred("map"),
    "list?": _kind_pred("list"),
    "int?": lambda ctx, v: dbool(isinstance(v, Datum) and v.kind == "number" and isinstance(v.val, int)),
    "float?": lambda ctx, v: dbool(isinstance(v, Datum) and v.kind == "number" and isinstance(v.val, float)),
    "fn?": lambda ctx, v: dbool(isinstance(v, (Closure, Builtin)) and not (isinstance(v, Closure) and v.is_macro)),
    "atom?": lambda ctx, v: dbool(isinstance(v, Box)),
}
_install_numeric_tail(_BUILTINS)

# println/print route through the active world; the stack is per-thread so
# concurrent run threads cannot cross output streams.
_ACTIVE = _threading.local()


def _world_stack():
    stack = getattr(_ACTIVE, "worlds", None)
    if stack is None:
        stack = [World("run")]
        _ACTIVE.worlds = stack
    return stack


def install_builtins(world: World):
    core = world.ns_defs("core")
    for name, fn in _BUILTINS.items():
        core[name] = Builtin(name, fn)


class active_world:
    """Context manager routing print builtins to the given world."""

    def __init__(self, world: World):
        self.world = world

    def __enter__(self):
        _world_stack().append(self.world)
        return self.world

    def __exit__(self, *exc):
        _world_stack().pop()
        return False
