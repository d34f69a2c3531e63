"""Assembly point: complete worlds wired with builtins, the core macro
prelude, visual-syntax definitions, and the ``g/let`` binding form.

``run_program`` is the plain, session-free execution path: expand in a
fresh compile-phase world, evaluate in a fresh run-phase world. Opening
the same file in a session and pressing Run goes through the exact same
code, which is what keeps the two routes equivalent.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EvalError, ExpandError, HvxError
from .lang import (
    DEFAULT_EDIT_FUEL,
    DEFAULT_QUANTUM,
    ExpandCtx,
    Fuel,
    PyMacro,
    World,
    active_world,
    eval_program,
    expand,
    expand_program,
    install_builtins,
)
from .reader import Datum, dlist, dvec, map_contains, read_all, sym
from .visx import VISX_KEY, Registry, install as install_visx

# headroom for the depth-budgeted recursive evaluator (~6 Python frames
# per budgeted evaluation entry)
sys.setrecursionlimit(max(sys.getrecursionlimit(), 12000))

_PRELUDE_FORMS = None


def prelude_forms():
    global _PRELUDE_FORMS
    if _PRELUDE_FORMS is None:
        text = (Path(__file__).parent / "prelude.hvx").read_text(encoding="utf-8")
        _PRELUDE_FORMS = read_all(text)
    return _PRELUDE_FORMS


def _g_let_expand(form: Datum, ctx: ExpandCtx, env) -> Datum:
    """Destructuring let whose binding vector may embed visual instances.

    A tagged instance occupies a single slot and must elaborate to a
    ``[pattern init]`` pair, which is spliced into the plain ``let``.
    """
    if len(form.val) < 2 or form.val[1].kind != "vector":
        raise ExpandError("g/let expects a binding vector", span=form.span)
    entries = list(form.val[1].val)
    out = []
    i = 0
    while i < len(entries):
        e = entries[i]
        if e.meta is not None and e.meta.kind == "map" and map_contains(e.meta, VISX_KEY):
            elaborated = expand(e, ctx, env)
            if not (elaborated.kind == "vector" and len(elaborated.val) == 2):
                raise ExpandError(
                    "an instance in binding position must elaborate to a [pattern init] pair",
                    span=e.span or form.span,
                )
            out.extend(elaborated.val)
            i += 1
        else:
            if i + 1 >= len(entries):
                raise ExpandError("g/let bindings must come in pairs", span=form.span)
            out.extend((e, entries[i + 1]))
            i += 2
    return dlist([sym("let"), dvec(out), *form.val[2:]], span=form.span)


def make_world(phase: str) -> World:
    world = World(phase)
    install_builtins(world)
    world.ns_defs("g")["let"] = PyMacro("g/let", _g_let_expand)
    ctx = ExpandCtx(world)
    install_visx(ctx)
    expand_program(prelude_forms(), ctx)
    world.current_ns = "user"
    return world


def make_expand_ctx(world: World, fuel_budget: int = DEFAULT_EDIT_FUEL) -> ExpandCtx:
    ctx = ExpandCtx(world, fuel_budget=fuel_budget, registry=Registry())
    install_visx(ctx)
    return ctx


@dataclass
class ProgramResult:
    value: object = None
    value_text: str = ""
    output: str = ""
    expanded: list = field(default_factory=list)
    registry: Registry | None = None
    run_world: World | None = None
    compile_world: World | None = None


def compile_text(text: str, compile_fuel: int = DEFAULT_EDIT_FUEL):
    """Expand a whole program; returns (expanded forms, expansion context)."""
    world = make_world("compile")
    ctx = make_expand_ctx(world, compile_fuel)
    forms = read_all(text)
    try:
        with active_world(world):
            expanded = expand_program(forms, ctx)
    except RecursionError:
        raise ExpandError("recursion too deep during expansion") from None
    return expanded, ctx


def run_program(
    text: str,
    run_fuel: int | None = None,
    compile_fuel: int = DEFAULT_EDIT_FUEL,
    quantum: int = DEFAULT_QUANTUM,
    stop_check=None,
    output_hook=None,
) -> ProgramResult:
    """Expand and evaluate a program with no session: the plain-language
    route that any non-hybrid tooling would take."""
    from .lang import show

    expanded, ctx = compile_text(text, compile_fuel)
    run_world = make_world("run")
    run_world.output_hook = output_hook
    fuel = Fuel(run_fuel, quantum=quantum, stop_check=stop_check)
    try:
        with active_world(run_world):
            value = eval_program(expanded, run_world, fuel)
    except RecursionError:
        raise EvalError("recursion too deep") from None
    output = "".join(run_world.output_buffer) if output_hook is None else ""
    return ProgramResult(
        value=value,
        value_text=show(value),
        output=output,
        expanded=expanded,
        registry=ctx.registry,
        run_world=run_world,
        compile_world=ctx.world,
    )


def format_error(exc: HvxError) -> str:
    if getattr(exc, "span", None):
        start = exc.span[0] if isinstance(exc.span, tuple) else exc.span.start
        return f"{exc.message} (at byte {start})"
    return exc.message
