"""Hybrid visual-textual language kernel."""

from .errors import (
    EvalError,
    ExpandError,
    FuelExhausted,
    HvxError,
    LangUserError,
    ReadError,
    RunStopped,
    SpliceError,
)
from .kernel import ProgramResult, compile_text, run_program
from .reader import Datum, Document, Span, locate, print_datum, read_all, read_document, splice
from .session import DocumentDelta, FuelPolicy, RunResult, Session, UiEvent, UiNode
from .visx import Registry, VisxDef, VisxInstance, instantiate_default, scan, serialize_state

__version__ = "0.1.0"

__all__ = [
    "Datum",
    "Document",
    "DocumentDelta",
    "EvalError",
    "ExpandError",
    "FuelExhausted",
    "FuelPolicy",
    "HvxError",
    "LangUserError",
    "ProgramResult",
    "ReadError",
    "Registry",
    "RunResult",
    "RunStopped",
    "Session",
    "Span",
    "SpliceError",
    "UiEvent",
    "UiNode",
    "VisxDef",
    "VisxInstance",
    "compile_text",
    "instantiate_default",
    "locate",
    "print_datum",
    "read_all",
    "read_document",
    "run_program",
    "scan",
    "serialize_state",
    "splice",
]
