"""Reader, printer, and byte-exact document surgery for ``.hvx`` source.

The surface grammar is a small Clojure-like syntax: lists ``()``, vectors
``[]``, maps ``{}``, keywords, symbols, strings, 64-bit integers, binary64
floats, ``true``/``false``/``nil``, metadata ``^{...}`` / ``^:kw``, deref
``@``, quote ``'``, and quasiquote/unquote/unquote-splicing.

All spans are byte offsets into the UTF-8 encoding of the document, so a
splice can replace a sub-form without disturbing a single byte outside it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ReadError, SpliceError

__all__ = [
    "Span",
    "Datum",
    "Document",
    "read_all",
    "read_one",
    "read_document",
    "print_datum",
    "splice",
    "replace_bytes",
    "insert_text",
    "locate",
    "walk",
    "sym",
    "kw",
    "dstr",
    "dnum",
    "dbool",
    "dnil",
    "dlist",
    "dvec",
    "dmap",
    "map_get",
    "map_assoc",
    "map_contains",
    "equal_with_meta",
    "qualified_parts",
]


@dataclass(frozen=True)
class Span:
    """Half-open byte range [start, end) into a document."""

    start: int
    end: int

    def contains(self, offset: int) -> bool:
        return self.start <= offset < self.end

    def as_list(self) -> list[int]:
        return [self.start, self.end]


_SCALAR_KINDS = ("symbol", "keyword", "string", "number", "boolean", "nil")
_SEQ_KINDS = ("list", "vector")


class Datum:
    """One parsed syntax value.

    ``kind`` is one of symbol/keyword/string/number/boolean/nil/list/
    vector/map. ``val`` holds the scalar, a tuple of children, or a tuple
    of (key, value) pairs for maps. Equality and hashing are structural
    and ignore ``meta`` and ``span`` (Clojure-style value semantics).
    """

    __slots__ = ("kind", "val", "meta", "span")

    def __init__(self, kind, val=None, meta=None, span=None):
        self.kind = kind
        self.val = val
        self.meta = meta
        self.span = span

    def with_meta(self, meta):
        return Datum(self.kind, self.val, meta, self.span)

    def with_span(self, span):
        return Datum(self.kind, self.val, self.meta, span)

    @property
    def children(self):
        """Sub-datums in document order (map pairs flattened)."""
        if self.kind in _SEQ_KINDS:
            return self.val
        if self.kind == "map":
            out = []
            for k, v in self.val:
                out.append(k)
                out.append(v)
            return tuple(out)
        return ()

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Datum):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.kind == "number":
            # ints and floats are distinct literals even when numerically equal
            return type(self.val) is type(other.val) and self.val == other.val
        if self.kind in _SCALAR_KINDS:
            return self.val == other.val
        if self.kind in _SEQ_KINDS:
            return (
                len(self.val) == len(other.val)
                and all(a == b for a, b in zip(self.val, other.val))
            )
        if self.kind == "map":
            if len(self.val) != len(other.val):
                return False
            for k, v in self.val:
                found = False
                for k2, v2 in other.val:
                    if k == k2:
                        found = v == v2
                        break
                if not found:
                    return False
            return True
        return NotImplemented

    def __hash__(self):
        if self.kind == "number":
            return hash((self.kind, type(self.val).__name__, self.val))
        if self.kind in _SCALAR_KINDS:
            return hash((self.kind, self.val))
        if self.kind in _SEQ_KINDS:
            return hash((self.kind, tuple(hash(c) for c in self.val)))
        # order-insensitive for maps
        return hash(("map", frozenset((hash(k), hash(v)) for k, v in self.val)))

    def __repr__(self):
        return f"<datum {print_datum(self)}>"


def equal_with_meta(a, b) -> bool:
    """Structural equality that also compares metadata (spans ignored)."""
    if not (isinstance(a, Datum) and isinstance(b, Datum)):
        return a == b
    if a != b:
        return False
    am, bm = a.meta, b.meta
    if (am is None) != (bm is None):
        return False
    if am is not None and not equal_with_meta(am, bm):
        return False
    ac, bc = a.children, b.children
    return len(ac) == len(bc) and all(equal_with_meta(x, y) for x, y in zip(ac, bc))


# ------------------------------------------------------------------
# constructors and accessors
# ------------------------------------------------------------------

def sym(name, span=None):
    return Datum("symbol", name, span=span)


def kw(name, span=None):
    return Datum("keyword", name, span=span)


def dstr(s, span=None):
    return Datum("string", s, span=span)


def dnum(x, span=None):
    return Datum("number", x, span=span)


def dbool(b, span=None):
    return Datum("boolean", bool(b), span=span)


def dnil(span=None):
    return Datum("nil", None, span=span)


def dlist(items, span=None):
    return Datum("list", tuple(items), span=span)


def dvec(items, span=None):
    return Datum("vector", tuple(items), span=span)


def dmap(pairs, span=None):
    return Datum("map", tuple((k, v) for k, v in pairs), span=span)


def qualified_parts(name: str):
    """Split ``ns/name`` into (ns, name); (None, name) when unqualified."""
    if "/" in name and len(name) > 1:
        ns, _, base = name.partition("/")
        if ns and base:
            return ns, base
    return None, name


def map_get(m: Datum, key: Datum, default=None):
    for k, v in m.val:
        if k == key:
            return v
    return default


def map_contains(m: Datum, key: Datum) -> bool:
    return any(k == key for k, _ in m.val)


def map_assoc(m: Datum, key: Datum, value: Datum) -> Datum:
    """Replace in place when the key exists (stable order), else append."""
    pairs = []
    replaced = False
    for k, v in m.val:
        if k == key:
            pairs.append((k, value))
            replaced = True
        else:
            pairs.append((k, v))
    if not replaced:
        pairs.append((key, value))
    return dmap(pairs)


# ------------------------------------------------------------------
# reading
# ------------------------------------------------------------------

_WS = frozenset(b" \t\r\n,")
_TERMINATORS = _WS | frozenset(b'()[]{}";')
_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?[0-9]+(\.[0-9]*)?([eE][+-]?[0-9]+)?$")
_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1

_QUOTE_SYMS = {
    b"'"[0]: "quote",
    b"`"[0]: "quasiquote",
    b"~"[0]: "unquote",
    b"@"[0]: "deref",
}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def error(self, message, offset=None):
        return ReadError(message, self.pos if offset is None else offset)

    def at_end(self):
        return self.pos >= len(self.data)

    def peek(self):
        return self.data[self.pos]

    def skip_trivia(self):
        data = self.data
        n = len(data)
        while self.pos < n:
            b = data[self.pos]
            if b in _WS:
                self.pos += 1
            elif b == b";"[0]:
                while self.pos < n and data[self.pos] != b"\n"[0]:
                    self.pos += 1
            else:
                return

    def read_form(self) -> Datum:
        self.skip_trivia()
        if self.at_end():
            raise self.error("unexpected end of input")
        start = self.pos
        b = self.peek()
        if b == b"("[0]:
            return self.read_seq(b")"[0], dlist, start)
        if b == b"["[0]:
            return self.read_seq(b"]"[0], dvec, start)
        if b == b"{"[0]:
            return self.read_map(start)
        if b in (b")"[0], b"]"[0], b"}"[0]):
            raise self.error(f"unbalanced delimiter '{chr(b)}'", start)
        if b == b'"'[0]:
            return self.read_string(start)
        if b == b"^"[0]:
            return self.read_meta(start)
        if b == b"~"[0] and self.pos + 1 < len(self.data) and self.data[self.pos + 1] == b"@"[0]:
            self.pos += 2
            inner = self.read_form()
            return dlist([sym("unquote-splicing"), inner], span=Span(start, inner.span.end))
        if b in _QUOTE_SYMS:
            self.pos += 1
            inner = self.read_form()
            return dlist([sym(_QUOTE_SYMS[b]), inner], span=Span(start, inner.span.end))
        return self.read_atom(start)

    def read_seq(self, closer, ctor, start):
        self.pos += 1
        items = []
        while True:
            self.skip_trivia()
            if self.at_end():
                raise self.error(f"unbalanced delimiter: missing '{chr(closer)}'", start)
            if self.peek() == closer:
                self.pos += 1
                return ctor(items, span=Span(start, self.pos))
            items.append(self.read_form())

    def read_map(self, start):
        self.pos += 1
        items = []
        while True:
            self.skip_trivia()
            if self.at_end():
                raise self.error("unbalanced delimiter: missing '}'", start)
            if self.peek() == b"}"[0]:
                if len(items) % 2 != 0:
                    raise self.error("odd map entry count")
                self.pos += 1
                pairs = list(zip(items[::2], items[1::2]))
                seen = []
                for k, _ in pairs:
                    if any(k == s for s in seen):
                        raise ReadError("duplicate map key", k.span.start)
                    seen.append(k)
                return dmap(pairs, span=Span(start, self.pos))
            items.append(self.read_form())

    def read_string(self, start):
        data = self.data
        n = len(data)
        self.pos += 1
        out = bytearray()
        while True:
            if self.pos >= n:
                raise self.error("unterminated string", start)
            b = data[self.pos]
            if b == b'"'[0]:
                self.pos += 1
                return dstr(out.decode("utf-8"), span=Span(start, self.pos))
            if b == b"\\"[0]:
                if self.pos + 1 >= n:
                    raise self.error("unterminated string", start)
                esc = data[self.pos + 1]
                mapping = {b'"'[0]: b'"', b"\\"[0]: b"\\", b"n"[0]: b"\n", b"t"[0]: b"\t", b"r"[0]: b"\r"}
                if esc not in mapping:
                    raise self.error(f"unsupported string escape '\\{chr(esc)}'", self.pos)
                out.extend(mapping[esc])
                self.pos += 2
            else:
                out.append(b)
                self.pos += 1

    def read_meta(self, start):
        self.pos += 1
        self.skip_trivia()
        if self.at_end():
            raise self.error("dangling metadata", start)
        meta_form = self.read_form()
        if meta_form.kind == "keyword":
            meta_form = dmap([(meta_form, dbool(True))], span=meta_form.span)
        elif meta_form.kind != "map":
            raise ReadError("metadata must be a map or keyword", meta_form.span.start)
        self.skip_trivia()
        if self.at_end():
            raise self.error("dangling metadata", start)
        target = self.read_form()
        merged = meta_form
        if target.meta is not None:
            pairs = list(target.meta.val)
            for k, v in meta_form.val:
                replaced = False
                for i, (k2, _) in enumerate(pairs):
                    if k == k2:
                        pairs[i] = (k, v)
                        replaced = True
                        break
                if not replaced:
                    pairs.append((k, v))
            merged = dmap(pairs, span=meta_form.span)
        return Datum(target.kind, target.val, merged, Span(start, target.span.end))

    def read_atom(self, start):
        data = self.data
        n = len(data)
        while self.pos < n and data[self.pos] not in _TERMINATORS:
            self.pos += 1
        text = data[start : self.pos].decode("utf-8")
        span = Span(start, self.pos)
        if _INT_RE.match(text):
            value = int(text)
            if not (_INT64_MIN <= value <= _INT64_MAX):
                raise ReadError("integer literal out of 64-bit range", start)
            return dnum(value, span=span)
        if _FLOAT_RE.match(text) and any(c in text for c in ".eE"):
            return dnum(float(text), span=span)
        if text == "true":
            return dbool(True, span=span)
        if text == "false":
            return dbool(False, span=span)
        if text == "nil":
            return dnil(span=span)
        if text.startswith(":"):
            if len(text) == 1 or text.startswith("::"):
                raise ReadError(f"invalid keyword '{text}'", start)
            return kw(text[1:], span=span)
        return sym(text, span=span)


def read_all(text: str) -> list[Datum]:
    """Parse every top-level form; comments and whitespace are skipped."""
    data = text.encode("utf-8")
    if data.startswith(b"\xef\xbb\xbf"):
        raise ReadError("unexpected byte-order mark", 0)
    r = _Reader(data)
    forms = []
    while True:
        r.skip_trivia()
        if r.at_end():
            return forms
        forms.append(r.read_form())


def read_one(text: str) -> Datum:
    """Parse text that must contain exactly one form."""
    forms = read_all(text)
    if len(forms) == 0:
        raise ReadError("expected one form, got none", 0)
    if len(forms) > 1:
        raise ReadError("expected one form, got several", forms[1].span.start)
    return forms[0]


# ------------------------------------------------------------------
# printing
# ------------------------------------------------------------------

_STR_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def _print_number(x) -> str:
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            raise ValueError("cannot print non-finite number")
        return repr(x)
    return repr(x)


def print_datum(d: Datum) -> str:
    """Canonical single-line rendering; reading it back yields an equal datum."""
    if d.meta is not None:
        return "^" + _print_bare(d.meta) + " " + _print_bare(d)
    return _print_bare(d)


def _print_bare(d: Datum) -> str:
    k = d.kind
    if k == "nil":
        return "nil"
    if k == "boolean":
        return "true" if d.val else "false"
    if k == "number":
        return _print_number(d.val)
    if k == "string":
        return '"' + "".join(_STR_ESCAPES.get(c, c) for c in d.val) + '"'
    if k == "symbol":
        return d.val
    if k == "keyword":
        return ":" + d.val
    if k == "list":
        return "(" + " ".join(print_datum(c) for c in d.val) + ")"
    if k == "vector":
        return "[" + " ".join(print_datum(c) for c in d.val) + "]"
    if k == "map":
        inner = " ".join(
            print_datum(kd) + " " + print_datum(vd) for kd, vd in d.val
        )
        return "{" + inner + "}"
    raise ValueError(f"unknown datum kind {k!r}")


# ------------------------------------------------------------------
# documents
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Document:
    """Full source text plus its parsed top-level forms.

    Reparsing ``text`` always reproduces ``forms``; splices rebuild the
    document from the edited bytes so that property holds by construction.
    """

    text: str
    forms: tuple[Datum, ...]

    def byte_length(self) -> int:
        return len(self.text.encode("utf-8"))


def read_document(text: str) -> Document:
    return Document(text, tuple(read_all(text)))


def walk(d: Datum):
    """Pre-order traversal including metadata datums."""
    yield d
    if d.meta is not None:
        yield from walk(d.meta)
    for c in d.children:
        yield from walk(c)


def _find_exact(doc: Document, span: Span):
    for top in doc.forms:
        for d in walk(top):
            if d.span is not None and d.span.start == span.start and d.span.end == span.end:
                return d
    return None


def replace_bytes(doc: Document, span: Span, replacement: str) -> Document:
    """Low-level byte splice + reparse; callers validate form alignment."""
    data = doc.text.encode("utf-8")
    if not (0 <= span.start <= span.end <= len(data)):
        raise SpliceError(f"span {span.start}..{span.end} out of range", span=(span.start, span.end))
    new = data[: span.start] + replacement.encode("utf-8") + data[span.end :]
    try:
        text = new.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SpliceError(f"edit breaks UTF-8 encoding: {exc}", span=(span.start, span.end)) from None
    return read_document(text)


def splice(doc: Document, span: Span, replacement: str) -> Document:
    """Replace the sub-form occupying ``span`` with ``replacement`` text.

    Bytes outside the span are untouched; the replacement must parse to
    exactly one form and the span must sit on a form boundary.
    """
    if _find_exact(doc, span) is None:
        raise SpliceError(
            f"span {span.start}..{span.end} is not on a form boundary",
            span=(span.start, span.end),
        )
    parsed = read_all(replacement)
    if len(parsed) == 0:
        raise SpliceError("replacement parses to zero forms", span=(span.start, span.end))
    if len(parsed) > 1:
        raise SpliceError("replacement parses to multiple forms", span=(span.start, span.end))
    return replace_bytes(doc, span, replacement)


def insert_text(doc: Document, offset: int, text: str) -> tuple[Document, Span, str]:
    """Insert new top-level form text at ``offset`` (inter-form position).

    Whitespace is added around the insertion when needed so neighboring
    forms stay separated. Returns (document, replaced-span, actual-text).
    """
    data = doc.text.encode("utf-8")
    if not (0 <= offset <= len(data)):
        raise SpliceError(f"offset {offset} out of range")
    for top in doc.forms:
        if top.span.start < offset < top.span.end:
            raise SpliceError(
                f"offset {offset} is inside an existing top-level form",
                span=(top.span.start, top.span.end),
            )
    if len(read_all(text)) == 0:
        raise SpliceError("insertion parses to zero forms")
    pad_left = offset > 0 and data[offset - 1] not in _WS
    pad_right = offset < len(data) and data[offset] not in _WS
    actual = ("\n" if pad_left else "") + text + ("\n" if pad_right else "")
    new_doc = replace_bytes(doc, Span(offset, offset), actual)
    return new_doc, Span(offset, offset), actual


def locate(doc: Document, offset: int):
    """Innermost datum whose span contains ``offset``; None in trivia."""
    best = None
    for top in doc.forms:
        if not (top.span and top.span.contains(offset)):
            continue
        best = top
        descending = True
        while descending:
            descending = False
            candidates = list(best.children)
            if best.meta is not None:
                candidates.append(best.meta)
            for c in candidates:
                if c.span is not None and c.span.contains(offset):
                    best = c
                    descending = True
                    break
    return best
