"""Wire encoding between kernel values and JSON.

Widget trees cross the wire as plain JSON: tags and attribute names are
keywords, encoded as strings with a leading colon. Handler ids travel as
``"h:<n>"`` strings and state paths as arrays. Document state itself is
exchanged as canonical source text rather than a JSON tree, so nothing
about reader data (symbol vs string, int vs float) is lost in transit.

Event payloads arrive as JSON and are converted to reader data with the
same colon convention for keywords.
"""

from __future__ import annotations

from .reader import Datum, dbool, dmap, dnil, dnum, dstr, dvec, kw, print_datum
from .session import UiNode


def encode_ui(node: UiNode) -> dict:
    return {
        "tag": ":" + node.tag,
        "attrs": {":" + k: v for k, v in node.attrs.items()},
        "children": [
            encode_ui(c) if isinstance(c, UiNode) else c for c in node.children
        ],
    }


def decode_ui(data: dict) -> UiNode:
    tag = data["tag"]
    if not (isinstance(tag, str) and tag.startswith(":")):
        raise ValueError(f"wire tag must be a ':'-prefixed string, got {tag!r}")
    attrs = {}
    for k, v in data.get("attrs", {}).items():
        if not (isinstance(k, str) and k.startswith(":")):
            raise ValueError(f"wire attribute names must be ':'-prefixed, got {k!r}")
        attrs[k[1:]] = v
    children = [
        decode_ui(c) if isinstance(c, dict) else c for c in data.get("children", [])
    ]
    return UiNode(tag[1:], attrs, children)


def json_to_datum(value) -> Datum:
    """JSON payload to reader data; ':'-prefixed strings become keywords."""
    if value is None:
        return dnil()
    if isinstance(value, bool):
        return dbool(value)
    if isinstance(value, (int, float)):
        return dnum(value)
    if isinstance(value, str):
        if value.startswith(":") and len(value) > 1:
            return kw(value[1:])
        return dstr(value)
    if isinstance(value, list):
        return dvec([json_to_datum(v) for v in value])
    if isinstance(value, dict):
        return dmap([(json_to_datum(k), json_to_datum(v)) for k, v in value.items()])
    raise ValueError(f"cannot convert payload of type {type(value).__name__}")


def datum_to_json(value):
    """Reader data to JSON, for display purposes; symbols flatten to
    strings, so this direction is not used where losslessness matters."""
    if not isinstance(value, Datum):
        raise ValueError("only data values cross the wire")
    k = value.kind
    if k == "nil":
        return None
    if k in ("boolean", "number", "string"):
        return value.val
    if k == "keyword":
        return ":" + value.val
    if k == "symbol":
        return value.val
    if k in ("list", "vector"):
        return [datum_to_json(c) for c in value.val]
    if k == "map":
        return {_map_key(kd): datum_to_json(vd) for kd, vd in value.val}
    raise ValueError(f"cannot encode datum kind {k}")


def _map_key(kd: Datum) -> str:
    if kd.kind == "keyword":
        return ":" + kd.val
    if kd.kind == "string":
        return kd.val
    return print_datum(kd)
