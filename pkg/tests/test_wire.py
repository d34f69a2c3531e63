from hypothesis import given, settings, strategies as st

from hvx.reader import print_datum, read_one
from hvx.session import UiNode
from hvx.wire import datum_to_json, decode_ui, encode_ui, json_to_datum


def test_encode_counter_tree():
    node = UiNode("button", {"on-click": "h:1"}, ["42"])
    wire = encode_ui(node)
    assert wire == {"tag": ":button", "attrs": {":on-click": "h:1"}, "children": ["42"]}
    assert decode_ui(wire) == node


def test_nested_nodes_and_state_paths():
    node = UiNode(
        "div",
        {},
        [UiNode("code-editor", {"state-path": [":alpha-code"], "field-span": [10, 20]}, ["(+ 1 2)"])],
    )
    assert decode_ui(encode_ui(node)) == node


def test_json_payload_to_datum():
    d = json_to_datum({":name": "comments", ":default": 0})
    assert print_datum(d) == '{:name "comments" :default 0}'
    assert print_datum(json_to_datum(["C", "D"])) == '["C" "D"]'
    assert print_datum(json_to_datum("0.8")) == '"0.8"'
    assert print_datum(json_to_datum(None)) == "nil"
    assert print_datum(json_to_datum(True)) == "true"


def test_datum_to_json_for_display():
    d = read_one('{:a [1 2.5 nil true] :b "s"}')
    assert datum_to_json(d) == {":a": [1, 2.5, None, True], ":b": "s"}


_tag = st.sampled_from(["div", "span", "button", "text-input", "svg-group", "circle", "code-editor"])
_attr_name = st.sampled_from(["on-click", "value", "label", "fill", "state-path", "kind"])
_scalar = st.one_of(
    st.integers(min_value=-1000, max_value=1000),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.booleans(),
    st.none(),
    st.text("abc xyz-", max_size=8),
    st.from_regex(r"h:[0-9]{1,3}", fullmatch=True),
    st.text("abc", min_size=1, max_size=4).map(lambda s: ":" + s),
)
_attr_value = st.one_of(_scalar, st.lists(_scalar, max_size=3))


def _nodes(depth=2):
    children = st.text("abc 123", max_size=6)
    if depth > 0:
        children = st.one_of(children, st.deferred(lambda: _nodes(depth - 1)))
    return st.builds(
        UiNode,
        _tag,
        st.dictionaries(_attr_name, _attr_value, max_size=3),
        st.lists(children, max_size=3),
    )


@settings(max_examples=200, deadline=None)
@given(_nodes())
def test_wire_roundtrip_property(node):
    assert decode_ui(encode_ui(node)) == node
