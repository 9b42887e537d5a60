import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invparse.frame import NodeKind, ontology_tokens, parse_frame, serialize_frame
from invparse.inventory import (
    DuplicateLabel,
    EmptyOntology,
    Inventory,
    InventoryVariant,
    MalformedLabel,
    UnknownIndex,
    UnknownLabel,
    build_inventory,
    derive_span,
    from_index_frame,
    linearize,
    linearize_tokens,
    to_index_frame,
)

from .strategies import NAMES, frames

ALARM = ["SL:TIME_ZONE", "IN:UPDATE_ALARM", "SL:DATE_TIME", "IN:CREATE_ALARM", "SL:ALARM_NAME"]


def test_alarm_inventory_layout():
    inv = build_inventory("alarm", ALARM)
    rows = [(c.label.raw, c.index, c.type, c.span) for c in inv]
    assert rows == [
        ("IN:CREATE_ALARM", 1, "intent", "create alarm"),
        ("IN:UPDATE_ALARM", 2, "intent", "update alarm"),
        ("SL:ALARM_NAME", 3, "slot", "alarm name"),
        ("SL:DATE_TIME", 4, "slot", "date time"),
        ("SL:TIME_ZONE", 5, "slot", "time zone"),
    ]


def test_build_is_order_independent():
    assert build_inventory("alarm", ALARM) == build_inventory("alarm", sorted(ALARM, reverse=True))


@pytest.mark.parametrize("label, span", [
    ("SL:TIME_ZONE", "time zone"), ("IN:GET_WEATHER", "get weather"), ("SL:X", "x"), ("IN:A__B", "a b"),
])
def test_derive_span(label, span):
    assert derive_span(label) == span


def test_build_errors():
    with pytest.raises(EmptyOntology):
        build_inventory("d", [])
    with pytest.raises(DuplicateLabel):
        build_inventory("d", ["IN:A", "IN:A"])
    with pytest.raises(MalformedLabel):
        build_inventory("d", ["CREATE_ALARM"])
    with pytest.raises(MalformedLabel):
        build_inventory("d", ["IN:"])


def test_linearize_variants():
    inv = build_inventory("alarm", ALARM)
    assert linearize(inv, "index") == "[ 1 [ 2 [ 3 [ 4 [ 5"
    assert linearize(inv, "index_type").startswith("[ 1 | intent [ 2 | intent [ 3 | slot")
    full = linearize(inv, InventoryVariant.INDEX_TYPE_SPAN)
    assert full == ("[ 1 | intent | create alarm [ 2 | intent | update alarm [ 3 | slot | alarm name "
                    "[ 4 | slot | date time [ 5 | slot | time zone")
    assert linearize_tokens(inv) == full.split()


def test_variant_parse_aliases_and_errors():
    assert InventoryVariant.parse("Index-Type") is InventoryVariant.INDEX_TYPE
    assert InventoryVariant.parse("full") is InventoryVariant.INDEX_TYPE_SPAN
    with pytest.raises(ValueError):
        InventoryVariant.parse("span_only")


def test_index_frame_conversion():
    inv = build_inventory("alarm", ALARM)
    f = parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]")
    idx = to_index_frame(f, inv)
    assert serialize_frame(idx) == "[ 1 [ 4 6pm ] ]"
    assert from_index_frame(idx, inv) == f
    assert from_index_frame("[ 1 [ 4 6pm ] ]", inv) == f
    assert serialize_frame(to_index_frame(parse_frame("[IN:A ]"), build_inventory("d", ["IN:A"]))) == "[ 1 ]"


def test_conversion_errors():
    inv = build_inventory("alarm", ALARM)
    with pytest.raises(UnknownLabel):
        to_index_frame(parse_frame("[IN:GET_WEATHER ]"), inv)
    with pytest.raises(UnknownIndex):
        from_index_frame("[ 9 ]", inv)
    with pytest.raises(UnknownIndex):
        from_index_frame("[ 0 ]", inv)
    with pytest.raises(UnknownIndex):
        from_index_frame("[ ]", inv)


def test_kinds_restored_from_inventory():
    inv = build_inventory("alarm", ALARM)
    f = from_index_frame("[ 2 [ 3 [ 1 [ 5 x ] ] ] ]", inv)
    kinds = [n.kind for _, n in f.walk() if not n.is_token]
    assert kinds == [NodeKind.INTENT, NodeKind.SLOT, NodeKind.INTENT, NodeKind.SLOT]


def test_tsv_round_trip():
    inv = build_inventory("alarm", ALARM)
    assert Inventory.from_tsv("alarm", inv.to_tsv()) == inv


@st.composite
def frame_and_inventory(draw):
    f = draw(frames())
    extra = draw(st.lists(st.sampled_from(NAMES).map(lambda n: "SL:EXTRA_" + n), unique=True))
    labels = sorted(set(ontology_tokens(f)) | set(extra))
    return f, build_inventory("d", labels)


@settings(max_examples=300, deadline=None)
@given(frame_and_inventory())
def test_bijection_property(pair):
    f, inv = pair
    idx = to_index_frame(f, inv)
    assert from_index_frame(idx, inv) == f
    assert from_index_frame(serialize_frame(idx), inv) == f
    assert all(n.label.isdigit() for _, n in idx.walk() if not n.is_token)
