"""Per-domain label inventories and index-pointer frames.

Every ontology label becomes a component ``(index, type, span)``: its
1-based position in the sorted ontology, ``intent`` or ``slot``, and a
lowercased reading of its name. Frames are rewritten so that each label is
replaced by its component index, and rewritten back.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable

from .frame import (
    CLOSE,
    OPEN,
    Frame,
    FrameNode,
    NodeKind,
    kind_of_label,
    parse_frame,
)


class MalformedLabel(ValueError):
    pass


class EmptyOntology(ValueError):
    pass


class DuplicateLabel(ValueError):
    pass


class UnknownLabel(KeyError):
    def __init__(self, label: str, domain: str):
        super().__init__(label, domain)
        self.label = label
        self.domain = domain

    def __str__(self) -> str:
        return f"label {self.label!r} is not in the {self.domain!r} inventory"


class UnknownIndex(KeyError):
    def __init__(self, index):
        super().__init__(index)
        self.index = index

    def __str__(self) -> str:
        return f"index {self.index!r} does not name an inventory component"


class InventoryVariant(str, enum.Enum):
    """Which component fields appear in the linearized inventory."""

    INDEX_ONLY = "index"
    INDEX_TYPE = "index_type"
    INDEX_TYPE_SPAN = "index_type_span"

    @classmethod
    def parse(cls, value: "str | InventoryVariant") -> "InventoryVariant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace("+", "_")
        aliases = {
            "index": cls.INDEX_ONLY, "indexonly": cls.INDEX_ONLY, "index_only": cls.INDEX_ONLY,
            "index_type": cls.INDEX_TYPE, "indextype": cls.INDEX_TYPE,
            "index_type_span": cls.INDEX_TYPE_SPAN, "indextypespan": cls.INDEX_TYPE_SPAN,
            "full": cls.INDEX_TYPE_SPAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(
                f"unknown inventory variant {value!r}; expected one of "
                f"{[v.value for v in cls]}") from None


@dataclass(frozen=True, order=False)
class OntologyLabel:
    raw: str
    kind: NodeKind

    @classmethod
    def parse(cls, raw: str) -> "OntologyLabel":
        if not isinstance(raw, str) or raw != raw.strip() or " " in raw:
            raise MalformedLabel(f"malformed ontology label {raw!r}")
        kind = kind_of_label(raw)
        if kind is None:
            raise MalformedLabel(f"label {raw!r} must start with IN: or SL: and carry a name")
        return cls(raw, kind)

    @property
    def name(self) -> str:
        return self.raw.split(":", 1)[1]

    def sort_key(self) -> tuple[int, str]:
        return (0 if self.kind is NodeKind.INTENT else 1, self.raw)

    def __str__(self) -> str:
        return self.raw


def as_label(label: "str | OntologyLabel") -> OntologyLabel:
    return label if isinstance(label, OntologyLabel) else OntologyLabel.parse(label)


def derive_span(label: "str | OntologyLabel") -> str:
    """``SL:TIME_ZONE`` -> ``"time zone"``."""
    label = as_label(label)
    words = [w for w in label.name.lower().split("_") if w]
    if not words:
        raise MalformedLabel(f"label {label.raw!r} has no name words")
    return " ".join(words)


@dataclass(frozen=True)
class InventoryComponent:
    index: int
    kind: NodeKind
    span: str
    label: OntologyLabel

    @property
    def type(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class Inventory:
    domain: str
    components: tuple[InventoryComponent, ...]

    def __post_init__(self):
        seen_labels = set()
        for expected, comp in enumerate(self.components, start=1):
            if comp.index != expected:
                raise ValueError(f"component indices must run 1..m in order; got {comp.index} at {expected}")
            if comp.label.raw in seen_labels:
                raise DuplicateLabel(comp.label.raw)
            seen_labels.add(comp.label.raw)
        # plain dicts are fine on a frozen dataclass; they are never mutated
        object.__setattr__(self, "_by_label", {c.label.raw: c for c in self.components})

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __contains__(self, label) -> bool:
        return str(label) in self._by_label

    @property
    def labels(self) -> list[str]:
        return [c.label.raw for c in self.components]

    def index_of(self, label: "str | OntologyLabel") -> int:
        try:
            return self._by_label[str(label)].index
        except KeyError:
            raise UnknownLabel(str(label), self.domain) from None

    def component(self, index: int) -> InventoryComponent:
        if isinstance(index, bool) or not isinstance(index, int) or not 1 <= index <= len(self.components):
            raise UnknownIndex(index)
        return self.components[index - 1]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
        writer.writerow(["index", "type", "span", "raw_label"])
        for c in self.components:
            writer.writerow([c.index, c.type, c.span, c.label.raw])
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, domain: str, text: str) -> "Inventory":
        rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
        if not rows or rows[0] != ["index", "type", "span", "raw_label"]:
            raise ValueError("inventory TSV must start with the index/type/span/raw_label header")
        comps = []
        for row in rows[1:]:
            if not row:
                continue
            index, kind, span, raw = row
            comps.append(InventoryComponent(int(index), NodeKind(kind), span, OntologyLabel.parse(raw)))
        return cls(domain, tuple(comps))


def build_inventory(domain: str, ontology: Iterable["str | OntologyLabel"]) -> Inventory:
    """Sort an ontology (intents first, then slots; lexicographic within each)
    and number it 1..m.

    Raises
    ------
    EmptyOntology
        If ``ontology`` has no labels.
    DuplicateLabel
        If the same raw label is given twice.
    """
    labels = [as_label(x) for x in ontology]
    if not labels:
        raise EmptyOntology(f"domain {domain!r} has an empty ontology")
    seen = set()
    for label in labels:
        if label.raw in seen:
            raise DuplicateLabel(f"label {label.raw!r} listed twice for domain {domain!r}")
        seen.add(label.raw)
    labels.sort(key=OntologyLabel.sort_key)
    return Inventory(domain, tuple(
        InventoryComponent(i, lab.kind, derive_span(lab), lab) for i, lab in enumerate(labels, start=1)
    ))


def linearize_tokens(inventory: Inventory, variant="index_type_span") -> list[str]:
    variant = InventoryVariant.parse(variant)
    out: list[str] = []
    for c in inventory.components:
        out += [OPEN, str(c.index)]
        if variant is not InventoryVariant.INDEX_ONLY:
            out += ["|", c.type]
        if variant is InventoryVariant.INDEX_TYPE_SPAN:
            out += ["|", *c.span.split()]
    return out


def linearize(inventory: Inventory, variant="index_type_span") -> str:
    """Render an inventory as the flat string fed to the encoder.

    >>> inv = build_inventory("alarm", ["IN:CREATE_ALARM", "SL:DATE_TIME"])
    >>> linearize(inv)
    '[ 1 | intent | create alarm [ 2 | slot | date time'
    >>> linearize(inv, "index")
    '[ 1 [ 2'
    """
    return " ".join(linearize_tokens(inventory, variant))


def to_index_frame(frame: Frame, inventory: Inventory) -> Frame:
    """Replace every intent/slot label by its component index."""

    def convert(node: FrameNode) -> FrameNode:
        if node.is_token:
            return node
        index = inventory.index_of(node.label)
        return FrameNode(node.kind, str(index), children=tuple(convert(c) for c in node.children))

    return Frame(convert(frame.root))


def _lookup(inventory: Inventory, token: str) -> InventoryComponent:
    try:
        index = int(token)
    except (TypeError, ValueError):
        raise UnknownIndex(token) from None
    return inventory.component(index)


def from_index_frame(frame: "Frame | str | list[str]", inventory: Inventory) -> Frame:
    """Inverse of :func:`to_index_frame`.

    Accepts an index-form :class:`Frame` or its serialized text/tokens (as
    produced by a decoder). Node kinds come from the component types.
    """
    if not isinstance(frame, Frame):
        tokens = frame.split() if isinstance(frame, str) else list(frame)
        rewritten: list[str] = []
        i = 0
        while i < len(tokens):
            tok = tokens[i]
            if tok == OPEN:
                if i + 1 >= len(tokens) or tokens[i + 1] in (OPEN, CLOSE):
                    raise UnknownIndex(None)
                rewritten.append(OPEN + _lookup(inventory, tokens[i + 1]).label.raw)
                i += 2
            else:
                rewritten.append(tok)
                i += 1
        return parse_frame(rewritten)

    def convert(node: FrameNode) -> FrameNode:
        if node.is_token:
            return node
        comp = _lookup(inventory, node.label)
        return FrameNode(comp.kind, comp.label.raw, children=tuple(convert(c) for c in node.children))

    return Frame(convert(frame.root))
