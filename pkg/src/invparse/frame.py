"""Bracketed intent/slot frames.

A frame is a tree rooted at an intent. Intent and slot nodes open with a
single token such as ``[IN:CREATE_ALARM`` or ``[SL:DATE_TIME`` and close with
``]``; every other token is an utterance token::

    [IN:DELETE_ALARM [SL:ALARM_NAME [IN:GET_TIME [SL:DATE_TIME 6pm ] ] ] ]

Index-form frames (see :mod:`invparse.inventory`) use a bare ``[`` followed
by a decimal index instead, e.g. ``[ 1 [ 4 6pm ] ]``. They share the same
node type and serializer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

INTENT_PREFIX = "IN:"
SLOT_PREFIX = "SL:"
OPEN = "["
CLOSE = "]"


class FrameParseError(ValueError):
    """Base class for strict parsing failures."""


class UnbalancedBrackets(FrameParseError):
    pass


class EmptyFrame(FrameParseError):
    pass


class RootNotIntent(FrameParseError):
    pass


class LabelMissing(FrameParseError):
    pass


class NodeKind(str, enum.Enum):
    INTENT = "intent"
    SLOT = "slot"
    TOKEN = "token"


def kind_of_label(label: str) -> NodeKind | None:
    """Categorical kind implied by a label's prefix, or None."""
    if label.startswith(INTENT_PREFIX) and len(label) > len(INTENT_PREFIX):
        return NodeKind.INTENT
    if label.startswith(SLOT_PREFIX) and len(label) > len(SLOT_PREFIX):
        return NodeKind.SLOT
    return None


@dataclass(frozen=True)
class FrameNode:
    kind: NodeKind
    label: str = ""
    text: str = ""
    children: tuple["FrameNode", ...] = field(default_factory=tuple)

    @classmethod
    def intent(cls, label: str, *children: "FrameNode") -> "FrameNode":
        return cls(NodeKind.INTENT, label=label, children=tuple(children))

    @classmethod
    def slot(cls, label: str, *children: "FrameNode") -> "FrameNode":
        return cls(NodeKind.SLOT, label=label, children=tuple(children))

    @classmethod
    def token(cls, text: str) -> "FrameNode":
        return cls(NodeKind.TOKEN, text=text)

    @property
    def is_token(self) -> bool:
        return self.kind is NodeKind.TOKEN

    def walk(self, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], "FrameNode"]]:
        """Pre-order traversal yielding ``(path, node)`` pairs."""
        stack = [(path, self)]
        while stack:
            here, node = stack.pop()
            yield here, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((here + (i,), node.children[i]))


@dataclass(frozen=True)
class Frame:
    root: FrameNode

    def __str__(self) -> str:
        return serialize_frame(self)

    def tokens(self) -> list[str]:
        return frame_tokens(self)

    def walk(self):
        return self.root.walk()


class Issue(NamedTuple):
    code: str
    path: tuple[int, ...]
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> list[str]:
        return [issue.code for issue in self.issues]

    def __bool__(self) -> bool:
        return self.ok


def _opening_tokens(node: FrameNode) -> list[str]:
    if node.label.isdigit():
        return [OPEN, node.label]
    return [OPEN + node.label]


def _emit(node: FrameNode, out: list[str]) -> None:
    stack: list[FrameNode | None] = [node]  # None marks a pending CLOSE
    while stack:
        item = stack.pop()
        if item is None:
            out.append(CLOSE)
        elif item.is_token:
            out.append(item.text)
        else:
            out.extend(_opening_tokens(item))
            stack.append(None)
            stack.extend(reversed(item.children))


def frame_tokens(frame: Frame | FrameNode) -> list[str]:
    """Serialized token sequence of a frame (or subtree)."""
    node = frame.root if isinstance(frame, Frame) else frame
    out: list[str] = []
    _emit(node, out)
    return out


def serialize_frame(frame: Frame | FrameNode) -> str:
    return " ".join(frame_tokens(frame))


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def parse_frame(text: str | list[str]) -> Frame:
    """Parse a bracketed frame string (or pre-split token list).

    Parsing is strict: malformed input raises a :class:`FrameParseError`
    subclass rather than being repaired. Structural rules that do not affect
    bracketing (e.g. slots nested in slots) are left to :func:`validate_frame`.

    Raises
    ------
    EmptyFrame
        No tokens at all.
    RootNotIntent
        The outermost element is not an intent.
    LabelMissing
        An opening bracket carries no usable label.
    UnbalancedBrackets
        Unclosed or stray brackets, or content after the root closes.
    """
    tokens = text.split() if isinstance(text, str) else list(text)
    if not tokens:
        raise EmptyFrame("frame string is empty")

    first = tokens[0]
    if first == CLOSE:
        raise UnbalancedBrackets(f"stray {CLOSE!r} at position 0")
    if not first.startswith(OPEN):
        raise RootNotIntent(f"frame must open with an intent, got {first!r}")

    root, pos = _parse_node(tokens, 0)
    if root.kind is not NodeKind.INTENT:
        raise RootNotIntent(f"frame must open with an intent, got {first!r}")
    if pos != len(tokens):
        raise UnbalancedBrackets(
            f"unexpected tokens after the root closes at position {pos}: {tokens[pos]!r}")
    return Frame(root)


def _parse_node(tokens: list[str], pos: int) -> tuple[FrameNode, int]:
    # explicit stack keeps deep frames off the interpreter's recursion limit
    stack: list[tuple[NodeKind, str, list[FrameNode]]] = []
    n = len(tokens)
    while True:
        if pos >= n:
            raise UnbalancedBrackets(f"{len(stack)} bracket(s) left unclosed")
        tok = tokens[pos]
        if tok == CLOSE:
            if not stack:
                raise UnbalancedBrackets(f"stray {CLOSE!r} at position {pos}")
            kind, label, children = stack.pop()
            node = FrameNode(kind, label=label, children=tuple(children))
            pos += 1
            if not stack:
                return node, pos
            stack[-1][2].append(node)
        elif tok.startswith(OPEN):
            label = tok[1:]
            if not label:
                if pos + 1 < n and tokens[pos + 1].isdigit():
                    # index form; provisional kind, restored from an inventory
                    stack.append((NodeKind.INTENT, tokens[pos + 1], []))
                    pos += 2
                    continue
                raise LabelMissing(f"bare {OPEN!r} without a label at position {pos}")
            kind = kind_of_label(label)
            if kind is None:
                raise LabelMissing(
                    f"label {label!r} at position {pos} lacks an {INTENT_PREFIX}/{SLOT_PREFIX} prefix")
            stack.append((kind, label, []))
            pos += 1
        else:
            if not stack:
                raise UnbalancedBrackets(f"token {tok!r} outside any bracket")
            stack[-1][2].append(FrameNode.token(tok))
            pos += 1


def validate_frame(frame: Frame | FrameNode) -> ValidationReport:
    """Check every structural invariant; violations come back as data.

    Issues are listed in pre-order of the offending node.
    """
    root = frame.root if isinstance(frame, Frame) else frame
    issues: list[Issue] = []
    if root.kind is not NodeKind.INTENT:
        issues.append(Issue("RootNotIntent", (), f"root is a {root.kind.value} node"))

    for path, node in root.walk():
        if node.kind is NodeKind.TOKEN:
            if node.children:
                issues.append(Issue("TokenHasChildren", path, "token nodes must be leaves"))
            if not node.text or len(node.text.split()) != 1 or node.text != node.text.strip():
                issues.append(Issue("BadToken", path, f"token text {node.text!r} is not a single word"))
            elif node.text == CLOSE or node.text.startswith(OPEN):
                issues.append(Issue("BadToken", path, f"token {node.text!r} collides with bracket syntax"))
            continue

        implied = kind_of_label(node.label)
        if implied is None:
            issues.append(Issue("LabelMissing", path, f"label {node.label!r} lacks a categorical prefix"))
        elif implied is not node.kind:
            issues.append(Issue("LabelKindMismatch", path,
                                f"label {node.label!r} is not a {node.kind.value} label"))
        if node.text:
            issues.append(Issue("TextOnInternalNode", path, "intent/slot nodes carry no text"))
        for child in node.children:
            if node.kind is NodeKind.SLOT and child.kind is NodeKind.SLOT:
                issues.append(Issue("SlotInSlot", path, f"slot {node.label} directly contains slot {child.label}"))
            elif node.kind is NodeKind.INTENT and child.kind is NodeKind.INTENT:
                issues.append(Issue("IntentInIntent", path,
                                    f"intent {node.label} directly contains intent {child.label}"))
    return ValidationReport(tuple(issues))


def is_nested(frame: Frame | FrameNode) -> bool:
    """True iff some slot directly embeds an intent."""
    root = frame.root if isinstance(frame, Frame) else frame
    return any(
        node.kind is NodeKind.SLOT and any(c.kind is NodeKind.INTENT for c in node.children)
        for _, node in root.walk()
    )


def ontology_tokens(frame: Frame | FrameNode) -> list[str]:
    """Intent/slot labels in pre-order, duplicates kept."""
    root = frame.root if isinstance(frame, Frame) else frame
    return [node.label for _, node in root.walk() if not node.is_token]


def utterance_tokens(frame: Frame | FrameNode) -> list[str]:
    root = frame.root if isinstance(frame, Frame) else frame
    return [node.text for _, node in root.walk() if node.is_token]


def lowercase_frame(frame: Frame) -> Frame:
    def lower(node: FrameNode) -> FrameNode:
        if node.is_token:
            return FrameNode.token(node.text.lower())
        return FrameNode(node.kind, node.label, node.text, tuple(lower(c) for c in node.children))

    return Frame(lower(frame.root))
