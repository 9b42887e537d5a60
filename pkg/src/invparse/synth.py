"""Synthetic multi-domain task-oriented corpora.

Utterances come from carrier templates whose holes (``{SL:NAME}``) are
filled with slot filler phrases; the frame records each filled hole as a
slot. Frames use the decoupled convention: carrier words stay out of the
frame, only slot contents are kept.

A domain's ``nesting_rate`` is the probability that a generated frame is
nested. A nested frame picks a template with a hole that can host a
sub-intent and fills that hole from one of the ``nested_templates``, e.g.
``SL:ALARM_NAME > IN:GET_TIME :: {SL:DATE_TIME}`` yields
``[SL:ALARM_NAME [IN:GET_TIME [SL:DATE_TIME 6pm ] ] ]``.
"""

from __future__ import annotations

import configparser
import os
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .dataset import Dataset, Sample
from .frame import CLOSE, OPEN, Frame, FrameNode, NodeKind, kind_of_label

HOLE = re.compile(r"^\{((?:IN|SL):[A-Za-z0-9_]+)\}$")
DEFAULT_SUITE_SIZE = 2000


class InvalidSpec(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source is not None or line is not None:
            where = f"{source or '<config>'}:{line if line is not None else '?'}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


@dataclass(frozen=True)
class Template:
    intent: str
    tokens: tuple[str, ...]
    host: str | None = None

    @property
    def holes(self) -> list[tuple[int, str]]:
        return [(i, m.group(1)) for i, t in enumerate(self.tokens) if (m := HOLE.match(t))]

    @classmethod
    def parse(cls, line: str, nested: bool = False) -> "Template":
        host = None
        if nested:
            if ">" not in line.split("::", 1)[0]:
                raise ValueError(f"nested template needs 'SL:HOST > IN:INTENT :: words': {line!r}")
            host, line = (part.strip() for part in line.split(">", 1))
        if "::" not in line:
            raise ValueError(f"template needs 'IN:INTENT :: words': {line!r}")
        intent, body = (part.strip() for part in line.split("::", 1))
        return cls(intent, tuple(body.split()), host)


@dataclass
class DomainSpec:
    name: str
    intents: list[str]
    slots: list[str]
    slot_fillers: dict[str, list[str]]
    carrier_templates: list[Template]
    nesting_rate: float = 0.0
    nested_templates: list[Template] = field(default_factory=list)

    @property
    def ontology_size(self) -> int:
        return len(self.intents) + len(self.slots)

    def validate(self) -> None:
        """Raise :class:`InvalidSpec` unless the spec can generate valid frames."""
        if not self.intents:
            raise InvalidSpec(f"domain {self.name!r} declares no intents")
        if not 0.0 <= self.nesting_rate <= 1.0:
            raise InvalidSpec(f"domain {self.name!r}: nesting_rate {self.nesting_rate} not in [0, 1]")
        for label in self.intents:
            if kind_of_label(label) is not NodeKind.INTENT:
                raise InvalidSpec(f"domain {self.name!r}: {label!r} is not an intent label")
        for label in self.slots:
            if kind_of_label(label) is not NodeKind.SLOT:
                raise InvalidSpec(f"domain {self.name!r}: {label!r} is not a slot label")
        if len(set(self.intents) | set(self.slots)) != self.ontology_size:
            raise InvalidSpec(f"domain {self.name!r} lists a label twice")
        if not self.carrier_templates:
            raise InvalidSpec(f"domain {self.name!r} has no templates")

        used = set()
        for tpl in self.carrier_templates + self.nested_templates:
            if tpl.intent not in self.intents:
                raise InvalidSpec(f"domain {self.name!r}: template intent {tpl.intent!r} is not declared")
            used.add(tpl.intent)
            if tpl.host is not None:
                if tpl.host not in self.slots:
                    raise InvalidSpec(f"domain {self.name!r}: host slot {tpl.host!r} is not declared")
                used.add(tpl.host)
            for tok in tpl.tokens:
                if tok.startswith("{") and not HOLE.match(tok):
                    raise InvalidSpec(f"domain {self.name!r}: malformed hole {tok!r}")
                if tok == CLOSE or tok.startswith(OPEN):
                    raise InvalidSpec(f"domain {self.name!r}: template word {tok!r} clashes with brackets")
            for _, slot in tpl.holes:
                if slot not in self.slots:
                    raise InvalidSpec(f"domain {self.name!r}: hole names undeclared slot {slot!r}")
                if not self.slot_fillers.get(slot):
                    raise InvalidSpec(f"domain {self.name!r}: slot {slot!r} has no fillers")
                used.add(slot)
            if tpl.host is not None and not tpl.holes:
                raise InvalidSpec(f"domain {self.name!r}: nested template for {tpl.intent} needs a slot hole")
        unused = (set(self.intents) | set(self.slots)) - used
        if unused:
            raise InvalidSpec(f"domain {self.name!r}: labels never generated: {sorted(unused)}")
        for slot, phrases in self.slot_fillers.items():
            for phrase in phrases:
                if not phrase.split() or any(w == CLOSE or w.startswith(OPEN) for w in phrase.split()):
                    raise InvalidSpec(f"domain {self.name!r}: bad filler {phrase!r} for {slot}")
        if self.nesting_rate > 0 and not self._nestable_templates():
            raise InvalidSpec(f"domain {self.name!r}: nesting_rate > 0 but no template has a host slot")

    def _nestable_templates(self) -> list[Template]:
        hosts = {t.host for t in self.nested_templates}
        return [t for t in self.carrier_templates if any(slot in hosts for _, slot in t.holes)]


def _fill(tpl: Template, spec: DomainSpec, rng: random.Random,
          nest_at: int | None = None) -> tuple[list[str], FrameNode]:
    words: list[str] = []
    slots: list[FrameNode] = []
    for i, tok in enumerate(tpl.tokens):
        m = HOLE.match(tok)
        if not m:
            words.append(tok)
            continue
        slot = m.group(1)
        if i == nest_at:
            sub = rng.choice([t for t in spec.nested_templates if t.host == slot])
            sub_words, sub_intent = _fill(sub, spec, rng)
            words += sub_words
            slots.append(FrameNode.slot(slot, sub_intent))
        else:
            phrase = rng.choice(spec.slot_fillers[slot]).split()
            words += phrase
            slots.append(FrameNode.slot(slot, *map(FrameNode.token, phrase)))
    return words, FrameNode.intent(tpl.intent, *slots)


def generate_domain(spec: DomainSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` samples for one domain; deterministic in ``(spec, seed)``."""
    if n < 0:
        raise InvalidSpec(f"sample count must be non-negative, got {n}")
    spec.validate()
    rng = random.Random(f"{seed}:{spec.name}")
    nestable = spec._nestable_templates()
    hosts = {t.host for t in spec.nested_templates}
    samples = []
    for _ in range(n):
        if spec.nesting_rate > 0 and rng.random() < spec.nesting_rate:
            tpl = rng.choice(nestable)
            nest_at = rng.choice([i for i, slot in tpl.holes if slot in hosts])
        else:
            tpl = rng.choice(spec.carrier_templates)
            nest_at = None
        words, root = _fill(tpl, spec, rng, nest_at)
        samples.append(Sample(spec.name, " ".join(words), Frame(root)))
    return Dataset(samples)


# -- config files -----------------------------------------------------------

def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map (section, key) -> 1-based line number, with key None for headers."""
    where: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            where[(section, None)] = lineno
        elif section is not None and "=" in line and not line[:1].isspace():
            where.setdefault((section, line.split("=", 1)[0].strip()), lineno)
    return where


def _split_list(value: str, sep: str | None = None) -> list[str]:
    if sep is None:
        return value.split()
    return [p.strip() for p in value.replace("\n", " ").split(sep) if p.strip()]


def parse_domain_specs(text: str, source: str = "<string>") -> list[DomainSpec]:
    """Parse the INI-style spec format (see README for the schema)."""
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidSpec(getattr(exc, "message", str(exc)).splitlines()[0],
                          getattr(exc, "lineno", None), source) from exc
    lines = _line_index(text)
    shared = {k: _split_list(v, "|") for k, v in parser["fillers"].items()} if parser.has_section("fillers") else {}

    specs = []
    for section in parser.sections():
        if not section.startswith("domain "):
            if section != "fillers" and not section.startswith("fillers "):
                raise InvalidSpec(f"unknown section [{section}]", lines.get((section, None)), source)
            continue
        name = section.split(None, 1)[1].strip()
        body = parser[section]

        def fail(msg: str, key: str | None = None, _section=section):
            line = lines.get((_section, key)) or lines.get((_section, None))
            raise InvalidSpec(msg, line, source)

        for required in ("intents", "slots", "templates"):
            if required not in body:
                fail(f"domain {name!r} is missing '{required}'")
        try:
            rate = float(body.get("nesting_rate", "0"))
        except ValueError:
            fail(f"nesting_rate {body['nesting_rate']!r} is not a number", "nesting_rate")

        def templates(key: str, nested: bool) -> list[Template]:
            out = []
            for line in body.get(key, "").splitlines():
                if line.strip():
                    try:
                        out.append(Template.parse(line.strip(), nested))
                    except ValueError as exc:
                        fail(str(exc), key)
            return out

        fillers: dict[str, list[str]] = {}
        fsec = f"fillers {name}"
        if parser.has_section(fsec):
            for slot, value in parser[fsec].items():
                if value.strip().startswith("@"):
                    ref = value.strip()[1:]
                    if ref not in shared:
                        line = lines.get((fsec, slot))
                        raise InvalidSpec(f"unknown shared filler list @{ref}", line, source)
                    fillers[slot] = list(shared[ref])
                else:
                    fillers[slot] = _split_list(value, "|")

        spec = DomainSpec(
            name=name,
            intents=_split_list(body["intents"]),
            slots=_split_list(body["slots"]),
            slot_fillers=fillers,
            carrier_templates=templates("templates", False),
            nesting_rate=rate,
            nested_templates=templates("nested_templates", True),
        )
        try:
            spec.validate()
        except InvalidSpec as exc:
            fail(str(exc))
        specs.append(spec)
    if not specs:
        raise InvalidSpec("no [domain ...] sections found", None, source)
    return specs


def load_domain_specs(path: str | os.PathLike) -> list[DomainSpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_domain_specs(fh.read(), source=str(path))


def default_specs() -> list[DomainSpec]:
    text = resources.files("invparse").joinpath("data/default_suite.ini").read_text(encoding="utf-8")
    return parse_domain_specs(text, source="default_suite.ini")


def generate_suite(specs: Sequence[DomainSpec], n_per_domain: int, seed: int) -> Dataset:
    out = Dataset()
    for spec in specs:
        out = out + generate_domain(spec, n_per_domain, seed)
    return out


def default_benchmark_suite(seed: int = 0, n_per_domain: int = DEFAULT_SUITE_SIZE) -> Dataset:
    """The bundled four-domain corpus, ``n_per_domain`` samples each."""
    return generate_suite(default_specs(), n_per_domain, seed)
