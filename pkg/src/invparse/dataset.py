"""(domain, utterance, frame) corpora stored as tab-separated text.

One sample per line: ``domain<TAB>utterance<TAB>frame``. Files are UTF-8
with LF line endings.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .frame import Frame, FrameParseError, parse_frame, serialize_frame, utterance_tokens
from .inventory import OntologyLabel

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class BadFieldCount(DatasetError):
    def __init__(self, line: int, count: int):
        super().__init__(f"line {line}: expected 3 tab-separated fields, found {count}")
        self.line = line


class FrameParse(DatasetError):
    def __init__(self, line: int, cause: Exception):
        super().__init__(f"line {line}: {type(cause).__name__}: {cause}")
        self.line = line
        self.cause = cause


@dataclass(frozen=True)
class Sample:
    domain: str
    utterance: str
    frame: Frame

    def to_line(self) -> str:
        return f"{self.domain}\t{self.utterance}\t{serialize_frame(self.frame)}"

    def is_grounded(self) -> bool:
        """Whether every frame token occurs in the utterance (case-insensitive)."""
        words = {w.lower() for w in self.utterance.split()}
        return all(t.lower() in words for t in utterance_tokens(self.frame))


class Dataset(Sequence[Sample]):
    """An ordered, immutable collection of samples."""

    def __init__(self, samples: Iterable[Sample] = ()):
        self._samples = tuple(samples)

    def __len__(self) -> int:
        return len(self._samples)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Dataset(self._samples[item])
        return self._samples[item]

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dataset) and self._samples == other._samples

    def __hash__(self):
        return hash(self._samples)

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(self._samples + tuple(other))

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, domains={self.domains()})"

    @property
    def samples(self) -> tuple[Sample, ...]:
        return self._samples

    def domains(self) -> list[str]:
        """Distinct domains in order of first appearance."""
        return list(dict.fromkeys(s.domain for s in self._samples))

    def filter_domain(self, domain: str) -> "Dataset":
        return Dataset(s for s in self._samples if s.domain == domain)

    def exclude_domain(self, domain: str) -> "Dataset":
        return Dataset(s for s in self._samples if s.domain != domain)

    @property
    def utterances(self) -> list[str]:
        return [s.utterance for s in self._samples]

    @property
    def frames(self) -> list[Frame]:
        return [s.frame for s in self._samples]


def parse_line(line: str, lineno: int = 0) -> Sample:
    fields = line.split("\t")
    if len(fields) != 3:
        raise BadFieldCount(lineno, len(fields))
    domain, utterance, frame_text = fields
    try:
        frame = parse_frame(frame_text)
    except FrameParseError as exc:
        raise FrameParse(lineno, exc) from exc
    return Sample(domain, utterance, frame)


def load_dataset(path: str | os.PathLike) -> Dataset:
    """Read a TSV corpus.

    Blank lines are skipped. Samples whose frame tokens are missing from the
    utterance are kept but logged, since some corpora paraphrase slot values.
    """
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            sample = parse_line(line, lineno)
            if not sample.is_grounded():
                logger.warning("%s:%d: frame tokens not all present in utterance", path, lineno)
            samples.append(sample)
    return Dataset(samples)


def write_dataset(dataset: Iterable[Sample], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sample in dataset:
            if "\t" in sample.utterance or "\n" in sample.utterance:
                raise DatasetError(f"utterance contains a tab or newline: {sample.utterance!r}")
            fh.write(sample.to_line() + "\n")


def extract_ontology(dataset: Iterable[Sample], domain: str) -> set[OntologyLabel]:
    """All intent/slot labels used by ``domain``'s frames."""
    labels: set[str] = set()
    for sample in dataset:
        if sample.domain == domain:
            labels.update(node.label for _, node in sample.frame.walk() if not node.is_token)
    return {OntologyLabel.parse(raw) for raw in labels}
