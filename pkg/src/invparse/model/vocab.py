"""Word-level vocabulary shared by encoder, decoder and output layer."""

from __future__ import annotations

from typing import Iterable, Sequence

PAD, BOS, EOS, UNK, SEP = "<pad>", "<s>", "</s>", "<unk>", "<sep>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP)
STRUCTURE = ("[", "]", "|", "intent", "slot")
DEFAULT_INDEX_RESERVE = 64


class Vocabulary:
    """Dense token ids.

    Layout: special tokens, structural tokens, index tokens ``1..index_reserve``,
    then corpus words in sorted order, then (copy-generate mode only) ontology
    label tokens such as ``[IN:CREATE_ALARM`` appended as they are first seen.
    Everything before the label block is stable across :meth:`extend`.
    """

    def __init__(self, words: Iterable[str] = (), index_reserve: int = DEFAULT_INDEX_RESERVE,
                 labels: Iterable[str] = ()):
        self.index_reserve = int(index_reserve)
        base = list(SPECIALS) + list(STRUCTURE) + [str(i) for i in range(1, self.index_reserve + 1)]
        self._tokens: list[str] = []
        self._ids: dict[str, int] = {}
        for tok in base:
            self._add(tok)
        self.n_reserved = len(self._tokens)
        for w in sorted({w.lower() for w in words}):
            self._add(w)
        self.n_words = len(self._tokens)
        self.labels: list[str] = []
        self.extend(labels)

    def _add(self, token: str) -> bool:
        if token in self._ids:
            return False
        self._ids[token] = len(self._tokens)
        self._tokens.append(token)
        return True

    def extend(self, labels: Iterable[str]) -> list[str]:
        """Append ontology label tokens (``[`` + raw label); returns those added."""
        added = []
        for raw in sorted(set(labels)):
            tok = "[" + raw
            if self._add(tok):
                self.labels.append(raw)
                added.append(tok)
        return added

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def bos_id(self) -> int:
        return self._ids[BOS]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    @property
    def structure_ids(self) -> frozenset[int]:
        """Inventory punctuation, kind words and index tokens."""
        return frozenset(range(len(SPECIALS), len(SPECIALS) + len(STRUCTURE) + self.index_reserve))

    @property
    def special_ids(self) -> frozenset[int]:
        """Padding, begin, end, unknown and separator ids."""
        return frozenset(self._ids[t] for t in SPECIALS)

    def to_dict(self) -> dict:
        return {
            "index_reserve": self.index_reserve,
            "tokens": list(self._tokens),
            "n_reserved": self.n_reserved,
            "n_words": self.n_words,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.index_reserve = data["index_reserve"]
        vocab._tokens = list(data["tokens"])
        vocab._ids = {t: i for i, t in enumerate(vocab._tokens)}
        vocab.n_reserved = data["n_reserved"]
        vocab.n_words = data["n_words"]
        vocab.labels = list(data["labels"])
        return vocab
