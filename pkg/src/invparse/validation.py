"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .dataset import Dataset, Sample, extract_ontology
from .frame import Frame, parse_frame
from .inventory import Inventory, build_inventory


def check_frame(value) -> Frame:
    if isinstance(value, Frame):
        return value
    if isinstance(value, str):
        return parse_frame(value)
    raise TypeError(f"expected a Frame or frame string, got {type(value).__name__}")


def check_samples(X, y=None, domains=None) -> list[Sample]:
    """Normalize estimator input to a list of samples.

    ``X`` is either a sequence of :class:`Sample` (``y`` must then be None)
    or a sequence of utterance strings with frames ``y`` and ``domains``
    (a single domain name or one per utterance).
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("X must be a sequence of utterances or samples, not a single string")
    X = list(X)
    if X and all(isinstance(x, Sample) for x in X):
        if y is not None:
            raise ValueError("y must be None when X already holds samples")
        return X
    if any(isinstance(x, Sample) for x in X):
        raise TypeError("X mixes samples and other values")
    if y is None:
        raise ValueError("y (gold frames) is required when X holds utterances")
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} utterances but y has {len(y)} frames")
    names = check_domains(domains, len(X))
    return [Sample(d, _check_utterance(u), check_frame(f)) for d, u, f in zip(names, X, y)]


def check_utterances(X, domains=None) -> tuple[list[str], list[str]]:
    """Utterances and domain names for prediction; accepts samples too."""
    if isinstance(X, (str, bytes)):
        raise TypeError("X must be a sequence of utterances, not a single string")
    X = list(X)
    if X and all(isinstance(x, Sample) for x in X):
        return [s.utterance for s in X], [s.domain for s in X]
    return [_check_utterance(u) for u in X], check_domains(domains, len(X))


def check_domains(domains, n: int) -> list[str]:
    if domains is None:
        raise ValueError("domains is required: pass one domain name or one per utterance")
    if isinstance(domains, str):
        return [domains] * n
    names = list(domains)
    if len(names) != n:
        raise ValueError(f"got {len(names)} domain names for {n} utterances")
    return [str(d) for d in names]


def _check_utterance(u) -> str:
    if not isinstance(u, str):
        raise TypeError(f"utterances must be strings, got {type(u).__name__}")
    if "\t" in u or "\n" in u:
        raise ValueError(f"utterance contains a tab or newline: {u!r}")
    return u


def check_inventories(inventories: Mapping[str, Inventory] | Iterable[Inventory] | None,
                      samples: Sequence[Sample] = ()) -> dict[str, Inventory]:
    """Domain -> inventory; missing domains are built from the samples' labels."""
    out: dict[str, Inventory] = {}
    if inventories is not None:
        items = inventories.values() if isinstance(inventories, Mapping) else inventories
        for inv in items:
            if not isinstance(inv, Inventory):
                raise TypeError(f"expected Inventory, got {type(inv).__name__}")
            out[inv.domain] = inv
    data = Dataset(samples)
    for domain in data.domains():
        if domain not in out:
            out[domain] = build_inventory(domain, extract_ontology(data, domain))
    return out
