"""Low-resource transfer benchmarks.

``spis_subsample`` draws a target subset with per-label coverage: after a
seeded shuffle, a sample is kept while any of its intent/slot labels is
still below the cap ``k``. ``make_scenarios`` builds one leave-one-out
scenario per domain (all other domains form the source).

The shuffle is a Fisher-Yates pass driven by :class:`random.Random`
(MT19937) seeded with ``SpisConfig.seed``.
"""

from __future__ import annotations

import os
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .dataset import Dataset, Sample, load_dataset, write_dataset
from .frame import ontology_tokens


class SingleDomainDataset(ValueError):
    pass


@dataclass(frozen=True)
class SpisConfig:
    k: int
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"SPIS k must be a positive integer, got {self.k!r}")


def seeded_shuffle(items: Sequence, seed: int) -> list:
    out = list(items)
    random.Random(seed).shuffle(out)
    return out


def spis_scan(samples: Iterable[Sample], k: int) -> list[Sample]:
    """Greedy single pass in the given order (no shuffling)."""
    counts: Counter[str] = Counter()
    kept = []
    for sample in samples:
        labels = ontology_tokens(sample.frame)
        if any(counts[t] < k for t in labels):
            kept.append(sample)
            counts.update(labels)
    return kept


def spis_subsample(dataset: Dataset, config: SpisConfig) -> Dataset:
    """Subset in which every label with ``n`` occurrences keeps at least
    ``min(k, n)`` of them. Output follows the shuffled scan order.
    """
    order = seeded_shuffle(dataset, config.seed) if config.shuffle else list(dataset)
    return Dataset(spis_scan(order, config.k))


@dataclass
class Scenario:
    target_domain: str
    source: Dataset
    target_subsets: dict[int, Dataset] = field(default_factory=dict)
    test: Dataset = field(default_factory=Dataset)
    seed: int = 0

    def cells(self) -> list[tuple[str, int]]:
        return [(self.target_domain, k) for k in sorted(self.target_subsets)]


def split_holdout(samples: Dataset, test_size: int, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split into (pool, test) with ``test_size`` test samples.

    The pool keeps the original corpus order so SPIS shuffling stays
    relative to it.
    """
    if test_size <= 0:
        return samples, Dataset()
    if test_size >= len(samples):
        raise ValueError(f"test_size={test_size} leaves no target samples to subsample")
    order = seeded_shuffle(range(len(samples)), seed)
    held = set(order[:test_size])
    pool = Dataset(s for i, s in enumerate(samples) if i not in held)
    test = Dataset(samples[i] for i in sorted(held))
    return pool, test


def make_scenarios(dataset: Dataset, ks: Sequence[int], seed: int = 0,
                   test_size: int = 0) -> list[Scenario]:
    """One scenario per domain, in order of first appearance.

    With ``test_size > 0``, that many target samples are held out before
    subsampling and returned as ``Scenario.test``.
    """
    domains = dataset.domains()
    if len(domains) < 2:
        raise SingleDomainDataset(f"leave-one-out needs at least 2 domains, got {domains}")
    scenarios = []
    for domain in domains:
        pool, test = split_holdout(dataset.filter_domain(domain), test_size, seed)
        subsets = {k: spis_subsample(pool, SpisConfig(k, seed)) for k in sorted(set(ks))}
        scenarios.append(Scenario(domain, dataset.exclude_domain(domain), subsets, test, seed))
    return scenarios


def summary_rows(scenarios: Sequence[Scenario]) -> tuple[list[str], list[list]]:
    ks = sorted({k for sc in scenarios for k in sc.target_subsets})
    header = ["domain", "source", *[f"{k}spis" for k in ks]]
    rows = []
    for sc in scenarios:
        rows.append([sc.target_domain, len(sc.source),
                     *[len(sc.target_subsets[k]) if k in sc.target_subsets else "" for k in ks]])
    return header, rows


def format_summary(scenarios: Sequence[Scenario]) -> str:
    """Fixed-width table of source size and target subset sizes."""
    header, rows = summary_rows(scenarios)
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for r in cells:
        first = r[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join([first, *rest]).rstrip())
    return "\n".join(lines) + "\n"


def write_manifest(scenarios: Sequence[Scenario], directory: str | os.PathLike) -> Path:
    """Write ``<dir>/<domain>/source.tsv``, ``target_{k}spis.tsv`` (plus
    ``test.tsv`` when a test split was held out) and a ``summary.tsv`` /
    ``summary.txt`` pair. Returns the directory.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        sub = root / sc.target_domain
        sub.mkdir(exist_ok=True)
        write_dataset(sc.source, sub / "source.tsv")
        if len(sc.test):
            write_dataset(sc.test, sub / "test.tsv")
        for k, subset in sorted(sc.target_subsets.items()):
            write_dataset(subset, sub / f"target_{k}spis.tsv")
    header, rows = summary_rows(scenarios)
    with open(root / "summary.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")
    (root / "summary.txt").write_text(format_summary(scenarios), encoding="utf-8")
    seeds = sorted({sc.seed for sc in scenarios})
    (root / "manifest.txt").write_text(
        "shuffle\trandom.Random(seed).shuffle (MT19937 Fisher-Yates)\n"
        f"seeds\t{' '.join(map(str, seeds))}\n"
        f"scenarios\t{' '.join(sc.target_domain for sc in scenarios)}\n",
        encoding="utf-8")
    return root


def load_manifest(directory: str | os.PathLike) -> list[Scenario]:
    """Read scenarios back from a directory written by :func:`write_manifest`."""
    root = Path(directory)
    if not (root / "summary.tsv").is_file():
        raise FileNotFoundError(f"no benchmark manifest in {root} (summary.tsv missing)")
    seed = 0
    manifest = root / "manifest.txt"
    if manifest.is_file():
        for line in manifest.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("\t")
            if key == "seeds" and value.split():
                seed = int(value.split()[0])
    with open(root / "summary.tsv", encoding="utf-8") as fh:
        domains = [line.split("\t", 1)[0] for line in fh.read().splitlines()[1:] if line]
    scenarios = []
    for domain in domains:
        sub = root / domain
        subsets = {}
        for path in sub.glob("target_*spis.tsv"):
            subsets[int(path.name[len("target_"):-len("spis.tsv")])] = load_dataset(path)
        test = load_dataset(sub / "test.tsv") if (sub / "test.tsv").is_file() else Dataset()
        scenarios.append(Scenario(domain, load_dataset(sub / "source.tsv"), dict(sorted(subsets.items())), test, seed))
    return scenarios
