"""Exact match, seed aggregation, domain profiles and frame diffs."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .dataset import Dataset, extract_ontology
from .frame import Frame, frame_tokens, is_nested


class LengthMismatch(ValueError):
    pass


class UnknownDomain(KeyError):
    pass


def comparison_key(frame) -> str | None:
    """Lowercased, whitespace-normalized serialization; None for failures."""
    if not isinstance(frame, Frame):
        return None
    return " ".join(t.lower() for t in frame_tokens(frame))


class SampleResult(NamedTuple):
    sample_id: int
    prediction: object  # Frame or DecodeFailure
    gold: Frame
    match: bool


@dataclass
class EvalReport:
    per_sample: list[SampleResult]

    @property
    def n(self) -> int:
        return len(self.per_sample)

    @property
    def matches(self) -> int:
        return sum(r.match for r in self.per_sample)

    @property
    def em(self) -> float:
        return self.matches / self.n if self.n else 0.0

    @property
    def errors(self) -> list[SampleResult]:
        return [r for r in self.per_sample if not r.match]

    def records(self) -> Iterable[str]:
        for r in self.per_sample:
            yield json.dumps({"id": r.sample_id, "match": r.match,
                              "prediction": str(r.prediction), "gold": str(r.gold),
                              "failure": not isinstance(r.prediction, Frame)})

    def __str__(self) -> str:
        return f"EM {100 * self.em:.2f} ({self.matches}/{self.n})"


def exact_match(predictions: Sequence, golds: Sequence[Frame]) -> EvalReport:
    """Compare predicted and gold frames token by token, ignoring case.

    Non-:class:`Frame` predictions (decode failures) never match.
    """
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} gold frames")
    results = []
    for i, (pred, gold) in enumerate(zip(predictions, golds)):
        key = comparison_key(pred)
        results.append(SampleResult(i, pred, gold, key is not None and key == comparison_key(gold)))
    return EvalReport(results)


# -- aggregation --------------------------------------------------------------

class RunRecord(NamedTuple):
    domain: str
    k: int
    mode: str
    seed: int
    report: EvalReport | float


@dataclass
class Cell:
    mean: float
    std: float
    runs: int
    values: tuple[float, ...] = ()


@dataclass
class AggregateReport:
    cells: dict[tuple[str, int, str], Cell] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def domains(self) -> list[str]:
        return list(dict.fromkeys(d for d, _, _ in self.cells))

    @property
    def ks(self) -> list[int]:
        return sorted({k for _, k, _ in self.cells})

    @property
    def modes(self) -> list[str]:
        return list(dict.fromkeys(m for _, _, m in self.cells))

    def mean_over_domains(self, mode: str, k: int) -> float:
        vals = [c.mean for (d, kk, m), c in self.cells.items() if m == mode and kk == k]
        return sum(vals) / len(vals) if vals else math.nan

    def records(self) -> Iterable[str]:
        for (domain, k, mode), cell in self.cells.items():
            yield json.dumps({"domain": domain, "k": k, "mode": mode, "mean_em": cell.mean,
                              "std_em": cell.std, "runs": cell.runs})

    def table(self) -> str:
        """Per-domain rows of ``mean (std)`` EM (in points), one column per k,
        followed by an across-domain average block."""
        if not self.cells:
            return "(no results)\n"
        ks = self.ks
        head = ["", *[f"{k} SPIS" for k in ks]]
        rows: list[list[str]] = []
        for domain in self.domains:
            rows.append([f"Domain: {domain}"])
            for mode in self.modes:
                row = [mode]
                for k in ks:
                    cell = self.cells.get((domain, k, mode))
                    row.append("" if cell is None else f"{100 * cell.mean:.2f} ({100 * cell.std:.2f})")
                rows.append(row)
        rows.append(["Average over domains"])
        for mode in self.modes:
            rows.append([mode, *[f"{100 * self.mean_over_domains(mode, k):.2f}" for k in ks]])
        return _render(head, rows)


def _render(head: list[str], rows: list[list[str]]) -> str:
    width = len(head)
    full = [r for r in [head, *rows] if len(r) == width]
    widths = [max(len(r[i]) for r in full) for i in range(width)]
    out = []
    for r in [head, *rows]:
        if len(r) != width:
            out.append(r[0])
            continue
        out.append("  ".join([r[0].ljust(widths[0]), *[c.rjust(w) for c, w in zip(r[1:], widths[1:])]]).rstrip())
    return "\n".join(out) + "\n"


def aggregate(reports: Iterable[tuple]) -> AggregateReport:
    """Group runs by (domain, k, mode); mean and population std of EM."""
    groups: dict[tuple[str, int, str], list[float]] = defaultdict(list)
    for domain, k, mode, _seed, report in reports:
        em = report.em if isinstance(report, EvalReport) else float(report)
        groups[(domain, k, mode)].append(em)
    cells = {}
    for key, values in groups.items():
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        cells[key] = Cell(mean, math.sqrt(var), len(values), tuple(values))
    return AggregateReport(cells)


# -- domain characteristics ---------------------------------------------------

@dataclass(frozen=True)
class DomainProfile:
    domain: str
    compositionality: float
    ontology_size: int
    n: int = 0


def domain_profile(dataset: Dataset, domain: str) -> DomainProfile:
    samples = dataset.filter_domain(domain)
    if not len(samples):
        raise UnknownDomain(domain)
    nested = sum(is_nested(s.frame) for s in samples)
    return DomainProfile(domain, nested / len(samples), len(extract_ontology(samples, domain)), len(samples))


def characteristics_table(profiles: Sequence[DomainProfile], em: dict[str, dict[str, float]] | None = None) -> str:
    """EM against % compositionality and # ontology labels, one row per domain.

    ``em`` maps mode -> domain -> EM fraction.
    """
    em = em or {}
    modes = list(em)
    head = ["domain", "% compositionality", "# ontology labels", *[f"EM {m}" for m in modes]]
    rows = []
    for p in profiles:
        row = [p.domain, f"{100 * p.compositionality:.1f}", str(p.ontology_size)]
        for m in modes:
            v = em[m].get(p.domain)
            row.append("" if v is None else f"{100 * v:.2f}")
        rows.append(row)
    if profiles:
        avg = ["average", f"{100 * sum(p.compositionality for p in profiles) / len(profiles):.1f}",
               f"{sum(p.ontology_size for p in profiles) / len(profiles):.1f}"]
        for m in modes:
            vals = [em[m][p.domain] for p in profiles if p.domain in em[m]]
            avg.append(f"{100 * sum(vals) / len(vals):.2f}" if vals else "")
        rows.append(avg)
    return _render(head, rows)


# -- edit scripts ---------------------------------------------------------------

class Op(NamedTuple):
    op: str  # "keep" | "insert" | "delete"
    token: str


@dataclass(frozen=True)
class EditScript:
    """Token edits turning the prediction into the gold frame.

    Only insertions and deletions are used, so ``distance`` is the
    insert/delete edit distance (a substitution costs 2).
    """

    ops: tuple[Op, ...]

    @property
    def distance(self) -> int:
        return sum(o.op != "keep" for o in self.ops)

    def apply(self, tokens: Sequence[str]) -> list[str]:
        out, i = [], 0
        for o in self.ops:
            if o.op == "keep":
                if tokens[i] != o.token:
                    raise ValueError(f"script expects {o.token!r} at {i}, found {tokens[i]!r}")
                out.append(o.token)
                i += 1
            elif o.op == "delete":
                if tokens[i] != o.token:
                    raise ValueError(f"script deletes {o.token!r} at {i}, found {tokens[i]!r}")
                i += 1
            else:
                out.append(o.token)
        if i != len(tokens):
            raise ValueError("script does not consume the whole prediction")
        return out

    @property
    def deleted(self) -> list[str]:
        return [o.token for o in self.ops if o.op == "delete"]

    @property
    def inserted(self) -> list[str]:
        return [o.token for o in self.ops if o.op == "insert"]

    def render(self, inline: bool = True) -> str:
        """``+tok`` for additions, ``-tok`` for deletions.

        Inline mode gives one line; otherwise one token per line with a
        ``+``/``-``/space prefix.
        """
        marks = {"keep": "", "insert": "+", "delete": "-"}
        if inline:
            return " ".join(marks[o.op] + o.token for o in self.ops)
        return "\n".join(f"{marks[o.op] or ' '} {o.token}" for o in self.ops)


def _tokens(x) -> list[str]:
    if isinstance(x, Frame):
        return frame_tokens(x)
    if isinstance(x, str):
        return x.split()
    if hasattr(x, "tokens"):
        return list(x.tokens)
    return list(x)


def frame_diff(prediction, gold) -> EditScript:
    """Minimal insert/delete script over whole frame tokens.

    Accepts frames, strings, token lists, or decode failures (their raw
    tokens). Ties prefer deleting before inserting, so removed prediction
    tokens are listed ahead of their replacements.
    """
    a, b = _tokens(prediction), _tokens(gold)
    n, m = len(a), len(b)
    # dist[i][j]: edits to turn a[i:] into b[j:]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if i == n:
                dist[i][j] = m - j
            elif j == m:
                dist[i][j] = n - i
            elif a[i] == b[j]:
                dist[i][j] = dist[i + 1][j + 1]
            else:
                dist[i][j] = 1 + min(dist[i + 1][j], dist[i][j + 1])
    ops = []
    i = j = 0
    while i < n or j < m:
        if i < n and j < m and a[i] == b[j] and dist[i][j] == dist[i + 1][j + 1]:
            ops.append(Op("keep", a[i]))
            i += 1
            j += 1
        elif i < n and dist[i][j] == 1 + dist[i + 1][j]:
            ops.append(Op("delete", a[i]))
            i += 1
        else:
            ops.append(Op("insert", b[j]))
            j += 1
    return EditScript(tuple(ops))
