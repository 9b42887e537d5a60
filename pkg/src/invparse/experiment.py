"""Config-driven experiment pipelines: two-stage transfer runs and ablations.

An :class:`ExperimentConfig` is a flat JSON object. Every field has a
default, so ``{}`` is a valid config; the effective config is written to
``config.json`` in the output directory for provenance.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .benchmark import Scenario, load_manifest, make_scenarios, write_manifest
from .dataset import Dataset, Sample, extract_ontology, load_dataset, write_dataset
from .evaluate import (AggregateReport, DomainProfile, EvalReport, aggregate, characteristics_table,
                       domain_profile, exact_match)
from .frame import Frame
from .inventory import Inventory, InventoryVariant, build_inventory
from .model.core import ModelConfig, ParserMode, TrainConfig, TrainedModel, collect_words, predict_many, train
from .synth import default_benchmark_suite, generate_suite, load_domain_specs

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """All knobs of a run. Defaults reproduce the bundled desk-scale setup.

    corpus: dataset TSV; empty means generate the bundled suite
    spec_file: domain spec file used instead of the bundled suite when
        ``corpus`` is empty
    n_per_domain, corpus_seed: size and seed of the generated corpus
    manifest: benchmark directory from ``invparse benchmark``; when empty the
        scenarios are built in memory from the corpus
    targets: target domains to evaluate (empty means all)
    ks: samples-per-intent-and-slot values
    spis_seed: seed of the SPIS shuffle and of the held-out test split
    test_size: held-out target samples per scenario
    modes: parser formulations to compare
    inventory_variant: linearization used by inventory mode
    seeds: one full run per seed; spread is reported as population std
    source_samples: cap on source-stage samples (random subset per seed)
    model: ModelConfig overrides (mode, variant and seed are set per run)
    source_train, target_train: TrainConfig overrides per stage
    ablate_domain: target domain of the ablation (empty means the first target)
    ablate_variants: inventory variants compared by the ablation
    """

    corpus: str = ""
    spec_file: str = ""
    n_per_domain: int = 2000
    corpus_seed: int = 0
    manifest: str = ""
    targets: list[str] = field(default_factory=list)
    ks: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    spis_seed: int = 0
    test_size: int = 200
    modes: list[str] = field(default_factory=lambda: ["inventory", "copygen"])
    inventory_variant: str = "index_type_span"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    source_samples: int = 800
    model: dict = field(default_factory=dict)
    source_train: dict = field(default_factory=lambda: {"epochs": 15, "learning_rate": 3e-3, "batch_size": 16})
    target_train: dict = field(default_factory=lambda: {"epochs": 30, "learning_rate": 1e-3, "batch_size": 4})
    ablate_domain: str = ""
    ablate_variants: list[str] = field(default_factory=lambda: ["index", "index_type", "index_type_span"])

    def __post_init__(self):
        try:
            self.modes = [ParserMode.parse(m).value for m in self.modes]
            self.inventory_variant = InventoryVariant.parse(self.inventory_variant).value
            self.ablate_variants = [InventoryVariant.parse(v).value for v in self.ablate_variants]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.ks or any(int(k) < 1 for k in self.ks):
            raise ConfigError(f"ks must be positive integers, got {self.ks}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.source_samples < 0 or self.test_size < 0 or self.n_per_domain < 0:
            raise ConfigError("source_samples, test_size and n_per_domain must be non-negative")
        self.ks = sorted({int(k) for k in self.ks})
        for name, fields in (("model", ModelConfig), ("source_train", TrainConfig), ("target_train", TrainConfig)):
            allowed = {f.name for f in dataclasses.fields(fields)}
            unknown = set(getattr(self, name)) - allowed
            if unknown:
                raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
        try:
            self.model_config("inventory", self.inventory_variant, 0)
            self.train_config("source", 0)
            self.train_config("target", 0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_config(self, mode: str, variant: str, seed: int) -> ModelConfig:
        return ModelConfig(**{**self.model, "mode": mode, "inventory_variant": variant, "seed": seed})

    def train_config(self, stage: str, seed: int) -> TrainConfig:
        overrides = self.source_train if stage == "source" else self.target_train
        return TrainConfig(**{**overrides, "seed": seed})


# -- data -----------------------------------------------------------------------

def load_corpus(config: ExperimentConfig) -> Dataset:
    if config.corpus:
        return load_dataset(config.corpus)
    if config.spec_file:
        return generate_suite(load_domain_specs(config.spec_file), config.n_per_domain, config.corpus_seed)
    return default_benchmark_suite(config.corpus_seed, config.n_per_domain)


def domain_inventories(dataset: Dataset) -> dict[str, Inventory]:
    return {d: build_inventory(d, extract_ontology(dataset, d)) for d in dataset.domains()}


def load_scenarios(config: ExperimentConfig, corpus: Dataset | None = None) -> list[Scenario]:
    if config.manifest:
        scenarios = load_manifest(config.manifest)
    else:
        corpus = load_corpus(config) if corpus is None else corpus
        scenarios = make_scenarios(corpus, config.ks, seed=config.spis_seed, test_size=config.test_size)
    if config.targets:
        known = {sc.target_domain for sc in scenarios}
        missing = [t for t in config.targets if t not in known]
        if missing:
            raise ConfigError(f"unknown target domains {missing}; corpus has {sorted(known)}")
        scenarios = [sc for sc in scenarios if sc.target_domain in config.targets]
    for sc in scenarios:
        if not len(sc.test):
            raise ConfigError(f"scenario {sc.target_domain!r} has no held-out test split (set test_size > 0)")
        absent = [k for k in config.ks if k not in sc.target_subsets]
        if absent:
            raise ConfigError(f"scenario {sc.target_domain!r} lacks subsets for k={absent}")
    return scenarios


def source_subset(source: Dataset, cap: int, seed: int) -> list[Sample]:
    samples = list(source)
    if cap and cap < len(samples):
        random.Random(seed).shuffle(samples)
        samples = samples[:cap]
    return samples


# -- runs -----------------------------------------------------------------------

@dataclass
class RunResult:
    domain: str
    k: int
    mode: str
    seed: int
    variant: str
    report: EvalReport
    target_size: int
    added_tokens: list[str]
    shapes_changed: bool
    seconds: float

    def record(self) -> dict:
        return {"domain": self.domain, "k": self.k, "mode": self.mode, "seed": self.seed,
                "variant": self.variant, "em": self.report.em, "n_test": self.report.n,
                "target_samples": self.target_size, "added_vocabulary": len(self.added_tokens),
                "parameter_shapes_changed": self.shapes_changed, "seconds": round(self.seconds, 2)}


def two_stage(scenario: Scenario, inventories: dict[str, Inventory], words: set[str], config: ExperimentConfig,
              mode: str, variant: str, seed: int, ks: Sequence[int]) -> list[RunResult]:
    """Source-stage fit once, then one target-stage fit and evaluation per k."""
    start = time.time()
    src = source_subset(scenario.source, config.source_samples, seed)
    mc = config.model_config(mode, variant, seed)
    base = train(src, inventories, mc, config.train_config("source", seed), words=words, split="source")
    source_seconds = time.time() - start
    test = list(scenario.test)
    target_inv = inventories[scenario.target_domain]
    results = []
    for k in ks:
        t0 = time.time()
        subset = list(scenario.target_subsets[k])
        model = train(subset, inventories, mc, config.train_config("target", seed), init=base, split="target")
        added = model.vocabulary.tokens[len(base.vocabulary):]
        shapes_changed = model.parameter_shapes() != base.parameter_shapes()
        if mode == ParserMode.INVENTORY.value:
            if added or shapes_changed:
                raise AssertionError("inventory-mode target stage changed the vocabulary or parameter shapes")
            logger.info("%s k=%d seed=%d: inventory mode, vocabulary unchanged (%d entries)",
                        scenario.target_domain, k, seed, len(model.vocabulary))
        else:
            logger.info("%s k=%d seed=%d: copygen mode added %d label rows",
                        scenario.target_domain, k, seed, len(added))
        preds = predict_many(model, [s.utterance for s in test], [target_inv] * len(test))
        report = exact_match(preds, [s.frame for s in test])
        results.append(RunResult(scenario.target_domain, k, mode, seed, variant, report, len(subset), added,
                                 shapes_changed, source_seconds + time.time() - t0))
        logger.info("%s k=%d %s seed=%d: %s", scenario.target_domain, k, mode, seed, report)
    return results


def _write_predictions(result: RunResult, test: Sequence[Sample], directory: Path) -> None:
    lines = []
    for sample, r in zip(test, result.report.per_sample):
        lines.append(f"{sample.domain}\t{sample.utterance}\t{r.prediction}\n")
    name = f"{result.domain}_k{result.k}_{result.mode}_{result.variant}_s{result.seed}.tsv"
    (directory / name).write_text("".join(lines), encoding="utf-8")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class ExperimentOutput:
    results: list[RunResult]
    aggregate: AggregateReport
    table: str
    characteristics: str = ""


def run_experiment(config: ExperimentConfig, out: str | os.PathLike,
                   progress: Callable[[RunResult], None] | None = None) -> ExperimentOutput:
    """Every (scenario, mode, seed) two-stage run, evaluated at every k.

    Writes ``config.json``, ``results.jsonl``, ``aggregate.jsonl``,
    ``table.txt``, ``characteristics.txt`` and per-run predictions under
    ``out``.
    """
    out = Path(out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config.to_dict())
    corpus = None if config.manifest else load_corpus(config)
    scenarios = load_scenarios(config, corpus)
    inventories = domain_inventories(_all_samples(scenarios))
    words = collect_words(_all_samples(scenarios), inventories.values())
    for sc in scenarios:
        write_dataset(sc.test, out / f"gold_{sc.target_domain}.tsv")

    results: list[RunResult] = []
    for sc in scenarios:
        for seed in config.seeds:
            for mode in config.modes:
                for r in two_stage(sc, inventories, words, config, mode, config.inventory_variant, seed, config.ks):
                    results.append(r)
                    _write_predictions(r, list(sc.test), out / "predictions")
                    if progress:
                        progress(r)
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.record()) + "\n")
    agg = aggregate((r.domain, r.k, r.mode, r.seed, r.report) for r in results)
    (out / "aggregate.jsonl").write_text("".join(line + "\n" for line in agg.records()), encoding="utf-8")
    table = agg.table()
    (out / "table.txt").write_text(table, encoding="utf-8")
    chars = characteristics_table(profiles_for(_all_samples(scenarios), [sc.target_domain for sc in scenarios]),
                                  em_by_domain(agg, min(config.ks)))
    (out / "characteristics.txt").write_text(chars, encoding="utf-8")
    return ExperimentOutput(results, agg, table, chars)


def _all_samples(scenarios: Sequence[Scenario]) -> Dataset:
    """Every distinct sample a set of leave-one-out scenarios covers."""
    seen: dict[Sample, None] = {}
    for sc in scenarios:
        for s in sc.source:
            seen.setdefault(s)
        for subset in sc.target_subsets.values():
            for s in subset:
                seen.setdefault(s)
        for s in sc.test:
            seen.setdefault(s)
    return Dataset(seen)


def profiles_for(dataset: Dataset, domains: Sequence[str]) -> list[DomainProfile]:
    return [domain_profile(dataset, d) for d in domains]


def em_by_domain(agg: AggregateReport, k: int) -> dict[str, dict[str, float]]:
    """mode -> domain -> mean EM at ``k`` (input of the characteristics table)."""
    out: dict[str, dict[str, float]] = {}
    for (domain, kk, mode), cell in agg.cells.items():
        if kk == k:
            out.setdefault(mode, {})[domain] = cell.mean
    return out


# -- ablation -------------------------------------------------------------------

@dataclass
class AblationOutput:
    results: list[RunResult]
    cells: dict[tuple[str, int], tuple[float, float]]  # (variant, k) -> (mean, std)
    table: str


def format_ablation(cells: dict[tuple[str, int], tuple[float, float]], variants: Sequence[str],
                    ks: Sequence[int]) -> str:
    """One row per inventory variant, ``mean (std)`` EM in points per k."""
    head = ["variant", *[f"{k} SPIS" for k in ks]]
    rows = [head]
    for v in variants:
        rows.append([v, *[f"{100 * cells[(v, k)][0]:.2f} ({100 * cells[(v, k)][1]:.2f})" for k in ks]])
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    return "\n".join("  ".join([r[0].ljust(widths[0]), *[c.rjust(w) for c, w in zip(r[1:], widths[1:])]]).rstrip()
                     for r in rows) + "\n"


def run_ablation(config: ExperimentConfig, out: str | os.PathLike, domain: str | None = None,
                 ks: Sequence[int] | None = None,
                 progress: Callable[[RunResult], None] | None = None) -> AblationOutput:
    """Inventory-mode runs per variant on one domain; identical seeds and
    subsets across variants, so rows are paired comparisons."""
    out = Path(out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config.to_dict())
    domain = domain or config.ablate_domain or (config.targets[0] if config.targets else "")
    scenarios = load_scenarios(dataclasses.replace(config, targets=[]))
    if not domain:
        domain = scenarios[0].target_domain
    by_domain = {sc.target_domain: sc for sc in scenarios}
    if domain not in by_domain:
        raise ConfigError(f"unknown ablation domain {domain!r}; corpus has {sorted(by_domain)}")
    sc = by_domain[domain]
    everything = _all_samples(scenarios)
    inventories = domain_inventories(everything)
    words = collect_words(everything, inventories.values())
    ks = sorted(ks or config.ks)
    write_dataset(sc.test, out / f"gold_{domain}.tsv")

    results = []
    for variant in config.ablate_variants:
        for seed in config.seeds:
            for r in two_stage(sc, inventories, words, config, ParserMode.INVENTORY.value, variant, seed, ks):
                results.append(r)
                _write_predictions(r, list(sc.test), out / "predictions")
                if progress:
                    progress(r)
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.record()) + "\n")
    # aggregate() keys on (domain, k, mode); the variant stands in for the mode
    agg = aggregate((domain, r.k, r.variant, r.seed, r.report) for r in results)
    cells = {(v, k): (c.mean, c.std) for (_, k, v), c in agg.cells.items()}
    table = format_ablation(cells, config.ablate_variants, ks)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    return AblationOutput(results, cells, table)
