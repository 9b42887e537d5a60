"""``invparse`` command line.

Every subcommand accepts ``--seed``, ``--config`` and ``--out``. Failures
exit nonzero and print one JSON object to stderr::

    {"error": "<category>", "type": "<exception>", "message": "..."}

Categories and exit codes: usage 2, config 3, io 4, data 5, numeric 6,
internal 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from .benchmark import SingleDomainDataset, format_summary, make_scenarios, write_manifest
from .dataset import Dataset, DatasetError, load_dataset, write_dataset
from .evaluate import characteristics_table, exact_match, frame_diff
from .experiment import (ConfigError, ExperimentConfig, domain_inventories, load_corpus, profiles_for,
                         run_ablation, run_experiment)
from .frame import FrameParseError, parse_frame
from .model.core import DecodeFailure, ModelConfig, NonFiniteLoss
from .model.gradcheck import GradCheckRefused, grad_check
from .synth import InvalidSpec, default_benchmark_suite, default_specs, generate_suite, load_domain_specs

logger = logging.getLogger("invparse")

EXIT = {"usage": 2, "config": 3, "io": 4, "data": 5, "numeric": 6, "internal": 1}


class UsageError(Exception):
    pass


def _category(exc: BaseException) -> str:
    if isinstance(exc, UsageError):
        return "usage"
    if isinstance(exc, (ConfigError, InvalidSpec, GradCheckRefused)):
        return "config"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (DatasetError, FrameParseError, SingleDomainDataset)):
        return "data"
    if isinstance(exc, (NonFiniteLoss, FloatingPointError)):
        return "numeric"
    if isinstance(exc, (ValueError, KeyError)):
        return "config"
    return "internal"


# -- helpers --------------------------------------------------------------------

def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        return _apply_overrides(ExperimentConfig.load(path), args)
    return _apply_overrides(ExperimentConfig(), args)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "corpus", None):
        changes["corpus"] = args.corpus
    if getattr(args, "manifest", None):
        changes["manifest"] = args.manifest
    if getattr(args, "ks", None):
        changes["ks"] = args.ks
    if getattr(args, "seeds", None):
        changes["seeds"] = args.seeds
    elif args.seed is not None:
        changes["seeds"] = [args.seed]
    if getattr(args, "targets", None):
        changes["targets"] = args.targets
    if getattr(args, "modes", None):
        changes["modes"] = args.modes
    if getattr(args, "variants", None):
        changes["ablate_variants"] = args.variants
    if not changes:
        return cfg
    return ExperimentConfig.from_dict({**cfg.to_dict(), **changes})


def _out(args, default: str) -> Path:
    path = Path(args.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_predictions(path) -> list:
    """Prediction TSV (domain, utterance, frame); malformed frames become
    :class:`DecodeFailure` values instead of errors."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            text = fields[-1] if len(fields) >= 3 else ""
            try:
                out.append(parse_frame(text))
            except FrameParseError as exc:
                out.append(DecodeFailure(tuple(text.split()), f"line {lineno}: {type(exc).__name__}: {exc}"))
    return out


def _pair(args) -> tuple[list, Dataset]:
    preds = _read_predictions(args.pred)
    gold = load_dataset(args.gold)
    if len(preds) != len(gold):
        raise DatasetError(f"{args.pred} has {len(preds)} predictions but {args.gold} has {len(gold)} samples")
    return preds, gold


# -- subcommands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    seed = 0 if args.seed is None else args.seed
    specs = load_domain_specs(args.config) if args.config else default_specs()
    data = generate_suite(specs, args.n, seed)
    out = _out(args, "corpus")
    write_dataset(data, out / "corpus.tsv")
    lines = [f"{s.name}\t{s.ontology_size}\t{s.nesting_rate}" for s in specs]
    (out / "domains.tsv").write_text("domain\tontology_size\tnesting_rate\n" + "\n".join(lines) + "\n",
                                     encoding="utf-8")
    print(f"wrote {len(data)} samples over {len(specs)} domains to {out / 'corpus.tsv'}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _experiment_config(args)
    seed = cfg.spis_seed if args.seed is None else args.seed
    corpus = load_corpus(cfg)
    scenarios = make_scenarios(corpus, cfg.ks, seed=seed, test_size=cfg.test_size if args.test_size is None
                               else args.test_size)
    out = write_manifest(scenarios, _out(args, "benchmark"))
    sys.stdout.write(format_summary(scenarios))
    print(f"{sum(len(sc.target_subsets) for sc in scenarios)} cells written to {out}")
    return 0


def _progress(r) -> None:
    print(f"{r.domain} k={r.k} {r.mode}/{r.variant} seed={r.seed}: EM {100 * r.report.em:.2f} "
          f"({r.target_size} target samples, {r.seconds:.0f}s)", flush=True)


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    result = run_experiment(cfg, _out(args, "runs/default"), progress=_progress)
    sys.stdout.write(result.table)
    sys.stdout.write(result.characteristics)
    return 0


def cmd_ablate(args) -> int:
    cfg = _experiment_config(args)
    result = run_ablation(cfg, _out(args, "runs/ablation"), domain=args.domain, progress=_progress)
    sys.stdout.write(result.table)
    return 0


def cmd_evaluate(args) -> int:
    preds, gold = _pair(args)
    report = exact_match(preds, [s.frame for s in gold])
    print(report)
    if args.out:
        out = _out(args, "")
        (out / "eval.jsonl").write_text("".join(r + "\n" for r in report.records()), encoding="utf-8")
        (out / "eval.json").write_text(json.dumps({"em": report.em, "matches": report.matches, "n": report.n}) + "\n",
                                       encoding="utf-8")
    return 0


def cmd_diff(args) -> int:
    preds, gold = _pair(args)
    report = exact_match(preds, [s.frame for s in gold])
    errors = report.errors
    if args.sample is not None and args.sample < len(errors):
        rng = random.Random(0 if args.seed is None else args.seed)
        errors = sorted(rng.sample(errors, args.sample), key=lambda r: r.sample_id)
    scripts = [(frame_diff(r.prediction, r.gold), r) for r in errors]
    scripts.sort(key=lambda item: (item[0].distance, item[1].sample_id))
    lines = [f"{len(report.errors)} errors" + (f" ({len(errors)} sampled for inspection)"
                                               if len(errors) != len(report.errors) else "")]
    for script, r in scripts:
        kind = "DecodeFailure" if isinstance(r.prediction, DecodeFailure) else "frame"
        lines.append(f"#{r.sample_id} distance={script.distance} prediction={kind}")
        lines.append(f"  utterance: {gold[r.sample_id].utterance}")
        lines.append(f"  diff: {script.render()}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        (_out(args, "") / "diff.txt").write_text(text, encoding="utf-8")
    return 0


def cmd_profile(args) -> int:
    cfg = _experiment_config(args)
    corpus = load_corpus(cfg)
    profiles = profiles_for(corpus, corpus.domains())
    em: dict[str, dict[str, float]] = {}
    if args.results:
        with open(args.results, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        k = min(r["k"] for r in rows) if args.k is None else args.k
        for r in rows:
            if r["k"] == k:
                em.setdefault(r["mode"], {})[r["domain"]] = r["mean_em"]
    text = characteristics_table(profiles, em)
    sys.stdout.write(text)
    if args.out:
        (_out(args, "") / "characteristics.txt").write_text(text, encoding="utf-8")
    return 0


def cmd_grad_check(args) -> int:
    overrides = {"layers": 2, "model_dim": 16, "heads": 2, "ffn_dim": 32, "dropout": 0.0}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    seed = 0 if args.seed is None else args.seed
    try:
        config = ModelConfig(**{**overrides, "seed": seed})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    data = default_benchmark_suite(seed, 20)
    sample = data[random.Random(seed).randrange(len(data))]
    inventory = domain_inventories(data)[sample.domain]
    result = grad_check(config, sample, inventory, epsilon=args.epsilon, n_params=args.n_params, seed=seed)
    summary = {"max_relative_error": result.max_relative_error, "n_checked": result.n_checked,
               "valid": result.valid, "passed": result.passed(args.tolerance), "mode": config.mode.value,
               "worst": None if result.worst is None else
               {"parameter": result.worst[0], "index": list(result.worst[1]),
                "analytic": result.worst[2], "numeric": result.worst[3]}}
    print(json.dumps(summary, indent=2))
    if args.out:
        (_out(args, "") / "grad_check.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return 0 if summary["passed"] else 6


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--config", default=None, help="config file")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="invparse", description="Inventory-based low-resource frame parsing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus (--config: domain spec .ini)")
    p.add_argument("--n", type=int, default=2000, help="samples per domain")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("benchmark", parents=[common], help="leave-one-out scenarios with SPIS subsets")
    p.add_argument("--corpus", help="dataset TSV (default: generated suite)")
    p.add_argument("--ks", type=int, nargs="+", help="SPIS values")
    p.add_argument("--test-size", type=int, default=None, help="held-out target samples per scenario")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("run", parents=[common], help="two-stage transfer runs and EM tables")
    p.add_argument("--corpus")
    p.add_argument("--manifest", help="benchmark directory")
    p.add_argument("--ks", type=int, nargs="+")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--targets", nargs="+")
    p.add_argument("--modes", nargs="+")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", parents=[common], help="compare inventory variants on one domain")
    p.add_argument("--domain")
    p.add_argument("--corpus")
    p.add_argument("--manifest")
    p.add_argument("--ks", type=int, nargs="+")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--variants", nargs="+")
    p.set_defaults(func=cmd_ablate)

    for name, func, text in (("evaluate", cmd_evaluate, "exact match of predictions against gold"),
                             ("diff", cmd_diff, "edit-script diffs of the errors")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--pred", required=True, help="predictions TSV (domain, utterance, frame)")
        p.add_argument("--gold", required=True, help="gold dataset TSV")
        if name == "diff":
            p.add_argument("--sample", type=int, default=None, help="inspect N randomly sampled errors")
        p.set_defaults(func=func)

    p = sub.add_parser("profile", parents=[common], help="domain characteristics (and EM) per domain")
    p.add_argument("--corpus")
    p.add_argument("--results", help="aggregate.jsonl from a run, to add EM columns")
    p.add_argument("--k", type=int, default=None, help="k for the EM columns (default: smallest)")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("grad-check", parents=[common],
                       help="finite-difference gradient check (--config: ModelConfig JSON overrides)")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--n-params", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            _report(UsageError("invalid command line (see usage above)"))
            return EXIT["usage"]
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - mapped to an error category
        _report(exc)
        if args.verbose:
            logger.exception("failure")
        return EXIT[_category(exc)]


def _report(exc: BaseException) -> None:
    msg = str(exc)
    if isinstance(exc, KeyError) and exc.args:
        msg = str(exc.args[0])
    sys.stderr.write(json.dumps({"error": _category(exc), "type": type(exc).__name__, "message": msg}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
