"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL ...`` line before asserting;
the lines are printed again in the pytest terminal summary. Criteria 5
and 6 train real models and take several minutes each (marked slow).
"""

import math
import random
import time
from collections import Counter
from pathlib import Path

import pytest

from invparse.benchmark import SpisConfig, spis_scan, spis_subsample
from invparse.dataset import Dataset, Sample
from invparse.evaluate import domain_profile, frame_diff
from invparse.experiment import ExperimentConfig, run_ablation, run_experiment
from invparse.frame import Frame, FrameNode, normalize_whitespace, ontology_tokens, parse_frame, serialize_frame
from invparse.inventory import build_inventory, from_index_frame, to_index_frame
from invparse.model.core import ModelConfig, TrainConfig, build_source, build_target, init_model, loss, predict, train
from invparse.model.gradcheck import grad_check
from invparse.synth import default_specs, generate_domain

from .conftest import ACCEPTANCE
from .test_evaluate import indel_oracle

FIXTURE = Path(__file__).parent / "fixtures" / "reference_frames.txt"


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def random_frame(rng: random.Random, depth: int = 3) -> Frame:
    names = ["A", "GET_TIME", "DATE_TIME", "X_Y", "Q", "CREATE_ALARM", "LOCATION"]
    words = ["6pm", "mom", "the", "Tuesday", "x", "2", "é", "a-b"]

    def intent(d):
        kids = [slot(d) for _ in range(rng.randint(0, 3))]
        return FrameNode.intent("IN:" + rng.choice(names), *kids)

    def slot(d):
        if d > 0 and rng.random() < 0.3:
            return FrameNode.slot("SL:" + rng.choice(names), intent(d - 1))
        toks = [FrameNode.token(rng.choice(words)) for _ in range(rng.randint(1, 3))]
        return FrameNode.slot("SL:" + rng.choice(names), *toks)

    return Frame(intent(rng.randint(0, depth)))


def messy(text: str, rng: random.Random) -> str:
    """Same tokens, irregular whitespace."""
    return "".join(t + rng.choice([" ", "  ", "\t", " \n "]) for t in text.split()).strip() + rng.choice(["", " "])


def reference_frames() -> list[str]:
    lines = FIXTURE.read_text(encoding="utf-8").splitlines()
    return [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


# -- 1 ----------------------------------------------------------------------------

def test_criterion_1_frame_round_trip():
    rng = random.Random(1)
    strings = [messy(serialize_frame(random_frame(rng)), rng) for _ in range(1000)] + reference_frames()
    start = time.perf_counter()
    bad = [s for s in strings if serialize_frame(parse_frame(s)) != normalize_whitespace(s)]
    seconds = time.perf_counter() - start
    ok = not bad and seconds < 1.0
    record(1, ok, f"{len(strings) - len(bad)}/{len(strings)} round-trip "
                  f"({len(reference_frames())} reference frames) in {seconds:.3f}s")
    assert ok, bad[:3]


# -- 2 ----------------------------------------------------------------------------

def test_criterion_2_inventory_bijection():
    rng = random.Random(2)
    failures = 0
    for _ in range(1000):
        f = random_frame(rng)
        extra = {f"SL:EXTRA_{i}" for i in range(rng.randint(0, 5))}
        inv = build_inventory("d", set(ontology_tokens(f)) | extra)
        if from_index_frame(to_index_frame(f, inv), inv) != f:
            failures += 1
    alarm = build_inventory("alarm", ["SL:TIME_ZONE", "IN:UPDATE_ALARM", "SL:DATE_TIME", "IN:CREATE_ALARM",
                                      "SL:ALARM_NAME"])
    rows = [(c.label.raw, c.index, c.type, c.span) for c in alarm]
    expected = [("IN:CREATE_ALARM", 1, "intent", "create alarm"), ("IN:UPDATE_ALARM", 2, "intent", "update alarm"),
                ("SL:ALARM_NAME", 3, "slot", "alarm name"), ("SL:DATE_TIME", 4, "slot", "date time"),
                ("SL:TIME_ZONE", 5, "slot", "time zone")]
    ok = failures == 0 and rows == expected
    record(2, ok, f"1000 pairs, {failures} failures; alarm inventory {'matches' if rows == expected else 'differs'}")
    assert ok


# -- 3 ----------------------------------------------------------------------------

def random_dataset(rng: random.Random) -> Dataset:
    n_labels = rng.randint(1, 12)
    out = []
    for i in range(rng.randint(0, 60)):
        labels = rng.sample(range(n_labels), rng.randint(0, min(3, n_labels)))
        body = " ".join(f"[SL:S{j} w ]" for j in labels)
        out.append(Sample("d", f"w {i}", parse_frame(f"[IN:I{rng.randrange(3)} {body} ]")))
    return Dataset(out)


def test_criterion_3_spis_coverage():
    rng = random.Random(3)
    violations = 0
    for trial in range(150):
        data = random_dataset(rng)
        n = Counter(t for s in data for t in ontology_tokens(s.frame))
        previous = None
        for k in (1, 2, 5, 10):
            out = spis_subsample(data, SpisConfig(k, seed=trial))
            got = Counter(t for s in out for t in ontology_tokens(s.frame))
            violations += sum(got[t] < min(k, n_t) for t, n_t in n.items())
            ids = {id(s) for s in out}
            if previous is not None and not previous <= ids:
                violations += 1
            previous = ids

    def flat(u, *labels):
        return Sample("d", u, parse_frame("[IN:X " + " ".join(f"[{lab} w ]" for lab in labels) + " ]"))

    four = [flat("a", "SL:A"), flat("b", "SL:A"), flat("c", "SL:B"), flat("d", "SL:A", "SL:B")]
    kept = [four.index(s) + 1 for s in spis_scan(four, 1)]
    ok = violations == 0 and kept == [1, 3]
    record(3, ok, f"150 datasets x k in 1,2,5,10: {violations} violations; worked example keeps {kept}")
    assert ok


# -- 4 ----------------------------------------------------------------------------

def test_criterion_4_objective():
    alarm = build_inventory("alarm", ["IN:CREATE_ALARM", "IN:UPDATE_ALARM", "SL:ALARM_NAME", "SL:DATE_TIME",
                                      "SL:TIME_ZONE"])
    sample = Sample("alarm", "set an alarm for 6pm called gym",
                    parse_frame("[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] [SL:ALARM_NAME gym ] ]"))
    gc = {m: grad_check(ModelConfig(mode=m, layers=2, model_dim=16, heads=2, ffn_dim=32, dropout=0.0), sample, alarm,
                        epsilon=1e-5, n_params=200) for m in ("inventory", "copygen")}
    gc_ok = all(r.valid and r.max_relative_error < 1e-4 for r in gc.values())

    cfg = ModelConfig(dtype="float64", dropout=0.0)
    words = sample.utterance.split() + ["alarm", "create", "update", "name", "date", "time", "zone"]
    model = init_model(cfg, words)
    model.network.force_uniform_output()
    model.network.eval()
    pair = (build_source(sample.utterance, alarm, cfg, model.vocabulary),
            build_target(sample.frame, alarm, cfg, model.vocabulary))
    uniform = loss(model, [pair]).item()
    ln_v = math.log(len(model.vocabulary))
    uniform_ok = abs(uniform - ln_v) <= 0.02 * ln_v
    fresh = init_model(cfg, words)
    fresh.network.eval()
    natural = loss(fresh, [pair]).item()

    start = time.perf_counter()
    model = init_model(ModelConfig(), words)
    epochs = 0
    while epochs < 200:
        model = train([sample], {"alarm": alarm}, model.config, TrainConfig(batch_size=1, epochs=10,
                                                                            learning_rate=1e-3), init=model)
        epochs += 10
        if predict(model, sample.utterance, alarm) == sample.frame:
            break
    seconds = time.perf_counter() - start
    overfit_ok = predict(model, sample.utterance, alarm) == sample.frame and seconds < 60

    ok = gc_ok and uniform_ok and overfit_ok
    record(4, ok, "grad check max rel err " + ", ".join(f"{m} {r.max_relative_error:.1e}" for m, r in gc.items())
           + f"; uniform loss {uniform:.4f} vs ln|V| {ln_v:.4f} (fresh init {natural:.4f})"
           + (f"; overfit EM 1.0 after {epochs} epochs in {seconds:.1f}s" if overfit_ok else "; overfit failed"))
    assert ok


# -- 5 ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def transfer_run(tmp_path_factory):
    cfg = ExperimentConfig()
    cfg.ks = [min(cfg.ks)]
    start = time.perf_counter()
    out = run_experiment(cfg, tmp_path_factory.mktemp("transfer"))
    return cfg, out, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_5_sample_efficiency_direction(transfer_run):
    cfg, out, seconds = transfer_run
    k = cfg.ks[0]
    domains = sorted({d for d, _, _ in out.aggregate.cells})
    gaps = {d: out.aggregate.cells[(d, k, "inventory")].mean - out.aggregate.cells[(d, k, "copygen")].mean
            for d in domains}
    wins = sum(g >= 0 for g in gaps.values())
    mean_gap = sum(gaps.values()) / len(gaps)
    ok = wins >= 3 and mean_gap > 0 and seconds < 1800
    record(5, ok, f"k={k}, {len(cfg.seeds)} seeds: pointer >= copygen in {wins}/{len(gaps)} scenarios, "
                  f"mean gap {100 * mean_gap:+.2f} EM ("
                  + ", ".join(f"{d} {100 * g:+.1f}" for d, g in gaps.items()) + f"); {seconds / 60:.1f} min")
    print(out.table)
    assert ok


# -- 6 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_ablation_direction(tmp_path):
    cfg = ExperimentConfig()
    k = min(cfg.ks)
    start = time.perf_counter()
    out = run_ablation(cfg, tmp_path, ks=[k])
    seconds = time.perf_counter() - start
    full, bare = out.cells[("index_type_span", k)][0], out.cells[("index", k)][0]
    middle = out.cells[("index_type", k)][0]
    ok = full >= bare and seconds < 900
    record(6, ok, f"k={k}: index {100 * bare:.2f}, index_type {100 * middle:.2f} (reported), "
                  f"index_type_span {100 * full:.2f}; {seconds / 60:.1f} min")
    print(out.table)
    assert ok


# -- 7 ----------------------------------------------------------------------------

def test_criterion_7_no_augmentation():
    specs = {s.name: s for s in default_specs()}
    source = Dataset(list(generate_domain(specs["alarm"], 30, 0)) + list(generate_domain(specs["reminder"], 30, 0)))
    target = generate_domain(specs["weather"], 10, 0)
    invs = {d: build_inventory(d, {t for s in data for t in ontology_tokens(s.frame)})
            for d, data in (("alarm", source.filter_domain("alarm")), ("reminder", source.filter_domain("reminder")),
                            ("weather", target))}
    words = {w for s in list(source) + list(target) for w in s.utterance.lower().split()}
    small = dict(layers=1, model_dim=16, heads=2, ffn_dim=32, dropout=0.0)
    detail, ok = [], True
    for mode in ("inventory", "copygen"):
        cfg = ModelConfig(mode=mode, **small)
        base = train(list(source), invs, cfg, TrainConfig(epochs=1), words=words)
        tuned = train(list(target), invs, cfg, TrainConfig(epochs=1), init=base)
        added = len(tuned.vocabulary) - len(base.vocabulary)
        changed = [n for n, shape in tuned.parameter_shapes().items() if base.parameter_shapes().get(n) != shape]
        unseen = set(invs["weather"].labels) - set(invs["alarm"].labels) - set(invs["reminder"].labels)
        expected = 0 if mode == "inventory" else len(unseen)
        rows = tuned.network.embedding.weight.shape[0] - base.network.embedding.weight.shape[0]
        ok &= added == expected and rows == expected
        if mode == "inventory":
            ok &= not changed and tuned.vocabulary == base.vocabulary
        detail.append(f"{mode}: {added} vocabulary entries, {rows} embedding rows, {len(changed)} shapes changed")
    record(7, ok, f"{len(unseen)} of {len(invs['weather'])} target labels unseen; " + "; ".join(detail))
    assert ok


# -- 8 ----------------------------------------------------------------------------

def test_criterion_8_diff_fidelity():
    rng = random.Random(8)
    vocab = ["[IN:A", "[IN:B", "[SL:C", "[SL:D", "]", "x", "y", "6pm"]
    mismatches = 0
    for _ in range(500):
        a = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        b = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        script = frame_diff(a, b)
        mismatches += script.distance != indel_oracle(a, b) or script.apply(a) != b
    pred = "[IN:GET_MESSAGE [SL:RECIPIENT i ] [SL:ORDINAL Tuesday ] [SL:TAG_MESSAGE Twitter ] ]"
    gold = "[IN:GET_MESSAGE [SL:DATE_TIME Tuesday ] [SL:RESOURCE Twitter ] ]"
    script = frame_diff(pred, gold)
    rendered = script.render()
    example_ok = (script.deleted == ["[SL:RECIPIENT", "i", "]", "[SL:ORDINAL", "[SL:TAG_MESSAGE"]
                  and script.inserted == ["[SL:DATE_TIME", "[SL:RESOURCE"])
    ok = mismatches == 0 and example_ok
    record(8, ok, f"500 pairs, {mismatches} oracle mismatches; error example: {rendered}")
    assert ok


# -- 9 ----------------------------------------------------------------------------

def test_criterion_9_profiling(tmp_path):
    rows, ok = [], True
    for spec in default_specs():
        data = generate_domain(spec, 1000, seed=9)
        prof = domain_profile(data, spec.name)
        rate_ok = abs(prof.compositionality - spec.nesting_rate) <= 0.05
        size_ok = prof.ontology_size == spec.ontology_size
        ok &= rate_ok and size_ok
        rows.append(f"{spec.name} {100 * prof.compositionality:.1f}% vs {100 * spec.nesting_rate:.0f}%, "
                    f"size {prof.ontology_size}/{spec.ontology_size}")
    cfg = ExperimentConfig.from_dict({
        "n_per_domain": 60, "ks": [1], "seeds": [1], "test_size": 5, "source_samples": 20,
        "model": {"layers": 1, "model_dim": 16, "heads": 2, "ffn_dim": 32, "dropout": 0.0},
        "source_train": {"epochs": 1}, "target_train": {"epochs": 1}})
    table = run_experiment(cfg, tmp_path).characteristics
    header = table.splitlines()[0]
    table_ok = all(col in header for col in ("% compositionality", "# ontology labels", "EM inventory", "EM copygen"))
    table_ok &= len(table.splitlines()) == 2 + len(default_specs())
    ok &= table_ok
    record(9, ok, "; ".join(rows) + f"; characteristics table {'emitted' if table_ok else 'malformed'}")
    print(table)
    assert ok
