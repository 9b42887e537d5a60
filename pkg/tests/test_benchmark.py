from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invparse.benchmark import (
    SingleDomainDataset,
    SpisConfig,
    format_summary,
    load_manifest,
    make_scenarios,
    spis_scan,
    spis_subsample,
    split_holdout,
    write_manifest,
)
from invparse.dataset import Dataset, Sample
from invparse.frame import ontology_tokens, parse_frame

from .strategies import labelled_samples


def occurrences(samples) -> Counter:
    c = Counter()
    for s in samples:
        c.update(ontology_tokens(s.frame))
    return c


def flat(domain, *labels, utterance="w"):
    """One sample whose frame carries the given slot labels under IN:X."""
    body = " ".join(f"[{lab} w ]" for lab in labels)
    return Sample(domain, utterance, parse_frame(f"[IN:X {body} ]"))


def test_worked_example_keeps_first_and_third():
    a1, a2, b, ab = (flat("d", "SL:A"), flat("d", "SL:A"), flat("d", "SL:B"), flat("d", "SL:A", "SL:B"))
    # tell the two {A} samples apart
    a2 = Sample("d", "w w", a2.frame)
    assert a1 != a2
    kept = spis_scan([a1, a2, b, ab], k=1)
    assert kept == [a1, b]


def test_spis_config_validation():
    for bad in (0, -1, 1.5, True):
        with pytest.raises(ValueError):
            SpisConfig(bad)


def test_spis_subsample_is_seeded():
    data = Dataset(flat("d", f"SL:S{i % 7}") for i in range(60))
    one = spis_subsample(data, SpisConfig(2, seed=3))
    assert one == spis_subsample(data, SpisConfig(2, seed=3))
    unshuffled = spis_subsample(data, SpisConfig(2, shuffle=False))
    assert list(unshuffled) == spis_scan(data, 2)


@settings(max_examples=120, deadline=None)
@given(labelled_samples(domains=("d",), max_size=40), st.integers(0, 10_000))
def test_coverage_and_monotonicity(data, seed):
    n = occurrences(data)
    previous = None
    for k in (1, 2, 5, 10):
        out = spis_subsample(data, SpisConfig(k, seed))
        got = occurrences(out)
        for label, n_t in n.items():
            assert got[label] >= min(k, n_t)
        ids = {id(s) for s in out}
        assert ids <= {id(s) for s in data}
        if previous is not None:
            assert previous <= ids
        previous = ids


def test_split_holdout():
    data = Dataset(flat("d", f"SL:S{i}") for i in range(10))
    pool, test = split_holdout(data, 3, seed=1)
    assert len(pool) == 7 and len(test) == 3
    assert set(pool) | set(test) == set(data)
    assert split_holdout(data, 3, seed=1) == (pool, test)
    with pytest.raises(ValueError):
        split_holdout(data, 10, seed=1)


def test_make_scenarios():
    data = Dataset([flat(d, f"SL:{d.upper()}{i % 3}", utterance=f"w {i}") for d in ("a", "b", "c", "e")
                    for i in range(12)])
    scenarios = make_scenarios(data, [1, 2, 5, 10], seed=0, test_size=2)
    assert [sc.target_domain for sc in scenarios] == ["a", "b", "c", "e"]
    assert sum(len(sc.cells()) for sc in scenarios) == 16
    for sc in scenarios:
        assert sc.target_domain not in sc.source.domains()
        assert len(sc.source) == 36 and len(sc.test) == 2
        assert not set(sc.test) & set(sc.target_subsets[10])


def test_single_domain_rejected():
    with pytest.raises(SingleDomainDataset):
        make_scenarios(Dataset([flat("a", "SL:A")]), [1])


def test_manifest_round_trip_and_idempotence(tmp_path):
    data = Dataset([flat(d, f"SL:{d.upper()}{i % 3}") for d in ("a", "b") for i in range(12)])
    scenarios = make_scenarios(data, [1, 2], seed=4, test_size=2)
    write_manifest(scenarios, tmp_path)
    first = {p.relative_to(tmp_path): p.read_bytes() for p in tmp_path.rglob("*") if p.is_file()}
    write_manifest(scenarios, tmp_path)
    second = {p.relative_to(tmp_path): p.read_bytes() for p in tmp_path.rglob("*") if p.is_file()}
    assert first == second
    back = load_manifest(tmp_path)
    assert [(sc.target_domain, sc.seed) for sc in back] == [("a", 4), ("b", 4)]
    for old, new in zip(scenarios, back):
        assert old.source == new.source and old.test == new.test and old.target_subsets == new.target_subsets
    assert "domain" in format_summary(scenarios)


def test_load_manifest_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path)
