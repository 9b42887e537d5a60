import pytest
from hypothesis import given, settings

from invparse.dataset import (
    BadFieldCount,
    Dataset,
    DatasetError,
    FrameParse,
    Sample,
    extract_ontology,
    load_dataset,
    parse_line,
    write_dataset,
)
from invparse.frame import parse_frame

from .strategies import labelled_samples


def sample(domain, utterance, frame):
    return Sample(domain, utterance, parse_frame(frame))


def test_parse_line():
    s = parse_line("alarm\twake me at 6pm\t[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]")
    assert s.domain == "alarm" and s.utterance == "wake me at 6pm"
    assert s.is_grounded()


def test_parse_line_errors():
    with pytest.raises(BadFieldCount):
        parse_line("alarm\tno frame", 3)
    with pytest.raises(FrameParse) as info:
        parse_line("alarm\tx\t[IN:A", 7)
    assert info.value.line == 7


def test_ungrounded_sample_detected():
    assert not sample("d", "hello", "[IN:A [SL:B bye ] ]").is_grounded()


def test_write_load_round_trip(tmp_path):
    data = Dataset([sample("a", "x y", "[IN:A [SL:B x ] ]"), sample("b", "z", "[IN:C ]")])
    path = tmp_path / "d.tsv"
    write_dataset(data, path)
    assert path.read_bytes().count(b"\r") == 0
    assert load_dataset(path) == data


def test_load_skips_blank_lines(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("a\tx\t[IN:A ]\n\n\nb\ty\t[IN:B ]\n", encoding="utf-8")
    assert len(load_dataset(path)) == 2


def test_write_rejects_tab_in_utterance(tmp_path):
    with pytest.raises(DatasetError):
        write_dataset([sample("a", "x\ty", "[IN:A ]")], tmp_path / "d.tsv")


def test_domain_views():
    data = Dataset([sample("b", "x", "[IN:A ]"), sample("a", "x", "[IN:B ]"), sample("b", "x", "[IN:C ]")])
    assert data.domains() == ["b", "a"]
    assert len(data.filter_domain("b")) == 2
    assert data.exclude_domain("b").domains() == ["a"]
    assert isinstance(data[:2], Dataset)


def test_extract_ontology():
    data = Dataset([sample("a", "x", "[IN:A [SL:B [IN:C x ] ] ]"), sample("b", "x", "[IN:D ]")])
    assert {str(x) for x in extract_ontology(data, "a")} == {"IN:A", "SL:B", "IN:C"}
    assert extract_ontology(data, "zzz") == set()


@settings(max_examples=50, deadline=None)
@given(labelled_samples())
def test_tsv_round_trip_property(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "d.tsv"
    write_dataset(data, path)
    assert load_dataset(path) == data
