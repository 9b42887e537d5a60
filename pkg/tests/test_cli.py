import json

import pytest

from invparse.cli import main
from invparse.dataset import load_dataset

TINY = {"n_per_domain": 40, "ks": [1], "seeds": [1], "test_size": 5, "source_samples": 20,
        "targets": ["alarm"], "model": {"layers": 1, "model_dim": 16, "heads": 2, "ffn_dim": 32, "dropout": 0.0},
        "source_train": {"epochs": 1, "batch_size": 8}, "target_train": {"epochs": 1, "batch_size": 4}}


def error_of(capsys) -> dict:
    lines = capsys.readouterr().err.strip().splitlines()
    return json.loads(lines[-1])


def tsv(path, rows):
    path.write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert error_of(capsys)["error"] == "usage"


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["evaluate", "--pred", str(tmp_path / "nope"), "--gold", str(tmp_path / "nope")]) == 4
    err = error_of(capsys)
    assert err["error"] == "io" and err["type"] == "FileNotFoundError"


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--n", "30", "--seed", "5", "--out", str(a)]) == 0
    assert main(["synth", "--n", "30", "--seed", "5", "--out", str(b)]) == 0
    assert (a / "corpus.tsv").read_bytes() == (b / "corpus.tsv").read_bytes()
    assert len(load_dataset(a / "corpus.tsv")) >= 4 * 30


def test_synth_bad_spec_reports_line(tmp_path, capsys):
    spec = tmp_path / "bad.ini"
    spec.write_text("[domain x]\nnesting_rate = lots\nintents = IN:A\nslots =\ntemplates =\n    IN:A :: hi\n",
                    encoding="utf-8")
    assert main(["synth", "--config", str(spec), "--out", str(tmp_path / "o")]) == 3
    err = error_of(capsys)
    assert err["error"] == "config" and "bad.ini:2:" in err["message"]


def test_benchmark_cells_and_idempotence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_per_domain": 60, "test_size": 10}), encoding="utf-8")
    out = tmp_path / "bench"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out)]) == 0
    assert "16 cells" in capsys.readouterr().out
    first = {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert main(["benchmark", "--config", str(cfg), "--out", str(out)]) == 0
    assert first == {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}


def test_unknown_variant_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"inventory_variant": "index_span"}), encoding="utf-8")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3
    assert error_of(capsys)["error"] == "config"


def test_malformed_config_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{", encoding="utf-8")
    assert main(["run", "--config", str(cfg)]) == 3


def test_evaluate_and_diff(tmp_path, capsys):
    gold = tsv(tmp_path / "gold.tsv", [("a", "wake me at 6pm", "[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]"),
                                       ("a", "stop", "[IN:STOP ]")])
    same = tsv(tmp_path / "same.tsv", [("a", "wake me at 6pm", "[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]"),
                                       ("a", "stop", "[IN:STOP ]")])
    assert main(["diff", "--pred", str(same), "--gold", str(gold)]) == 0
    assert capsys.readouterr().out.startswith("0 errors")

    broken = tsv(tmp_path / "broken.tsv", [("a", "wake me at 6pm", "[IN:CREATE_ALARM [SL:DATE_TIME 6pm ]"),
                                           ("a", "stop", "[IN:STOP ]")])
    out = tmp_path / "ev"
    assert main(["evaluate", "--pred", str(broken), "--gold", str(gold), "--out", str(out)]) == 0
    assert json.loads((out / "eval.json").read_text())["em"] == 0.5
    capsys.readouterr()
    assert main(["diff", "--pred", str(broken), "--gold", str(gold)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("1 errors")
    assert "prediction=DecodeFailure" in text and "distance=1" in text


def test_evaluate_length_mismatch_is_data_error(tmp_path, capsys):
    gold = tsv(tmp_path / "gold.tsv", [("a", "stop", "[IN:STOP ]")])
    pred = tsv(tmp_path / "pred.tsv", [])
    assert main(["evaluate", "--pred", str(pred), "--gold", str(gold)]) == 5
    assert error_of(capsys)["error"] == "data"


def test_profile(tmp_path, capsys):
    main(["synth", "--n", "50", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["profile", "--corpus", str(tmp_path / "corpus.tsv")]) == 0
    assert "% compositionality" in capsys.readouterr().out


def test_grad_check_command(tmp_path, capsys):
    assert main(["grad-check", "--n-params", "30", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "grad_check.json").read_text())
    assert summary["passed"] and summary["n_checked"] == 30


def test_grad_check_dropout_refused(tmp_path, capsys):
    cfg = tmp_path / "m.json"
    cfg.write_text(json.dumps({"dropout": 0.2}), encoding="utf-8")
    assert main(["grad-check", "--config", str(cfg)]) == 3


@pytest.mark.slow
def test_run_and_ablate_tiny(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY), encoding="utf-8")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert "Domain: alarm" in capsys.readouterr().out
    assert main(["profile", "--config", str(cfg), "--results", str(tmp_path / "run" / "aggregate.jsonl")]) == 0
    assert "EM inventory" in capsys.readouterr().out
    assert main(["ablate", "--config", str(cfg), "--domain", "alarm", "--out", str(tmp_path / "abl")]) == 0
    assert (tmp_path / "abl" / "ablation.txt").is_file()
