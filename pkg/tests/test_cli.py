import csv
import io
import json
import sys

import pytest

from subpool import cli
from subpool.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main


def run(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


CONLLU = "".join(
    f"1\tword{i % 40}\t_\tNOUN\t_\tCase={'ABC'[i % 3]}\t_\t_\t_\t_\n"
    f"2\truns\t_\tVERB\t_\t_\t_\t_\t_\t_\n\n"
    for i in range(400)
)


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--bogus"])
    assert exc.value.code == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_sample_missing_input_is_data_error(tmp_path, capsys):
    code, _, err = run(
        ["sample", "--mode", "morph", "--format", "conllu",
         "--input", str(tmp_path / "nope.conllu"), "--out-prefix", str(tmp_path / "x"),
         "--tag", "Case", "--pos", "NOUN"],
        capsys,
    )
    assert code == EXIT_DATA
    assert err.startswith("error:")


def test_sample_morph_roundtrip(tmp_path, capsys):
    src = tmp_path / "corpus.conllu"
    src.write_text(CONLLU, encoding="utf-8")
    prefix = tmp_path / "ds"
    code, out, _ = run(
        ["sample", "--mode", "morph", "--format", "conllu", "--input", str(src),
         "--out-prefix", str(prefix), "--tag", "Case", "--pos", "NOUN",
         "--train", "24", "--dev", "6", "--test", "6", "--seed", "3"],
        capsys,
    )
    assert code == EXIT_OK
    assert json.loads(out)["sizes"] == {"train": 24, "dev": 6, "test": 6}
    for split, n in (("train", 24), ("dev", 6), ("test", 6)):
        lines = (tmp_path / f"ds.{split}.jsonl").read_text().splitlines()
        assert len(lines) == n
        rec = json.loads(lines[0])
        assert set(rec) == {"tokens", "target_index", "label"}


def test_sample_oversized_request_is_data_error(tmp_path, capsys):
    src = tmp_path / "corpus.conllu"
    src.write_text(CONLLU, encoding="utf-8")
    code, _, err = run(
        ["sample", "--mode", "morph", "--format", "conllu", "--input", str(src),
         "--out-prefix", str(tmp_path / "x"), "--tag", "Case", "--pos", "NOUN",
         "--train", "100000"],
        capsys,
    )
    assert code == EXIT_DATA
    assert err.startswith("error:")


def test_synth_then_train_then_analyze(tmp_path, capsys):
    prefix = tmp_path / "syn"
    code, out, _ = run(
        ["synth", "--seed", "4", "--out-prefix", str(prefix),
         "--train", "120", "--dev", "40", "--test", "40",
         "--hidden", "16", "--layers", "2", "--words", "4"],
        capsys,
    )
    assert code == EXIT_OK

    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "tasks": [{
            "name": "syn",
            "dataset": {s: str(prefix) + f".{s}.jsonl" for s in ("train", "dev", "test")},
            "store": {s: str(prefix) + f".{s}.swpe" for s in ("train", "dev", "test")},
        }],
        "layers": [1],
        "poolings": ["last", "avg"],
        "seeds": [0],
        "max_epochs": 20,
    }))
    results = tmp_path / "results.jsonl"
    code, out, _ = run(["train", "--manifest", str(manifest), "--results", str(results)], capsys)
    assert code == EXIT_OK
    records = [json.loads(l) for l in results.read_text().splitlines()]
    assert {(r["pooling"], r["seed"]) for r in records} == {("last", 0), ("avg", 0)}
    by_pool = {r["pooling"]: r for r in records}
    assert by_pool["last"]["test_acc"] >= 0.9  # planted last-subword signal

    # resume: everything done, nothing runs, file unchanged
    code, out, _ = run(
        ["train", "--manifest", str(manifest), "--results", str(results), "--resume"],
        capsys,
    )
    assert code == EXIT_OK
    assert json.loads(out)["ran"] == 0
    assert [json.loads(l) for l in results.read_text().splitlines()] == records

    out_csv = tmp_path / "ratio.csv"
    code, _, _ = run(
        ["analyze", "--report", "macro", "--results", str(results), "--out", str(out_csv)],
        capsys,
    )
    assert code == EXIT_OK
    rows = list(csv.reader(out_csv.read_text().splitlines()))
    assert rows[0] == ["model", "macro_accuracy"]
    assert 0.0 <= float(rows[1][1]) <= 100.0


def test_train_empty_grid_is_usage_error(tmp_path, capsys):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"tasks": []}))
    code, _, err = run(
        ["train", "--manifest", str(manifest), "--results", str(tmp_path / "r.jsonl")],
        capsys,
    )
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_train_store_dataset_mismatch_is_data_error(tmp_path, capsys):
    prefix = tmp_path / "syn"
    run(["synth", "--seed", "1", "--out-prefix", str(prefix),
         "--train", "30", "--dev", "10", "--test", "10",
         "--hidden", "8", "--layers", "1"], capsys)
    # drop one dataset record so counts disagree
    train = tmp_path / "syn.train.jsonl"
    lines = train.read_text().splitlines()
    train.write_text("\n".join(lines[:-1]) + "\n")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "tasks": [{
            "name": "syn",
            "dataset": {s: str(prefix) + f".{s}.jsonl" for s in ("train", "dev", "test")},
            "store": {s: str(prefix) + f".{s}.swpe" for s in ("train", "dev", "test")},
        }],
        "layers": [0], "poolings": ["last"], "seeds": [0],
    }))
    code, _, err = run(
        ["train", "--manifest", str(manifest), "--results", str(tmp_path / "r.jsonl")],
        capsys,
    )
    assert code == EXIT_DATA
    assert "disagree" in err


def test_analyze_pairwise_fixture(tmp_path, capsys):
    out_csv = tmp_path / "pw.csv"
    code, _, _ = run(
        ["analyze", "--report", "pairwise", "--fixture", "morph",
         "--model", "mbert", "--out", str(out_csv)],
        capsys,
    )
    assert code == EXIT_OK
    rows = list(csv.reader(out_csv.read_text().splitlines()))
    assert rows[0] == ["row", "column", "mean_ratio", "p", "significant"]
    assert len(rows) == 1 + 9 * 9
    diag = [r for r in rows[1:] if r[0] == r[1]]
    for r in diag:
        assert float(r[2]) == pytest.approx(1.0)


def test_analyze_needs_source(capsys):
    code, _, err = run(["analyze", "--report", "macro"], capsys)
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_stats_from_store(tmp_path, capsys):
    prefix = tmp_path / "syn"
    run(["synth", "--seed", "2", "--out-prefix", str(prefix),
         "--train", "20", "--dev", "5", "--test", "5",
         "--hidden", "8", "--layers", "1", "--fertility", "2:1.0"], capsys)
    out_csv = tmp_path / "stats.csv"
    code, _, _ = run(
        ["stats", "--out", str(out_csv), "--store", f"syn={prefix}.train.swpe"],
        capsys,
    )
    assert code == EXIT_OK
    rows = list(csv.reader(out_csv.read_text().splitlines()))
    header, row = rows[0], rows[1]
    stats = dict(zip(header, row))
    assert stats["corpus"] == "syn"
    assert float(stats["fertility"]) == pytest.approx(2.0)
    assert float(stats["multi_rate"]) == pytest.approx(1.0)


def test_verify_fixtures_prints_all_pass(capsys):
    code, out, _ = run(["verify-fixtures"], capsys)
    assert code == EXIT_OK
    lines = [l for l in out.splitlines() if l]
    assert len(lines) == 5
    assert all(l.startswith("PASS ") for l in lines)


def test_verify_fixtures_fails_on_broken_table(monkeypatch, capsys):
    from subpool import analysis

    original = analysis.verify_fixture_claims

    def broken_claims():
        real = original()
        real[0] = analysis.ClaimResult(real[0].name, False, "forced failure")
        return real

    monkeypatch.setattr(cli.analysis, "verify_fixture_claims", broken_claims)
    code, out, _ = run(["verify-fixtures"], capsys)
    assert code == EXIT_VERIFY
    assert "FAIL" in out


def test_console_script_entry_point():
    import subprocess

    proc = subprocess.run(
        [sys.executable, "-m", "subpool.cli", "verify-fixtures"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "PASS" in proc.stdout
