import csv
import json

import pytest

from main import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _run(*argv):
    return main(list(argv) + ["--out", "runs"])


def test_synth_is_reproducible(workdir):
    assert _run("synth", "--wavelet", "db4", "--seed", "7", "--j-max", "8") == 0
    first = (workdir / "runs/synth/fh-seed-7.bin").read_bytes()
    assert _run("synth", "--wavelet", "db4", "--seed", "7", "--j-max", "8") == 0
    assert (workdir / "runs/synth/fh-seed-7.bin").read_bytes() == first
    meta = json.loads((workdir / "runs/synth/fh-seed-7.json").read_text())
    assert meta["schema_version"] == 1
    assert meta["provenance"]["seed"] == 7


def test_synth_writes_coefficients(workdir):
    assert _run("synth", "--wavelet", "fs", "--j-max", "6", "--coefficients") == 0
    lines = (workdir / "runs/synth/fh-seed-1-coefficients.csv").read_text().splitlines()
    assert lines[0] == "j,k,c"


def test_synth_writes_wavelet_table(workdir):
    assert _run("synth", "--wavelet", "db2", "--j-max", "6", "--table") == 0
    lines = (workdir / "runs/synth/db2-table.csv").read_text().splitlines()
    assert lines[0] == "grid_point,value"
    assert len(lines) == 3 * 4096 + 2


def test_config_file_supplies_wavelet(workdir):
    (workdir / "run.env").write_text("WAVELET=db2\nJ_MAX=6\nSEED=3\n")
    assert _run("synth", "--config", "run.env") == 0
    assert (workdir / "runs/synth/fh-seed-3.bin").exists()


def test_missing_wavelet_is_config_error(workdir, capsys):
    assert _run("synth") == 2
    assert "wavelet" in capsys.readouterr().err


def test_out_of_range_h(workdir, capsys):
    assert _run("synth", "--wavelet", "db4", "--h", "1.5") == 2
    assert "holderlab:" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(workdir):
    with pytest.raises(SystemExit) as e:
        main(["synth", "--seeds", "many"])
    assert e.value.code == 2


def test_sieve_with_m_too_small_for_h(workdir, capsys):
    assert _run("sieve", "--wavelet", "db4", "--h", "0.2", "--m", "3") == 2
    assert "'m'" in capsys.readouterr().err
    assert not (workdir / "runs/sieve/sieve.json").exists()


def test_sieve_with_m_too_small_for_hurst_range(workdir, capsys):
    code = _run("sieve", "--wavelet", "db4", "--series", "fH", "--hurst", "linear:0.3,0.4", "--m", "3")
    assert code == 2
    assert "inf K" in capsys.readouterr().err


def test_inadmissible_sieve_suggests_mu(workdir, capsys):
    assert _run("sieve", "--wavelet", "db4", "--m", "3", "--mu", "1") == 0
    assert "admissible=false" in capsys.readouterr().out
    summary = json.loads((workdir / "runs/sieve/sieve.json").read_text())
    assert summary["admissible"] is False
    assert summary["suggested_mu"] == 3


@pytest.mark.slow
def test_sieve_survival_table(workdir):
    assert _run("sieve", "--wavelet", "db4", "--seeds", "30", "--J-cap", "8") == 0
    with open(workdir / "runs/sieve/survival.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "seed" and rows[0][-1] == "survived"
    assert len(rows) == 31
    assert (workdir / "runs/sieve/frequencies.csv").exists()
    candidates = json.loads((workdir / "runs/sieve/candidates.json").read_text())
    assert len(candidates["seeds"]) == 30


def test_classify_summary(workdir, capsys):
    code = _run("classify", "--wavelet", "db4", "--j-max", "8", "--j-lo", "4", "--J-cap", "10", "--points", "2")
    assert code == 0
    with open(workdir / "runs/classify/summary.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert [row[0] for row in rows[1:]] == ["sieve", "random", "argmax"]
    assert "argmax" in capsys.readouterr().out


def test_classify_needs_fh(workdir):
    assert _run("classify", "--wavelet", "db4", "--series", "brownian") == 2


def test_check_single_suite(workdir, capsys):
    assert _run("check", "--wavelet", "db4", "--only", "P7") == 0
    report = json.loads((workdir / "runs/check/report.json").read_text())
    assert report["schema_version"] == 1
    assert [suite["id"] for suite in report["suites"]] == ["P7"]
    assert "✅ P7" in capsys.readouterr().out


def test_check_unknown_suite(workdir, capsys):
    assert _run("check", "--wavelet", "db4", "--only", "P99") == 2
    assert "P99" in capsys.readouterr().err


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as e:
        main(["sieve", "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    assert "default: 3" in text
    assert "--no-trim" in text


def test_scan_multifractional(workdir):
    code = _run("scan", "--wavelet", "db4", "--series", "fH", "--hurst", "linear:0.4,0.2",
                "--j-max", "12", "--j-lo", "5", "--scan-points", "3")
    assert code == 0
    with open(workdir / "runs/scan/exponents.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert all(row["target"] != "" for row in rows)


def test_scan_brownian_reports_iterated_logarithm(workdir):
    assert _run("scan", "--wavelet", "db4", "--series", "brownian", "--j-max", "10", "--j-lo", "5",
                "--scan-points", "3") == 0
    payload = json.loads((workdir / "runs/scan/scan.json").read_text())
    entry = payload["seeds"]["1"]["iterated_logarithm"]
    assert entry["limit"] == pytest.approx(2 ** 0.5)
