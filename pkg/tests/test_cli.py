import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from patchecg.cli import main
from patchecg.data import load_record_csv


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "ds"), "--n", "24", "--seed", "7"]) == 0
    assert main(["train", "--data", str(d / "ds"), "--out", str(d / "m.pecg"), "--epochs", "1",
                 "--d-model", "16", "--layers", "1", "--heads", "2", "--batch", "8",
                 "--log", str(d / "log.csv")]) == 0
    return d


def test_synth_twice_identical(workdir, tmp_path):
    assert main(["synth", "--out", str(tmp_path / "again"), "--n", "24", "--seed", "7"]) == 0
    cmp = filecmp.dircmp(workdir / "ds", tmp_path / "again")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in cmp.common_files:
        assert (workdir / "ds" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_mask_12x1_is_identity(workdir, tmp_path):
    src = workdir / "ds" / "rec00003.csv"
    out = tmp_path / "m.csv"
    assert main(["mask", "--in", str(src), "--layout", "12x1", "--out", str(out)]) == 0
    np.testing.assert_array_equal(load_record_csv(out).values, load_record_csv(src).values)


def test_mask_dump_patches(workdir, tmp_path):
    out, table = tmp_path / "m.csv", tmp_path / "p.csv"
    assert main(["mask", "--in", str(workdir / "ds" / "rec00000.csv"), "--layout", "3x4",
                 "--out", str(out), "--dump-patches", str(table)]) == 0
    rows = table.read_text().splitlines()
    assert rows[0] == "lead,j,kind" and len(rows) == 181
    assert sum(r.endswith("Missing") for r in rows) == 126
    assert np.isfinite(load_record_csv(out).values).sum() == 12 * 250


def test_train_outputs(workdir):
    assert (workdir / "m.pecg").read_bytes()[:4] == b"PECG"
    assert (workdir / "log.csv").read_text().splitlines()[0] == "epoch,train_loss,val_macro_auroc"


def test_eval_report(workdir, tmp_path):
    report = tmp_path / "r.json"
    args = ["eval", "--data", str(workdir / "ds"), "--model", str(workdir / "m.pecg"),
            "--layout", "6x2", "--report", str(report)]
    assert main(args) == 0
    first = report.read_bytes()
    assert main(args) == 0
    assert report.read_bytes() == first
    d = json.loads(first)
    assert d["layout"] == "6x2" and d["n_records"] == 24 and "macro_auroc" in d
    assert main(args[:-2] + ["--report", str(report), "--split", "test"]) == 0
    assert json.loads(report.read_text())["n_records"] < 24


def test_explain(workdir, tmp_path):
    out = tmp_path / "k.json"
    assert main(["explain", "--model", str(workdir / "m.pecg"), "--record", str(workdir / "ds" / "rec00001.csv"),
                 "--layout", "3x4+II", "--top-k", "4", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["patches"]) == 4
    assert all(set(p) == {"lead", "t_start", "t_stop", "weight"} for p in d["patches"])


def test_usage_errors_exit_1(workdir, tmp_path):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["synth", "--out", str(tmp_path), "--n", "3", "--bogus"]) == 1
    assert main(["eval", "--data", str(workdir / "ds"), "--model", str(workdir / "m.pecg"),
                 "--layout", "9x9", "--report", str(tmp_path / "r.json")]) == 1
    assert main(["train", "--data", str(workdir / "ds"), "--out", str(tmp_path / "x"), "--d-model", "10",
                 "--heads", "4"]) == 1


def test_data_errors_exit_2(workdir, tmp_path, capsys):
    assert main(["eval", "--data", str(tmp_path), "--model", str(workdir / "m.pecg"),
                 "--report", str(tmp_path / "r.json")]) == 2
    assert "manifest" in capsys.readouterr().err
    broken = tmp_path / "broken.pecg"
    broken.write_bytes((workdir / "m.pecg").read_bytes()[:100])
    assert main(["explain", "--model", str(broken), "--record", str(workdir / "ds" / "rec00001.csv"),
                 "--out", str(tmp_path / "k.json")]) == 2
    err = capsys.readouterr().err
    assert "broken.pecg" in err and "offset" in err
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("I,II\n1.0,2.0\n3.0\n")
    assert main(["mask", "--in", str(bad_csv), "--layout", "12x1", "--out", str(tmp_path / "o.csv")]) == 2
    assert "bad.csv:3" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["synth", "mask", "train", "eval", "explain"])
def test_help_lists_defaults(command):
    proc = subprocess.run([sys.executable, "-m", "patchecg", command, "--help"],
                          capture_output=True, text=True, check=True)
    assert "(default:" in proc.stdout
    options = [line.split()[0] for line in proc.stdout.splitlines() if line.strip().startswith("--")]
    assert options
