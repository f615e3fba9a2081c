import subprocess
import sys

import numpy as np
import pytest

from pcaglue import io
from pcaglue.cli import build_parser, main
from pcaglue.types import DisplacementField


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--depth", "512", "--width", "64", "--magnitude", "5", "--noise-db", "30",
                 "--seed", "3", "--inclusion", "256,32,60", "--out", str(d / "pair")]) == 0
    assert main(["simulate", "--depth", "512", "--width", "64", "--training-set", "60", "--seed", "1",
                 "--out", str(d / "train")]) == 0
    assert main(["train", str(d / "train"), "--out", str(d / "basis.elpb")]) == 0
    return d


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--depth", "64", "--width", "8", "--seed", "5", "--out", str(tmp_path / name)]) == 0
    for f in ("fixed.elrf", "moving.elrf", "truth.eldf"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_from_config(tmp_path, capsys):
    cfg = tmp_path / "scene.cfg"
    cfg.write_text("# scene\ndepth = 64\nwidth = 8\nmotion = lateral-shift\nmagnitude = 0.5\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    truth = io.load_field(tmp_path / "truth.eldf")
    assert truth.shape == (64, 8) and np.all(truth.lateral == 0.5)
    cfg.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_train_on_copies_gives_one_component(tmp_path, capsys):
    fld = DisplacementField(np.arange(64.0).reshape(16, 4), np.zeros((16, 4)))
    for k in range(3):
        io.save_field(fld, tmp_path / f"f{k}.eldf")
    assert main(["train", str(tmp_path), "--out", str(tmp_path / "b.elpb")]) == 0
    assert io.load_basis(tmp_path / "b.elpb").N == 1
    assert "N=1" in capsys.readouterr().out


def test_estimate_pipeline(workdir, capsys):
    d = workdir
    out = d / "est.eldf"
    args = ["estimate", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), str(d / "basis.elpb"),
            "--truth", str(d / "pair/truth.eldf"), "--threads", "2", "--out", str(out)]
    assert main(args) == 0
    text = capsys.readouterr().out
    rec = dict(line.split("=", 1) for line in text.splitlines() if line.count("=") == 1)
    assert float(rec["median_abs_axial_error"]) <= 0.2
    assert rec["dominant_mode"] == "axial-compression"
    for key in ("residual", "time_dp_s", "time_fit_s", "time_refine_s"):
        assert key in rec
    assert "weight=0" in text
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_estimate_identical_frames_gives_zero(workdir):
    d = workdir
    out = d / "zero.eldf"
    fixed = str(d / "pair/fixed.elrf")
    assert main(["estimate", fixed, fixed, str(d / "basis.elpb"), "--out", str(out)]) == 0
    fld = io.load_field(out)
    assert not fld.axial.any() and not fld.lateral.any()


def test_missing_basis_exits_2(workdir, capsys):
    d = workdir
    code = main(["estimate", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), str(d / "missing.elpb")])
    assert code == 2
    assert "missing.elpb" in capsys.readouterr().err


def test_corrupt_input_exits_2(workdir, tmp_path):
    bad = tmp_path / "bad.elrf"
    bad.write_bytes(b"ELRF" + b"\0" * 3)
    assert main(["dp-full", str(bad), str(bad)]) == 2


def test_dp_full_strain_metrics(workdir, capsys):
    d = workdir
    assert main(["dp-full", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), "--no-refine",
                 "--out", str(d / "dp.eldf")]) == 0
    assert main(["strain", str(d / "dp.eldf"), "--out", str(d / "s.elsf")]) == 0
    capsys.readouterr()
    assert main(["metrics", str(d / "s.elsf"), "--target", "236,28,40,8", "--background", "236,2,40,8",
                 "--out", str(d / "m.txt")]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("target=236,28,40,8 background=236,2,40,8 snr=")
    assert (d / "m.txt").read_text().strip() == line


def test_metrics_rejects_overlap_and_bad_units(workdir):
    d = workdir
    s = str(d / "s2.elsf")
    assert main(["dp-full", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), "--no-refine",
                 "--out", str(d / "dp2.eldf")]) == 0
    assert main(["strain", str(d / "dp2.eldf"), "--out", s]) == 0
    assert main(["metrics", s, "--target", "236,28,40,8", "--background", "236,20,40,10"]) == 2
    assert main(["metrics", s, "--target", "1,1,1", "--background", "236,20,40,10"]) == 2
    assert main(["metrics", s, "--units", "mm", "--target", "4,3,1,1", "--background", "1,0,1,1"]) == 2
    assert main(["metrics", s, "--units", "mm", "--axial-spacing", "0.01925", "--lateral-spacing", "0.1155",
                 "--target", "4.5,3.2,0.8,1.0", "--background", "1,0.1,0.8,1.0"]) == 0


def test_strain_window_too_large_exits_2(workdir):
    assert main(["strain", str(workdir / "pair/truth.eldf"), "--window", "201"]) == 2


def test_bench_requires_five_repetitions(workdir):
    d = workdir
    args = ["bench", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), str(d / "basis.elpb")]
    assert main(args + ["--repetitions", "1"]) == 2
    assert main(["bench"]) == 2


def test_bench_records(workdir, capsys):
    d = workdir
    args = ["bench", str(d / "pair/fixed.elrf"), str(d / "pair/moving.elrf"), str(d / "basis.elpb"),
            "--p-list", "5,15", "--no-refine", "--threads", "1", "--out", str(d / "bench.txt")]
    assert main(args) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    recs = [dict(kv.split("=", 1) for kv in line.split()) for line in lines]
    assert [r["stage"] for r in recs] == ["init", "init", "full-dp"]
    for r in recs:
        assert {"m", "l", "N", "host", "p", "median_s"} <= set(r)
    assert float(recs[0]["ratio_full_dp"]) > 1


def test_help_documents_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        for action in p._actions:
            if action.option_strings and action.dest != "help":
                assert action.help, f"{name} {action.option_strings} lacks help"
    out = subprocess.run([sys.executable, "-m", "pcaglue.cli", "estimate", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--lines", "--refine", "--no-refine", "--threads", "--out"):
        assert flag in out.stdout


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["estimate"])
    assert exc.value.code == 2
