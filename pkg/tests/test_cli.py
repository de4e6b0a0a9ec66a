import csv
import io
import json

import numpy as np
import pytest

from conftest import random_spd
from watersic import cli
from watersic.container import encode_container
from watersic.covariance import CovarianceSet
from watersic.matcore import read_wsmx, write_wsmx
from watersic.pipeline import quantize_layer
from watersic.zsic import layer_distortion


@pytest.fixture
def files(tmp_path, rng):
    n = 16
    sigma = random_spd(rng, n)
    sigma[3, :] = sigma[:, 3] = 0
    w = rng.standard_normal((64, n))
    write_wsmx(tmp_path / "w.wsmx", w)
    write_wsmx(tmp_path / "s.wsmx", sigma)
    return tmp_path, w, sigma


def test_waterfill(capsys):
    assert cli.main(["waterfill", "--lambdas", "3,1", "--distortion", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rate"] == pytest.approx(0.8962406251803, abs=1e-9)
    assert out["tau"] == pytest.approx(0.5, abs=1e-9)


def test_waterfill_out_of_range(capsys):
    assert cli.main(["waterfill", "--lambdas", "1,1", "--distortion", "5"]) == 2
    assert "DistortionOutOfRange" in capsys.readouterr().err


def test_quantize_and_dequantize(files, capsys):
    path, w, sigma = files
    args = ["quantize", "--weights", str(path / "w.wsmx"), "--sigma-x", str(path / "s.wsmx")]
    assert cli.main(args + ["--rate", "3", "--out", str(path / "q.wsqz")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert set(stats) == {"rate", "entropy", "distortion", "gap_bits", "dead_features"}
    assert stats["dead_features"] == 1
    assert abs(stats["entropy"] - 3.0) < 0.05
    assert stats["gap_bits"] is not None

    assert cli.main(["dequantize", str(path / "q.wsqz"), "--out", str(path / "wh.wsmx")]) == 0
    w_hat = read_wsmx(path / "wh.wsmx")
    assert w_hat.shape == w.shape and not w_hat[:, 3].any()
    d = layer_distortion(w, w_hat, sigma)
    assert d == pytest.approx(stats["distortion"], rel=0.01)


def test_quantize_fixed_scale_matches_library(files, capsys):
    path, w, sigma = files
    out = path / "q.wsqz"
    args = ["quantize", "--weights", str(path / "w.wsmx"), "--sigma-x", str(path / "s.wsmx")]
    assert cli.main(args + ["--scale-c", "0.2", "--out", str(out)]) == 0
    assert out.read_bytes() == encode_container(quantize_layer(w, CovarianceSet.collapsed(sigma), 0.2))


def test_quantize_missing_file(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["quantize", "--weights", str(tmp_path / "nope"), "--sigma-x", "x", "--rate", "2", "--out", "o"])


def test_rate_and_scale_exclusive(files):
    path, _, _ = files
    with pytest.raises(SystemExit):
        cli.main(["quantize", "--weights", "a", "--sigma-x", "b", "--rate", "2", "--scale-c", "1", "--out", "o"])


def test_corrupt_container_reports_error(files, capsys):
    path, _, _ = files
    (path / "bad.wsqz").write_bytes(b"WSQZ" + bytes(40))
    assert cli.main(["dequantize", str(path / "bad.wsqz"), "--out", str(path / "o.wsmx")]) == 2
    assert "ChecksumFailure" in capsys.readouterr().err


def test_bench_rd_csv(tmp_path):
    out = tmp_path / "bench.csv"
    argv = ["bench-rd", "-a", "256", "-n", "8", "--rate", "3", "--seeds", "2", "--spacing", "watersic", "--csv", str(out)]
    assert cli.main(argv) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 2 and {r["spacing_mode"] for r in rows} == {"watersic"}


def test_bench_rd_stdout(capsys):
    argv = ["bench-rd", "-a", "128", "-n", "4", "--rate", "2", "--rate", "3", "--seeds", "5,6", "--lmmse", "on"]
    assert cli.main(argv) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 8


def test_on_off_parsing():
    with pytest.raises(SystemExit):
        cli.main(["bench-rd", "--lmmse", "maybe"])


def test_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS") for line in out)
