import numpy as np
import pytest

from nncompress import kvtext
from nncompress.artifact import compression_ratio
from nncompress.cli import main
from nncompress.gridfield import load_field

SPEC = "nt=3\nnlat=10\nnlon=16\npressures=500,850\nn_modes=3\n"
TINY = "profile=desk\nd=2\nwidth=16\nm=8\nepochs=2\nbatch_size=32\nsamples_per_epoch=640\nlog_every=20\n"


@pytest.fixture
def work(tmp_path):
    (tmp_path / "spec.kv").write_text(SPEC)
    (tmp_path / "tiny.kv").write_text(TINY)
    assert main(["synth", str(tmp_path / "spec.kv"), str(tmp_path / "f.nngf"), "--seed", "2"]) == 0
    return tmp_path


def run(capsys, *argv):
    capsys.readouterr()
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def metrics(text):
    return kvtext.loads("\n".join(l for l in text.splitlines() if not l.startswith("step=")))


def test_synth_deterministic_and_shaped(work, capsys):
    code, out = run(capsys, "synth", work / "spec.kv", work / "g.nngf", "--seed", "2")
    assert code == 0 and kvtext.loads(out.out)["shape"] == "3,2,10,16"
    assert (work / "g.nngf").read_bytes() == (work / "f.nngf").read_bytes()
    (work / "bad.kv").write_text("nt=3\nwhat=1\n")
    assert run(capsys, "synth", work / "bad.kv", work / "h.nngf")[0] == 1


def test_compress_stats_decompress(work, capsys):
    code, out = run(capsys, "compress", work / "f.nngf", work / "a.nncw", "--config", work / "tiny.kv", "--seed", "4")
    assert code == 0
    m = metrics(out.out)
    assert float(m["compression_ratio"]) == compression_ratio(load_field(work / "f.nngf"), work / "a.nncw")
    assert int(m["steps"]) == 40 and int(m["artifact_bytes"]) == (work / "a.nncw").stat().st_size

    code, out = run(capsys, "stats", work / "a.nncw", work / "f.nngf", "--quantile", "0.5",
                    "--hist", work / "h.kv", "--maps", work / "maps")
    assert code == 0
    pairs = kvtext.loads(out.out)
    assert float(pairs["weighted_rmse"]) == float(m["weighted_rmse"])
    assert float(pairs["quantile"]) == 0.5
    hist = kvtext.load(work / "h.kv")
    assert sum(kvtext.parse_ints(hist["counts"])) == 3 * 2 * 10 * 16
    assert load_field(work / "maps_std.nngf").shape == (1, 1, 10, 16)

    code, out = run(capsys, "decompress", work / "a.nncw", work / "r.nngf", "--grid", "lon=2,lat=2")
    assert code == 0 and load_field(work / "r.nngf").shape == (3, 2, 19, 32)
    code, _ = run(capsys, "decompress", work / "a.nncw", work / "n.nngf", "--workers", "2")
    assert code == 0 and load_field(work / "n.nngf").shape == (3, 2, 10, 16)

    (work / "grid.kv").write_text("lons=0,90,180,270\ntimes=0,3,6\n")
    code, _ = run(capsys, "decompress", work / "a.nncw", work / "c.nngf", "--grid", work / "grid.kv")
    assert code == 0 and load_field(work / "c.nngf").shape == (3, 2, 10, 4)


def test_compress_byte_identical(work, capsys):
    for name in ("a", "b"):
        assert run(capsys, "compress", work / "f.nngf", work / f"{name}.nncw", "--config", work / "tiny.kv",
                   "--seed", "9")[0] == 0
    assert (work / "a.nncw").read_bytes() == (work / "b.nncw").read_bytes()


def test_usage_errors(work, capsys):
    (work / "bad.kv").write_text(TINY + "widht=3\n")
    assert run(capsys, "compress", work / "f.nngf", work / "a.nncw", "--config", work / "bad.kv")[0] == 1
    assert run(capsys, "compress", work / "f.nngf", work / "a.nncw")[0] == 1  # missing --config
    assert run(capsys, "frobnicate")[0] == 1
    run(capsys, "compress", work / "f.nngf", work / "a.nncw", "--config", work / "tiny.kv")
    assert run(capsys, "stats", work / "a.nncw", work / "f.nngf", "--quantile", "1.5")[0] == 1
    assert run(capsys, "decompress", work / "a.nncw", work / "x.nngf", "--grid", "lon=0")[0] == 1
    assert run(capsys, "decompress", work / "a.nncw", work / "x.nngf", "--workers", "0")[0] == 1


def test_data_errors(work, capsys):
    assert run(capsys, "decompress", work / "missing.nncw", work / "x.nngf")[0] == 2
    (work / "junk.nncw").write_bytes(b"NNCW" + b"\0" * 40)
    assert run(capsys, "decompress", work / "junk.nncw", work / "x.nngf")[0] == 2
    assert run(capsys, "compress", work / "spec.kv", work / "a.nncw", "--config", work / "tiny.kv")[0] == 2
    run(capsys, "compress", work / "f.nngf", work / "a.nncw", "--config", work / "tiny.kv")
    (work / "spec2.kv").write_text(SPEC.replace("nlat=10", "nlat=12"))
    main(["synth", str(work / "spec2.kv"), str(work / "other.nngf")])
    assert run(capsys, "stats", work / "a.nncw", work / "other.nngf")[0] == 2


def test_numeric_failure(work, capsys):
    (work / "hot.kv").write_text(TINY + "learning_rate=1e6\n")
    code, out = run(capsys, "compress", work / "f.nngf", work / "a.nncw", "--config", work / "hot.kv")
    assert code == 3 and not (work / "a.nncw").exists()


def test_ablate(work, capsys):
    code, out = run(capsys, "ablate", work / "f.nngf", work / "rep.tsv", "--config", work / "tiny.kv", "--rows", "11")
    assert code == 0
    lines = (work / "rep.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["row", "scaling", "gelu", "xyz", "fourier", "skip", "batchnorm", "wrmse"]
    assert len(lines) == 2 and lines[1].startswith("11\t1\t1\t1\t1\t1\t1\t")
    code, _ = run(capsys, "ablate", work / "f.nngf", work / "rep.tsv", "--config", work / "tiny.kv",
                  "--rows", "full,no_fourier,3")
    assert code == 0 and len((work / "rep.tsv").read_text().splitlines()) == 4
    assert run(capsys, "ablate", work / "f.nngf", work / "rep.tsv", "--config", work / "tiny.kv", "--rows", "99")[0] == 1
