import csv
import hashlib
import json

import numpy as np
import pytest

from tensordec import io as tio
from tensordec.cli import main
from tensordec.cp import cp_reconstruct
from tensordec.models import CPModel


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse errors
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture
def rank1_file(tmp_path):
    rng = np.random.default_rng(0)
    model = CPModel([1.0], tuple(rng.random((d, 1)) + 0.5 for d in (5, 6, 7)))
    path = tmp_path / "rank1.txt"
    tio.write_tensor(path, cp_reconstruct(model))
    return path


def test_decompose_rank_one(rank1_file, tmp_path):
    out = tmp_path / "out"
    assert run("decompose", "--input", rank1_file, "--alg", "cp-als", "--rank", 1,
               "--output-dir", out) == 0
    trace = read_csv(out / "trace.csv")
    assert float(trace[-1]["relative_error"]) < 1e-10
    m = manifest(out)
    assert m["config"]["seed"] == 0 and m["config"]["rank"] == 1
    assert m["results"]["converged"] is True
    model = tio.read_model(out / "model.txt")
    assert model.rank == 1 and model.dims == (5, 6, 7)


@pytest.mark.parametrize("alg, extra", [
    ("cp-als", ["--rank", 3]), ("hooi", ["--ranks", "2,2,2"]), ("smals", ["--rank", 3, "--sample", 2]),
])
def test_reruns_are_byte_identical(tmp_path, alg, extra):
    src = tmp_path / "t.txt"
    assert run("synth", "--dims", "6,5,4", "--seed", 3, "--output", src) == 0
    digests = []
    for name in ("a", "b"):
        run("decompose", "--input", src, "--alg", alg, *extra, "--seed", 7,
            "--max-iters", 30, "--output-dir", tmp_path / name)
        digests.append(hashlib.sha256((tmp_path / name / "trace.csv").read_bytes()).hexdigest())
        assert (tmp_path / name / "model.txt").exists()
    assert digests[0] == digests[1]


def test_input_not_mutated(rank1_file, tmp_path):
    before = rank1_file.read_bytes()
    run("decompose", "--input", rank1_file, "--alg", "hooi", "--ranks", "1,1,1", "--output-dir", tmp_path / "o")
    run("complete", "--input", rank1_file, "--rank", 1, "--output-dir", tmp_path / "c", "--max-iters", 5)
    assert rank1_file.read_bytes() == before


def test_exit_codes(rank1_file, tmp_path, capsys):
    assert run("decompose", "--input", tmp_path / "missing.txt", "--rank", 1,
               "--output-dir", tmp_path / "x") == 1
    assert run("decompose", "--input", rank1_file, "--alg", "nope", "--rank", 1,
               "--output-dir", tmp_path / "x") == 1
    assert run("decompose", "--input", rank1_file, "--alg", "smals", "--rank", 2,
               "--output-dir", tmp_path / "x") == 1  # no --sample
    assert run("decompose", "--input", rank1_file, "--rank", 0, "--output-dir", tmp_path / "x") == 1
    # a random tensor cannot converge in 2 sweeps; outputs still written
    src = tmp_path / "rand.txt"
    run("synth", "--dims", "8,8,8", "--output", src)
    out = tmp_path / "nc"
    assert run("decompose", "--input", src, "--alg", "smals", "--rank", 4, "--sample", 2,
               "--max-iters", 2, "--output-dir", out) == 2
    assert manifest(out)["results"]["converged"] is False
    assert len(read_csv(out / "trace.csv")) == 2
    capsys.readouterr()


def test_bad_tensor_file_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text('{"kind": "cp", "version": 1}\n1\n')
    assert run("decompose", "--input", bad, "--rank", 1, "--output-dir", tmp_path / "o") == 1
    assert "expected kind" in capsys.readouterr().err


def test_smals_iterations_cheaper_than_als(tmp_path):
    src = tmp_path / "big.txt"
    run("synth", "--dims", "60,60,60", "--seed", 1, "--output", src)
    mean = {}
    for alg, extra in (("cp-als", []), ("smals", ["--sample", 5])):
        out = tmp_path / alg
        run("decompose", "--input", src, "--alg", alg, "--rank", 20, *extra,
            "--max-iters", 15, "--output-dir", out)
        mean[alg] = np.mean([float(r["wall_time_s"]) for r in read_csv(out / "timing.csv")])
    assert mean["smals"] < mean["cp-als"], mean


def test_complete_with_mask(tmp_path):
    rng = np.random.default_rng(2)
    t = cp_reconstruct(CPModel(np.ones(2), tuple(rng.standard_normal((6, 2)) for _ in range(3))))
    src, mask = tmp_path / "t.txt", tmp_path / "mask.txt"
    tio.write_tensor_entries(src, t)
    observed = rng.random(t.shape) >= 0.2
    tio.write_mask(mask, observed)
    out = tmp_path / "c"
    code = run("complete", "--input", src, "--mask", mask, "--rank", 2, "--lambda", 0,
               "--output-dir", out)
    assert code == 0
    completed = tio.read_tensor(out / "completed.txt")
    assert np.array_equal(completed[observed], t[observed])
    hidden = ~observed
    assert np.linalg.norm(completed[hidden] - t[hidden]) / np.linalg.norm(t[hidden]) < 1e-2
    assert manifest(out)["results"]["hidden"] == int(hidden.sum())


def test_pipeline_build_dims(tmp_path):
    out = tmp_path / "b"
    assert run("pipeline", "build", "--output-dir", out) == 0
    m = manifest(out)
    assert m["results"]["dims"] == [13, 7, 21]
    assert tio.read_tensor(out / "cases.txt").shape == (13, 7, 21)
    rows = read_csv(out / "dataset.csv")
    assert len(rows) == 13 * 7 * 21
    assert float(rows[0]["normalized"]) == pytest.approx(67 / 274534, rel=1e-15)


def test_pipeline_hotspots_on_spike_fixture(spike_files, tmp_path, capsys):
    cases, pop, _ = spike_files
    out = tmp_path / "h"
    code = run("pipeline", "hotspots", "--cases", cases, "--population", pop,
               "--rank", 1, "--lambda", 0, "--k", 5, "--output-dir", out)
    assert code == 0
    flags = json.loads((out / "hotspots.json").read_text())["flags"]
    assert [(f["region"], f["quarter"], f["week"]) for f in flags] == [("Region05,Testland", 4, 2)]
    assert flags[0]["week_start"] == "2021-01-06"  # global week 41
    assert "1 flag(s)" in capsys.readouterr().out
    assert manifest(out)["config"]["k_sigma"] == 5.0


def test_pipeline_surfaces_ingestion_errors(tmp_path, capsys):
    bad = tmp_path / "cases.csv"
    bad.write_text("date,county,state,fips,cases,deaths\n2020-04-01,Warren,New Jersey,34041,x,0\n")
    assert run("pipeline", "build", "--cases", bad, "--output-dir", tmp_path / "o") == 1
    assert "line 2: bad case count" in capsys.readouterr().err


def test_pipeline_predict_table(tmp_path):
    out = tmp_path / "p"
    code = run("pipeline", "predict", "--target", "quarter:Warren:7", "--output-dir", out)
    assert code in (0, 2)
    rows = read_csv(out / "prediction.csv")
    assert set(rows[0]) >= {"status", "actual", "predicted", "initial"}
    assert len(rows) == 91 and {r["region"] for r in rows} == {"Warren,New Jersey"}
    hidden = [r for r in rows if r["status"] == "hidden"]
    assert [int(r["week"]) for r in hidden] == list(range(1, 14))
    assert {int(r["quarter"]) for r in hidden} == {7}
    for r in rows:
        if r["status"] == "observed":
            assert r["actual"] == r["predicted"]
    assert all(np.isfinite(float(r["predicted"])) for r in hidden)
    assert manifest(out)["results"]["hidden_entries"] == 13


def test_pipeline_report_files(tmp_path):
    out = tmp_path / "r"
    assert run("pipeline", "report", "--output-dir", out, "--compare-iters", 5,
               "--random-size", 12, "--max-iters", 3000) in (0, 2)
    plots = {p.name for p in (out / "plots").iterdir()}
    for name in ("reconstruction_overlay.csv", "residuals.csv", "hotspots.json",
                 "warren_q7_prediction.csv", "lrat_convergence.csv"):
        assert name in plots, sorted(plots)
    assert (out / "report.json").exists() and (out / "manifest.json").exists()


def test_version_flag(capsys):
    assert run("--version") == 0
    assert capsys.readouterr().out.startswith("tensordec ")
