import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tensordec import io as tio
from tensordec.models import CPModel, FitTrace, TuckerModel


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(*[st.integers(1, 4)] * 3),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_tensor_round_trip_is_exact(tmp_path_factory, t):
    path = tmp_path_factory.mktemp("io") / "t.txt"
    tio.write_tensor(path, t)
    back = tio.read_tensor(path)
    assert back.shape == t.shape and np.array_equal(back, t)


def test_tensor_file_layout(tmp_path):
    t = np.arange(24, dtype=float).reshape((2, 3, 4), order="F")
    tio.write_tensor(tmp_path / "t.txt", t)
    lines = (tmp_path / "t.txt").read_text().splitlines()
    header = json.loads(lines[0])
    assert header["dims"] == [2, 3, 4] and header["kind"] == "tensor"
    # first index fastest
    assert [float(v) for v in lines[1:]] == list(range(24))


def test_entries_round_trip(tmp_path):
    t = np.random.default_rng(0).standard_normal((3, 2, 4))
    tio.write_tensor_entries(tmp_path / "e.txt", t)
    assert np.array_equal(tio.read_tensor_entries(tmp_path / "e.txt"), t)


def test_entries_infer_dims_and_report_bad_lines(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("0,0,0,1.5\n1,2,0,2\n")
    t = tio.read_tensor_entries(p)
    assert t.shape == (2, 3, 1) and t[1, 2, 0] == 2 and t.sum() == 3.5
    p.write_text("0,0,0,1\n0,0,x\n")
    with pytest.raises(tio.FormatError, match=":2:"):
        tio.read_tensor_entries(p)


def test_cp_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    m = CPModel(rng.random(3), tuple(rng.standard_normal((d, 3)) for d in (2, 4, 5)))
    tio.write_cp_model(tmp_path / "m.txt", m)
    back = tio.read_model(tmp_path / "m.txt")
    assert isinstance(back, CPModel)
    assert np.array_equal(back.weights, m.weights)
    assert all(np.array_equal(a, b) for a, b in zip(back.factors, m.factors))


def test_tucker_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    m = TuckerModel(rng.standard_normal((2, 3, 1)),
                    tuple(np.linalg.qr(rng.standard_normal((d, r)))[0] for d, r in ((4, 2), (5, 3), (3, 1))))
    tio.write_tucker_model(tmp_path / "m.txt", m)
    back = tio.read_model(tmp_path / "m.txt")
    assert isinstance(back, TuckerModel)
    assert np.array_equal(back.core, m.core)
    assert all(np.array_equal(a, b) for a, b in zip(back.factors, m.factors))


def test_mask_round_trip_and_all_shorthand(tmp_path):
    obs = np.random.default_rng(3).random((3, 3, 2)) > 0.3
    tio.write_mask(tmp_path / "m.txt", obs)
    assert np.array_equal(tio.read_mask(tmp_path / "m.txt"), obs)
    tio.write_mask(tmp_path / "all.txt", np.ones((2, 2, 2), dtype=bool))
    assert "all" in (tmp_path / "all.txt").read_text().splitlines()
    assert tio.read_mask(tmp_path / "all.txt").all()


def test_mask_needs_dims(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("0,0,0\n")
    with pytest.raises(tio.FormatError, match="dims"):
        tio.read_mask(p)
    assert tio.read_mask(p, (1, 2, 1)).tolist() == [[[True], [False]]]


@pytest.mark.parametrize("content, msg", [
    ("not json\n1\n", "not JSON"),
    ('{"kind": "cp", "version": 1}\n', "expected kind"),
    ('{"kind": "tensor", "version": 9, "order": 3}\n', "version"),
    ('{"kind": "tensor", "version": 1, "order": 3, "dims": [2, 1, 1], "layout": "mode1-colmajor"}\n1\n',
     "values for dims"),
])
def test_tensor_format_errors(tmp_path, content, msg):
    p = tmp_path / "bad.txt"
    p.write_text(content)
    with pytest.raises(tio.FormatError, match=msg):
        tio.read_tensor(p)


def test_truncated_cp_model(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text('{"kind": "cp", "version": 1, "R": 1, "dims": [2, 2, 2]}\n1\n1\n')
    with pytest.raises(tio.FormatError, match="truncated"):
        tio.read_cp_model(p)


def test_trace_csv_uses_17_digits(tmp_path):
    tr = FitTrace()
    tr.record(1 / 3, 0.25)
    tr.record(0.1, 0.5)
    tio.write_trace_csv(tmp_path / "t.csv", tr)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,relative_error"
    assert lines[1] == "1,0.33333333333333331"
    assert float(lines[2].split(",")[1]) == 0.1
    tio.write_timing_csv(tmp_path / "w.csv", tr)
    assert (tmp_path / "w.csv").read_text().splitlines()[1:] == ["1,0.25", "2,0.5"]
