"""Text containers for tensors, models, masks and traces.

Every container starts with a single JSON header line followed by one
number per line, written with 17 significant digits so that values
round-trip exactly.  See ``docs/formats.md`` for the field-level layout.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .models import CPModel, FitTrace, TuckerModel
from .tensor import LAYOUT, as_tensor, from_flat, to_flat

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write(path, header: dict, blocks) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for block in blocks:
            for v in block:
                fh.write(fmt(v) + "\n")


def _read(path, kind: str):
    with open(path, encoding="ascii") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: header line is not JSON") from exc
        if header.get("kind") != kind:
            raise FormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
        if header.get("version") != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
        values = np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
    return header, values


def _colmajor(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).ravel(order="F")


def _take(values, pos, n, path):
    if pos + n > values.size:
        raise FormatError(f"{path}: truncated data")
    return values[pos:pos + n], pos + n


def write_tensor(path, t) -> None:
    t = as_tensor(t)
    header = {"kind": "tensor", "version": FORMAT_VERSION, "order": 3,
              "dims": list(t.shape), "layout": LAYOUT}
    _write(path, header, [to_flat(t)])


def read_tensor(path) -> np.ndarray:
    header, values = _read(path, "tensor")
    if header.get("order") != 3 or header.get("layout") != LAYOUT:
        raise FormatError(f"{path}: need order 3 and layout {LAYOUT!r}")
    dims = header["dims"]
    if values.size != int(np.prod(dims)):
        raise FormatError(f"{path}: {values.size} values for dims {dims}")
    return from_flat(values, dims)


def write_tensor_entries(path, t) -> None:
    """Plain-text form: one ``i,j,k,value`` line per entry, 0-based, layout order."""
    t = as_tensor(t)
    I, J, K = t.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# dims {I} {J} {K}\n")
        for k in range(K):
            for j in range(J):
                for i in range(I):
                    fh.write(f"{i},{j},{k},{fmt(t[i, j, k])}\n")


def read_tensor_entries(path, dims=None) -> np.ndarray:
    rows = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "dims" and dims is None:
                    dims = tuple(int(p) for p in parts[1:4])
                continue
            try:
                i, j, k, v = line.split(",")
                rows.append((int(i), int(j), int(k), float(v)))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: expected i,j,k,value") from exc
    if dims is None:
        if not rows:
            raise FormatError(f"{path}: no entries and no dims")
        dims = tuple(max(r[n] for r in rows) + 1 for n in range(3))
    t = np.zeros(dims)
    for i, j, k, v in rows:
        t[i, j, k] = v
    return t


def write_cp_model(path, model: CPModel) -> None:
    header = {"kind": "cp", "version": FORMAT_VERSION, "R": model.rank,
              "dims": list(model.dims), "layout": "colmajor"}
    _write(path, header, [model.weights] + [_colmajor(f) for f in model.factors])


def read_cp_model(path) -> CPModel:
    header, values = _read(path, "cp")
    R, dims = header["R"], header["dims"]
    w, pos = _take(values, 0, R, path)
    factors = []
    for d in dims:
        block, pos = _take(values, pos, d * R, path)
        factors.append(block.reshape((d, R), order="F"))
    if pos != values.size:
        raise FormatError(f"{path}: trailing data")
    return CPModel(w, tuple(factors))


def write_tucker_model(path, model: TuckerModel) -> None:
    header = {"kind": "tucker", "version": FORMAT_VERSION, "ranks": list(model.ranks),
              "dims": list(model.dims), "layout": LAYOUT}
    _write(path, header, [to_flat(model.core)] + [_colmajor(f) for f in model.factors])


def read_tucker_model(path) -> TuckerModel:
    header, values = _read(path, "tucker")
    ranks, dims = header["ranks"], header["dims"]
    core, pos = _take(values, 0, int(np.prod(ranks)), path)
    factors = []
    for d, r in zip(dims, ranks):
        block, pos = _take(values, pos, d * r, path)
        factors.append(block.reshape((d, r), order="F"))
    if pos != values.size:
        raise FormatError(f"{path}: trailing data")
    return TuckerModel(from_flat(core, ranks), tuple(factors))


def read_model(path):
    with open(path, encoding="ascii") as fh:
        kind = json.loads(fh.readline()).get("kind")
    if kind == "cp":
        return read_cp_model(path)
    if kind == "tucker":
        return read_tucker_model(path)
    raise FormatError(f"{path}: not a model container (kind={kind!r})")


def write_mask(path, observed: np.ndarray) -> None:
    """Observed entries as ``i,j,k`` lines, or the single line ``all``."""
    observed = np.asarray(observed, dtype=bool)
    I, J, K = observed.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# dims {I} {J} {K}\n")
        if observed.all():
            fh.write("all\n")
            return
        for k in range(K):
            for j in range(J):
                for i in range(I):
                    if observed[i, j, k]:
                        fh.write(f"{i},{j},{k}\n")


def read_mask(path, dims=None) -> np.ndarray:
    entries = []
    all_observed = False
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "dims" and dims is None:
                    dims = tuple(int(p) for p in parts[1:4])
                continue
            if line.lower() == "all":
                all_observed = True
                continue
            try:
                entries.append(tuple(int(p) for p in line.split(",")))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: expected i,j,k") from exc
            if len(entries[-1]) != 3:
                raise FormatError(f"{path}:{lineno}: expected i,j,k")
    if dims is None:
        raise FormatError(f"{path}: mask dims unknown")
    obs = np.zeros(tuple(dims), dtype=bool)
    if all_observed:
        obs[:] = True
    for e in entries:
        obs[e] = True
    return obs


def write_trace_csv(path, trace: FitTrace) -> None:
    """Deterministic per-iteration trace (no timings)."""
    has_obj = len(trace.objective) == trace.iterations and trace.iterations > 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "relative_error"] + (["objective"] if has_obj else []))
        for it, err in enumerate(trace.relative_errors, 1):
            row = [it, fmt(err)]
            if has_obj:
                row.append(fmt(trace.objective[it - 1]))
            w.writerow(row)


def write_timing_csv(path, trace: FitTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "wall_time_s"])
        for it, s in enumerate(trace.wall_times, 1):
            w.writerow([it, fmt(s)])


def write_rows_csv(path, header, rows) -> None:
    """CSV with floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj
