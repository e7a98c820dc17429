"""Command-line interface.

::

    tensordec decompose --input T.txt --output-dir out --alg cp-als --rank 3
    tensordec complete  --input T.txt --mask M.txt --output-dir out --rank 6
    tensordec synth     --dims 60,60,60 --rank 20 --output T.txt
    tensordec pipeline  {build,hotspots,predict,report} --output-dir out

Exit status is 0 when the fit converged, 2 when it stopped at the
iteration limit (outputs are still written) or diverged, and 1 for usage
and input errors.  ``TENSORDEC_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from datetime import date
from io import StringIO
from pathlib import Path

import numpy as np

from . import __version__, epi
from . import io as tio
from .cp import cp_als, cp_reconstruct
from .lrat import (
    LratConfig, LratDivergence, ObservationMask, estimate_lambda, estimated_rank, impose_observed, lrat_iterate,
)
from .models import CPModel
from .smals import smals
from .tensor import ShapeError
from .tucker import hooi, tucker_reconstruct

log = logging.getLogger("tensordec")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2
PIPELINE_TOL = 1e-5
PIPELINE_MAX_ITERS = 20000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three values, got {text!r}")
    return vals


def read_tensor_any(path) -> np.ndarray:
    """Read either the JSON-header container or the ``i,j,k,value`` form."""
    with open(path, encoding="ascii") as fh:
        first = fh.readline().lstrip()
    if first.startswith("{"):
        return tio.read_tensor(path)
    return tio.read_tensor_entries(path)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(out: Path, command: str, config: dict, results: dict, outputs) -> None:
    tio.write_json(out / "manifest.json", {
        "tool": "tensordec", "version": __version__, "command": command,
        "config": config, "results": results, "outputs": sorted(outputs),
    })


def _write_fit(out: Path, model, trace) -> list:
    if isinstance(model, CPModel):
        tio.write_cp_model(out / "model.txt", model)
    else:
        tio.write_tucker_model(out / "model.txt", model)
    tio.write_trace_csv(out / "trace.csv", trace)
    tio.write_timing_csv(out / "timing.csv", trace)
    return ["model.txt", "trace.csv", "timing.csv"]


def _status(converged: bool) -> int:
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# decompose / complete / synth


def cmd_decompose(args) -> int:
    t = read_tensor_any(args.input)
    max_iters = args.max_iters if args.max_iters is not None else (200 if args.alg == "hooi" else 500)
    config = {"alg": args.alg, "input": str(args.input), "tol": args.tol,
              "max_iters": max_iters, "seed": args.seed, "dims": list(t.shape)}
    if args.alg == "hooi":
        ranks = args.ranks or ((args.rank,) * 3 if args.rank else None)
        if ranks is None:
            raise UsageError("hooi needs --ranks R1,R2,R3 (or --rank)")
        config.update(ranks=list(ranks), init=args.init)
        model, trace = hooi(t, ranks, max_iters=max_iters, tol=args.tol, init=args.init, seed=args.seed)
    else:
        if args.rank is None:
            raise UsageError(f"{args.alg} needs --rank")
        config["rank"] = args.rank
        if args.alg == "cp-als":
            model, trace = cp_als(t, args.rank, max_iters=max_iters, tol=args.tol, seed=args.seed)
        else:
            if args.sample is None:
                raise UsageError("smals needs --sample")
            config["sample"] = args.sample
            model, trace = smals(t, args.rank, args.sample, max_iters=max_iters, tol=args.tol, seed=args.seed)
    out = _out_dir(args.output_dir)
    outputs = _write_fit(out, model, trace)
    results = {"converged": trace.converged, "iterations": trace.iterations,
               "final_relative_error": trace.relative_errors[-1] if trace.iterations else None}
    _manifest(out, "decompose", config, results, outputs + ["manifest.json"])
    print(f"{args.alg}: {trace.iterations} iterations, relative error "
          f"{results['final_relative_error']:.3e}, converged={trace.converged}")
    return _status(trace.converged)


def _lrat_config(args, default_tol=1e-8, default_iters=2000) -> LratConfig:
    return LratConfig(
        max_rank=args.rank, lam=args.lam if args.lam is not None else 0.0,
        t_scale=args.t_scale, tol=args.tol if args.tol is not None else default_tol,
        max_iters=args.max_iters if args.max_iters is not None else default_iters,
    )


def cmd_complete(args) -> int:
    if args.rank is None:
        raise UsageError("complete needs --rank (the maximum rank)")
    c = read_tensor_any(args.input)
    if args.mask:
        omega = ObservationMask(tio.read_mask(args.mask, c.shape))
    else:
        omega = ObservationMask.full(c.shape)
    if omega.count == 0:
        raise UsageError("mask has no observed entries")
    if args.lam is None:
        args.lam = estimate_lambda(c, omega)
    cfg = _lrat_config(args)
    model, trace = lrat_iterate(c, omega.observed, cfg, args.seed)
    completed = impose_observed(c, cp_reconstruct(model), omega.observed)
    rank = estimated_rank(model)
    out = _out_dir(args.output_dir)
    tio.write_tensor(out / "completed.txt", completed)
    outputs = _write_fit(out, model, trace) + ["completed.txt", "manifest.json"]
    results = {"estimated_rank": rank, "observed": omega.count, "hidden": int(c.size - omega.count),
               "iterations": trace.iterations, "converged": trace.converged,
               "final_relative_error": trace.relative_errors[-1]}
    config = {"input": str(args.input), "mask": str(args.mask) if args.mask else None,
              "max_rank": cfg.max_rank, "lambda": cfg.lam, "t_scale": cfg.t_scale,
              "tol": cfg.tol, "max_iters": cfg.max_iters, "merge_tol": cfg.merge_tol, "seed": args.seed}
    _manifest(out, "complete", config, results, outputs)
    print(f"completed {results['hidden']} entries, estimated rank {rank}, converged={trace.converged}")
    return _status(trace.converged)


def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    dims = args.dims
    if args.rank:
        factors = tuple(rng.standard_normal((d, args.rank)) for d in dims)
        model = CPModel(np.ones(args.rank), factors)
        t = cp_reconstruct(model)
    else:
        t = rng.random(dims)
    if args.noise:
        t = t + args.noise * rng.standard_normal(dims)
    tio.write_tensor(args.output, t)
    print(f"wrote {args.output} dims={tuple(dims)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# pipeline


def _load_dataset(args) -> epi.EpiDataset:
    if args.population:
        with open(args.population, encoding="utf-8") as fh:
            pop = epi.read_population(fh)
    else:
        pop = epi.read_population(_fixture_text("nj_population.csv"))
    if args.cases:
        with open(args.cases, encoding="utf-8") as fh:
            return epi.load_dataset(fh, pop)
    return epi.load_dataset(_fixture_text("nj_cases.csv"), pop)


def _fixture_text(name):
    return StringIO(epi.fixture_path(name).read_text())


def _pipeline_config(args, ds) -> LratConfig:
    if args.lam is None:
        args.lam = epi.default_lambda(ds)
    return _lrat_config(args, PIPELINE_TOL, PIPELINE_MAX_ITERS)


def _cfg_dict(args, cfg: LratConfig) -> dict:
    return {"cases": str(args.cases) if args.cases else "bundled:nj_cases.csv",
            "population": str(args.population) if args.population else "bundled:nj_population.csv",
            "max_rank": cfg.max_rank, "lambda": cfg.lam, "t_scale": cfg.t_scale, "tol": cfg.tol,
            "max_iters": cfg.max_iters, "merge_tol": cfg.merge_tol, "seed": args.seed}


def _dataset_rows(ds: epi.EpiDataset, values: dict):
    W, Q, R = ds.dims
    names = list(values)
    rows = []
    for r in range(R):
        for q in range(Q):
            for w in range(W):
                rows.append([ds.region_labels[r], q + 1, w + 1, q * W + w + 1,
                             ds.week_start(q, w).isoformat()]
                            + [float(values[n][w, q, r]) for n in names])
    return ["region", "quarter", "week", "global_week", "week_start"] + names, rows


def cmd_build(args) -> int:
    ds = _load_dataset(args)
    norm = epi.normalize_by_population(ds)
    roc = epi.rate_of_change(norm)
    out = _out_dir(args.output_dir)
    tio.write_tensor(out / "cases.txt", ds.tensor)
    tio.write_tensor(out / "normalized.txt", norm.tensor)
    tio.write_tensor(out / "rate_of_change.txt", roc.tensor)
    header, rows = _dataset_rows(ds, {"cases": ds.tensor, "normalized": norm.tensor,
                                      "rate_of_change": roc.tensor})
    tio.write_rows_csv(out / "dataset.csv", header, rows)
    results = {"dims": list(ds.dims), "regions": ds.region_labels, "quarters": ds.quarter_labels,
               "weeks": ds.week_labels, "population": ds.population,
               "diagnostics": roc.diagnostics}
    config = {"cases": str(args.cases) if args.cases else "bundled:nj_cases.csv",
              "population": str(args.population) if args.population else "bundled:nj_population.csv",
              "start": ds.start.isoformat(), "weeks_per_quarter": ds.dims[0], "quarters": ds.dims[1]}
    _manifest(out, "pipeline build", config, results,
              ["cases.txt", "normalized.txt", "rate_of_change.txt", "dataset.csv", "manifest.json"])
    print(f"built tensor dims={ds.dims}")
    return EXIT_OK


def _hotspot_outputs(out: Path, roc, report, prefix="") -> list:
    W, Q, R = roc.dims
    thr = report.thresholds
    rows = []
    for r in range(R):
        for q in range(Q):
            for w in range(W):
                rows.append([roc.region_labels[r], q + 1, w + 1, q * W + w + 1,
                             float(roc.tensor[w, q, r]), float(report.reconstruction[w, q, r]),
                             float(report.residuals[w, q, r]), float(thr[r])])
    tio.write_rows_csv(out / f"{prefix}residuals.csv",
                       ["region", "quarter", "week", "global_week", "rate_of_change",
                        "reconstruction", "residual", "threshold"], rows)
    tio.write_json(out / f"{prefix}hotspots.json", {
        "threshold_rule": report.threshold_rule, "k": report.k,
        "flags": [{"region": f.region, "quarter": f.quarter + 1, "week": f.week + 1,
                   "week_start": roc.week_start(f.quarter, f.week).isoformat(),
                   "residual": f.residual, "threshold": f.threshold} for f in report.flags],
        "regions": {lab: {"mean": report.mean[i], "std": report.std[i], "threshold": thr[i]}
                    for i, lab in enumerate(roc.region_labels)},
    })
    return [f"{prefix}residuals.csv", f"{prefix}hotspots.json"]


def cmd_hotspots(args) -> int:
    ds = _load_dataset(args)
    roc = epi.rate_of_change(epi.normalize_by_population(ds))
    cfg = _pipeline_config(args, roc)
    report = epi.hotspot_detect(roc, cfg, k=args.k_sigma, seed=args.seed)
    out = _out_dir(args.output_dir)
    outputs = _hotspot_outputs(out, roc, report)
    tio.write_trace_csv(out / "trace.csv", report.trace)
    config = dict(_cfg_dict(args, cfg), k_sigma=args.k_sigma)
    results = {"flags": len(report.flags), "iterations": report.trace.iterations,
               "converged": report.trace.converged, "diagnostics": roc.diagnostics}
    _manifest(out, "pipeline hotspots", config, results, outputs + ["trace.csv", "manifest.json"])
    for f in report.flags:
        print(f"{f.region}\tquarter {f.quarter + 1}\tweek {f.week + 1}\t"
              f"residual {f.residual:.4g} > {f.threshold:.4g}")
    print(f"{len(report.flags)} flag(s)")
    return _status(report.trace.converged)


def _prediction_table(ds, completed, pred, entries):
    """Full timelines of the target regions, each entry marked observed/hidden."""
    W, Q, _ = ds.dims
    hidden = {(w, q, r) for w, q, r in entries}
    init = {(r["week"] - 1, r["quarter"] - 1, ds.region_index(r["region"])): r["initial"] for r in pred.rows}
    rows = []
    for r in sorted({e[2] for e in entries}):
        for q in range(Q):
            for w in range(W):
                key = (w, q, r)
                is_hidden = key in hidden
                rows.append([ds.region_labels[r], q + 1, w + 1, q * W + w + 1,
                             ds.week_start(q, w).isoformat(),
                             "hidden" if is_hidden else "observed", float(ds.tensor[key]),
                             float(init[key]) if is_hidden else float(ds.tensor[key]),
                             float(completed.tensor[key])])
    header = ["region", "quarter", "week", "global_week", "week_start", "status",
              "actual", "initial", "predicted"]
    return header, rows


def _run_prediction(out: Path, ds, target_text, cfg, seed, prefix=""):
    target = epi.parse_target(target_text)
    completed, pred = epi.predict_missing(ds, target, cfg, seed)
    header, rows = _prediction_table(ds, completed, pred, target.entries(ds))
    tio.write_rows_csv(out / f"{prefix}prediction.csv", header, rows)
    tio.write_trace_csv(out / f"{prefix}completion_trace.csv", pred.trace)
    return completed, pred, [f"{prefix}prediction.csv", f"{prefix}completion_trace.csv"]


def cmd_predict(args) -> int:
    ds = epi.normalize_by_population(_load_dataset(args))
    cfg = _pipeline_config(args, ds)
    out = _out_dir(args.output_dir)
    completed, pred, outputs = _run_prediction(out, ds, args.target, cfg, args.seed)
    tio.write_tensor(out / "completed.txt", completed.tensor)
    config = dict(_cfg_dict(args, cfg), target=args.target)
    results = {"hidden_entries": len(pred.rows), "estimated_rank": pred.estimated_rank,
               "hidden_relative_error": pred.hidden_relative_error,
               "iterations": pred.trace.iterations, "converged": pred.trace.converged}
    _manifest(out, "pipeline predict", config, results, outputs + ["completed.txt", "manifest.json"])
    print(f"{args.target}: {len(pred.rows)} hidden entries, relative error "
          f"{pred.hidden_relative_error:.3g}, estimated rank {pred.estimated_rank}")
    for row in pred.rows:
        print(f"{row['region']}\tQ{row['quarter']} W{row['week']}\tactual {row['actual']:.4g}"
              f"\tpredicted {row['predicted']:.4g}")
    return _status(pred.trace.converged)


def _global_week_of(ds, day: date) -> tuple:
    g = (day - ds.start).days // 7
    return divmod(g, ds.dims[0])[::-1]  # (week, quarter)


def cmd_report(args) -> int:
    """Plot data for every figure analogue plus a JSON summary."""
    raw = _load_dataset(args)
    ds = epi.normalize_by_population(raw)
    roc = epi.rate_of_change(ds)
    cfg = _pipeline_config(args, ds)
    out = _out_dir(args.output_dir)
    plots = _out_dir(out / "plots")
    summary: dict = {"dims": list(ds.dims)}
    files = []
    W, Q, R = ds.dims

    # CP vs HOOI reconstructions
    t0 = time.perf_counter()
    cp_model, cp_trace = cp_als(ds.tensor, args.cp_rank, seed=args.seed)
    cp_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    tk_model, tk_trace = hooi(ds.tensor, args.ranks or (3, 3, 3))
    tk_time = time.perf_counter() - t0
    cp_rec, tk_rec = cp_reconstruct(cp_model), tucker_reconstruct(tk_model)
    header, rows = _dataset_rows(ds, {"actual": ds.tensor, "cp": cp_rec, "hooi": tk_rec})
    tio.write_rows_csv(plots / "reconstruction_overlay.csv", header, rows)
    files.append("plots/reconstruction_overlay.csv")
    summary["cp_vs_hooi"] = {
        "cp_rank": args.cp_rank, "hooi_ranks": list(tk_model.ranks),
        "cp_relative_error": cp_trace.relative_errors[-1], "cp_seconds": cp_time,
        "cp_iterations": cp_trace.iterations,
        "hooi_relative_error": tk_trace.relative_errors[-1], "hooi_seconds": tk_time,
        "hooi_iterations": tk_trace.iterations,
    }

    # per-region snapshot, third week of January 2021
    w, q = _global_week_of(ds, date(2021, 1, 15))
    rows = [[ds.region_labels[r], float(ds.tensor[w, q, r]), float(cp_rec[w, q, r])] for r in range(R)]
    tio.write_rows_csv(plots / "regions_2021-01-15_week.csv", ["region", "actual", "cp"], rows)
    files.append("plots/regions_2021-01-15_week.csv")

    # cross patterns: week 2 across quarters, and weeks of quarter 3
    rows = []
    for qq in range(Q):
        rows.append(["week2_by_quarter", qq + 1, float(ds.tensor[1, qq].sum()), float(cp_rec[1, qq].sum())])
    for ww in range(W):
        rows.append(["quarter3_by_week", ww + 1, float(ds.tensor[ww, 2].sum()), float(cp_rec[ww, 2].sum())])
    tio.write_rows_csv(plots / "cross_pattern.csv", ["slice", "index", "actual", "cp"], rows)
    files.append("plots/cross_pattern.csv")
    summary["cross_pattern"] = {
        "week2_peak_quarter": {"actual": int(ds.tensor[1].sum(axis=1).argmax()) + 1,
                               "cp": int(cp_rec[1].sum(axis=1).argmax()) + 1},
        "quarter3_peak_week": {"actual": int(ds.tensor[:, 2].sum(axis=1).argmax()) + 1,
                               "cp": int(cp_rec[:, 2].sum(axis=1).argmax()) + 1},
    }

    # weekly increments of one region in quarter 7
    essex = ds.region_index(args.region_focus)
    roc_cp = epi.rate_of_change(epi.EpiDataset(cp_rec, ds.region_labels, ds.quarter_labels,
                                               ds.week_labels, ds.population, ds.start))
    rows = [[ww + 1, ds.week_start(Q - 1, ww).isoformat(), float(roc.tensor[ww, Q - 1, essex]),
             float(roc_cp.tensor[ww, Q - 1, essex])] for ww in range(W)]
    tio.write_rows_csv(plots / "region_focus_q7_increments.csv",
                       ["week", "week_start", "actual", "cp"], rows)
    files.append("plots/region_focus_q7_increments.csv")

    # SMALS vs ALS error/time traces on the case tensor and a random tensor
    rng = np.random.default_rng(args.seed)
    rand = rng.random((args.random_size,) * 3)
    for name, tensor, rank, s in (("cases", ds.tensor, args.cp_rank, args.sample),
                                  ("random", rand, args.cp_rank, args.sample)):
        _, a_tr = cp_als(tensor, rank, max_iters=args.compare_iters, seed=args.seed)
        _, s_tr = smals(tensor, rank, s, max_iters=args.compare_iters, seed=args.seed)
        n = max(a_tr.iterations, s_tr.iterations)
        pad = lambda xs: [float(xs[i]) if i < len(xs) else "" for i in range(n)]
        rows = list(zip(range(1, n + 1), pad(a_tr.relative_errors), pad(np.cumsum(a_tr.wall_times)),
                        pad(s_tr.relative_errors), pad(np.cumsum(s_tr.wall_times))))
        tio.write_rows_csv(plots / f"als_vs_smals_{name}.csv",
                           ["iteration", "als_error", "als_elapsed_s", "smals_error", "smals_elapsed_s"], rows)
        files.append(f"plots/als_vs_smals_{name}.csv")
        summary[f"als_vs_smals_{name}"] = {
            "rank": rank, "sample": s, "als_mean_iteration_s": a_tr.mean_iteration_time,
            "smals_mean_iteration_s": s_tr.mean_iteration_time,
            "als_final_error": a_tr.relative_errors[-1], "smals_final_error": s_tr.relative_errors[-1],
        }

    # LRAT estimation and convergence on the full tensor
    lrat_model, lrat_trace = epi._scaled_fit(ds.tensor, None, cfg, args.seed)
    lrat_rec = cp_reconstruct(lrat_model)
    header, rows = _dataset_rows(ds, {"actual": ds.tensor, "lrat": lrat_rec})
    tio.write_rows_csv(plots / "lrat_estimation.csv", header, rows)
    tio.write_trace_csv(plots / "lrat_convergence.csv", lrat_trace)
    files += ["plots/lrat_estimation.csv", "plots/lrat_convergence.csv"]
    summary["lrat"] = {"lambda": cfg.lam, "estimated_rank": estimated_rank(lrat_model),
                       "iterations": lrat_trace.iterations, "converged": lrat_trace.converged,
                       "relative_error": lrat_trace.relative_errors[-1]}

    # hotspots (residual and threshold series per region)
    hs_cfg = LratConfig(cfg.max_rank, epi.default_lambda(roc), cfg.t_scale, cfg.max_iters, cfg.tol)
    hs = epi.hotspot_detect(roc, hs_cfg, k=args.k_sigma, seed=args.seed)
    files += ["plots/" + f for f in _hotspot_outputs(plots, roc, hs)]
    summary["hotspots"] = {"k": args.k_sigma, "lambda": hs_cfg.lam,
                           "flags": [[f.region, f.quarter + 1, f.week + 1] for f in hs.flags]}

    # predictions
    summary["predictions"] = {}
    for label, target in (("last_week", f"last-week:{','.join(args.last_week_regions)}"),
                          ("warren_q7", f"quarter:{args.quarter_regions[0]}:{Q}"),
                          ("atlantic_q7", f"quarter:{args.quarter_regions[1]}:{Q}")):
        _, pred, fs = _run_prediction(plots, ds, target, cfg, args.seed, prefix=f"{label}_")
        files += ["plots/" + f for f in fs]
        summary["predictions"][label] = {
            "target": target, "hidden_relative_error": pred.hidden_relative_error,
            "estimated_rank": pred.estimated_rank, "iterations": pred.trace.iterations,
            "converged": pred.trace.converged, "rows": pred.rows,
        }

    tio.write_json(out / "report.json", summary)
    config = dict(_cfg_dict(args, cfg), cp_rank=args.cp_rank, hooi_ranks=list(args.ranks or (3, 3, 3)),
                  sample=args.sample, k_sigma=args.k_sigma, random_size=args.random_size,
                  compare_iters=args.compare_iters)
    _manifest(out, "pipeline report", config, {"files": len(files)}, files + ["report.json", "manifest.json"])
    print(f"wrote {len(files)} plot-data files to {plots}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(p, fit=True):
    p.add_argument("--output-dir", required=True, type=Path, help="directory for outputs (created)")
    if fit:
        p.add_argument("--tol", type=float, default=None, help="convergence tolerance")
        p.add_argument("--max-iters", type=int, default=None, help="iteration limit")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def _add_lrat(p, default_rank):
    p.add_argument("--rank", type=int, default=default_rank, help="maximum rank R")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="l1 weight (default: 0.1 * RMS of the observed data)")
    p.add_argument("--t-scale", type=float, default=1.0, help="step-size scale t (default 1)")


def _add_data(p):
    p.add_argument("--cases", "--input", dest="cases", type=Path, default=None,
                   help="case CSV (date,county,state,fips,cases,deaths); default: bundled fixture")
    p.add_argument("--population", type=Path, default=None,
                   help="population CSV (region,population); default: bundled fixture")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensordec", description="Dense 3-way tensor decomposition and completion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="CP-ALS, HOOI or SMALS on a tensor file")
    p.add_argument("--input", required=True, type=Path, help="tensor file")
    p.add_argument("--alg", choices=["cp-als", "hooi", "smals"], default="cp-als")
    p.add_argument("--rank", type=int, help="CP rank")
    p.add_argument("--ranks", type=_int_list, help="Tucker ranks R1,R2,R3")
    p.add_argument("--sample", type=int, help="SMALS sample size")
    p.add_argument("--init", choices=["hosvd", "random"], default="hosvd", help="HOOI initialization")
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("complete", help="LRAT completion / fitting of a tensor file")
    p.add_argument("--input", required=True, type=Path, help="tensor file")
    p.add_argument("--mask", type=Path, help="observed-entry mask file (default: all observed)")
    _add_lrat(p, None)
    _add_common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("synth", help="write a random or exactly low-rank tensor")
    p.add_argument("--dims", type=_int_list, required=True)
    p.add_argument("--rank", type=int, default=None, help="exact CP rank (default: iid uniform entries)")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    pipe = sub.add_parser("pipeline", help="case-data workflows")
    psub = pipe.add_subparsers(dest="step", required=True, parser_class=_Parser)

    p = psub.add_parser("build", help="weekly (week, quarter, region) tensors")
    _add_data(p)
    _add_common(p, fit=False)
    p.set_defaults(func=cmd_build)

    p = psub.add_parser("hotspots", help="flag outsized rate-of-change residuals")
    _add_data(p)
    _add_lrat(p, 6)
    p.add_argument("--k-sigma", "--k", dest="k_sigma", type=float, default=5.0,
                   help="threshold mean + k*std (default 5)")
    _add_common(p)
    p.set_defaults(func=cmd_hotspots)

    p = psub.add_parser("predict", help="hide entries and predict them by completion")
    _add_data(p)
    _add_lrat(p, 6)
    p.add_argument("--target", default="quarter:Warren:7",
                   help="quarter:REGION:Q (1-based) or last-week:R1,R2 (default quarter:Warren:7)")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = psub.add_parser("report", help="plot data for every figure analogue")
    _add_data(p)
    _add_lrat(p, 6)
    p.add_argument("--cp-rank", type=int, default=20)
    p.add_argument("--ranks", type=_int_list, default=None, help="HOOI ranks (default 3,3,3)")
    p.add_argument("--sample", type=int, default=5, help="SMALS sample size")
    p.add_argument("--k-sigma", "--k", dest="k_sigma", type=float, default=5.0)
    p.add_argument("--random-size", type=int, default=40, help="side of the random SMALS/ALS tensor")
    p.add_argument("--compare-iters", type=int, default=100, help="iterations for the ALS/SMALS traces")
    p.add_argument("--region-focus", default="Essex")
    p.add_argument("--last-week-regions", type=lambda s: s.split(","), default=["Atlantic", "Warren"])
    p.add_argument("--quarter-regions", type=lambda s: s.split(","), default=["Warren", "Atlantic"])
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("TENSORDEC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tol", 0) is None and args.func is cmd_decompose:
        args.tol = 1e-8
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tensordec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LratDivergence as exc:
        print(f"tensordec: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (OSError, ValueError, KeyError, tio.FormatError, ShapeError) as exc:
        print(f"tensordec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
