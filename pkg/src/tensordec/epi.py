"""Case-data pipeline: weekly tensors, hotspots and masked prediction.

The case tensor has axes (week within quarter, quarter, region) with 13
weeks per quarter and 7 quarters.  Week ``w`` of quarter ``q`` is global
week ``13*q + w``; global week ``g`` covers the seven days starting
``start + 7*g`` where ``start`` is the first date of the study window.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

from .cp import cp_reconstruct
from .lrat import LratConfig, ObservationMask, estimate_lambda, estimated_rank, lrat_iterate, impose_observed
from .models import CPModel, FitTrace

log = logging.getLogger(__name__)

WEEKS_PER_QUARTER = 13
QUARTERS = 7
N_WEEKS = WEEKS_PER_QUARTER * QUARTERS
STUDY_START = date(2020, 4, 1)
STUDY_END = date(2021, 12, 26)
MAX_FORWARD_FILL_DAYS = 6
CASE_COLUMNS = ("date", "county", "state", "fips", "cases", "deaths")


class CaseDataError(ValueError):
    """Malformed or insufficient case data."""


@dataclass
class CaseSeries:
    """Daily cumulative counts for one region.

    ``baseline`` is the cumulative count on the last record before
    ``dates[0]`` (0 if there is none).  Raw reporting corrections are kept;
    they are clamped when converting to weekly counts.
    """

    region_id: str
    dates: list
    cumulative_cases: np.ndarray
    baseline: int = 0

    def value_on(self, day: date) -> int:
        if day < self.dates[0]:
            if day == self.dates[0] - timedelta(1):
                return self.baseline
            raise CaseDataError(f"{self.region_id}: no data on {day}")
        idx = (day - self.dates[0]).days
        if idx < len(self.dates):
            return int(self.cumulative_cases[idx])
        if (day - self.dates[-1]).days <= MAX_FORWARD_FILL_DAYS:
            return int(self.cumulative_cases[-1])
        raise CaseDataError(f"{self.region_id}: series ends {self.dates[-1]}, need {day}")


@dataclass
class Ingested:
    series: list
    skipped: list = field(default_factory=list)


@dataclass
class EpiDataset:
    tensor: np.ndarray
    region_labels: list
    quarter_labels: list
    week_labels: list
    population: np.ndarray
    start: date = STUDY_START
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        self.population = np.asarray(self.population, dtype=np.float64)
        expected = (len(self.week_labels), len(self.quarter_labels), len(self.region_labels))
        if self.tensor.shape != expected:
            raise ValueError(f"tensor dims {self.tensor.shape} do not match labels {expected}")
        if self.population.shape != (expected[2],):
            raise ValueError("population needs one entry per region")
        if np.any(self.population <= 0):
            bad = [r for r, p in zip(self.region_labels, self.population) if p <= 0]
            raise ValueError(f"population must be positive, offending regions: {bad}")

    @property
    def dims(self) -> tuple:
        return self.tensor.shape

    def timeline(self) -> np.ndarray:
        """Regions' series along the flattened week axis, shape ``(weeks, regions)``."""
        return timeline(self.tensor)

    def region_index(self, name: str) -> int:
        return resolve_region(self.region_labels, name)

    def week_start(self, quarter: int, week: int) -> date:
        return self.start + timedelta(7 * (quarter * len(self.week_labels) + week))


def timeline(t: np.ndarray) -> np.ndarray:
    W, Q, R = t.shape
    return np.transpose(t, (1, 0, 2)).reshape(W * Q, R)


def from_timeline(series: np.ndarray, weeks_per_quarter: int = WEEKS_PER_QUARTER) -> np.ndarray:
    G, R = series.shape
    return np.transpose(series.reshape(G // weeks_per_quarter, weeks_per_quarter, R), (1, 0, 2))


def resolve_region(labels, name: str) -> int:
    """Index of a region by full id, FIPS, or county name before the comma."""
    key = name.strip().lower()
    for i, lab in enumerate(labels):
        if lab.lower() == key:
            return i
    hits = [i for i, lab in enumerate(labels) if lab.split(",")[0].strip().lower() == key]
    if len(hits) == 1:
        return hits[0]
    raise KeyError(f"unknown region {name!r}")


def _parse_date(text: str, lineno: int) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise CaseDataError(f"line {lineno}: bad date {text!r}") from exc


def ingest_cases(stream, regions: Iterable[str], start: date = STUDY_START,
                 end: date = STUDY_END) -> Ingested:
    """Read a county case CSV and return one daily series per requested region.

    ``regions`` holds ids of the form ``"County,State"`` or a FIPS code.  Each
    series covers every day from ``start`` to ``end`` inclusive; days without a
    record repeat the previous cumulative value (0 before the first record).
    Requested regions absent from the file are reported in ``skipped``.
    """
    if isinstance(stream, (str, bytes)) and not hasattr(stream, "read"):
        raise TypeError("ingest_cases expects an open text stream")
    regions = list(regions)
    if start > end:
        return Ingested([], [])
    wanted = {r: r for r in regions}
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip().lower() for h in header[:6]) != CASE_COLUMNS:
        raise CaseDataError(f"line 1: expected header {','.join(CASE_COLUMNS)}, got {header!r}")

    records: dict = {r: {} for r in regions}
    before: dict = {r: (None, 0) for r in regions}
    for lineno, row in enumerate(reader, 2):
        if not row or not any(row):
            continue
        if len(row) < 6:
            raise CaseDataError(f"line {lineno}: expected 6 fields, got {len(row)}")
        day_s, county, state, fips, cases_s = row[0], row[1], row[2], row[3], row[4]
        rid = wanted.get(f"{county},{state}") or (wanted.get(fips) if fips else None)
        if rid is None:
            continue
        day = _parse_date(day_s, lineno)
        try:
            cases = int(float(cases_s))
        except ValueError as exc:
            raise CaseDataError(f"line {lineno}: bad case count {cases_s!r}") from exc
        if cases < 0:
            raise CaseDataError(f"line {lineno}: negative cumulative count")
        if day < start:
            if before[rid][0] is None or day > before[rid][0]:
                before[rid] = (day, cases)
        elif day <= end:
            records[rid][day] = cases

    n_days = (end - start).days + 1
    dates = [start + timedelta(d) for d in range(n_days)]
    out, skipped = [], []
    for rid in regions:
        rec = records[rid]
        if not rec and before[rid][0] is None:
            skipped.append(rid)
            continue
        baseline = before[rid][1]
        cum = np.empty(n_days, dtype=np.int64)
        last = baseline
        for d, day in enumerate(dates):
            last = rec.get(day, last)
            cum[d] = last
        out.append(CaseSeries(rid, dates, cum, baseline))
    if skipped:
        log.warning("no case records for regions: %s", ", ".join(skipped))
    return Ingested(out, skipped)


def cumulative_to_weekly(series: CaseSeries, week_start: date = STUDY_START, n_weeks: int = N_WEEKS):
    """Weekly new cases from a cumulative series.

    Week ``w`` total is the cumulative count at the end of its seventh day
    minus the count at the end of the day before it starts.  Negative
    totals (reporting corrections) are clamped to 0.

    Returns ``(weekly, n_clamped)``.
    """
    bounds = np.array([series.value_on(week_start + timedelta(7 * w - 1))
                       for w in range(n_weeks + 1)], dtype=np.int64)
    weekly = np.diff(bounds)
    neg = weekly < 0
    n_clamped = int(neg.sum())
    if n_clamped:
        log.info("%s: clamped %d negative weekly totals", series.region_id, n_clamped)
    weekly[neg] = 0
    return weekly, n_clamped


def build_tensor(weekly_by_region: Mapping[str, np.ndarray], population=None,
                 weeks_per_quarter: int = WEEKS_PER_QUARTER, quarters: int = QUARTERS,
                 start: date = STUDY_START) -> EpiDataset:
    """Stack per-region weekly series into a (week, quarter, region) dataset."""
    labels = list(weekly_by_region)
    n = weeks_per_quarter * quarters
    cols = []
    for lab in labels:
        v = np.asarray(weekly_by_region[lab], dtype=np.float64).ravel()
        if v.size != n:
            raise ValueError(f"region {lab!r} supplies {v.size} weekly values, expected {n}")
        cols.append(v)
    series = np.column_stack(cols) if cols else np.zeros((n, 0))
    if population is None:
        pop = np.ones(len(labels))
    elif isinstance(population, Mapping):
        pop = np.array([population[lab] for lab in labels], dtype=np.float64)
    else:
        pop = np.asarray(population, dtype=np.float64)
    quarter_labels = []
    for q in range(quarters):
        first = start + timedelta(7 * q * weeks_per_quarter)
        last = first + timedelta(7 * weeks_per_quarter - 1)
        quarter_labels.append(f"Q{q + 1} {first.isoformat()}..{last.isoformat()}")
    week_labels = [f"W{w + 1}" for w in range(weeks_per_quarter)]
    return EpiDataset(from_timeline(series, weeks_per_quarter), labels, quarter_labels,
                      week_labels, pop, start)


def normalize_by_population(ds: EpiDataset) -> EpiDataset:
    """Divide every region's entries by its population."""
    if np.any(ds.population <= 0):
        raise ValueError("population must be positive")
    diag = dict(ds.diagnostics, normalized=True)
    return replace(ds, tensor=ds.tensor / ds.population[None, None, :], diagnostics=diag)


def rate_of_change(ds: EpiDataset) -> EpiDataset:
    """Week-over-week relative change along each region's timeline.

    The first week is 0, and so is any week whose previous week is 0; the
    latter are counted in ``diagnostics['zero_previous']``.
    """
    series = ds.timeline()
    out = np.zeros_like(series)
    prev, cur = series[:-1], series[1:]
    zero = prev == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.where(zero, 0.0, (cur - prev) / np.where(zero, 1.0, prev))
    diag = dict(ds.diagnostics, zero_previous=int(zero.sum()), rate_of_change=True)
    return replace(ds, tensor=from_timeline(out, len(ds.week_labels)), diagnostics=diag)


def load_dataset(cases_stream, population: Mapping[str, float], start: date = STUDY_START,
                 end: date = STUDY_END) -> EpiDataset:
    """Ingest, convert to weekly counts and build the raw (unnormalized) dataset."""
    ing = ingest_cases(cases_stream, list(population), start, end)
    if ing.skipped:
        raise CaseDataError(f"no case records for regions: {', '.join(ing.skipped)}")
    weekly, clamped = {}, 0
    for s in ing.series:
        weekly[s.region_id], n = cumulative_to_weekly(s, start)
        clamped += n
    ds = build_tensor(weekly, population, start=start)
    ds.diagnostics.update(clamped_weeks=clamped, days=(end - start).days + 1)
    return ds


def read_population(stream) -> dict:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header[:2]] != ["region", "population"]:
        raise CaseDataError(f"population file: expected header region,population, got {header!r}")
    out = {}
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            out[row[0]] = float(row[1])
        except (IndexError, ValueError) as exc:
            raise CaseDataError(f"population file line {lineno}: bad row {row!r}") from exc
    return out


def fixture_path(name: str):
    return resources.files("tensordec") / "data" / name


def load_nj_fixture() -> EpiDataset:
    """The bundled New Jersey-shaped fixture, raw weekly counts."""
    pop = read_population(io.StringIO(fixture_path("nj_population.csv").read_text()))
    return load_dataset(io.StringIO(fixture_path("nj_cases.csv").read_text()), pop)


# ---------------------------------------------------------------------------
# low-rank fitting on datasets


def _scaled_fit(c: np.ndarray, mask, cfg: LratConfig, seed):
    """LRAT on ``c / s`` with ``s`` the RMS of the observed entries.

    The weight ``cfg.lam`` keeps its meaning on the unscaled data.
    """
    obs = c if mask is None else c[mask]
    s = float(np.sqrt(np.mean(obs ** 2))) if obs.size else 0.0
    if s == 0.0:
        s = 1.0
    scaled = replace(cfg, lam=cfg.lam / s)
    model, trace = lrat_iterate(c / s, mask, scaled, seed)
    model = CPModel(model.weights * s, model.factors)
    trace.objective = [o * s * s for o in trace.objective]
    return model, trace


@dataclass
class HotspotFlag:
    region: str
    quarter: int
    week: int
    residual: float
    threshold: float


@dataclass
class HotspotReport:
    flags: list
    k: float
    mean: np.ndarray
    std: np.ndarray
    residuals: np.ndarray
    threshold_rule: str = "mean + k*std"
    reconstruction: np.ndarray | None = None
    trace: FitTrace | None = None

    @property
    def thresholds(self) -> np.ndarray:
        return self.mean + self.k * self.std


def flag_residuals(residuals: np.ndarray, region_labels, k: float = 5.0) -> HotspotReport:
    """Flag entries whose residual strictly exceeds its region's mean + k*std.

    ``residuals`` has the dataset layout (week, quarter, region); statistics
    are taken per region over its whole timeline (population std).
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    series = timeline(residuals)
    mean = series.mean(axis=0)
    std = series.std(axis=0)
    thr = mean + k * std
    W = residuals.shape[0]
    flags = []
    for g, r in zip(*np.nonzero(series > thr[None, :])):
        q, w = divmod(int(g), W)
        flags.append(HotspotFlag(region_labels[r], q, w, float(series[g, r]), float(thr[r])))
    flags.sort(key=lambda f: (region_labels.index(f.region), f.quarter, f.week))
    return HotspotReport(flags, k, mean, std, residuals)


def hotspot_detect(ds: EpiDataset, cfg: LratConfig, k: float = 5.0, seed=0) -> HotspotReport:
    """Fit LRAT to ``ds.tensor`` and flag outsized absolute residuals.

    ``ds`` is normally the output of :func:`rate_of_change`.
    """
    if ds.tensor.size == 0:
        raise ValueError("dataset is empty")
    model, trace = _scaled_fit(ds.tensor, None, cfg, seed)
    recon = cp_reconstruct(model)
    report = flag_residuals(np.abs(ds.tensor - recon), ds.region_labels, k)
    report.reconstruction = recon
    report.trace = trace
    return report


@dataclass
class Target:
    """Entries to hide: the last week of some regions, or one region's quarter.

    Quarters and weeks are 0-based here; :func:`parse_target` accepts the
    1-based quarter numbers used on the command line.
    """

    kind: str
    regions: tuple
    quarter: int | None = None

    def entries(self, ds: EpiDataset) -> list:
        W, Q, _ = ds.dims
        idx = [ds.region_index(r) for r in self.regions]
        if self.kind == "last_week":
            return [(W - 1, Q - 1, r) for r in idx]
        if self.kind == "quarter":
            if not 0 <= self.quarter < Q:
                raise ValueError(f"quarter {self.quarter + 1} out of range 1..{Q}")
            return [(w, self.quarter, r) for r in idx for w in range(W)]
        raise ValueError(f"unknown target kind {self.kind!r}")


def last_week(*regions: str) -> Target:
    return Target("last_week", tuple(regions))


def quarter(region: str, q: int) -> Target:
    return Target("quarter", (region,), q)


def parse_target(text: str) -> Target:
    """``last-week:Atlantic,Warren`` or ``quarter:Warren:7`` (1-based quarter)."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower().replace("-", "_")
    if kind == "last_week" and rest:
        return last_week(*[r for r in rest.split(",") if r])
    if kind == "quarter":
        region, _, q = rest.rpartition(":")
        if region and q.isdigit():
            return quarter(region, int(q) - 1)
    raise ValueError(f"bad target {text!r}; use last-week:R1,R2 or quarter:REGION:Q")


@dataclass
class PredictionReport:
    rows: list
    estimated_rank: int
    lam: float
    trace: FitTrace
    model: CPModel

    @property
    def hidden_relative_error(self) -> float:
        actual = np.array([r["actual"] for r in self.rows])
        pred = np.array([r["predicted"] for r in self.rows])
        den = np.linalg.norm(actual)
        return float(np.linalg.norm(pred - actual) / den) if den > 0 else float(np.linalg.norm(pred))


def predict_missing(ds: EpiDataset, target: Target, cfg: LratConfig, seed=0):
    """Hide the target entries, mean-fill them, and complete by LRAT.

    Hidden entries start at the mean of the same region's observed entries;
    completion uses only observed entries, and observed entries are returned
    unchanged.  Returns the completed dataset and a per-entry report of
    actual, initial fill and predicted values.
    """
    entries = target.entries(ds)
    omega = ObservationMask.hiding(ds.dims, entries)
    if omega.count == 0:
        raise ValueError("target hides every entry; nothing left to learn from")
    obs = omega.observed
    c = ds.tensor
    filled = c.copy()
    for r in {e[2] for e in entries}:
        region_obs = obs[:, :, r]
        filled[:, :, r][~region_obs] = c[:, :, r][region_obs].mean()

    model, trace = _scaled_fit(filled, obs, cfg, seed)
    completed = impose_observed(c, cp_reconstruct(model), obs)
    rows = []
    for w, q, r in entries:
        rows.append({
            "region": ds.region_labels[r], "quarter": q + 1, "week": w + 1,
            "week_start": ds.week_start(q, w).isoformat(),
            "actual": float(c[w, q, r]), "initial": float(filled[w, q, r]),
            "predicted": float(completed[w, q, r]),
        })
    out = replace(ds, tensor=completed, diagnostics=dict(ds.diagnostics, completed=len(entries)))
    return out, PredictionReport(rows, estimated_rank(model), cfg.lam, trace, model)


def default_lambda(ds: EpiDataset) -> float:
    return estimate_lambda(ds.tensor)
