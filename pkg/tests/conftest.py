import csv
from datetime import date, timedelta

import numpy as np
import pytest

from tensordec import epi
from tensordec.cp import cp_reconstruct
from tensordec.models import CPModel

START = epi.STUDY_START

# lambda calibrated on rank2_instance() by sweeping 0.03..10: every value in
# [0.1, 10] yields two nonzero weights at max_rank 6, 0.03 yields four
CALIBRATED_LAMBDA = 0.3

# PASS/FAIL lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE = []


def rank2_instance(seed=0, n=10):
    rng = np.random.default_rng(seed)
    model = CPModel(np.ones(2), tuple(rng.standard_normal((n, 2)) for _ in range(3)))
    return cp_reconstruct(model)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def write_case_csv(path, weekly_by_region, start=START, baseline=10, fips=None):
    """Cumulative daily case CSV whose weekly totals are ``weekly_by_region``.

    Each week's cases are reported on its first day, so the forward-filled
    tail of the last week does not change its total.
    """
    rows = []
    for n, (region, weekly) in enumerate(weekly_by_region.items()):
        county, state = region.split(",")
        code = fips[n] if fips else f"99{n:03d}"
        cum = baseline
        rows.append((start - timedelta(1), county, state, code, cum))
        for g, cases in enumerate(weekly):
            for d in range(7):
                day = start + timedelta(7 * g + d)
                if day > epi.STUDY_END:
                    break
                if d == 0:
                    cum += int(cases)
                rows.append((day, county, state, code, cum))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "county", "state", "fips", "cases", "deaths"])
        for day, county, state, code, cum in rows:
            w.writerow([day.isoformat(), county, state, code, cum, 0])


def write_population_csv(path, population):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "population"])
        for region, p in population.items():
            w.writerow([region, p])


def spike_weekly(spike_region=5, spike_week=40, factor=3.0, n_regions=21, noise=0.01, seed=0):
    """Weekly counts whose rate of change is rank one up to noise, plus one jump.

    The noiseless rate at global week ``13q + w`` of region ``r`` is
    ``alpha_r * u_w * v_q`` with ``u_0 = 0`` (the first-week convention);
    counts then get 1% multiplicative noise.  From ``spike_week`` on, the
    chosen region's counts are multiplied by ``factor`` so that a single
    rate entry jumps by about ``factor - 1``.
    """
    W, Q = epi.WEEKS_PER_QUARTER, epi.QUARTERS
    rng = np.random.default_rng(seed)
    u = 0.2 * np.sin(2 * np.pi * np.arange(W) / W)
    v = 1.0 + 0.1 * np.arange(Q)
    alpha = rng.uniform(0.6, 1.4, n_regions)
    weekly = {}
    for r in range(n_regions):
        x = np.empty(W * Q)
        x[0] = 1e6
        for g in range(1, W * Q):
            q, w = divmod(g, W)
            x[g] = x[g - 1] * (1 + alpha[r] * u[w] * v[q])
        x *= np.exp(noise * rng.standard_normal(x.size))
        if r == spike_region:
            x[spike_week:] *= factor
        weekly[f"Region{r:02d},Testland"] = np.rint(x).astype(np.int64)
    return weekly


@pytest.fixture(scope="session")
def nj_dataset():
    return epi.load_nj_fixture()


@pytest.fixture
def spike_files(tmp_path):
    weekly = spike_weekly()
    cases, pop = tmp_path / "cases.csv", tmp_path / "population.csv"
    write_case_csv(cases, weekly)
    write_population_csv(pop, {r: 100000 for r in weekly})
    return cases, pop, weekly
