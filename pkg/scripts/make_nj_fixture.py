"""Generate the bundled New Jersey-shaped case fixture.

The output mimics the layout of the New York Times county file
(date,county,state,fips,cases,deaths) for the 21 New Jersey counties from
2020-03-31 to 2021-12-26.  Case counts are synthetic: a few epidemic waves
scaled by county population, with seeded noise.  Atlantic County's first
week (2020-04-01 .. 2020-04-07) is pinned to 67 new cases so that the
population-normalized first entry is 67 / 274534.

A handful of downward corrections and "Unknown" county rows are included
because the real file has them.

Usage: python scripts/make_nj_fixture.py [output_dir]
"""

import csv
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

COUNTIES = [
    ("Atlantic", "34001", 274534),
    ("Bergen", "34003", 955732),
    ("Burlington", "34005", 461860),
    ("Camden", "34007", 523485),
    ("Cape May", "34009", 95263),
    ("Cumberland", "34011", 154152),
    ("Essex", "34013", 863728),
    ("Gloucester", "34015", 302294),
    ("Hudson", "34017", 724854),
    ("Hunterdon", "34019", 128947),
    ("Mercer", "34021", 387340),
    ("Middlesex", "34023", 863162),
    ("Monmouth", "34025", 643615),
    ("Morris", "34027", 509285),
    ("Ocean", "34029", 637229),
    ("Passaic", "34031", 524118),
    ("Salem", "34033", 64837),
    ("Somerset", "34035", 345361),
    ("Sussex", "34037", 144221),
    ("Union", "34039", 575345),
    ("Warren", "34041", 109632),
]
STATE = "New Jersey"
START = date(2020, 4, 1)
END = date(2021, 12, 26)
N_WEEKS = 91
SEED = 20200401

# (center week, width in weeks, weekly cases per capita at the peak)
WAVES = [(1.5, 3.0, 2.2e-3), (39.0, 6.0, 2.6e-3), (50.0, 4.0, 1.6e-3),
         (72.0, 5.0, 7.0e-4), (92.0, 3.0, 9.0e-3)]
BASE_RATE = 6.0e-5


def weekly_rates(rng, n_weeks):
    w = np.arange(n_weeks)
    shift = rng.normal(0.0, 0.8)
    mult = np.exp(rng.normal(0.0, 0.25, size=len(WAVES)))
    rate = np.full(n_weeks, BASE_RATE)
    for (c, s, a), m in zip(WAVES, mult):
        rate += m * a * np.exp(-0.5 * ((w - c - shift) / s) ** 2)
    return rate * np.exp(rng.normal(0.0, 0.08, size=n_weeks))


def main(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    n_days = N_WEEKS * 7
    days = [START + timedelta(d) for d in range(n_days)]
    weekday_w = np.array([1.1, 1.05, 1.0, 1.0, 0.95, 0.9, 1.0])

    rows = []
    for name, fips, pop in COUNTIES:
        weekly = np.rint(pop * weekly_rates(rng, N_WEEKS)).astype(int)
        if name == "Atlantic":
            weekly[0] = 67
        daily = np.concatenate([rng.multinomial(n, weekday_w / weekday_w.sum()) for n in weekly])
        baseline = int(rng.integers(5, 60))
        cum = baseline + np.cumsum(daily)
        # a few reporting corrections
        if name in ("Essex", "Hudson", "Ocean"):
            for d in rng.choice(np.arange(30, n_days - 30), size=2, replace=False):
                cum[d] -= int(rng.integers(20, 200))
        deaths = np.floor(cum * 0.02).astype(int)
        rows.append((START - timedelta(1), name, fips, baseline, int(baseline * 0.02)))
        for d, day in enumerate(days):
            if day > END:
                break
            rows.append((day, name, fips, int(cum[d]), int(deaths[d])))
    for day in (date(2020, 4, 3), date(2020, 9, 1), date(2021, 6, 15)):
        rows.append((day, "Unknown", "", int(rng.integers(1, 40)), 0))

    rows.sort(key=lambda r: (r[0], r[1]))
    with open(out_dir / "nj_cases.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "county", "state", "fips", "cases", "deaths"])
        for day, name, fips, cases, deaths in rows:
            w.writerow([day.isoformat(), name, STATE, fips, cases, deaths])

    with open(out_dir / "nj_population.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "population"])
        for name, _, pop in COUNTIES:
            w.writerow([f"{name},{STATE}", pop])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src" / "tensordec" / "data")
