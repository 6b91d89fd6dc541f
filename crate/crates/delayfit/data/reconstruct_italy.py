"""Rebuilds italy_2020-08-07_2021-02-07.csv.

The daily file is a reconstruction: national totals (cumulative cases,
deaths, currently positive) at the checkpoint dates below are interpolated
to every day with monotone cubic (PCHIP) interpolation, log-space for the
currently-positive count. Recovered = cases - positive - deaths. The values
are approximate and are not the official daily series.
"""
import csv
import datetime as dt
import pathlib

import numpy as np
from scipy.interpolate import PchipInterpolator

# date, cumulative cases, cumulative deaths, currently positive
CHECKPOINTS = [
    ("2020-08-07", 249756, 35190, 12616),
    ("2020-08-15", 253438, 35234, 14406),
    ("2020-08-31", 269214, 35483, 26754),
    ("2020-09-11", 286297, 35603, 36767),
    ("2020-09-20", 298156, 35724, 44098),
    ("2020-09-30", 314861, 35894, 51263),
    ("2020-10-10", 349494, 36111, 79075),
    ("2020-10-20", 434449, 36705, 142739),
    ("2020-10-25", 525782, 37338, 222241),
    ("2020-10-31", 679430, 38618, 351386),
    ("2020-11-08", 935104, 41394, 558636),
    ("2020-11-15", 1178529, 45229, 701389),
    ("2020-11-22", 1408868, 49823, 805947),
    ("2020-11-30", 1601554, 55576, 788471),
    ("2020-12-10", 1787147, 62626, 712490),
    ("2020-12-20", 1938083, 68447, 619690),
    ("2020-12-31", 2107166, 74159, 570458),
    ("2021-01-10", 2276491, 78394, 570000),
    ("2021-01-20", 2414166, 83681, 531000),
    ("2021-01-31", 2553032, 88516, 448000),
    ("2021-02-07", 2636738, 91273, 415000),
]


def main() -> None:
    dates = [dt.date.fromisoformat(c[0]) for c in CHECKPOINTS]
    x = np.array([(d - dates[0]).days for d in dates], dtype=float)
    cases = PchipInterpolator(x, [c[1] for c in CHECKPOINTS])
    deaths = PchipInterpolator(x, [c[2] for c in CHECKPOINTS])
    log_pos = PchipInterpolator(x, np.log([c[3] for c in CHECKPOINTS]))
    out = pathlib.Path(__file__).with_name("italy_2020-08-07_2021-02-07.csv")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "infected", "recovered", "deceased"])
        for k in range(int(x[-1]) + 1):
            day = dates[0] + dt.timedelta(days=k)
            c = round(float(cases(k)))
            d = round(float(deaths(k)))
            i = round(float(np.exp(log_pos(k))))
            w.writerow([day.isoformat(), i, c - i - d, d])


if __name__ == "__main__":
    main()
