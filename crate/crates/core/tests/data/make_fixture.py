"""Regenerate the synthetic two-regime fixture used by the CLI tests.

Each variable has stations of two kinds sharing a daily cycle and a slow
trend: "smooth" stations carry an AR(1) remainder (phi = 0.95), "rough"
stations carry white noise. A few short gaps are left empty.
"""
import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
HOURS = 24 * 60
START = datetime(2018, 1, 1, tzinfo=timezone.utc)


def station(rng, kind, level):
    t = np.arange(HOURS)
    base = level + 8.0 * np.sin(2 * np.pi * (t % 24) / 24) + 0.002 * t
    if kind == "smooth":
        e = np.empty(HOURS)
        e[0] = 0.0
        for i in range(1, HOURS):
            e[i] = 0.95 * e[i - 1] + rng.normal(0, 0.3)
    else:
        e = rng.normal(0, 3.0, HOURS)
    return base + e


def write(name, kinds, seed):
    rng = np.random.default_rng(seed)
    cols = {}
    for j, kind in enumerate(kinds):
        ids = [c for c in cols if c.startswith(kind)]
        cols[f"{kind}-{len(ids) + 1}"] = station(rng, kind, 30.0 + 5.0 * j)
    ids = list(cols)
    # short interior gaps
    cols[ids[0]][100:103] = np.nan
    cols[ids[-1]][700:705] = np.nan
    with open(HERE / f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestamp", *ids])
        for i in range(HOURS):
            ts = (START + timedelta(hours=i)).strftime("%Y-%m-%dT%H:%M:%SZ")
            row = ["" if np.isnan(cols[c][i]) else f"{cols[c][i]:.3f}" for c in ids]
            w.writerow([ts, *row])


write("no2", ["smooth"] * 4 + ["rough"] * 4, 1)
write("o3", ["rough", "smooth", "rough", "smooth", "smooth", "rough"], 2)
