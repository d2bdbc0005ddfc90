"""Synthetic stand-in for the US health-insurance table.

Same columns, row count and region sizes as the public dataset, with
marginals and a charges mechanism chosen to resemble it (age-driven base
cost, smoker surcharge that grows with BMI, a minority of non-smokers with
elevated costs). It is a demo and test fixture, not a replacement for the
real data.
"""

import csv

import numpy as np

COLUMNS = ("age", "sex", "bmi", "children", "smoker", "region", "charges")
REGION_SIZES = {"northeast": 324, "northwest": 325, "southeast": 364, "southwest": 325}
_CHILDREN_P = np.array([574, 324, 240, 157, 25, 18], dtype=float)


def generate(seed=0):
    """Return a list of row dicts (1338 rows) keyed by :data:`COLUMNS`."""
    rng = np.random.default_rng(seed)
    rows = []
    for region, size in REGION_SIZES.items():
        age = rng.integers(18, 65, size)
        age[rng.random(size) < 0.1] = rng.integers(18, 20, size)[:1]
        sex = np.where(rng.random(size) < 0.505, "male", "female")
        bmi_mean = 33.4 if region == "southeast" else 29.7
        bmi = np.clip(rng.normal(bmi_mean, 5.9, size), 16.0, 53.0).round(2)
        children = rng.choice(6, size=size, p=_CHILDREN_P / _CHILDREN_P.sum())
        smoker = np.where(rng.random(size) < (0.25 if region == "southeast" else 0.19), "yes", "no")

        age_slope = {"northeast": 280.0, "northwest": 265.0, "southeast": 250.0, "southwest": 262.0}[region]
        base = age_slope * age - 6400.0 + 420.0 * children
        base += {"northeast": 900.0, "northwest": 0.0, "southeast": -700.0, "southwest": -900.0}[region]
        base *= np.where(sex == "male", 1.03, 1.0)
        noise = rng.gamma(2.0, 1100.0, size)
        elevated = rng.random(size) < 0.10
        noise[elevated] += rng.uniform(7000.0, 16000.0, elevated.sum())
        surcharge = np.where(smoker == "yes", np.where(bmi >= 30, 32000.0, 13000.0) + 300.0 * (bmi - 30), 0.0)
        charges = np.maximum(base + noise + surcharge, 1121.87).round(5)

        for i in range(size):
            rows.append(
                {
                    "age": int(age[i]),
                    "sex": sex[i],
                    "bmi": float(bmi[i]),
                    "children": int(children[i]),
                    "smoker": smoker[i],
                    "region": region,
                    "charges": float(charges[i]),
                }
            )
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def write_csv(path, seed=0):
    rows = generate(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        w.writerows(rows)
    return path
