"""Shared builders for hand-crafted panels used across the test modules."""

import numpy as np
import pandas as pd

from earnkit.panel import load_panel


def person(pid, sex="male", race="WhiteNH", foreign=False, birth=1970,
           death=np.nan, ssn=True, educ="HS", state="CA"):
    return (pid, sex, race, foreign, birth, death, ssn, educ, state)


def job(pid, emp, year, q=(1000.0, 1000.0, 1000.0, 1000.0), sector="A",
        state="CA", hours=np.nan):
    return (pid, emp, year, q[0], q[1], q[2], q[3], sector, state, hours)


PERSON_COLS = ["person_id", "sex", "race_eth", "foreign_born", "birth_year",
               "death_year", "ssn_active", "education", "state"]
JOB_COLS = ["person_id", "employer_id", "year", "q1", "q2", "q3", "q4",
            "industry_sector", "state", "hours"]


def make_panel(persons, jobs, years=range(2000, 2011), minwage=5.0,
               inflation=0.0, reference_year=None):
    """Panel from person()/job() tuples with flat price series by default."""
    years = list(years)
    deflator = pd.DataFrame({
        "year": years,
        "index": [100.0 * (1.0 + inflation) ** i for i in range(len(years))]})
    mw = pd.DataFrame({"year": years, "min_wage": [minwage] * len(years)})
    return load_panel(pd.DataFrame(persons, columns=PERSON_COLS),
                      pd.DataFrame(jobs, columns=JOB_COLS),
                      deflator, mw,
                      reference_year=reference_year or years[-1])


def synthetic_design(n_per_group, groups=range(20), seed=0, shift=None,
                     beta_scale=None, level=None, noise_sd=0.5,
                     rich_categories=False):
    """Cohort-style design frame with known linear structure.

    Each group's log_w is a linear index in (scaled hours, activity
    years, age) plus normal noise.  `shift` maps group -> additive
    covariate-location shift; `beta_scale` maps group -> multiplier on
    the slope coefficients; `level` maps group -> intercept (default
    9 + 0.1 * group).  With rich_categories the division and industry
    columns vary (otherwise they are constant and drop out of the model
    matrices, keeping quantile fits small and fast).
    """
    shift = shift or {}
    beta_scale = beta_scale or {}
    level = level if level is not None else {}
    rng = np.random.default_rng(seed)
    frames = []
    for g in groups:
        n = n_per_group if np.isscalar(n_per_group) else n_per_group[g]
        s = shift.get(g, 0.0)
        b = beta_scale.get(g, 1.0)
        hours = rng.uniform(800, 2400, n) + 200.0 * s
        inactive = rng.integers(0, 4, n).astype(float)
        partial = rng.integers(0, 4, n).astype(float)
        age = rng.integers(25, 55, n).astype(float) + s
        educ = rng.choice(["LTHS", "HS", "SomeCollege", "BAplus"], n)
        idx = (0.4 * b * hours / 1000.0 - 0.05 * b * inactive
               - 0.02 * b * partial + 0.01 * b * age)
        intercept = level.get(g, 9.0 + 0.1 * g)
        log_w = intercept + idx + noise_sd * rng.standard_normal(n)
        frames.append(pd.DataFrame({
            "person_id": [f"G{g}_{i}" for i in range(n)],
            "log_w": log_w, "group": g, "initial_age": age,
            "years_inactive": inactive, "years_partial": partial,
            "division": rng.integers(1, 10, n) if rich_categories else 1,
            "hours_mean": hours, "education": educ,
            "industry": rng.choice(list("ABCDEF"), n) if rich_categories else "A",
            "person_effect": rng.normal(0, 0.1, n),
            "avg_firm_effect": rng.normal(0, 0.05, n),
        }))
    return pd.concat(frames, ignore_index=True)
