"""Panel data model: ingestion, validation, deflation, coverage masking.

A panel couples a person table with a job-year table (four quarterly
earnings amounts per person x employer x year), a price deflator, and a
minimum-wage series.  Panels are immutable snapshots: every operation
returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .geo import SECTOR_LETTERS, STATE_TO_DIVISION

SEXES = ("male", "female")
RACE_ETH = ("AsianNH", "BlackNH", "WhiteHisp", "WhiteNH", "AllOther")
EDUCATION_LEVELS = ("LTHS", "HS", "SomeCollege", "BAplus")

# The 20 demographic groups: place of birth x sex x race/ethnicity.
# Group 0 is the native-born White Non-Hispanic male reference group.
GROUPS = [("native", "male", "WhiteNH")] + [
    (birth, sex, race)
    for birth in ("native", "foreign")
    for sex in ("male", "female")
    for race in RACE_ETH
    if (birth, sex, race) != ("native", "male", "WhiteNH")
]
GROUP_INDEX = {g: i for i, g in enumerate(GROUPS)}

PERSON_COLUMNS = [
    "person_id", "sex", "race_eth", "foreign_born", "birth_year",
    "death_year", "ssn_active", "education", "state",
]
JOB_COLUMNS = [
    "person_id", "employer_id", "year", "q1", "q2", "q3", "q4",
    "industry_sector", "state", "hours",
]
QUARTER_COLUMNS = ["q1", "q2", "q3", "q4"]


class PanelError(ValueError):
    """Raised when panel inputs violate the schema or referential rules."""


def group_id(foreign_born, sex, race_eth):
    """Map demographics to the 0-19 group index (0 = native WhiteNH male)."""
    birth = np.where(np.asarray(foreign_born, bool), "foreign", "native")
    sex = np.asarray(sex, object)
    race = np.asarray(race_eth, object)
    out = np.empty(birth.shape, dtype=np.int64)
    for (b, s, r), i in GROUP_INDEX.items():
        out[(birth == b) & (sex == s) & (race == r)] = i
    return out if out.ndim else int(out)


@dataclass(frozen=True)
class Panel:
    """Immutable snapshot of persons, job-years, and price series."""

    persons: pd.DataFrame
    jobs: pd.DataFrame
    deflator: pd.Series            # year -> index value
    reference_year: int
    minwage: pd.Series             # year -> federal hourly minimum wage
    masked_person_years: frozenset = frozenset()  # (person_id, year) lost to masking
    deflated: bool = False

    def years(self):
        return range(int(self.jobs["year"].min()), int(self.jobs["year"].max()) + 1)

    def floor_m(self, year: int) -> float:
        """Annual minimum-earnings floor m_t = 260 x hourly minimum wage."""
        if year not in self.minwage.index:
            raise PanelError(f"minimum wage undefined for year {year}")
        return 260.0 * float(self.minwage.loc[year])


def _require_columns(df: pd.DataFrame, required, label: str):
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise PanelError(f"{label}: missing columns {missing}")


def _validate_persons(persons: pd.DataFrame) -> pd.DataFrame:
    _require_columns(persons, PERSON_COLUMNS, "persons")
    p = persons[PERSON_COLUMNS].copy()
    if p["person_id"].duplicated().any():
        dup = p.loc[p["person_id"].duplicated(), "person_id"].iloc[0]
        raise PanelError(f"persons: duplicate person_id {dup!r}")
    bad = ~p["sex"].isin(SEXES)
    if bad.any():
        raise PanelError(f"persons: invalid sex at row {int(np.flatnonzero(bad)[0])}")
    bad = ~p["race_eth"].isin(RACE_ETH)
    if bad.any():
        raise PanelError(f"persons: invalid race_eth at row {int(np.flatnonzero(bad)[0])}")
    p["foreign_born"] = p["foreign_born"].astype(bool)
    p["ssn_active"] = p["ssn_active"].astype(bool)
    p["birth_year"] = p["birth_year"].astype(np.int64)
    p["death_year"] = pd.to_numeric(p["death_year"], errors="coerce")
    alive_conflict = p["death_year"].notna() & (p["death_year"] < p["birth_year"])
    if alive_conflict.any():
        raise PanelError(
            f"persons: death_year before birth_year at row {int(np.flatnonzero(alive_conflict)[0])}"
        )
    bad = p["education"].notna() & ~p["education"].isin(EDUCATION_LEVELS)
    if bad.any():
        raise PanelError(f"persons: invalid education at row {int(np.flatnonzero(bad)[0])}")
    bad = ~p["state"].isin(STATE_TO_DIVISION)
    if bad.any():
        raise PanelError(f"persons: unknown state at row {int(np.flatnonzero(bad)[0])}")
    p["division"] = p["state"].map(STATE_TO_DIVISION).astype(np.int64)
    p["group"] = group_id(p["foreign_born"], p["sex"], p["race_eth"])
    return p


def _validate_jobs(jobs: pd.DataFrame, person_ids) -> pd.DataFrame:
    _require_columns(jobs, JOB_COLUMNS, "jobs")
    j = jobs[JOB_COLUMNS].copy()
    j["year"] = j["year"].astype(np.int64)
    for q in QUARTER_COLUMNS:
        j[q] = pd.to_numeric(j[q], errors="raise").astype(np.float64)
        if (j[q] < 0).any():
            raise PanelError(f"jobs: negative {q} at row {int(np.flatnonzero(j[q] < 0)[0])}")
    bad = ~j["industry_sector"].isin(SECTOR_LETTERS)
    if bad.any():
        raise PanelError(f"jobs: invalid industry_sector at row {int(np.flatnonzero(bad)[0])}")
    bad = ~j["state"].isin(STATE_TO_DIVISION)
    if bad.any():
        raise PanelError(f"jobs: unknown state at row {int(np.flatnonzero(bad)[0])}")
    j["hours"] = pd.to_numeric(j["hours"], errors="coerce")
    if (j["hours"].dropna() < 0).any():
        raise PanelError("jobs: negative hours")
    orphan = ~j["person_id"].isin(person_ids)
    if orphan.any():
        pid = j.loc[orphan, "person_id"].iloc[0]
        raise PanelError(f"jobs: person_id {pid!r} not present in persons")
    key = ["person_id", "employer_id", "year"]
    dup = j.duplicated(subset=key)
    if dup.any():
        k = tuple(j.loc[dup, key].iloc[0])
        raise PanelError(f"jobs: duplicate (person, employer, year) key {k}")
    return j.sort_values(key, kind="mergesort").reset_index(drop=True)


def _read_series(source, key_col, val_col, label):
    df = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    _require_columns(df, [key_col, val_col], label)
    s = pd.Series(
        df[val_col].astype(np.float64).to_numpy(),
        index=df[key_col].astype(np.int64).to_numpy(),
    ).sort_index()
    if (s <= 0).any():
        raise PanelError(f"{label}: non-positive values")
    return s


def load_panel(persons_source, jobs_source, deflator_source, minwage_source,
               reference_year=None) -> Panel:
    """Load and validate a panel from CSV paths or pre-built DataFrames.

    Rejects duplicate (person, employer, year) keys and job rows whose
    person_id is absent from the person table.
    """
    persons = persons_source if isinstance(persons_source, pd.DataFrame) \
        else pd.read_csv(persons_source)
    jobs = jobs_source if isinstance(jobs_source, pd.DataFrame) \
        else pd.read_csv(jobs_source)
    persons = _validate_persons(persons)
    jobs = _validate_jobs(jobs, set(persons["person_id"]))
    deflator = _read_series(deflator_source, "year", "index", "deflator")
    minwage = _read_series(minwage_source, "year", "min_wage", "minwage")
    if reference_year is None:
        reference_year = int(deflator.index.max())
    if reference_year not in deflator.index:
        raise PanelError(f"deflator: reference year {reference_year} not covered")
    return Panel(persons=persons, jobs=jobs, deflator=deflator,
                 reference_year=reference_year, minwage=minwage)


def deflate(panel: Panel, reference_year=None) -> Panel:
    """Convert nominal quarterly amounts to real terms of the reference year."""
    ref = panel.reference_year if reference_year is None else reference_year
    years = panel.jobs["year"]
    missing = set(years.unique()) - set(panel.deflator.index)
    if missing:
        raise PanelError(f"deflator: no index for years {sorted(missing)}")
    factor = (float(panel.deflator.loc[ref]) / panel.deflator).reindex(years).to_numpy()
    jobs = panel.jobs.copy()
    for q in QUARTER_COLUMNS:
        jobs[q] = jobs[q].to_numpy() * factor
    return replace(panel, jobs=jobs, reference_year=ref, deflated=True)


def reinflate(panel: Panel) -> Panel:
    """Undo deflation, restoring nominal amounts."""
    if not panel.deflated:
        return panel
    years = panel.jobs["year"]
    factor = (panel.deflator / float(panel.deflator.loc[panel.reference_year]))
    factor = factor.reindex(years).to_numpy()
    jobs = panel.jobs.copy()
    for q in QUARTER_COLUMNS:
        jobs[q] = jobs[q].to_numpy() * factor
    return replace(panel, jobs=jobs, deflated=False)


def load_coverage_mask(source) -> set:
    """Read a (state, year) non-reporting mask from CSV or DataFrame."""
    df = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    _require_columns(df, ["state", "year"], "coverage_mask")
    return set(zip(df["state"], df["year"].astype(int)))


def apply_coverage_mask(panel: Panel, mask) -> Panel:
    """Drop job rows in masked (state, year) cells.

    Person-years whose every job row fell in a masked cell are recorded so
    that multi-year measures can treat them as missing rather than zero.
    """
    if not mask:
        return panel
    jobs = panel.jobs
    masked = pd.Series(
        list(zip(jobs["state"], jobs["year"])), index=jobs.index
    ).isin(mask).to_numpy()
    had = set(zip(jobs["person_id"], jobs["year"]))
    kept = jobs.loc[~masked].reset_index(drop=True)
    still = set(zip(kept["person_id"], kept["year"]))
    lost = frozenset(had - still) | panel.masked_person_years
    return replace(panel, jobs=kept, masked_person_years=lost)


def annual_earnings(panel: Panel, person_id, year: int) -> float:
    """Total earnings over all jobs and quarters; 0 for an inferred zero year."""
    jobs = panel.jobs
    rows = jobs[(jobs["person_id"] == person_id) & (jobs["year"] == year)]
    return float(rows[QUARTER_COLUMNS].to_numpy().sum())


def annual_table(panel: Panel) -> pd.DataFrame:
    """Person-year aggregation of the job table.

    Returns one row per (person_id, year) that has at least one job row,
    with columns: earn, n_employers, active_quarters, hours (sum of
    observed hours, NaN when none observed).
    """
    jobs = panel.jobs.copy()
    jobs["earn"] = jobs[QUARTER_COLUMNS].sum(axis=1)
    g = jobs.groupby(["person_id", "year"], sort=True)
    out = g.agg(
        earn=("earn", "sum"),
        n_employers=("employer_id", "nunique"),
    )
    qsum = g[QUARTER_COLUMNS].sum()
    out["active_quarters"] = (qsum > 0).sum(axis=1).astype(np.int64)
    out["hours"] = g["hours"].sum(min_count=1)   # NaN when no job reports hours
    return out.reset_index()
