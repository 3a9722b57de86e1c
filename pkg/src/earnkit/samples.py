"""Eligibility rules and construction of the analysis samples.

Eight per-year samples nest as H_z <= LX_z <= CS <= BS and PA_z <= BS;
the 12-year cohort sample is person-level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .diststats import quantile
from .measures import (MAX_EMPLOYERS, permanent_p3_table, person_year_frame,
                       residualize)
from .panel import Panel

SAMPLE_KINDS = ("BS", "CS", "LX_1", "LX_5", "H_1", "H_5", "PA_5", "PA_10")

BS_AGE_LO, BS_AGE_HI = 25, 55
COHORT_AGE_LO, COHORT_AGE_HI = 25, 54
DEFAULT_COHORT_WINDOW = (2004, 2015)


@dataclass(frozen=True)
class EarningsFloor:
    """Annual earnings floor m_t = 260 x minimum wage, plus winsor quantile."""

    minwage: pd.Series
    winsor_quantile: float = 0.99999999

    @property
    def m(self) -> pd.Series:
        return 260.0 * self.minwage

    def of(self, year: int) -> float:
        return float(self.m.loc[year])


@dataclass(frozen=True)
class AnalysisSample:
    kind: str
    members: tuple            # person ids (sorted)
    year: int | None = None   # None for COHORT12
    provenance: dict = field(default_factory=dict)

    def membership(self):
        if self.year is None:
            return {(p,) for p in self.members}
        return {(p, self.year) for p in self.members}

    def __contains__(self, person_id):
        return person_id in set(self.members)

    def __len__(self):
        return len(self.members)


def eligible_workers(panel: Panel, year: int, age_lo: int = BS_AGE_LO,
                     age_hi: int = BS_AGE_HI, frame=None):
    """Persons eligible at `year`: in the age band, not reported dead,
    SSN active.  Returns (eligible person-id set, discarded person-id set)
    where discarded persons are eligible but had their year's earnings
    report dropped under the many-employer rule.
    """
    p = panel.persons
    age = year - p["birth_year"]
    alive = p["death_year"].isna() | (p["death_year"] >= year)
    ok = (age >= age_lo) & (age <= age_hi) & alive & p["ssn_active"]
    eligible = set(p.loc[ok, "person_id"])
    if frame is None:
        frame = person_year_frame(panel, years=[year])
    fy = frame[frame["year"] == year]
    many = fy[(fy["n_employers"] > MAX_EMPLOYERS)]
    discarded = set(many["person_id"]) & eligible
    return eligible, discarded


def winsorize(values, threshold: float):
    """Cap values at threshold (monotone, idempotent)."""
    return np.minimum(np.asarray(values, float), threshold)


def winsor_threshold(cs_values, q: float) -> float:
    if q >= 1.0:
        return float("inf")
    return quantile(cs_values, q)


def _base_flags(frame: pd.DataFrame, year: int, floor: EarningsFloor):
    fy = frame[frame["year"] == year].set_index("person_id")
    age = fy["age"]
    alive = fy["death_year"].isna() | (fy["death_year"] >= year)
    eligible = (age >= BS_AGE_LO) & (age <= BS_AGE_HI) & alive & fy["ssn_active"]
    earn = fy["earn"]
    bs = eligible & earn.notna() & (earn > 0)
    cs = bs & (earn > floor.of(year))
    return fy, bs, cs


def build_sample(panel_or_frame, kind: str, year: int, floor: EarningsFloor,
                 p_resid: pd.DataFrame | None = None) -> AnalysisSample:
    """Construct one per-year analysis sample.

    kind is one of BS, CS, LX_1, LX_5, H_1, H_5, PA_5, PA_10.  The H
    kinds need the residual permanent log earnings table (p_resid); it is
    computed on the fly when not supplied.
    """
    if kind not in SAMPLE_KINDS:
        raise ValueError(f"unknown sample kind {kind!r}")
    frame = panel_or_frame if isinstance(panel_or_frame, pd.DataFrame) \
        else person_year_frame(panel_or_frame)
    years = set(frame["year"])
    z = int(kind.split("_")[1]) if "_" in kind else 0
    if kind.startswith(("LX", "H", "PA")) and (year + z) not in years:
        raise ValueError(f"{kind} at {year} needs year {year + z} in the panel")

    fy, bs, cs = _base_flags(frame, year, floor)
    if kind == "BS":
        members = bs
    elif kind == "CS":
        members = cs
    elif kind.startswith("LX") or kind.startswith("H"):
        nxt = frame[frame["year"] == year + z].set_index("person_id")["earn"]
        nxt = nxt.reindex(cs.index)
        lx = cs & nxt.notna() & (nxt > floor.of(year + z) / 3.0)
        if kind.startswith("LX"):
            members = lx
        else:
            if p_resid is None:
                p_resid = residualize(frame, "permanent", floor.m)
            pt = p_resid[p_resid["year"] == year + 1].set_index("person_id")["resid"]
            members = lx & pt.reindex(lx.index).notna()
    else:  # PA_z
        p3 = permanent_p3_table(frame, floor.m)
        p3t = p3[p3["year"] == year].set_index("person_id")["p3"]
        p3z = p3[p3["year"] == year + z].set_index("person_id")["p3"]
        members = bs & p3t.reindex(bs.index).notna() & p3z.reindex(bs.index).notna()

    ids = tuple(sorted(members.index[members]))
    return AnalysisSample(kind=kind, members=ids, year=year,
                          provenance={"floor": floor.of(year),
                                      "winsor_quantile": floor.winsor_quantile})


def winsorized_earnings(frame: pd.DataFrame, floor: EarningsFloor) -> pd.Series:
    """Per-year winsorized earnings for downstream use.

    The threshold is the winsor quantile of the CS-eligible distribution
    of each year; values above it are replaced by the threshold.
    """
    earn = frame["earn"].copy()
    for year, sub in frame.groupby("year"):
        cs_vals = sub.loc[(sub["earn"].notna())
                          & (sub["earn"] > 260.0 * floor.minwage.get(year, np.inf)),
                          "earn"]
        if cs_vals.empty:
            continue
        thr = winsor_threshold(cs_vals.to_numpy(), floor.winsor_quantile)
        if np.isfinite(thr):
            earn.loc[sub.index] = winsorize(sub["earn"].to_numpy(), thr)
    return earn


def build_cohort12(panel_or_frame, window=DEFAULT_COHORT_WINDOW) -> AnalysisSample:
    """The 12-year cohort: prime-age at window start, eligible all years,
    alive throughout, with at least one quarter of positive earnings."""
    frame = panel_or_frame if isinstance(panel_or_frame, pd.DataFrame) \
        else person_year_frame(panel_or_frame)
    lo, hi = window
    years = set(frame["year"])
    if not set(range(lo, hi + 1)) <= years:
        raise ValueError(f"panel does not cover the cohort window {window}")
    sub = frame[(frame["year"] >= lo) & (frame["year"] <= hi)]
    per = sub.groupby("person_id").agg(
        birth_year=("birth_year", "first"),
        death_year=("death_year", "first"),
        ssn_active=("ssn_active", "first"),
        any_quarter=("active_quarters", lambda s: bool((s > 0).any())),
    )
    age0 = lo - per["birth_year"]
    alive = per["death_year"].isna() | (per["death_year"] > hi)
    ok = ((age0 >= COHORT_AGE_LO) & (age0 <= COHORT_AGE_HI)
          & alive & per["ssn_active"] & per["any_quarter"])
    ids = tuple(sorted(per.index[ok]))
    return AnalysisSample(kind="COHORT12", members=ids, year=None,
                          provenance={"window": window})


def sample_counts(panel: Panel, floor: EarningsFloor, years=None) -> pd.DataFrame:
    """Per-year membership counts for every sample kind."""
    frame = person_year_frame(panel)
    if years is None:
        years = sorted(set(frame["year"]))
    p_resid = residualize(frame, "permanent", floor.m)
    all_years = set(frame["year"])
    rows = []
    for year in years:
        for kind in SAMPLE_KINDS:
            z = int(kind.split("_")[1]) if "_" in kind else 0
            if year + z not in all_years or (kind.startswith("H") and year + 1 not in all_years):
                rows.append((kind, year, np.nan))
                continue
            s = build_sample(frame, kind, year, floor, p_resid=p_resid)
            rows.append((kind, year, len(s)))
    return pd.DataFrame(rows, columns=["kind", "year", "n"])
