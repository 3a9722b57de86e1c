"""Derived earnings measures: annual, permanent, residual, and long-term.

All measures operate on a dense person-year frame in which a year with no
job rows is an inferred zero and a year lost to coverage masking (or to
the many-employer discard rule) is missing (NaN).
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .panel import Panel, annual_table

MAX_EMPLOYERS = 12


def person_year_frame(panel: Panel, years=None) -> pd.DataFrame:
    """Dense (person, year) frame with earnings and activity columns.

    Columns: person_id, year, earn (NaN = missing), active_quarters,
    n_employers, hours, plus person attributes (sex, birth_year,
    death_year, ssn_active, education, group, division, age).
    """
    if years is None:
        years = list(panel.years())
    at = annual_table(panel)
    idx = pd.MultiIndex.from_product(
        [panel.persons["person_id"], years], names=["person_id", "year"])
    frame = at.set_index(["person_id", "year"]).reindex(idx).reset_index()
    frame["earn"] = frame["earn"].fillna(0.0)
    frame["active_quarters"] = frame["active_quarters"].fillna(0).astype(np.int64)
    frame["n_employers"] = frame["n_employers"].fillna(0).astype(np.int64)

    # discard rule: earnings with more than 12 employers are not credible
    many = (frame["n_employers"] > MAX_EMPLOYERS) & (frame["earn"] > 0)
    frame.loc[many, "earn"] = np.nan
    if panel.masked_person_years:
        masked = pd.Series(
            list(zip(frame["person_id"], frame["year"]))
        ).isin(panel.masked_person_years).to_numpy()
        frame.loc[masked, "earn"] = np.nan

    attrs = panel.persons[["person_id", "sex", "birth_year", "death_year",
                           "ssn_active", "education", "group", "division"]]
    frame = frame.merge(attrs, on="person_id", how="left")
    frame["age"] = frame["year"] - frame["birth_year"]
    return frame


def _earn_matrix(frame: pd.DataFrame):
    """Pivot earn to a persons x years matrix plus the index arrays."""
    pivot = frame.pivot(index="person_id", columns="year", values="earn")
    return pivot


def permanent_p3_table(frame: pd.DataFrame, floor_m: pd.Series) -> pd.DataFrame:
    """Three-year permanent earnings per person-year.

    P3 at year t is the mean of annual earnings over t-2..t (zeros
    included), defined only when all three years are observed and at
    least one exceeds the year-t floor.
    """
    pivot = _earn_matrix(frame)
    years = list(pivot.columns)
    out = pd.DataFrame(np.nan, index=pivot.index, columns=years)
    E = pivot.to_numpy()
    for ti, t in enumerate(years):
        if ti < 2 or t not in floor_m.index:
            continue
        window = E[:, ti - 2:ti + 1]
        ok = ~np.isnan(window).any(axis=1)
        cond = ok & (np.nanmax(window, axis=1) > float(floor_m.loc[t]))
        vals = window.mean(axis=1)
        col = np.where(cond, vals, np.nan)
        out[t] = col
    long = out.stack(future_stack=True).rename("p3").reset_index()
    long.columns = ["person_id", "year", "p3"]
    return long


def permanent_p3(panel_or_frame, person_id, t: int, floor_m: pd.Series):
    """Scalar P3 accessor; returns None when the measure is missing."""
    frame = panel_or_frame if isinstance(panel_or_frame, pd.DataFrame) \
        else person_year_frame(panel_or_frame)
    tab = permanent_p3_table(frame[frame["person_id"] == person_id], floor_m)
    row = tab[tab["year"] == t]
    if row.empty or np.isnan(row["p3"].iloc[0]):
        return None
    return float(row["p3"].iloc[0])


def cell_residuals(log_values: pd.Series, cells: pd.DataFrame, fit_mask=None):
    """Residuals of log values against saturated cell dummies (= cell demeaning).

    Cell means are estimated on fit_mask rows (all rows when None) and
    applied everywhere.  Rows in cells never seen during fitting get
    residual 0 and a flag, as do single-observation cells.
    """
    key = pd.MultiIndex.from_frame(cells.reset_index(drop=True))
    vals = pd.Series(np.asarray(log_values, float))
    if fit_mask is None:
        fit_mask = pd.Series(True, index=vals.index)
    else:
        fit_mask = pd.Series(np.asarray(fit_mask, bool), index=vals.index)

    fit_vals = vals[fit_mask.to_numpy()]
    fit_key = key[fit_mask.to_numpy()]
    grp = fit_vals.groupby(fit_key)
    means = grp.mean()
    counts = grp.count()

    cell_mean = pd.Series(means.reindex(key).to_numpy(), index=vals.index)
    cell_n = pd.Series(counts.reindex(key).to_numpy(), index=vals.index)
    unseen = cell_mean.isna()
    single = cell_n == 1
    resid = vals - cell_mean
    resid[unseen] = 0.0
    flags = unseen | single
    return resid, flags


def residualize(frame: pd.DataFrame, kind: str, floor_m: pd.Series) -> pd.DataFrame:
    """Residual log-earnings measures.

    kind: 'age_sex_year' for the age-cell residual, 'age_educ_sex_year'
    for the age-and-education residual, 'permanent' for the residual of
    three-year average earnings.  Cell means are fit on person-years with
    earnings above the floor; residuals are produced for every
    person-year with positive earnings (permanent: with a defined
    average).  Returns person_id, year, resid, flagged.
    """
    if kind in ("age_sex_year", "age_educ_sex_year"):
        work = frame[frame["earn"] > 0].copy()
        work["logy"] = np.log(work["earn"])
        m = work["year"].map(floor_m)
        fit = (work["earn"] > m).to_numpy()
        cells = [work["age"], work["sex"], work["year"]]
        if kind == "age_educ_sex_year":
            cells.insert(1, work["education"].fillna("missing"))
        resid, flags = cell_residuals(
            work["logy"].reset_index(drop=True),
            pd.concat(cells, axis=1).reset_index(drop=True),
            fit_mask=fit)
        out = work[["person_id", "year"]].reset_index(drop=True)
        out["resid"] = resid.to_numpy()
        out["flagged"] = flags.to_numpy()
        return out

    if kind == "permanent":
        return _residual_permanent(frame, floor_m)
    raise ValueError(f"unknown residualization kind {kind!r}")


def _residual_permanent(frame: pd.DataFrame, floor_m: pd.Series) -> pd.DataFrame:
    """Residual permanent log earnings: log mean of y over t-2..t, cell-demeaned.

    y at each year counts only when above that year's floor; the average
    needs at least two of the three years.
    """
    pivot = _earn_matrix(frame)
    years = list(pivot.columns)
    E = pivot.to_numpy()
    m = np.array([float(floor_m.loc[y]) if y in floor_m.index else np.inf
                  for y in years])
    Y = np.where(E > m[None, :], E, np.nan)
    pid_arr = pivot.index.to_numpy()
    pids, yrs, avgs = [], [], []
    for ti, t in enumerate(years):
        if ti < 2:
            continue
        window = Y[:, ti - 2:ti + 1]
        n_ok = (~np.isnan(window)).sum(axis=1)
        avg = np.nansum(window, axis=1) / np.maximum(n_ok, 1)
        ok = n_ok >= 2
        pids.append(pid_arr[ok])
        yrs.append(np.full(int(ok.sum()), t, dtype=np.int64))
        avgs.append(avg[ok])
    if not pids or not sum(len(p) for p in pids):
        return pd.DataFrame(columns=["person_id", "year", "resid", "flagged"])
    tab = pd.DataFrame({"person_id": np.concatenate(pids),
                        "year": np.concatenate(yrs),
                        "avg": np.concatenate(avgs)})
    attrs = frame[["person_id", "year", "age", "sex"]]
    tab = tab.merge(attrs, on=["person_id", "year"], how="left")
    resid, flags = cell_residuals(
        np.log(tab["avg"]).reset_index(drop=True),
        tab[["age", "sex", "year"]].reset_index(drop=True))
    out = tab[["person_id", "year"]].copy()
    out["resid"] = resid.to_numpy()
    out["flagged"] = flags.to_numpy()
    return out


def residual_change(frame: pd.DataFrame, eps: pd.DataFrame, z: int,
                    floor_m: pd.Series) -> pd.DataFrame:
    """z-year change in residual earnings g^z = eps(t+z) - eps(t).

    Defined when earnings exceed the floor in t and a third of the floor
    in t+z, and the residual exists in both years.
    """
    e = eps.rename(columns={"resid": "eps"})[["person_id", "year", "eps"]]
    base = frame[["person_id", "year", "earn"]].merge(e, on=["person_id", "year"],
                                                      how="left")
    nxt = base.copy()
    nxt["year"] = nxt["year"] - z
    merged = base.merge(nxt, on=["person_id", "year"], suffixes=("", "_z"))
    m_t = merged["year"].map(floor_m)
    m_tz = (merged["year"] + z).map(floor_m)
    ok = (
        (merged["earn"] > m_t)
        & (merged["earn_z"] > m_tz / 3.0)
        & merged["eps"].notna()
        & merged["eps_z"].notna()
    )
    out = merged.loc[ok, ["person_id", "year"]].copy()
    out["g"] = (merged.loc[ok, "eps_z"] - merged.loc[ok, "eps"]).to_numpy()
    return out.reset_index(drop=True)


def longterm_average_w(frame: pd.DataFrame, window: tuple,
                       persons=None) -> pd.Series:
    """12-year mean of real annual earnings, zero years included."""
    lo, hi = window
    n_years = hi - lo + 1
    sub = frame[(frame["year"] >= lo) & (frame["year"] <= hi)]
    if persons is not None:
        sub = sub[sub["person_id"].isin(set(persons))]
    w = sub.groupby("person_id")["earn"].agg(lambda s: s.fillna(0.0).sum()) / n_years
    return w.rename("w")


def activity_summary(frame: pd.DataFrame, window: tuple,
                     persons=None) -> pd.DataFrame:
    """Per-person activity record over the analysis window.

    Classifies each year as fully active (4 positive quarters), partially
    active (1-3), or inactive (0); flags activity in each of the three
    4-year sub-periods; computes growth of period-average earnings from
    the first to the last sub-period (only for the long-term active) and
    the variance of the year-to-year arc percentage change of annual
    earnings over consecutive positive years.
    """
    lo, hi = window
    n_years = hi - lo + 1
    if n_years % 3 != 0:
        raise ValueError("window length must split into three equal periods")
    plen = n_years // 3
    sub = frame[(frame["year"] >= lo) & (frame["year"] <= hi)].copy()
    if persons is not None:
        sub = sub[sub["person_id"].isin(set(persons))]
    sub = sub.sort_values(["person_id", "year"], kind="mergesort")
    sub["earn0"] = sub["earn"].fillna(0.0)
    sub["period"] = (sub["year"] - lo) // plen

    rows = []
    for pid, ps in sub.groupby("person_id", sort=True):
        q = ps["active_quarters"].to_numpy()
        e = ps["earn0"].to_numpy()
        fully = int((q == 4).sum())
        partial = int(((q >= 1) & (q <= 3)).sum())
        inactive = int((q == 0).sum())
        per_active = [bool((q[ps["period"] == k] >= 1).any()) for k in range(3)]
        longterm = all(per_active)
        if longterm:
            first = e[ps["period"].to_numpy() == 0].mean()
            last = e[ps["period"].to_numpy() == 2].mean()
            growth = (last - first) / first if first > 0 else np.nan
        else:
            growth = np.nan
        pos = e > 0
        pair = pos[:-1] & pos[1:]
        if pair.any():
            a = 2.0 * (e[1:][pair] - e[:-1][pair]) / (e[1:][pair] + e[:-1][pair])
            arc_var = float(np.var(a))
        else:
            arc_var = np.nan
        rows.append((pid, fully, partial, inactive,
                     per_active[0], per_active[1], per_active[2],
                     longterm, growth, arc_var))
    return pd.DataFrame(rows, columns=[
        "person_id", "years_fully_active", "years_partially_active",
        "years_inactive", "active_period1", "active_period2", "active_period3",
        "longterm_active", "growth", "arc_volatility"])
