"""Missing-data imputation for annual job hours and education.

Hours are modeled by per-stratum least squares on log hours using the
jobs with observed hours; education is hot-decked within demographic
cells, merging sparse cells up a fixed key-dropping ladder.  Observed
values are never altered, and every draw is deterministic under the
seed.
"""

from __future__ import annotations

import hashlib

import numpy as np
import pandas as pd

from .diststats import quantile
from .panel import QUARTER_COLUMNS

_EDUC_STREAM = 11

# hot-deck cell keys, broadest merge last; each ladder step drops the
# leading key of the previous one
EDUC_CELL_LADDER = [
    ["sex", "foreign_born", "age_band", "race_eth", "earn_quartile", "modal_industry"],
    ["sex", "foreign_born", "age_band", "race_eth", "earn_quartile"],
    ["sex", "foreign_born", "age_band", "race_eth"],
    ["sex", "foreign_born", "race_eth"],
    ["sex", "foreign_born"],
    [],
]


def _hours_design(jobs: pd.DataFrame) -> np.ndarray:
    """Covariate matrix for the hours model (intercept first)."""
    loge = np.log(jobs["job_earn"].to_numpy())
    age = jobs["age"].to_numpy(float)
    cols = [np.ones(len(jobs))]
    cols += [loge ** p for p in range(1, 5)]
    cols += [age ** p for p in range(1, 5)]
    for r in sorted(jobs["race_eth"].unique()):
        cols.append((jobs["race_eth"] == r).to_numpy(float))
    cols.append(jobs["foreign_born"].to_numpy(float))
    for s in sorted(jobs["industry_sector"].unique()):
        cols.append((jobs["industry_sector"] == s).to_numpy(float))
    cols.append(jobs["other_earn"].to_numpy(float))
    return np.column_stack(cols)


def _job_features(panel) -> pd.DataFrame:
    """Job rows augmented with the stratum keys and model covariates."""
    jobs = panel.jobs.copy()
    jobs["job_earn"] = jobs[QUARTER_COLUMNS].sum(axis=1)
    jobs = jobs[jobs["job_earn"] > 0].copy()
    jobs["quarter_pattern"] = (
        (jobs[QUARTER_COLUMNS].to_numpy() > 0) @ (1 << np.arange(4)))
    tot = jobs.groupby(["person_id", "year"])["job_earn"].transform("sum")
    jobs["other_earn"] = tot - jobs["job_earn"]
    mx = jobs.groupby(["person_id", "year"])["job_earn"].transform("max")
    jobs["dominant"] = jobs["job_earn"] == mx
    # break exact earnings ties: the alphabetically first employer is dominant
    first = jobs.sort_values(["person_id", "year", "job_earn", "employer_id"],
                             ascending=[True, True, False, True],
                             kind="mergesort").drop_duplicates(["person_id", "year"])
    dom_key = set(zip(first["person_id"], first["year"], first["employer_id"]))
    jobs["dominant"] = [
        (p, y, e) in dom_key
        for p, y, e in zip(jobs["person_id"], jobs["year"], jobs["employer_id"])]
    attrs = panel.persons[["person_id", "sex", "race_eth", "foreign_born",
                           "birth_year"]]
    jobs = jobs.merge(attrs, on="person_id", how="left")
    jobs["age"] = jobs["year"] - jobs["birth_year"]
    return jobs


def _identified_fit(X_fit, y_fit):
    """Least squares on a full-rank column subset (intercept first).

    Dummy families make the raw design exactly collinear, and the
    minimum-norm solution then splits level between the intercept and
    the dummies; rows whose category never occurs in the fitting subset
    would lose that share when predicted.  Fitting on an identified
    subset keeps the level in the intercept so unseen categories
    predict at the base level.
    """
    keep = [0]
    for j in range(1, X_fit.shape[1]):
        col = X_fit[:, j]
        if col.std() == 0:
            continue
        trial = X_fit[:, keep + [j]]
        if np.linalg.matrix_rank(trial) == len(keep) + 1:
            keep.append(j)
    beta, *_ = np.linalg.lstsq(X_fit[:, keep], y_fit, rcond=None)
    return keep, beta


def impute_hours(panel):
    """Complete the hours column of the job table.

    Fits log annual job hours per (quarter pattern x dominant flag x sex)
    stratum on observed rows and fills missing rows with exponentiated
    predictions (clamped to the observed log-hours range plus a margin);
    strata too small to fit use a pooled model and are flagged.  Returns
    (jobs with hours_filled + hours_imputed columns, audit table).
    """
    jobs = _job_features(panel)
    observed = jobs["hours"].notna() & (jobs["hours"] > 0)
    if not observed.any():
        raise ValueError("no job rows with observed hours")
    X_all = _hours_design(jobs)
    y_all = np.log(jobs["hours"].to_numpy(float), where=observed.to_numpy(),
                   out=np.zeros(len(jobs)))
    pooled_cols, pooled_beta = _identified_fit(X_all[observed.to_numpy()],
                                               y_all[observed.to_numpy()])

    filled = jobs["hours"].to_numpy(float).copy()
    imputed = np.zeros(len(jobs), dtype=bool)
    audit = []
    strata = jobs.reset_index(drop=True).groupby(
        ["quarter_pattern", "dominant", "sex"], sort=True)
    obs_np = observed.to_numpy()
    # a stratum fit needs comfortably more rows than covariates, otherwise
    # the quartics extrapolate wildly on the rows being filled; predictions
    # are additionally clamped to the observed log-hours range plus a margin
    min_stratum = X_all.shape[1] + 5
    y_obs = y_all[obs_np]
    clamp_lo, clamp_hi = y_obs.min() - 2.0, y_obs.max() + 2.0
    for key, idx in strata.indices.items():
        obs_idx = idx[obs_np[idx]]
        mis_idx = idx[~obs_np[idx]]
        fallback = len(obs_idx) < min_stratum
        if len(mis_idx):
            if fallback:
                cols, beta = pooled_cols, pooled_beta
            else:
                cols, beta = _identified_fit(X_all[obs_idx], y_all[obs_idx])
            logp = X_all[np.ix_(mis_idx, cols)] @ beta
            bad = ~np.isfinite(logp)
            if bad.any():
                logp[bad] = X_all[np.ix_(mis_idx[bad], pooled_cols)] @ pooled_beta
            filled[mis_idx] = np.exp(np.clip(logp, clamp_lo, clamp_hi))
            imputed[mis_idx] = True
        audit.append(key + (len(obs_idx), len(mis_idx), fallback))
    out = jobs.copy()
    out["hours_filled"] = filled
    out["hours_imputed"] = imputed
    audit = pd.DataFrame(audit, columns=["quarter_pattern", "dominant", "sex",
                                         "n_observed", "n_imputed", "fallback"])
    return out, audit


def _cell_rng(seed: int, cell) -> np.random.Generator:
    digest = hashlib.blake2b(repr(cell).encode(), digest_size=6).digest()
    sub = int.from_bytes(digest, "big")
    return np.random.Generator(np.random.Philox(
        key=[seed, (_EDUC_STREAM << 48) + sub]))


def _person_features(persons: pd.DataFrame, jobs: pd.DataFrame,
                     reference_year: int) -> pd.DataFrame:
    """Person-level hot-deck cell features."""
    feat = persons[["person_id", "sex", "foreign_born", "race_eth",
                    "birth_year", "education"]].copy()
    feat["age_band"] = ((reference_year - feat["birth_year"]) // 10).astype(np.int64)
    j = jobs.copy()
    j["job_earn"] = j[QUARTER_COLUMNS].sum(axis=1)
    tot = j.groupby("person_id")["job_earn"].sum()
    by_sector = (j.groupby(["person_id", "industry_sector"])["job_earn"].sum()
                  .reset_index()
                  .sort_values(["person_id", "job_earn", "industry_sector"],
                               ascending=[True, False, True], kind="mergesort")
                  .drop_duplicates("person_id").set_index("person_id"))
    feat["total_earn"] = tot.reindex(feat["person_id"]).fillna(0.0).to_numpy()
    feat["modal_industry"] = (by_sector["industry_sector"]
                              .reindex(feat["person_id"]).fillna("none").to_numpy())
    pos = feat["total_earn"].to_numpy()
    cuts = [quantile(pos, q) for q in (0.25, 0.5, 0.75)] if len(pos) else []
    feat["earn_quartile"] = np.searchsorted(np.asarray(cuts), pos, side="left")
    return feat


def impute_education(persons: pd.DataFrame, jobs: pd.DataFrame, seed: int,
                     min_cell: int = 10, reference_year: int = 2004):
    """Hot-deck the missing education values.

    Each missing person draws from the observed education distribution of
    the smallest cell on the merge ladder holding at least min_cell
    observed values.  Returns (education Series indexed by person_id,
    audit table with the cell, ladder level, and counts).
    """
    if persons["education"].notna().sum() == 0:
        raise ValueError("no observed education values to impute from")
    feat = _person_features(persons, jobs, reference_year)
    observed = feat["education"].notna()

    # pre-index observed values by cell at every ladder level
    level_groups = []
    for keys in EDUC_CELL_LADDER:
        if keys:
            grp = feat[observed].groupby(keys, sort=True)["education"]
            level_groups.append({k if isinstance(k, tuple) else (k,):
                                 np.sort(v.to_numpy())
                                 for k, v in grp})
        else:
            level_groups.append({(): np.sort(feat.loc[observed, "education"].to_numpy())})

    missing = feat[~observed].sort_values("person_id")
    assignments = {}
    buckets = {}
    for _, row in missing.iterrows():
        for level, keys in enumerate(EDUC_CELL_LADDER):
            cell = tuple(row[k] for k in keys)
            pool = level_groups[level].get(cell)
            if pool is not None and len(pool) >= min_cell:
                buckets.setdefault((level, cell), []).append(row["person_id"])
                break
        else:
            # global pool always exists (some education observed)
            cell = ()
            buckets.setdefault((len(EDUC_CELL_LADDER) - 1, cell),
                               []).append(row["person_id"])

    audit = []
    for (level, cell), pids in sorted(buckets.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        pool = level_groups[level][cell]
        rng = _cell_rng(seed, (level, cell))
        draws = pool[rng.integers(len(pool), size=len(pids))]
        for pid, val in zip(sorted(pids), draws):
            assignments[pid] = val
        audit.append((level, str(cell), len(pool), len(pids), level > 0))

    educ = feat.set_index("person_id")["education"].copy()
    for pid, val in assignments.items():
        educ.loc[pid] = val
    audit = pd.DataFrame(audit, columns=["level", "cell", "n_observed",
                                         "n_imputed", "merged"])
    return educ, audit
