"""Group earnings-gap regressions and quantile counterfactual decompositions.

Works on the 12-year cohort: regresses log long-term average earnings on
demographic-group indicators plus covariate blocks (the five-model OLS
ladder), fits 99 quantile regressions per group, simulates counterfactual
earnings distributions by drawing a quantile index per person, and splits
each group's gap to the reference group into covariate, coefficient, and
residual components under both decomposition orderings.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .diststats import quantile
from .measures import activity_summary, longterm_average_w
from .panel import EDUCATION_LEVELS
from .geo import SECTOR_LETTERS
from .quantreg import fit_quantile_grid

REFERENCE_GROUP = 0
DEFAULT_THETAS = (10, 25, 50, 75, 90)
SMALL_GROUP_N = 500
BLANK_SHARE_EPS = 1e-6
HOURS_SCALE = 1000.0  # hours enter the quartic in thousands for conditioning

# Cumulative covariate blocks of the five-model ladder.  Model 5 swaps the
# education block for the two-way fixed-effect measures.
MODEL_BLOCKS = {
    1: (),
    2: ("hours",),
    3: ("hours", "geo"),
    4: ("hours", "geo", "age", "educ"),
    5: ("hours", "geo", "age", "akm"),
}


def build_design(frame, cohort, window, hours=None, person_effects=None,
                 avg_firm_effects=None, education=None, jobs=None) -> pd.DataFrame:
    """One row per cohort person with the response and every covariate.

    hours: person -> average annual hours (post-imputation); education:
    person -> completed level (post-imputation, falls back to the frame's
    observed column); person_effects / avg_firm_effects: fixed-effect
    series (zero-filled for persons outside the estimation sample); jobs:
    job-year rows used to pick each person's dominant industry sector by
    total earnings (ties to the alphabetically first sector).
    """
    lo, hi = window
    members = list(cohort.members) if hasattr(cohort, "members") else sorted(cohort)
    w = longterm_average_w(frame, window, persons=members).reindex(members)
    if (w <= 0).any() or w.isna().any():
        bad = w.index[(w <= 0) | w.isna()][0]
        raise ValueError(f"non-positive long-term earnings for person {bad!r}")
    act = activity_summary(frame, window, persons=members).set_index("person_id")

    sub = frame[frame["person_id"].isin(set(members))]
    per = sub.groupby("person_id").agg(
        birth_year=("birth_year", "first"), sex=("sex", "first"),
        group=("group", "first"), division=("division", "first"),
        educ_obs=("education", "first"))

    design = pd.DataFrame(index=pd.Index(members, name="person_id"))
    design["log_w"] = np.log(w)
    design["group"] = per["group"].reindex(members)
    design["initial_age"] = lo - per["birth_year"].reindex(members)
    design["years_inactive"] = act["years_inactive"].reindex(members)
    design["years_partial"] = act["years_partially_active"].reindex(members)
    design["division"] = per["division"].reindex(members)

    if hours is None:
        wsub = sub[(sub["year"] >= lo) & (sub["year"] <= hi)]
        hours = wsub.groupby("person_id")["hours"].mean()
    design["hours_mean"] = pd.Series(hours).reindex(members).fillna(0.0)

    educ = pd.Series(education).reindex(members) if education is not None \
        else per["educ_obs"].reindex(members)
    design["education"] = educ.fillna(EDUCATION_LEVELS[0])

    if jobs is not None:
        j = jobs[(jobs["year"] >= lo) & (jobs["year"] <= hi)
                 & jobs["person_id"].isin(set(members))].copy()
        j["earn"] = j[["q1", "q2", "q3", "q4"]].sum(axis=1)
        by = (j.groupby(["person_id", "industry_sector"])["earn"].sum()
               .reset_index()
               .sort_values(["person_id", "earn", "industry_sector"],
                            ascending=[True, False, True], kind="mergesort"))
        dom = by.drop_duplicates("person_id").set_index("person_id")["industry_sector"]
        design["industry"] = dom.reindex(members).fillna(SECTOR_LETTERS[0])
    else:
        design["industry"] = SECTOR_LETTERS[0]

    design["person_effect"] = (pd.Series(person_effects).reindex(members).fillna(0.0)
                               if person_effects is not None else 0.0)
    design["avg_firm_effect"] = (pd.Series(avg_firm_effects).reindex(members).fillna(0.0)
                                 if avg_firm_effects is not None else 0.0)
    numeric = design[["log_w", "initial_age", "years_inactive", "years_partial",
                      "hours_mean", "person_effect", "avg_firm_effect"]]
    if not np.isfinite(numeric.to_numpy(float)).all():
        bad = numeric.columns[~np.isfinite(numeric.to_numpy(float)).all(axis=0)]
        raise ValueError(f"non-finite design columns: {list(bad)}")
    return design.reset_index()


def _block_columns(design: pd.DataFrame, blocks, include_group: bool):
    """Assemble the model matrix columns for the requested covariate blocks."""
    cols = {"intercept": np.ones(len(design))}
    if include_group:
        g = design["group"].to_numpy()
        for k in range(1, 20):
            cols[f"group_{k}"] = (g == k).astype(float)
    if "hours" in blocks:
        h = design["hours_mean"].to_numpy() / HOURS_SCALE
        for p in range(1, 5):
            cols[f"hours{p}"] = h ** p
        cols["years_inactive"] = design["years_inactive"].to_numpy(float)
        cols["years_partial"] = design["years_partial"].to_numpy(float)
    if "geo" in blocks:
        d = design["division"].to_numpy()
        for k in range(2, 10):
            cols[f"div_{k}"] = (d == k).astype(float)
        ind = design["industry"].to_numpy()
        for s in SECTOR_LETTERS[1:]:
            cols[f"ind_{s}"] = (ind == s).astype(float)
    if "age" in blocks:
        cols["initial_age"] = design["initial_age"].to_numpy(float)
    if "educ" in blocks:
        e = design["education"].to_numpy()
        for lvl in EDUCATION_LEVELS[1:]:
            cols[f"educ_{lvl}"] = (e == lvl).astype(float)
    if "akm" in blocks:
        cols["person_effect"] = design["person_effect"].to_numpy(float)
        cols["avg_firm_effect"] = design["avg_firm_effect"].to_numpy(float)
    names = list(cols)
    return np.column_stack([cols[c] for c in names]), names


def _drop_dependent(X: np.ndarray, names):
    """Greedy left-to-right full-rank column subset (deterministic)."""
    if not np.isfinite(X).all():
        bad = [n for n, ok in zip(names, np.isfinite(X).all(axis=0)) if not ok]
        raise ValueError(f"non-finite model-matrix columns: {bad}")
    kept_idx = []
    dropped = []
    rank = 0
    for j in range(X.shape[1]):
        cand = X[:, kept_idx + [j]]
        r = np.linalg.matrix_rank(cand)
        if r > rank:
            kept_idx.append(j)
            rank = r
        else:
            dropped.append(names[j])
    return X[:, kept_idx], [names[j] for j in kept_idx], dropped


def model_matrix(design: pd.DataFrame, model: int, include_group: bool = True):
    """Full-rank model matrix for one ladder model.

    Returns (X, kept column names, dropped column names).
    """
    if model not in MODEL_BLOCKS:
        raise ValueError(f"model must be 1..5, got {model}")
    X, names = _block_columns(design, MODEL_BLOCKS[model], include_group)
    return _drop_dependent(X, names)


def fit_ols_ladder(design: pd.DataFrame, models=(1, 2, 3, 4, 5)) -> pd.DataFrame:
    """OLS fits of every ladder model; long table of coefficients plus R^2.

    Columns: model, term, coef, r2, n, dropped (semicolon list, repeated
    per row).  The reference group's indicator is omitted, so group
    coefficients read as gaps to that group.
    """
    y = design["log_w"].to_numpy()
    rows = []
    for m in models:
        X, names, dropped = model_matrix(design, m)
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ beta
        tss = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float((resid ** 2).sum()) / tss if tss > 0 else np.nan
        for name, b in zip(names, beta):
            rows.append((m, name, float(b), r2, len(y), ";".join(dropped)))
    return pd.DataFrame(rows, columns=["model", "term", "coef", "r2", "n", "dropped"])


def fit_group_quantiles(design: pd.DataFrame, group: int, taus=None):
    """99 quantile regressions for one group on the Model-4 covariates.

    Returns dict with keys beta (n_tau x p), columns, taus, n, flagged
    (True when the group is small enough that estimates are fragile).
    """
    if taus is None:
        taus = np.arange(1, 100) / 100.0
    sub = design[design["group"] == group]
    if len(sub) == 0:
        raise ValueError(f"no cohort rows for group {group}")
    X, names, dropped = model_matrix(sub, 4, include_group=False)
    if len(sub) <= len(names):
        raise ValueError(f"group {group}: {len(sub)} rows cannot support {len(names)} covariates")
    beta = fit_quantile_grid(X, sub["log_w"].to_numpy(), taus=taus)
    return {"group": group, "beta": beta, "columns": names,
            "dropped": dropped, "taus": np.asarray(taus),
            "n": len(sub), "flagged": len(sub) < SMALL_GROUP_N}


def _design_matrix_for(fit, design_rows: pd.DataFrame) -> np.ndarray:
    """Covariate rows of one group expressed in another fit's column basis."""
    X, names = _block_columns(design_rows, MODEL_BLOCKS[4], include_group=False)
    pos = {c: i for i, c in enumerate(names)}
    return X[:, [pos[c] for c in fit["columns"]]]


def simulate_mm(fit, design_rows: pd.DataFrame, seed: int, cov_group: int):
    """Simulated log-earnings sample: one quantile-index draw per person.

    Each person in design_rows draws u ~ U(0,1); the quantile index is
    clamp(ceil(99u), 1, 99) and the emitted value is x_i' beta at that
    index.  The random stream is keyed by (seed, covariate-source group),
    so any fit evaluated on the same rows shares the same draws.
    """
    X = _design_matrix_for(fit, design_rows)
    rng = np.random.Generator(np.random.Philox(key=[seed, (7 << 48) + cov_group]))
    u = rng.uniform(size=len(X))
    idx = np.clip(np.ceil(99.0 * u).astype(np.int64), 1, 99) - 1
    return np.einsum("ij,ij->i", X, fit["beta"][idx])


def decompose_gap(design: pd.DataFrame, fits: dict, group: int, seed: int,
                  thetas=DEFAULT_THETAS) -> pd.DataFrame:
    """Gap components vs the reference group at the requested percentiles.

    The four simulated samples (own/reference coefficients x own/reference
    covariates) are computed once and their quantiles reused, so the
    covariate and coefficient components telescope to the predicted gap
    exactly, for both orderings.  Shares are NaN when the predicted gap
    is below the blanking threshold.
    """
    ref = fits[REFERENCE_GROUP]
    own = fits[group]
    rows_g = design[design["group"] == group]
    rows_0 = design[design["group"] == REFERENCE_GROUP]

    sims = {
        "gg": simulate_mm(own, rows_g, seed, group),
        "g0": simulate_mm(own, rows_0, seed, REFERENCE_GROUP),
        "00": simulate_mm(ref, rows_0, seed, REFERENCE_GROUP),
        "0g": simulate_mm(ref, rows_g, seed, group),
    }
    out = []
    for th in thetas:
        p = th / 100.0
        q = {k: quantile(v, p) for k, v in sims.items()}
        actual = quantile(rows_g["log_w"].to_numpy(), p) \
            - quantile(rows_0["log_w"].to_numpy(), p)
        predicted = q["gg"] - q["00"]
        residual = actual - predicted
        for ordering in (1, 2):
            if ordering == 1:
                cov = q["gg"] - q["g0"]
                coef = q["g0"] - q["00"]
            else:
                cov = q["0g"] - q["00"]
                coef = q["gg"] - q["0g"]
            blank = abs(predicted) < BLANK_SHARE_EPS
            out.append({
                "group": group, "theta": th, "ordering": ordering,
                "actual": actual, "predicted": predicted,
                "covariates": cov, "coefficients": coef,
                "residual": residual,
                "covariate_share": np.nan if blank else cov / predicted,
                "coefficient_share": np.nan if blank else coef / predicted,
            })
    return pd.DataFrame(out)


def counterfactual_ratios(design: pd.DataFrame, fits: dict, group: int,
                          seed: int, which: str,
                          thetas=DEFAULT_THETAS) -> pd.DataFrame:
    """Exponentiated counterfactual quantile ratios to the reference group.

    which='ref_characteristics': own coefficients on reference covariates.
    which='ref_coefficients': reference coefficients on own covariates.
    """
    ref = fits[REFERENCE_GROUP]
    rows_0 = design[design["group"] == REFERENCE_GROUP]
    base = simulate_mm(ref, rows_0, seed, REFERENCE_GROUP)
    if which == "ref_characteristics":
        cf = simulate_mm(fits[group], rows_0, seed, REFERENCE_GROUP)
    elif which == "ref_coefficients":
        rows_g = design[design["group"] == group]
        cf = simulate_mm(ref, rows_g, seed, group)
    else:
        raise ValueError(f"unknown counterfactual kind {which!r}")
    rows = [{"group": group, "theta": th, "which": which,
             "ratio": float(np.exp(quantile(cf, th / 100.0)
                                   - quantile(base, th / 100.0)))}
            for th in thetas]
    return pd.DataFrame(rows)


def rearranged_quantile_path(fit, design: pd.DataFrame) -> pd.DataFrame:
    """Diagnostic: predicted quantiles at the group covariate mean.

    Reports the raw path across the 99 levels and its sorted (monotone)
    rearrangement; crossings show up as differences between the two.
    """
    sub = design[design["group"] == fit["group"]]
    X = _design_matrix_for(fit, sub)
    xbar = X.mean(axis=0)
    raw = fit["beta"] @ xbar
    return pd.DataFrame({"theta": (fit["taus"] * 100).astype(int),
                         "raw": raw, "rearranged": np.sort(raw)})
