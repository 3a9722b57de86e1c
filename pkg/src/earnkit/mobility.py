"""Rank-rank intragenerational mobility profiles and slopes."""

from __future__ import annotations

import numpy as np
import pandas as pd


def rank_percentiles(values) -> np.ndarray:
    """Ranks in (0, 100]: rank(x_(i)) = 100*i/n, ties get the mean rank."""
    x = np.asarray(values, float)
    n = x.size
    if n == 0:
        raise ValueError("rank of empty cell")
    order = np.argsort(x, kind="stable")
    pos = np.empty(n)
    pos[order] = 100.0 * np.arange(1, n + 1) / n
    ranks = pos.copy()
    s = pd.Series(pos).groupby(pd.Series(x)).transform("mean")
    ranks = s.to_numpy()
    return ranks


def rank_within_cells(df: pd.DataFrame, value_col: str,
                      cell_cols=("sex", "age")) -> pd.Series:
    """Percentile ranks of value_col computed separately within each cell."""
    out = np.empty(len(df))
    vals = df[value_col].to_numpy()
    grouper = df.reset_index(drop=True).groupby(list(cell_cols), sort=False)
    for _, idx in grouper.indices.items():
        out[idx] = rank_percentiles(vals[idx])
    return pd.Series(out, index=df.index, name="rank")


def mobility_profile(base: pd.DataFrame, future: pd.DataFrame,
                     by_age_class: bool = False) -> pd.DataFrame:
    """Mean future rank per integer base rank.

    base and future carry person_id and rank columns (already computed
    within sex x age cells); only persons present in both enter.  Profile
    rows are the 100 integer rank bins ceil(rank).
    """
    cols = ["person_id", "rank"] + (["age_class"] if by_age_class else [])
    m = base[cols].merge(future[["person_id", "rank"]], on="person_id",
                         suffixes=("_t", "_z"))
    if m.empty:
        raise ValueError("no overlapping persons between base and horizon year")
    m["bin"] = np.ceil(m["rank_t"]).astype(np.int64).clip(1, 100)
    keys = ["bin"] + (["age_class"] if by_age_class else [])
    prof = m.groupby(keys, sort=True).agg(
        mean_rank_z=("rank_z", "mean"), n=("rank_z", "size")).reset_index()
    return prof


def rank_rank_slope(base: pd.DataFrame, future: pd.DataFrame) -> float:
    """OLS slope of the future rank on the base rank over persons."""
    m = base[["person_id", "rank"]].merge(future[["person_id", "rank"]],
                                          on="person_id", suffixes=("_t", "_z"))
    x = m["rank_t"].to_numpy()
    y = m["rank_z"].to_numpy()
    if np.unique(x).size < 2:
        raise ValueError("degenerate base-rank variance")
    x = x - x.mean()
    return float((x * (y - y.mean())).sum() / (x * x).sum())
