"""Distributional statistics: quantiles, dispersion, tail fits, profiles.

One quantile estimator is used everywhere: nearest-rank-lower,
q(p) = x_(k) with k = ceil(p * n) on the sorted values.  This keeps
percentile-based statistics consistent and exactly reproducible across
modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


def quantile(values, p: float) -> float:
    """Nearest-rank-lower quantile: x_(ceil(p*n)) on sorted values."""
    x = np.sort(np.asarray(values, float))
    n = x.size
    if n == 0:
        raise ValueError("quantile of empty input")
    k = int(np.ceil(p * n))
    k = min(max(k, 1), n)
    return float(x[k - 1])


def quantiles(values, ps) -> np.ndarray:
    x = np.sort(np.asarray(values, float))
    n = x.size
    if n == 0:
        raise ValueError("quantile of empty input")
    ks = np.ceil(np.asarray(ps, float) * n).astype(int)
    ks = np.clip(ks, 1, n)
    return x[ks - 1]


def gini(values) -> float:
    """Gini coefficient via the sorted-index formula."""
    x = np.sort(np.asarray(values, float))
    n = x.size
    if n == 0:
        raise ValueError("gini of empty input")
    total = x.sum()
    if total == 0:
        return 0.0
    i = np.arange(1, n + 1)
    return float(((2 * i - n - 1) * x).sum() / (n * total))


def top_share(values, q: float) -> float:
    """Share of total earnings held by observations above quantile q."""
    x = np.sort(np.asarray(values, float))
    n = x.size
    k = min(max(int(np.ceil(q * n)), 1), n)
    total = x.sum()
    if total == 0:
        return 0.0
    return float(x[k:].sum() / total)


NORMAL_CS_KURTOSIS = 2.91   # (P97.5-P2.5)/(P75-P25) for the normal distribution
NORMAL_P90_P10_SIGMA = 2.56


@dataclass
class DistributionSummary:
    n: int
    percentiles: dict
    p90_p10: float
    sigma_scaled: float          # 2.56 * standard deviation
    kelley_skewness: float
    cs_excess_kurtosis: float
    gini: float
    top_shares: dict = field(default_factory=dict)


def kelley_skewness(values) -> float:
    p10, p50, p90 = quantiles(values, [0.10, 0.50, 0.90])
    denom = p90 - p10
    if denom == 0:
        return 0.0
    return float(((p90 - p50) - (p50 - p10)) / denom)


def cs_excess_kurtosis(values) -> float:
    p025, p25, p75, p975 = quantiles(values, [0.025, 0.25, 0.75, 0.975])
    denom = p75 - p25
    if denom == 0:
        return float("nan")
    return float((p975 - p025) / denom - NORMAL_CS_KURTOSIS)


def summarize(values, percentiles=(10, 25, 50, 75, 90),
              top_share_cuts=(0.90, 0.95, 0.99)) -> DistributionSummary:
    """Full distributional summary of a value vector."""
    x = np.asarray(values, float)
    if x.size == 0:
        raise ValueError("summarize: empty input")
    if not np.isfinite(x).all():
        raise ValueError("summarize: non-finite values")
    if x.size < 2:
        raise ValueError("summarize: need n >= 2 for dispersion")
    pcts = {p: float(quantile(x, p / 100.0)) for p in percentiles}
    p10, p90 = quantile(x, 0.10), quantile(x, 0.90)
    return DistributionSummary(
        n=int(x.size),
        percentiles=pcts,
        p90_p10=float(p90 - p10),
        sigma_scaled=float(NORMAL_P90_P10_SIGMA * x.std()),
        kelley_skewness=kelley_skewness(x),
        cs_excess_kurtosis=cs_excess_kurtosis(x),
        gini=gini(x) if (x >= 0).all() else float("nan"),
        top_shares={q: top_share(x, q) for q in top_share_cuts} if (x >= 0).all() else {},
    )


def percentile_delta_series(df: pd.DataFrame, base_year: int,
                            percentiles=(10, 25, 50, 75, 90),
                            value_col="value", by=("sex",)) -> pd.DataFrame:
    """Per-group percentile drift relative to a base year.

    df needs columns [year, value_col] plus the `by` keys.  Returns rows
    (by..., year, percentile, quantile, delta) with
    delta(p, t) = q_t(p) - q_base(p).
    """
    by = list(by)
    if base_year not in set(df["year"]):
        raise ValueError(f"base year {base_year} not present")
    rows = []
    for keys, sub in df.groupby(by, sort=True):
        keys = keys if isinstance(keys, tuple) else (keys,)
        base = {p: quantile(sub.loc[sub["year"] == base_year, value_col], p / 100)
                for p in percentiles}
        for year, ysub in sub.groupby("year", sort=True):
            for p in percentiles:
                q = quantile(ysub[value_col], p / 100)
                rows.append(keys + (int(year), p, q, q - base[p]))
    return pd.DataFrame(rows, columns=by + ["year", "percentile", "quantile", "delta"])


_BIN_STATS = {
    "p90_p10": lambda v: quantile(v, 0.90) - quantile(v, 0.10),
    "kelley": kelley_skewness,
    "cs_kurtosis": cs_excess_kurtosis,
}


def equal_count_bins(values, n_bins: int, tiebreak=None) -> np.ndarray:
    """Assign sorted observations to n_bins equal-count bins (counts differ <= 1)."""
    x = np.asarray(values, float)
    n = x.size
    if n < n_bins:
        raise ValueError(f"need at least {n_bins} observations, got {n}")
    if tiebreak is None:
        order = np.argsort(x, kind="stable")
    else:
        order = np.lexsort((np.asarray(tiebreak), x))
    bins = np.empty(n, dtype=np.int64)
    for b, chunk in enumerate(np.array_split(np.arange(n), n_bins)):
        bins[order[chunk]] = b
    return bins


def binned_volatility_profile(df: pd.DataFrame, stat: str = "p90_p10",
                              n_bins: int = 41, rank_col="p_prev",
                              value_col="g", age_col="age_class") -> pd.DataFrame:
    """Volatility statistic of residual-earnings changes by prior-earnings bin.

    Observations (pooled over years) are sorted on rank_col into n_bins
    equal-count bins; the statistic of value_col is computed within each
    bin overall and by age class.
    """
    if stat not in _BIN_STATS:
        raise ValueError(f"unknown stat {stat!r}")
    fn = _BIN_STATS[stat]
    work = df[[rank_col, value_col] + ([age_col] if age_col in df.columns else [])].dropna(
        subset=[rank_col, value_col]).reset_index(drop=True)
    bins = equal_count_bins(work[rank_col].to_numpy(), n_bins)
    work = work.assign(bin=bins)
    rows = []
    for b, sub in work.groupby("bin", sort=True):
        rows.append((int(b), "all", len(sub), fn(sub[value_col].to_numpy())))
        if age_col in work.columns:
            for ac, asub in sub.groupby(age_col, sort=True):
                rows.append((int(b), str(ac), len(asub),
                             fn(asub[value_col].to_numpy()) if len(asub) else np.nan))
    return pd.DataFrame(rows, columns=["bin", "age_class", "n", stat])


def pareto_tail_fit(values, top_fraction: float, exclude_fraction: float = 1e-5):
    """OLS slope of log empirical CCDF on log earnings over the top tail.

    The very top exclude_fraction of observations is dropped first.
    Returns (slope, drift_flag); drift_flag is set when the slope differs
    materially between the lower and upper half of the tail, indicating a
    non-Pareto tail.
    """
    if not 0 < top_fraction <= 0.5:
        raise ValueError("top_fraction must be in (0, 0.5]")
    x = np.sort(np.asarray(values, float))
    n = x.size
    n_excl = int(np.floor(exclude_fraction * n))
    if n_excl:
        x = x[:-n_excl]
    n = x.size
    ccdf = 1.0 - np.arange(1, n + 1) / (n + 1.0)
    k = int(np.ceil(top_fraction * n))
    tail_x, tail_c = x[-k:], ccdf[-k:]
    keep = tail_x > 0
    tail_x, tail_c = tail_x[keep], tail_c[keep]
    if tail_x.size < 10:
        raise ValueError("fewer than 10 tail points")

    def ols_slope(lx, lc):
        lx = lx - lx.mean()
        return float((lx * (lc - lc.mean())).sum() / (lx * lx).sum())

    lx, lc = np.log(tail_x), np.log(tail_c)
    slope = ols_slope(lx, lc)
    half = tail_x.size // 2
    s_lo = ols_slope(lx[:half], lc[:half])
    s_hi = ols_slope(lx[half:], lc[half:])
    scale = max(abs(slope), 1e-12)
    drift_flag = abs(s_hi - s_lo) / scale > 0.3
    return slope, drift_flag


def percentile_window_profile(df: pd.DataFrame, value_col: str,
                              percentiles=(10, 25, 50, 75, 90),
                              mean_cols=(), cat_cols=None,
                              id_col="person_id") -> pd.DataFrame:
    """Percentile table in the style of worker-profile tables.

    Rows are sorted by value_col (ties broken by id_col).  For each
    requested percentile p the exact quantile of value_col is reported,
    and every column in mean_cols is averaged over the workers strictly
    between the p-1 and p+1 percentile positions.  cat_cols maps a
    categorical column name to the number of top categories to report
    (with their combined within-window share).
    """
    cat_cols = dict(cat_cols or {})
    n = len(df)
    if n < 100:
        raise ValueError("group smaller than 100 persons: window degenerate")
    order = np.lexsort((df[id_col].to_numpy(), df[value_col].to_numpy()))
    sorted_df = df.iloc[order].reset_index(drop=True)
    vals = sorted_df[value_col].to_numpy()
    rows = []
    for p in percentiles:
        k = min(max(int(np.ceil(p / 100 * n)), 1), n)
        lo = int(np.floor((p - 1) / 100 * n))        # positions lo..hi-1 (0-based)
        hi = min(int(np.ceil((p + 1) / 100 * n)), n)
        window = sorted_df.iloc[lo:hi]
        row = {"percentile": p, value_col: float(vals[k - 1]), "window_n": len(window)}
        for c in mean_cols:
            row[c] = float(window[c].mean())
        for c, topk in cat_cols.items():
            counts = window[c].value_counts()
            # deterministic: by count desc, then category label
            counts = counts.sort_index().sort_values(ascending=False, kind="mergesort")
            top = list(counts.index[:topk])
            # always emit topk columns so profiles concatenate cleanly
            top += [np.nan] * (topk - len(top))
            row.update({f"{c}_top{i+1}": t for i, t in enumerate(top)})
            row[f"{c}_share"] = float(counts.iloc[:topk].sum() / len(window))
        rows.append(row)
    return pd.DataFrame(rows)


def log_histogram(values, n_bins: int = 60) -> pd.DataFrame:
    """Fixed-width histogram density (plot-ready) of a value vector."""
    x = np.asarray(values, float)
    x = x[np.isfinite(x)]
    counts, edges = np.histogram(x, bins=n_bins, density=True)
    mid = 0.5 * (edges[:-1] + edges[1:])
    with np.errstate(divide="ignore"):
        logd = np.log(counts)
    return pd.DataFrame({"bin_mid": mid, "density": counts, "log_density": logd})
