import numpy as np
import pandas as pd
import pytest

from earnkit import diststats as ds


def test_quantile_nearest_rank_lower():
    x = [10, 20, 30, 40, 50]
    # k = ceil(p*n): p=0.5 -> 3rd order statistic
    assert ds.quantile(x, 0.5) == 30
    assert ds.quantile(x, 0.2) == 10
    assert ds.quantile(x, 0.21) == 20
    assert ds.quantile(x, 0.0) == 10
    assert ds.quantile(x, 1.0) == 50
    with pytest.raises(ValueError):
        ds.quantile([], 0.5)


def test_quantiles_matches_scalar():
    rng = np.random.default_rng(0)
    x = rng.normal(size=257)
    ps = [0.01, 0.1, 0.25, 0.5, 0.9, 0.999]
    assert np.array_equal(ds.quantiles(x, ps),
                          [ds.quantile(x, p) for p in ps])


def test_gini_known_values():
    assert ds.gini([5, 5, 5, 5]) == 0.0
    # one person holds everything: G = (n-1)/n
    assert ds.gini([0, 0, 0, 10]) == pytest.approx(3 / 4)
    assert ds.gini([0.0, 0.0]) == 0.0


def test_top_share():
    x = [1, 1, 1, 1, 1, 1, 1, 1, 1, 91]
    assert ds.top_share(x, 0.9) == pytest.approx(0.91)


def test_kelley_skewness_symmetric_and_skewed():
    sym = np.arange(1, 102, dtype=float)           # uniform grid
    assert ds.kelley_skewness(sym) == pytest.approx(0.0, abs=1e-12)
    right_skewed = np.concatenate([np.zeros(80), np.full(20, 100.0)])
    assert ds.kelley_skewness(right_skewed) > 0.5


def test_cs_excess_kurtosis_hand_case():
    x = np.arange(1, 1001, dtype=float)
    p = {q: ds.quantile(x, q) for q in (0.025, 0.25, 0.75, 0.975)}
    expect = (p[0.975] - p[0.025]) / (p[0.75] - p[0.25]) - 2.91
    assert ds.cs_excess_kurtosis(x) == pytest.approx(expect, abs=1e-12)


def test_equal_count_bins_balanced():
    rng = np.random.default_rng(1)
    x = rng.normal(size=417)
    bins = ds.equal_count_bins(x, 41)
    counts = np.bincount(bins, minlength=41)
    assert counts.min() >= 10 and counts.max() <= 11
    # bins are ordered by value
    order = np.argsort(x, kind="stable")
    assert (np.diff(bins[order]) >= 0).all()
    with pytest.raises(ValueError):
        ds.equal_count_bins(np.arange(5), 41)


def test_pareto_tail_fit_recovers_exponent():
    rng = np.random.default_rng(2)
    alpha = 2.0
    x = (1.0 / rng.uniform(size=200_000)) ** (1 / alpha)   # Pareto(alpha)
    slope, drift = ds.pareto_tail_fit(x, 0.1)
    assert slope == pytest.approx(-alpha, abs=0.1)
    assert not drift


def test_pareto_tail_fit_flags_non_pareto():
    rng = np.random.default_rng(3)
    x = np.exp(rng.normal(0, 1, size=200_000))   # lognormal: curving CCDF
    _, drift = ds.pareto_tail_fit(x, 0.2)
    assert drift


def test_percentile_delta_series_base_year_zero():
    rng = np.random.default_rng(4)
    df = pd.DataFrame({
        "year": np.repeat([2000, 2001], 500),
        "sex": np.tile(["male", "female"], 500),
        "value": rng.normal(size=1000)})
    out = ds.percentile_delta_series(df, 2000, percentiles=(10, 50, 90))
    base = out[out["year"] == 2000]
    assert np.allclose(base["delta"], 0.0)
    row = out[(out["year"] == 2001) & (out["sex"] == "male")
              & (out["percentile"] == 50)]
    sub = df[(df["year"] == 2001) & (df["sex"] == "male")]
    sub0 = df[(df["year"] == 2000) & (df["sex"] == "male")]
    expect = ds.quantile(sub["value"], 0.5) - ds.quantile(sub0["value"], 0.5)
    assert row["delta"].iloc[0] == pytest.approx(expect, abs=1e-12)


def test_binned_volatility_profile_shapes():
    rng = np.random.default_rng(5)
    df = pd.DataFrame({"p_prev": rng.normal(size=820),
                       "g": rng.normal(size=820),
                       "age_class": rng.integers(1, 4, size=820)})
    prof = ds.binned_volatility_profile(df, "p90_p10", n_bins=41)
    allrows = prof[prof["age_class"] == "all"]
    assert len(allrows) == 41
    assert allrows["n"].sum() == 820


def test_percentile_window_profile_means():
    n = 500
    df = pd.DataFrame({
        "person_id": [f"P{i:04d}" for i in range(n)],
        "w": np.arange(n, dtype=float),
        "extra": np.arange(n, dtype=float) * 2,
        "cat": ["A"] * 250 + ["B"] * 250})
    prof = ds.percentile_window_profile(df, "w", percentiles=(50,),
                                        mean_cols=["extra"],
                                        cat_cols={"cat": 1})
    row = prof.iloc[0]
    assert row["w"] == 249.0        # 250th order statistic of 0..499
    # window covers percentile positions 49..51 exactly
    lo, hi = int(np.floor(0.49 * n)), int(np.ceil(0.51 * n))
    assert row["window_n"] == hi - lo
    assert row["extra"] == pytest.approx(2 * np.arange(lo, hi).mean())
    assert row["cat_top1"] == "A"
    with pytest.raises(ValueError):
        ds.percentile_window_profile(df.head(50), "w")


def test_summarize_consistency():
    rng = np.random.default_rng(6)
    x = np.abs(rng.normal(size=4000)) + 0.1
    s = ds.summarize(x)
    assert s.n == 4000
    assert s.p90_p10 == pytest.approx(ds.quantile(x, 0.9) - ds.quantile(x, 0.1))
    assert s.gini == pytest.approx(ds.gini(x))
    assert 0 < s.top_shares[0.99] < s.top_shares[0.95] < s.top_shares[0.90] < 1
