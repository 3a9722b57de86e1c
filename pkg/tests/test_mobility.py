import numpy as np
import pandas as pd
import pytest

from earnkit.mobility import (mobility_profile, rank_percentiles,
                              rank_rank_slope, rank_within_cells)


def test_rank_percentiles_hand_case():
    ranks = rank_percentiles([30.0, 10.0, 20.0, 40.0])
    assert np.allclose(ranks, [75.0, 25.0, 50.0, 100.0])


def test_rank_percentiles_mean_ties():
    # the two tied values share the mean of positions 2 and 3
    ranks = rank_percentiles([10.0, 20.0, 20.0, 40.0])
    assert np.allclose(ranks, [25.0, 62.5, 62.5, 100.0])


def test_rank_within_cells_independent():
    df = pd.DataFrame({
        "sex": ["male"] * 3 + ["female"] * 3,
        "age": [40] * 6,
        "p3": [5.0, 1.0, 3.0, 100.0, 300.0, 200.0]})
    r = rank_within_cells(df, "p3")
    assert np.allclose(r.to_numpy(),
                       [100.0, 100 / 3, 200 / 3, 100 / 3, 100.0, 200 / 3])


def test_profile_and_slope_rank_preserving():
    rng = np.random.default_rng(0)
    n = 4000
    base_vals = rng.normal(size=n)
    df = lambda v: pd.DataFrame({                       # noqa: E731
        "person_id": np.arange(n), "sex": "male", "age": 40, "p3": v})
    base = df(base_vals)
    fut = df(np.exp(base_vals) + 7.0)                   # strictly monotone map
    base["rank"] = rank_within_cells(base, "p3")
    fut["rank"] = rank_within_cells(fut, "p3")
    assert np.allclose(base["rank"], fut["rank"])
    assert rank_rank_slope(base, fut) == pytest.approx(1.0, abs=1e-12)
    prof = mobility_profile(base, fut)
    merged = base.merge(fut, on="person_id", suffixes=("_t", "_z"))
    merged["bin"] = np.ceil(merged["rank_t"]).astype(int)
    expect = merged.groupby("bin")["rank_z"].mean()
    assert np.allclose(prof.set_index("bin")["mean_rank_z"], expect)


def test_slope_requires_variation():
    df = pd.DataFrame({"person_id": [1, 2], "rank": [50.0, 50.0]})
    with pytest.raises(ValueError):
        rank_rank_slope(df, df)


def test_profile_needs_overlap():
    a = pd.DataFrame({"person_id": [1], "rank": [50.0]})
    b = pd.DataFrame({"person_id": [2], "rank": [50.0]})
    with pytest.raises(ValueError):
        mobility_profile(a, b)


def test_by_age_class_profile():
    rng = np.random.default_rng(1)
    n = 600
    base = pd.DataFrame({"person_id": np.arange(n),
                         "rank": rng.uniform(0.01, 100, n),
                         "age_class": rng.integers(1, 4, n)})
    fut = pd.DataFrame({"person_id": np.arange(n),
                        "rank": rng.uniform(0.01, 100, n)})
    prof = mobility_profile(base, fut, by_age_class=True)
    assert set(prof.columns) == {"bin", "age_class", "mean_rank_z", "n"}
    assert prof["n"].sum() == n
