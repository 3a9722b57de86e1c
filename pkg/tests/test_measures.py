import numpy as np
import pandas as pd
import pytest

from earnkit.measures import (activity_summary, longterm_average_w,
                              permanent_p3_table, person_year_frame,
                              residual_change, residualize)
from earnkit.panel import apply_coverage_mask
from helpers import job, make_panel, person

YEARS = range(2000, 2012)          # 12 years, floor = 260 * 5 = 1300


def q4(total):
    return (total / 4.0,) * 4


@pytest.fixture(scope="module")
def hand_panel():
    persons = [person("PA", birth=1970), person("PB", birth=1970),
               person("PC", birth=1975, sex="female"),
               person("PD", birth=1972)]
    jobs = []
    for y in YEARS:
        jobs.append(job("PA", "F1", y, q=q4(12000)))
        jobs.append(job("PC", "F1", y, q=q4(900)))       # below the floor
    for y in range(2001, 2012):
        jobs.append(job("PB", "F2", y, q=q4(6000 if y <= 2002 else 12000)))
    for y in range(2000, 2004):
        jobs.append(job("PD", "F1", y, q=q4(12000)))      # first third only
    return make_panel(persons, jobs, years=YEARS)


@pytest.fixture(scope="module")
def hand_frame(hand_panel):
    return person_year_frame(hand_panel)


def test_person_year_frame_inferred_zeros(hand_frame):
    f = hand_frame.set_index(["person_id", "year"])
    assert f.loc[("PB", 2000), "earn"] == 0.0         # no job rows -> zero year
    assert f.loc[("PB", 2000), "active_quarters"] == 0
    assert f.loc[("PA", 2005), "earn"] == 12000.0
    assert len(hand_frame) == 4 * 12                  # dense person x year


def test_masked_year_is_missing_not_zero(hand_panel):
    masked = apply_coverage_mask(hand_panel, {("CA", 2005)})
    f = person_year_frame(masked).set_index(["person_id", "year"])
    assert np.isnan(f.loc[("PA", 2005), "earn"])
    assert f.loc[("PA", 2004), "earn"] == 12000.0


def test_p3_hand_values(hand_panel, hand_frame):
    m = 260.0 * hand_panel.minwage
    p3 = permanent_p3_table(hand_frame, m).set_index(["person_id", "year"])
    assert p3.loc[("PB", 2002), "p3"] == pytest.approx((0 + 6000 + 6000) / 3)
    assert p3.loc[("PA", 2002), "p3"] == pytest.approx(12000.0)
    # below-floor earner never clears the max > m_t condition
    assert np.isnan(p3.loc[("PC", 2005), "p3"])
    # the first two calendar years have no complete window
    assert np.isnan(p3.loc[("PA", 2000), "p3"])
    assert np.isnan(p3.loc[("PA", 2001), "p3"])


def test_p3_undefined_when_window_masked(hand_panel):
    masked = apply_coverage_mask(hand_panel, {("CA", 2004)})
    frame = person_year_frame(masked)
    m = 260.0 * hand_panel.minwage
    p3 = permanent_p3_table(frame, m).set_index(["person_id", "year"])
    for t in (2004, 2005, 2006):
        assert np.isnan(p3.loc[("PA", t), "p3"])
    assert p3.loc[("PA", 2007), "p3"] == pytest.approx(12000.0)


def test_residuals_mean_zero_within_cells(small_world):
    panel, _ = small_world
    frame = person_year_frame(panel)
    m = 260.0 * panel.minwage
    eps = residualize(frame, "age_sex_year", m)
    work = frame[frame["earn"] > 0].reset_index(drop=True)
    merged = work.merge(eps, on=["person_id", "year"])
    fit = merged["earn"] > merged["year"].map(m)
    cells = merged[fit].groupby(["age", "sex", "year"])["resid"].mean()
    assert np.abs(cells.to_numpy()).max() < 1e-10


def test_residuals_exist_for_all_positive_rows(small_world):
    panel, _ = small_world
    frame = person_year_frame(panel)
    m = 260.0 * panel.minwage
    eps = residualize(frame, "age_sex_year", m)
    n_pos = int((frame["earn"] > 0).sum())
    assert len(eps) == n_pos
    assert eps["resid"].notna().all()


def test_permanent_residual_needs_two_of_three(hand_panel, hand_frame):
    m = 260.0 * hand_panel.minwage
    p = residualize(hand_frame, "permanent", m).set_index(["person_id", "year"])
    # PB 2002: only 2001 and 2002 clear the floor -> average over two years
    assert ("PB", 2002) in p.index
    # PC never clears the floor; PB 2001 has only one qualifying year (2001)
    assert not [ix for ix in p.index if ix[0] == "PC"]
    assert ("PB", 2001) not in p.index


def test_residual_change_conditions(hand_frame, hand_panel):
    m = 260.0 * hand_panel.minwage
    eps = residualize(hand_frame, "age_sex_year", m)
    g1 = residual_change(hand_frame, eps, 1, m).set_index(["person_id", "year"])
    # PC is below the floor at t, so no change is defined
    assert not [ix for ix in g1.index if ix[0] == "PC"]
    # PA clears both conditions in consecutive years
    assert ("PA", 2005) in g1.index
    row_a = eps.set_index(["person_id", "year"])
    expect = row_a.loc[("PA", 2006), "resid"] - row_a.loc[("PA", 2005), "resid"]
    assert g1.loc[("PA", 2005), "g"] == pytest.approx(expect, abs=1e-12)


def test_longterm_average_includes_zero_years(hand_frame):
    w = longterm_average_w(hand_frame, (2000, 2011))
    assert w["PA"] == pytest.approx(12000.0)
    assert w["PB"] == pytest.approx((0 + 2 * 6000 + 9 * 12000) / 12)
    assert w["PD"] == pytest.approx(4 * 12000 / 12)


def test_activity_summary_classification(hand_frame):
    act = activity_summary(hand_frame, (2000, 2011)).set_index("person_id")
    assert act.loc["PA", "years_fully_active"] == 12
    assert act.loc["PA", "longterm_active"]
    assert act.loc["PB", "years_inactive"] == 1
    # PD works only in the first 4-year sub-period
    assert not act.loc["PD", "longterm_active"]
    assert np.isnan(act.loc["PD", "growth"])
    # PA has constant earnings: zero growth and zero arc volatility
    assert act.loc["PA", "growth"] == pytest.approx(0.0)
    assert act.loc["PA", "arc_volatility"] == pytest.approx(0.0)


def test_activity_growth_hand_value(hand_frame):
    act = activity_summary(hand_frame, (2000, 2011)).set_index("person_id")
    # PB: first period mean (0+6000+6000+12000)/4, last period mean 12000
    first = (0 + 6000 + 6000 + 12000) / 4
    assert act.loc["PB", "growth"] == pytest.approx((12000 - first) / first)


def test_window_must_split_in_three(hand_frame):
    with pytest.raises(ValueError):
        activity_summary(hand_frame, (2000, 2010))
