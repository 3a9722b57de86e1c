import numpy as np
import pandas as pd
import pytest

from earnkit import decompose as dc
from earnkit.diststats import quantile
from helpers import synthetic_design


@pytest.fixture(scope="module")
def design():
    return synthetic_design(600, groups=[0, 1, 2], seed=10)


@pytest.fixture(scope="module")
def fits(design):
    return {g: dc.fit_group_quantiles(design, g) for g in (0, 1, 2)}


def test_model_matrix_full_rank(design):
    for m in range(1, 6):
        X, names, dropped = dc.model_matrix(design, m)
        assert np.linalg.matrix_rank(X) == X.shape[1]
        assert len(names) == X.shape[1]
    # constant division/industry columns must be dropped, not kept
    X, names, dropped = dc.model_matrix(design, 3)
    assert not any(n.startswith("div_") for n in names)


def test_ladder_r2_nondecreasing_nested_models(design):
    tab = dc.fit_ols_ladder(design, models=(1, 2, 3, 4))
    r2 = tab.groupby("model")["r2"].first()
    assert (np.diff(r2.to_numpy()) >= -1e-12).all()


def test_model1_coefs_are_mean_log_gaps(design):
    tab = dc.fit_ols_ladder(design, models=(1,))
    means = design.groupby("group")["log_w"].mean()
    for g in (1, 2):
        coef = tab.loc[tab["term"] == f"group_{g}", "coef"].iloc[0]
        assert coef == pytest.approx(means[g] - means[0], abs=1e-10)
    intercept = tab.loc[tab["term"] == "intercept", "coef"].iloc[0]
    assert intercept == pytest.approx(means[0], abs=1e-10)


def test_group_quantile_fit_metadata(fits):
    fit = fits[1]
    assert fit["beta"].shape == (99, len(fit["columns"]))
    assert fit["n"] == 600
    assert not fit["flagged"] or fit["n"] < dc.SMALL_GROUP_N
    with pytest.raises(ValueError):
        dc.fit_group_quantiles(synthetic_design(50, groups=[0]), 5)


def test_simulate_mm_reproducible(design, fits):
    rows = design[design["group"] == 1]
    s1 = dc.simulate_mm(fits[1], rows, seed=7, cov_group=1)
    s2 = dc.simulate_mm(fits[1], rows, seed=7, cov_group=1)
    s3 = dc.simulate_mm(fits[1], rows, seed=8, cov_group=1)
    assert np.array_equal(s1, s2)
    assert not np.array_equal(s1, s3)
    assert len(s1) == len(rows)


def test_decomposition_identity_both_orderings(design, fits):
    for g in (1, 2):
        res = dc.decompose_gap(design, fits, g, seed=7)
        gap = res["covariates"] + res["coefficients"] - res["predicted"]
        assert np.abs(gap.to_numpy()).max() < 1e-12
        assert np.allclose(res["residual"], res["actual"] - res["predicted"])
        o1 = res[res["ordering"] == 1].set_index("theta")
        o2 = res[res["ordering"] == 2].set_index("theta")
        total1 = o1["covariates"] + o1["coefficients"]
        total2 = o2["covariates"] + o2["coefficients"]
        assert np.abs((total1 - total2).to_numpy()).max() < 1e-12


def test_reference_group_rows_exactly_zero(design, fits):
    res = dc.decompose_gap(design, fits, 0, seed=7)
    for col in ("actual", "predicted", "covariates", "coefficients", "residual"):
        assert (res[col] == 0.0).all()
    assert res["covariate_share"].isna().all()
    assert res["coefficient_share"].isna().all()


def test_counterfactual_ratios_and_self_ratio(design, fits):
    f18 = dc.counterfactual_ratios(design, fits, 0, 7, "ref_characteristics")
    # the reference group against itself is exactly 1 at every theta
    assert np.array_equal(f18["ratio"].to_numpy(), np.ones(5))
    f19 = dc.counterfactual_ratios(design, fits, 1, 7, "ref_coefficients")
    assert (f19["ratio"] > 0).all()
    with pytest.raises(ValueError):
        dc.counterfactual_ratios(design, fits, 1, 7, "nope")


def test_counterfactual_consistent_with_components(design, fits):
    """fig18/fig19 ratios are exp of the decomposition pieces."""
    res = dc.decompose_gap(design, fits, 1, seed=7)
    o1 = res[res["ordering"] == 1].set_index("theta")
    o2 = res[res["ordering"] == 2].set_index("theta")
    f18 = dc.counterfactual_ratios(design, fits, 1, 7,
                                   "ref_characteristics").set_index("theta")
    f19 = dc.counterfactual_ratios(design, fits, 1, 7,
                                   "ref_coefficients").set_index("theta")
    # ref_characteristics = own coefficients on reference rows = Q(g0)-Q(00)
    assert np.allclose(np.log(f18["ratio"]), o1["coefficients"], atol=1e-12)
    # ref_coefficients = reference coefficients on own rows = Q(0g)-Q(00)
    assert np.allclose(np.log(f19["ratio"]), o2["covariates"], atol=1e-12)


def test_rearranged_path_sorted(design, fits):
    path = dc.rearranged_quantile_path(fits[1], design)
    assert (np.diff(path["rearranged"]) >= 0).all()
    assert np.array_equal(np.sort(path["raw"]), path["rearranged"])
    assert len(path) == 99


def test_build_design_errors():
    frame = pd.DataFrame({
        "person_id": ["a"], "year": [2004], "earn": [0.0],
        "active_quarters": [0], "sex": ["male"], "birth_year": [1970],
        "group": [0], "division": [1], "education": ["HS"]})
    with pytest.raises(ValueError, match="non-positive long-term"):
        dc.build_design(frame, ["a"], (2004, 2015))
