"""Batch pipeline: stage orchestration, caching, and CSV emission.

Each stage reads its inputs from the output directory (or the configured
external input paths), writes plain CSV outputs with fixed column
orders, and records itself in a manifest.  Stages are cached by a
content hash of their inputs, so reruns with an unchanged config are
incremental, and a manifest plus the directory is enough to re-run any
single stage in isolation.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from . import akm as akm_mod
from . import decompose as dc
from . import diststats as ds
from . import impute as imp
from . import microagg as ma
from . import mobility as mob
from .measures import (longterm_average_w, activity_summary, permanent_p3_table,
                       person_year_frame, residual_change, residualize)
from .panel import (Panel, apply_coverage_mask, deflate, load_coverage_mask,
                    load_panel)
from .samples import (EarningsFloor, SAMPLE_KINDS, build_cohort12, build_sample,
                      sample_counts, winsorized_earnings)
from .synth import GenConfig, gen_population

STAGE_ORDER = ["gen", "load", "impute", "samples", "measures", "akm",
               "indicators", "mobility", "decompose", "microagg"]

PANEL_FILES = ["persons.csv", "jobs.csv", "deflator.csv", "minwage.csv"]


class StageError(RuntimeError):
    """Raised when a pipeline stage fails; carries the stage name."""

    def __init__(self, stage: str, cause: str):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage


@dataclass
class RunConfig:
    outdir: str
    seed: int = 12345
    n_persons: int = 5000
    n_firms: int = 300
    year_start: int = 1998
    year_end: int = 2019
    cohort_window: tuple = (2004, 2015)
    indicator_reference_year: int = 2018
    cohort_reference_year: int = 2010
    winsor_quantile: float = 0.99999999
    percentiles: tuple = (10, 25, 50, 75, 90)
    horizons: tuple = (1, 5)
    mobility_horizons: tuple = (5, 10)
    volatility_bins: int = 41
    min_bin_size: int = 10
    educ_min_cell: int = 10
    educ_seed: int = 333
    mm_seed: int = 777
    age_class_bounds: tuple = (35, 45)   # age-class cut points at cohort start
    stages: dict = field(default_factory=dict)   # stage -> bool (default on)
    inputs: dict = field(default_factory=dict)   # optional external CSV paths

    def enabled(self, stage: str) -> bool:
        return bool(self.stages.get(stage, True))

    def validate(self):
        lo, hi = self.cohort_window
        if not (self.year_start <= lo <= hi <= self.year_end):
            raise ValueError("cohort window outside the panel span")
        for y in (self.indicator_reference_year, self.cohort_reference_year):
            if not self.year_start <= y <= self.year_end:
                raise ValueError(f"reference year {y} outside the panel span")
        unknown = set(self.stages) - set(STAGE_ORDER)
        if unknown:
            raise ValueError(f"unknown stages in config: {sorted(unknown)}")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True, default=list)

    @classmethod
    def from_json(cls, path_or_text):
        if os.path.exists(str(path_or_text)):
            with open(path_or_text) as f:
                d = json.load(f)
        else:
            d = json.loads(path_or_text)
        cfg = cls(**d)
        for name in ("cohort_window", "percentiles", "horizons",
                     "mobility_horizons", "age_class_bounds"):
            setattr(cfg, name, tuple(getattr(cfg, name)))
        return cfg

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _file_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _write_csv(df: pd.DataFrame, path: str):
    df.to_csv(path, index=False)


def _load_raw_panel(config: RunConfig) -> Panel:
    out = config.outdir
    paths = {name: config.inputs.get(name.split(".")[0], os.path.join(out, name))
             for name in PANEL_FILES}
    panel = load_panel(paths["persons.csv"], paths["jobs.csv"],
                       paths["deflator.csv"], paths["minwage.csv"],
                       reference_year=config.indicator_reference_year)
    mask_path = config.inputs.get("coverage_mask")
    if mask_path:
        panel = apply_coverage_mask(panel, load_coverage_mask(mask_path))
    return panel


def _real_floor(panel: Panel, config: RunConfig, reference_year: int) -> EarningsFloor:
    """Earnings floor deflated to the same reference as the earnings."""
    factor = float(panel.deflator.loc[reference_year]) / panel.deflator
    return EarningsFloor(panel.minwage * factor,
                         winsor_quantile=config.winsor_quantile)


def _age_class(age, bounds):
    lo, hi = bounds
    return np.where(np.asarray(age) < lo, 1, np.where(np.asarray(age) < hi, 2, 3))


# --------------------------------------------------------------------------
# stages


def stage_gen(config: RunConfig):
    out = config.outdir
    if all(k in config.inputs for k in ("persons", "jobs", "deflator", "minwage")):
        return {"status": "external inputs", "outputs": []}
    gen_cfg = GenConfig(seed=config.seed, n_persons=config.n_persons,
                        n_firms=config.n_firms, year_start=config.year_start,
                        year_end=config.year_end)
    panel, truth = gen_population(gen_cfg)
    _write_csv(panel.persons.drop(columns=["division", "group"]),
               os.path.join(out, "persons.csv"))
    _write_csv(panel.jobs, os.path.join(out, "jobs.csv"))
    _write_csv(pd.DataFrame({"year": panel.deflator.index,
                             "index": panel.deflator.to_numpy()}),
               os.path.join(out, "deflator.csv"))
    _write_csv(pd.DataFrame({"year": panel.minwage.index,
                             "min_wage": panel.minwage.to_numpy()}),
               os.path.join(out, "minwage.csv"))
    _write_csv(truth["persons"], os.path.join(out, "ground_truth.csv"))
    _write_csv(truth["firms"], os.path.join(out, "ground_truth_firms.csv"))
    return {"outputs": PANEL_FILES + ["ground_truth.csv", "ground_truth_firms.csv"],
            "rows": {"persons": len(panel.persons), "jobs": len(panel.jobs)}}


def stage_load(config: RunConfig):
    panel = _load_raw_panel(config)
    summary = {
        "n_persons": len(panel.persons),
        "n_job_years": len(panel.jobs),
        "years": [int(panel.jobs["year"].min()), int(panel.jobs["year"].max())],
        "masked_person_years": len(panel.masked_person_years),
    }
    with open(os.path.join(config.outdir, "load_summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return {"outputs": ["load_summary.json"], "rows": summary}


def stage_impute(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    jobs_h, hours_audit = imp.impute_hours(panel)
    hours_out = jobs_h[["person_id", "employer_id", "year",
                        "hours_filled", "hours_imputed"]].sort_values(
        ["person_id", "year", "employer_id"], kind="mergesort")
    _write_csv(hours_out, os.path.join(out, "jobs_hours.csv"))

    educ, educ_audit = imp.impute_education(
        panel.persons, panel.jobs, seed=config.educ_seed,
        min_cell=config.educ_min_cell,
        reference_year=config.cohort_window[0])
    observed = panel.persons.set_index("person_id")["education"].notna()
    edf = pd.DataFrame({"person_id": educ.index, "education": educ.to_numpy(),
                        "imputed": ~observed.reindex(educ.index).to_numpy()})
    _write_csv(edf.sort_values("person_id", kind="mergesort"),
               os.path.join(out, "education.csv"))

    ha = hours_audit.copy()
    ha["kind"] = "hours"
    ha["cell"] = [f"pattern={p},dominant={d},sex={s}"
                  for p, d, s in zip(ha["quarter_pattern"], ha["dominant"], ha["sex"])]
    ea = educ_audit.copy()
    ea["kind"] = "education"
    ea = ea.rename(columns={"merged": "fallback"})
    audit = pd.concat([
        ha[["kind", "cell", "n_observed", "n_imputed", "fallback"]],
        ea[["kind", "cell", "n_observed", "n_imputed", "fallback"]],
    ], ignore_index=True)
    _write_csv(audit, os.path.join(out, "impute_audit.csv"))
    return {"outputs": ["jobs_hours.csv", "education.csv", "impute_audit.csv"],
            "rows": {"hours_imputed": int(hours_out["hours_imputed"].sum()),
                     "education_imputed": int(edf["imputed"].sum())}}


def stage_samples(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    floor = EarningsFloor(panel.minwage, winsor_quantile=config.winsor_quantile)
    counts = sample_counts(panel, floor)
    cohort = build_cohort12(panel, config.cohort_window)
    counts = pd.concat([counts, pd.DataFrame(
        [("COHORT12", config.cohort_window[0], len(cohort))],
        columns=["kind", "year", "n"])], ignore_index=True)
    _write_csv(counts, os.path.join(out, "sample_counts.csv"))
    _write_csv(pd.DataFrame({"person_id": list(cohort.members)}),
               os.path.join(out, "cohort.csv"))
    return {"outputs": ["sample_counts.csv", "cohort.csv"],
            "rows": {"cohort": len(cohort)}}


def stage_measures(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)

    # cross-sectional measures in indicator-reference real terms
    real = deflate(panel, config.indicator_reference_year)
    frame = person_year_frame(real)
    floor = _real_floor(panel, config, config.indicator_reference_year)
    frame["y"] = winsorized_earnings(frame, floor)
    p3 = permanent_p3_table(frame, floor.m)
    eps = residualize(frame, "age_sex_year", floor.m)
    delta = residualize(frame, "age_educ_sex_year", floor.m)
    presid = residualize(frame, "permanent", floor.m)
    meas = frame[["person_id", "year", "y", "active_quarters"]].merge(
        p3, on=["person_id", "year"], how="left")
    for name, tab in (("eps", eps), ("delta", delta), ("p_resid", presid)):
        meas = meas.merge(
            tab[["person_id", "year", "resid"]].rename(columns={"resid": name}),
            on=["person_id", "year"], how="left")
    for z in config.horizons:
        g = residual_change(frame, eps, z, floor.m)
        meas = meas.merge(g.rename(columns={"g": f"g{z}"}),
                         on=["person_id", "year"], how="left")
    meas = meas.sort_values(["person_id", "year"], kind="mergesort")
    _write_csv(meas, os.path.join(out, "measures.csv"))

    # long-term person measures in cohort-reference real terms
    cohort_ids = pd.read_csv(os.path.join(out, "cohort.csv"))["person_id"]
    real2 = deflate(panel, config.cohort_reference_year)
    frame2 = person_year_frame(real2)
    w = longterm_average_w(frame2, config.cohort_window, persons=cohort_ids)
    act = activity_summary(frame2, config.cohort_window, persons=cohort_ids)
    hours = pd.read_csv(os.path.join(out, "jobs_hours.csv"))
    avg_hours = (hours.groupby(["person_id", "year"])["hours_filled"].sum()
                 .groupby("person_id").mean().rename("avg_annual_hours"))
    attrs = panel.persons.set_index("person_id")
    long = act.set_index("person_id")
    long.insert(0, "w", w)
    long["avg_annual_hours"] = avg_hours.reindex(long.index)
    long["group"] = attrs["group"].reindex(long.index)
    long["sex"] = attrs["sex"].reindex(long.index)
    long["birth_year"] = attrs["birth_year"].reindex(long.index)
    long = long.reset_index().sort_values("person_id", kind="mergesort")
    _write_csv(long, os.path.join(out, "persons_longterm.csv"))
    return {"outputs": ["measures.csv", "persons_longterm.csv"],
            "rows": {"measures": len(meas), "persons_longterm": len(long)}}


def stage_akm(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    jobs = panel.jobs.copy()
    jobs["earn"] = jobs[["q1", "q2", "q3", "q4"]].sum(axis=1)
    jobs = jobs[jobs["earn"] > 0]
    logw = np.log(jobs["earn"].to_numpy())
    # absorb year effects before the two-way fit
    year_mean = pd.Series(logw).groupby(jobs["year"].to_numpy()).transform("mean")
    logw = logw - year_mean.to_numpy()
    sol = akm_mod.fit_two_way_fe(jobs["person_id"], jobs["employer_id"], logw)
    if not sol.converged:
        raise StageError("akm", f"no convergence after {sol.iterations} iterations "
                                f"(rss {sol.rss:.3e})")
    pe = pd.DataFrame({"person_id": sol.person_effects.index,
                       "person_effect": sol.person_effects.to_numpy(),
                       "component": sol.person_component.reindex(
                           sol.person_effects.index).to_numpy()})
    n_jy = jobs.groupby("employer_id").size()
    fe = pd.DataFrame({"employer_id": sol.firm_effects.index,
                       "firm_effect": sol.firm_effects.to_numpy(),
                       "component": sol.firm_component.reindex(
                           sol.firm_effects.index).to_numpy(),
                       "n_job_years": n_jy.reindex(sol.firm_effects.index).to_numpy()})
    comp = (pe.groupby("component").size().rename("n_persons").to_frame()
            .join(fe.groupby("component").size().rename("n_firms"))
            .fillna(0).astype(int).reset_index())
    pafe = akm_mod.person_average_firm_effect(sol, jobs["person_id"],
                                              jobs["employer_id"])
    pe["avg_firm_effect"] = pafe.reindex(pe["person_id"]).to_numpy()
    _write_csv(pe, os.path.join(out, "person_effects.csv"))
    _write_csv(fe, os.path.join(out, "firm_effects.csv"))
    _write_csv(comp, os.path.join(out, "components.csv"))
    return {"outputs": ["person_effects.csv", "firm_effects.csv", "components.csv"],
            "rows": {"persons": len(pe), "firms": len(fe),
                     "components": len(comp), "iterations": sol.iterations}}


def _cs_log_table(config: RunConfig, panel: Panel):
    """Log winsorized real earnings of CS members per year, with attributes."""
    real = deflate(panel, config.indicator_reference_year)
    frame = person_year_frame(real)
    floor = _real_floor(panel, config, config.indicator_reference_year)
    frame["y"] = winsorized_earnings(frame, floor)
    rows = []
    for year in sorted(frame["year"].unique()):
        s = build_sample(frame, "CS", int(year), floor)
        sel = frame[(frame["year"] == year)
                    & frame["person_id"].isin(set(s.members))]
        rows.append(sel)
    cs = pd.concat(rows, ignore_index=True)
    cs["log_y"] = np.log(cs["y"])
    return cs, frame, floor


def stage_indicators(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    cs, frame, floor = _cs_log_table(config, panel)
    pcts = config.percentiles
    outputs = []

    def emit(name, df):
        _write_csv(df, os.path.join(out, f"{name}.csv"))
        outputs.append(f"{name}.csv")

    # percentile drift of log real earnings by sex
    emit("fig1", ds.percentile_delta_series(
        cs.rename(columns={"log_y": "value"}), config.year_start,
        percentiles=pcts, by=("sex",)))

    disp = []
    for (year, sex), sub in cs.groupby(["year", "sex"], sort=True):
        v = sub["log_y"].to_numpy()
        q = {p: ds.quantile(v, p / 100) for p in (10, 50, 90)}
        disp.append((int(year), sex, len(v), q[90] - q[10],
                     ds.NORMAL_P90_P10_SIGMA * v.std(),
                     q[50] - q[10], q[90] - q[50],
                     ds.gini(sub["y"].to_numpy())))
    disp = pd.DataFrame(disp, columns=["year", "sex", "n", "p90_p10",
                                       "sigma_scaled", "p50_p10", "p90_p50",
                                       "gini"])
    emit("fig2", disp[["year", "sex", "n", "p90_p10", "sigma_scaled"]])
    emit("fig3", disp[["year", "sex", "n", "p50_p10", "p90_p50"]])

    meas = pd.read_csv(os.path.join(out, "measures.csv"))
    attrs = panel.persons[["person_id", "sex", "birth_year"]]
    meas = meas.merge(attrs, on="person_id", how="left")
    meas["age"] = meas["year"] - meas["birth_year"]

    p3pos = meas[meas["p3"] > 0]
    rows = []
    for (year, sex), sub in p3pos.groupby(["year", "sex"], sort=True):
        if len(sub) < 2:
            continue
        v = np.log(sub["p3"].to_numpy())
        rows.append((int(year), sex, len(sub),
                     ds.quantile(v, 0.9) - ds.quantile(v, 0.1)))
    emit("fig4", pd.DataFrame(rows, columns=["year", "sex", "n", "p90_p10"]))

    vol, skew, kurt = [], [], []
    for z in config.horizons:
        col = f"g{z}"
        for year, sub in meas.dropna(subset=[col]).groupby("year", sort=True):
            v = sub[col].to_numpy()
            if len(v) < 40:
                continue
            vol.append((int(year), z, len(v),
                        ds.quantile(v, 0.9) - ds.quantile(v, 0.1)))
            skew.append((int(year), z, len(v), ds.kelley_skewness(v)))
            kurt.append((int(year), z, len(v), ds.cs_excess_kurtosis(v)))
    emit("fig5", pd.DataFrame(vol, columns=["year", "horizon", "n", "p90_p10"]))
    emit("fig6", pd.DataFrame(skew, columns=["year", "horizon", "n", "kelley"]))
    emit("figA7", pd.DataFrame(kurt, columns=["year", "horizon", "n",
                                              "cs_excess_kurtosis"]))

    # volatility profile by prior residual permanent earnings bin
    prev = meas[["person_id", "year", "p_resid"]].copy()
    prev["year"] = prev["year"] + 1
    prof_in = meas[["person_id", "year", "g1", "age"]].merge(
        prev.rename(columns={"p_resid": "p_prev"}),
        on=["person_id", "year"], how="inner").dropna(subset=["g1", "p_prev"])
    prof_in["age_class"] = _age_class(prof_in["age"], config.age_class_bounds)
    if len(prof_in) >= config.volatility_bins:
        emit("fig7", ds.binned_volatility_profile(
            prof_in, "p90_p10", n_bins=config.volatility_bins,
            rank_col="p_prev", value_col="g1"))
        emit("figA16", ds.binned_volatility_profile(
            prof_in, "kelley", n_bins=config.volatility_bins,
            rank_col="p_prev", value_col="g1"))

    # supplementary year-level series
    cs["age_class"] = _age_class(cs["age"], config.age_class_bounds)
    rows = []
    for (year, ac), sub in cs.groupby(["year", "age_class"], sort=True):
        v = sub["log_y"].to_numpy()
        rows.append((int(year), int(ac), len(v),
                     ds.quantile(v, 0.9) - ds.quantile(v, 0.1),
                     ds.kelley_skewness(v)))
    emit("figA5", pd.DataFrame(rows, columns=["year", "age_class", "n",
                                              "p90_p10", "kelley"]))
    rows = []
    for year, sub in cs.groupby("year", sort=True):
        v = sub["log_y"].to_numpy()
        rows.append((int(year), len(v), ds.kelley_skewness(v)))
    emit("figA6", pd.DataFrame(rows, columns=["year", "n", "kelley"]))

    tails = []
    for year, sub in cs.groupby("year", sort=True):
        try:
            slope, drift = ds.pareto_tail_fit(sub["y"].to_numpy(), 0.1)
        except ValueError:
            continue
        tails.append((int(year), slope, drift))
    emit("figA8", pd.DataFrame(tails, columns=["year", "slope", "drift_flag"]))

    rows = []
    for (year, sex), sub in cs.groupby(["year", "sex"], sort=True):
        v = sub["log_y"].to_numpy()
        rows.append((int(year), sex, ds.quantile(v, 0.9) - ds.quantile(v, 0.1),
                     ds.NORMAL_P90_P10_SIGMA * v.std()))
    emit("figA9", pd.DataFrame(rows, columns=["year", "sex", "p90_p10",
                                              "sigma_scaled"]))
    rows = []
    for year, sub in cs.groupby("year", sort=True):
        y = sub["y"].to_numpy()
        rows.append((int(year), ds.top_share(y, 0.99), ds.top_share(y, 0.95),
                     ds.top_share(y, 0.90)))
    emit("figA10", pd.DataFrame(rows, columns=["year", "top1_share",
                                               "top5_share", "top10_share"]))
    emit("figA11", disp[["year", "sex", "gini"]])
    rows = []
    for year, sub in cs.groupby("year", sort=True):
        y = sub["y"].to_numpy()
        rows.append((int(year), ds.quantile(y, 0.9) / ds.quantile(y, 0.5),
                     ds.quantile(y, 0.5) / ds.quantile(y, 0.1)))
    emit("figA12", pd.DataFrame(rows, columns=["year", "p90_p50_ratio",
                                               "p50_p10_ratio"]))
    rows = []
    for (year, sex), sub in meas.dropna(subset=["delta"]).groupby(
            ["year", "sex"], sort=True):
        v = sub["delta"].to_numpy()
        if len(v) < 2:
            continue
        rows.append((int(year), sex, len(v),
                     ds.quantile(v, 0.9) - ds.quantile(v, 0.1)))
    emit("figA13", pd.DataFrame(rows, columns=["year", "sex", "n", "p90_p10"]))
    rows = []
    for (year, sex), sub in meas.dropna(subset=["p_resid"]).groupby(
            ["year", "sex"], sort=True):
        v = sub["p_resid"].to_numpy()
        if len(v) < 2:
            continue
        rows.append((int(year), sex, len(v),
                     ds.quantile(v, 0.9) - ds.quantile(v, 0.1)))
    emit("figA14", pd.DataFrame(rows, columns=["year", "sex", "n", "p90_p10"]))
    rows = []
    for z in config.horizons:
        col = f"g{z}"
        sub = meas.dropna(subset=[col])
        sub = sub.assign(age_class=_age_class(sub["age"], config.age_class_bounds))
        for (year, ac), asub in sub.groupby(["year", "age_class"], sort=True):
            v = asub[col].to_numpy()
            if len(v) < 40:
                continue
            rows.append((int(year), z, int(ac), len(v),
                         ds.quantile(v, 0.9) - ds.quantile(v, 0.1)))
    emit("figA15", pd.DataFrame(rows, columns=["year", "horizon", "age_class",
                                               "n", "p90_p10"]))

    hists = []
    for sex, sub in cs.groupby("sex", sort=True):
        h = ds.log_histogram(sub["log_y"].to_numpy())
        h.insert(0, "sex", sex)
        hists.append(h)
    emit("figA19", pd.concat(hists, ignore_index=True))
    long = pd.read_csv(os.path.join(out, "persons_longterm.csv"))
    pos_w = long[long["w"] > 0]
    emit("figA20", ds.log_histogram(np.log(pos_w["w"].to_numpy())))
    p3v = meas.loc[meas["p3"] > 0, "p3"].to_numpy()
    emit("figA21", ds.log_histogram(np.log(p3v)))
    emit("figA22", ds.log_histogram(meas["y"].dropna().to_numpy()
                                    [meas["y"].dropna().to_numpy() > 0]))

    # activity / earnings by age group over the cohort window (Figs 10-11)
    coh = set(pd.read_csv(os.path.join(out, "cohort.csv"))["person_id"])
    frame_c = frame[frame["person_id"].isin(coh)
                    & frame["year"].between(*config.cohort_window)].copy()
    frame_c["age_class"] = _age_class(
        config.cohort_window[0] - frame_c["birth_year"], config.age_class_bounds)
    rows = []
    for (year, ac), sub in frame_c.groupby(["year", "age_class"], sort=True):
        active = (sub["active_quarters"] > 0).mean()
        pos = sub.loc[sub["earn"] > 0, "earn"]
        rows.append((int(year), int(ac), len(sub), float(active),
                     float(pos.mean()) if len(pos) else np.nan))
    emit("fig10", pd.DataFrame(rows, columns=["year", "age_class", "n",
                                              "active_share", "mean_earnings"]))
    emit("fig11", pd.DataFrame(rows, columns=["year", "age_class", "n",
                                              "active_share", "mean_earnings"]))

    # percentile window profiles of the cohort
    effects = pd.read_csv(os.path.join(out, "person_effects.csv"))
    long = long.merge(effects[["person_id", "person_effect", "avg_firm_effect"]],
                      on="person_id", how="left")
    long[["person_effect", "avg_firm_effect"]] = \
        long[["person_effect", "avg_firm_effect"]].fillna(0.0)
    frame2 = person_year_frame(deflate(panel, config.cohort_reference_year))
    div = frame2.groupby("person_id")["division"].first()
    long["division"] = div.reindex(long["person_id"]).to_numpy()
    jobs = panel.jobs.copy()
    jobs["earn"] = jobs[["q1", "q2", "q3", "q4"]].sum(axis=1)
    by = (jobs.groupby(["person_id", "industry_sector"])["earn"].sum()
          .reset_index()
          .sort_values(["person_id", "earn", "industry_sector"],
                       ascending=[True, False, True], kind="mergesort")
          .drop_duplicates("person_id").set_index("person_id")["industry_sector"])
    long["industry"] = by.reindex(long["person_id"]).to_numpy()

    mean_cols = ["growth", "avg_annual_hours", "years_partially_active",
                 "years_inactive", "person_effect", "avg_firm_effect"]
    t2, t3 = [], []
    for g, sub in long.groupby("group", sort=True):
        if len(sub) < 100:
            continue
        prof = ds.percentile_window_profile(
            sub, "w", percentiles=pcts, mean_cols=mean_cols,
            cat_cols={"division": 2, "industry": 4})
        prof.insert(0, "group", int(g))
        prof.insert(1, "n", len(sub))
        t2.append(prof.drop(columns=[c for c in prof.columns
                                     if c.startswith(("division", "industry"))]))
        prof3 = ds.percentile_window_profile(
            sub, "w", percentiles=pcts,
            mean_cols=mean_cols + ["arc_volatility"],
            cat_cols={"division": 2, "industry": 4})
        prof3.insert(0, "group", int(g))
        prof3.insert(1, "n", len(sub))
        t3.append(prof3)
    emit("table2", pd.concat(t2, ignore_index=True))
    emit("table3", pd.concat(t3, ignore_index=True))
    return {"outputs": outputs, "rows": {"cs_rows": len(cs)}}


def stage_mobility(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    real = deflate(panel, config.indicator_reference_year)
    frame = person_year_frame(real)
    floor = _real_floor(panel, config, config.indicator_reference_year)
    p3 = permanent_p3_table(frame, floor.m)
    attrs = frame[["person_id", "year", "sex", "age"]]
    p3 = p3.merge(attrs, on=["person_id", "year"], how="left").dropna(subset=["p3"])
    # P3 needs two years of history, so the base year cannot be earlier
    # than the third panel year
    base_year = max(config.cohort_window[0], config.year_start + 2)

    outputs, slopes = [], []
    names = {config.mobility_horizons[0]: ("figA17", "figA18"),
             config.mobility_horizons[-1]: ("fig8", "fig9")}
    for z in config.mobility_horizons:
        kind = f"PA_{z}"
        if kind not in SAMPLE_KINDS or base_year + z > config.year_end:
            continue
        sample = build_sample(frame, kind, base_year, floor)
        members = set(sample.members)
        base = p3[(p3["year"] == base_year) & p3["person_id"].isin(members)].copy()
        fut = p3[(p3["year"] == base_year + z) & p3["person_id"].isin(members)].copy()
        base["rank"] = mob.rank_within_cells(base, "p3")
        fut["rank"] = mob.rank_within_cells(fut, "p3")
        base["age_class"] = _age_class(base["age"], config.age_class_bounds)
        overall, by_age = names[z]
        prof = mob.mobility_profile(base, fut)
        prof.insert(0, "horizon", z)
        _write_csv(prof, os.path.join(out, f"{overall}.csv"))
        prof_a = mob.mobility_profile(base, fut, by_age_class=True)
        prof_a.insert(0, "horizon", z)
        _write_csv(prof_a, os.path.join(out, f"{by_age}.csv"))
        outputs += [f"{overall}.csv", f"{by_age}.csv"]
        slopes.append((z, mob.rank_rank_slope(base, fut),
                       len(set(base["person_id"]) & set(fut["person_id"]))))
    _write_csv(pd.DataFrame(slopes, columns=["horizon", "slope", "n"]),
               os.path.join(out, "slope.csv"))
    outputs.append("slope.csv")
    return {"outputs": outputs, "rows": {"horizons": len(slopes)}}


def stage_decompose(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    real = deflate(panel, config.cohort_reference_year)
    frame = person_year_frame(real)
    cohort = pd.read_csv(os.path.join(out, "cohort.csv"))["person_id"].tolist()
    hours_tab = pd.read_csv(os.path.join(out, "jobs_hours.csv"))
    hours = (hours_tab.groupby(["person_id", "year"])["hours_filled"].sum()
             .groupby("person_id").mean())
    educ = pd.read_csv(os.path.join(out, "education.csv")).set_index(
        "person_id")["education"]
    effects = pd.read_csv(os.path.join(out, "person_effects.csv")).set_index(
        "person_id")
    design = dc.build_design(
        frame, cohort, config.cohort_window, hours=hours, education=educ,
        person_effects=effects["person_effect"],
        avg_firm_effects=effects["avg_firm_effect"], jobs=panel.jobs)

    ladder = dc.fit_ols_ladder(design)
    _write_csv(ladder, os.path.join(out, "table4.csv"))

    present = sorted(design["group"].unique())
    missing = sorted(set(range(20)) - set(present))
    if dc.REFERENCE_GROUP not in present:
        raise StageError("decompose", "reference group absent from the cohort")
    fits = {g: dc.fit_group_quantiles(design, g) for g in present}

    t5, t6, curves, f18, f19, f12 = [], [], [], [], [], []
    ref_logw = design.loc[design["group"] == dc.REFERENCE_GROUP, "log_w"].to_numpy()
    for g in present:
        res = dc.decompose_gap(design, fits, g, seed=config.mm_seed,
                               thetas=config.percentiles)
        t5.append(res[["group", "theta", "ordering", "actual", "predicted",
                       "covariates", "coefficients", "residual"]])
        t6.append(res[["group", "theta", "ordering", "predicted",
                       "covariate_share", "coefficient_share"]])
        full = dc.decompose_gap(design, fits, g, seed=config.mm_seed,
                                thetas=tuple(range(1, 100)))
        curves.append(full[full["ordering"] == 1])
        f18.append(dc.counterfactual_ratios(design, fits, g, config.mm_seed,
                                            "ref_characteristics",
                                            thetas=config.percentiles))
        f19.append(dc.counterfactual_ratios(design, fits, g, config.mm_seed,
                                            "ref_coefficients",
                                            thetas=config.percentiles))
        own_logw = design.loc[design["group"] == g, "log_w"].to_numpy()
        for th in config.percentiles:
            f12.append((g, th, float(np.exp(
                ds.quantile(own_logw, th / 100) - ds.quantile(ref_logw, th / 100)))))
    _write_csv(pd.concat(t5, ignore_index=True), os.path.join(out, "table5.csv"))
    _write_csv(pd.concat(t6, ignore_index=True), os.path.join(out, "table6.csv"))
    _write_csv(pd.concat(curves, ignore_index=True),
               os.path.join(out, "fig13_17.csv"))
    _write_csv(pd.concat(f18, ignore_index=True), os.path.join(out, "fig18.csv"))
    _write_csv(pd.concat(f19, ignore_index=True), os.path.join(out, "fig19.csv"))
    _write_csv(pd.DataFrame(f12, columns=["group", "theta", "ratio"]),
               os.path.join(out, "fig12.csv"))
    outputs = ["table4.csv", "table5.csv", "table6.csv", "fig12.csv",
               "fig13_17.csv", "fig18.csv", "fig19.csv"]
    return {"outputs": outputs,
            "rows": {"design": len(design), "groups": len(present),
                     "groups_missing": missing}}


def stage_microagg(config: RunConfig):
    out = config.outdir
    panel = _load_raw_panel(config)
    meas = pd.read_csv(os.path.join(out, "measures.csv"))
    attrs = panel.persons[["person_id", "sex", "birth_year"]]
    meas = meas.merge(attrs, on="person_id", how="left")
    work = meas.dropna(subset=["y"]).reset_index(drop=True)
    plan = ma.BinPlan(min_bin_size=config.min_bin_size)
    binned, audit = ma.microaggregate(work, ["y"], plan)
    binned = binned[["person_id", "year", "sex", "birth_year", "y"]]
    _write_csv(binned, os.path.join(out, "measures_binned.csv"))
    _write_csv(audit, os.path.join(out, "bin_audit.csv"))
    return {"outputs": ["measures_binned.csv", "bin_audit.csv"],
            "rows": {"binned": len(binned), "bins": len(audit)}}


STAGE_FUNCS = {
    "gen": stage_gen, "load": stage_load, "impute": stage_impute,
    "samples": stage_samples, "measures": stage_measures, "akm": stage_akm,
    "indicators": stage_indicators, "mobility": stage_mobility,
    "decompose": stage_decompose, "microagg": stage_microagg,
}

# files each stage reads from the output directory (besides the raw panel)
STAGE_READS = {
    "gen": [],
    "load": PANEL_FILES,
    "impute": PANEL_FILES,
    "samples": PANEL_FILES,
    "measures": PANEL_FILES + ["cohort.csv", "jobs_hours.csv"],
    "akm": PANEL_FILES,
    "indicators": PANEL_FILES + ["measures.csv", "persons_longterm.csv",
                                 "cohort.csv", "person_effects.csv"],
    "mobility": PANEL_FILES,
    "decompose": PANEL_FILES + ["cohort.csv", "jobs_hours.csv", "education.csv",
                                "person_effects.csv"],
    "microagg": PANEL_FILES + ["measures.csv"],
}


def _stage_inputs_hash(config: RunConfig, stage: str) -> str:
    h = hashlib.sha256()
    h.update(config.config_hash().encode())
    h.update(stage.encode())
    for name in STAGE_READS[stage]:
        path = config.inputs.get(name.split(".")[0], os.path.join(config.outdir, name))
        if os.path.exists(path):
            h.update(name.encode())
            h.update(_file_hash(path).encode())
    return h.hexdigest()[:16]


def run_pipeline(config: RunConfig, only=None) -> dict:
    """Run the stages in dependency order; returns the manifest.

    only: optional single stage name to run in isolation (its inputs must
    already exist in the output directory).
    """
    config.validate()
    os.makedirs(config.outdir, exist_ok=True)
    manifest_path = os.path.join(config.outdir, "manifest.json")
    previous = {}
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            previous = json.load(f).get("stages", {})

    # a single-stage run keeps the other stages' records intact
    manifest = {"config": json.loads(config.to_json()),
                "config_hash": config.config_hash(),
                "stages": dict(previous) if only else {}}
    stages = [only] if only else STAGE_ORDER
    if only and only not in STAGE_FUNCS:
        raise StageError(only, "unknown stage")
    for stage in stages:
        if not config.enabled(stage):
            manifest["stages"][stage] = {"status": "skipped"}
            continue
        in_hash = _stage_inputs_hash(config, stage)
        prev = previous.get(stage, {})
        outputs = prev.get("outputs", [])
        if (prev.get("status") in ("done", "cached")
                and prev.get("inputs_hash") == in_hash and outputs
                and all(os.path.exists(os.path.join(config.outdir, o))
                        for o in outputs)):
            manifest["stages"][stage] = dict(prev, status="cached")
            continue
        t0 = time.monotonic()
        try:
            info = STAGE_FUNCS[stage](config) or {}
        except StageError:
            _cleanup_outputs(config, previous.get(stage, {}))
            raise
        except Exception as e:  # noqa: BLE001 - surface stage name
            _cleanup_outputs(config, previous.get(stage, {}))
            raise StageError(stage, str(e)) from e
        record = {"status": "done", "inputs_hash": in_hash,
                  "outputs": info.get("outputs", []),
                  "rows": info.get("rows", {}),
                  "seconds": round(time.monotonic() - t0, 3)}
        manifest["stages"][stage] = record
        previous[stage] = record
        with open(manifest_path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def _cleanup_outputs(config: RunConfig, prev_record: dict):
    """Remove possibly partial outputs of a failed stage."""
    for name in prev_record.get("outputs", []):
        path = os.path.join(config.outdir, name)
        if os.path.exists(path):
            os.remove(path)


EXPECTED_REPORT = [
    ("sample counts", "sample_counts.csv"),
    ("person-year measures", "measures.csv"),
    ("long-term person measures", "persons_longterm.csv"),
    ("percentile drift", "fig1.csv"),
    ("dispersion", "fig2.csv"),
    ("upper/lower tail dispersion", "fig3.csv"),
    ("permanent-earnings dispersion", "fig4.csv"),
    ("volatility", "fig5.csv"),
    ("skewness", "fig6.csv"),
    ("volatility profile", "fig7.csv"),
    ("activity by age group", "fig10.csv"),
    ("earnings by age group", "fig11.csv"),
    ("worker profiles", "table2.csv"),
    ("worker profiles with volatility", "table3.csv"),
    ("mobility profile", "fig8.csv"),
    ("mobility by age", "fig9.csv"),
    ("rank-rank slopes", "slope.csv"),
    ("fixed-effect estimates", "person_effects.csv"),
    ("firm effects", "firm_effects.csv"),
    ("regression ladder", "table4.csv"),
    ("gap decomposition", "table5.csv"),
    ("decomposition shares", "table6.csv"),
    ("relative earnings ratios", "fig12.csv"),
    ("decomposition curves", "fig13_17.csv"),
    ("counterfactual ratios (reference covariates)", "fig18.csv"),
    ("counterfactual ratios (reference coefficients)", "fig19.csv"),
    ("binned earnings", "measures_binned.csv"),
    ("bin audit", "bin_audit.csv"),
]


def emit_report(outdir: str) -> str:
    """Human-readable inventory of the run's outputs."""
    if not os.path.isdir(outdir) or not os.listdir(outdir):
        raise ValueError(f"no pipeline outputs in {outdir!r}")
    lines = []
    width = max(len(label) for label, _ in EXPECTED_REPORT)
    for label, name in EXPECTED_REPORT:
        path = os.path.join(outdir, name)
        status = path if os.path.exists(path) else "skipped"
        lines.append(f"{label:<{width}}  {status}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(outdir, "report.txt"), "w") as f:
        f.write(text)
    return text


def load_schemas() -> dict:
    """Column schemas for the emitted CSV files."""
    path = os.path.join(os.path.dirname(__file__), "schemas.json")
    with open(path) as f:
        return json.load(f)


def validate_output(path: str, schema: dict) -> pd.DataFrame:
    """Check one emitted CSV against its schema; returns the parsed frame.

    Verifies the exact column order and, when the schema names a
    percentile column, that every group carries exactly the expected
    percentile rows.
    """
    df = pd.read_csv(path)
    if list(df.columns) != schema["columns"]:
        raise ValueError(f"{os.path.basename(path)}: columns {list(df.columns)} "
                         f"!= schema {schema['columns']}")
    pcol = schema.get("percentile_col")
    if pcol:
        want = set(schema["percentiles"])
        gcol = schema.get("group_col")
        groups = df.groupby(gcol)[pcol] if gcol else [(None, df[pcol])]
        for g, vals in groups:
            if not want <= set(vals):
                raise ValueError(f"{os.path.basename(path)}: group {g} missing "
                                 f"percentiles {sorted(want - set(vals))}")
    return df


def validate_outputs(outdir: str, names=None) -> dict:
    """Validate several emitted CSVs; returns {name: row count}."""
    schemas = load_schemas()
    names = names or sorted(schemas)
    counts = {}
    for name in names:
        path = os.path.join(outdir, name)
        if not os.path.exists(path):
            raise ValueError(f"missing output {name}")
        counts[name] = len(validate_output(path, schemas[name]))
    return counts
