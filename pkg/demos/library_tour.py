"""Tour of the library API without the pipeline: generate a panel, build
samples, fit the two-way fixed-effects model, and decompose a gap.

Usage: python3 demos/library_tour.py
"""

import numpy as np

from earnkit import decompose as dc
from earnkit.akm import fit_two_way_fe
from earnkit.diststats import gini, kelley_skewness, quantile
from earnkit.measures import person_year_frame
from earnkit.samples import (EarningsFloor, build_cohort12, build_sample,
                             sample_counts)
from earnkit.synth import GenConfig, gen_population

panel, truth = gen_population(GenConfig(seed=3, n_persons=3000, n_firms=250))
frame = person_year_frame(panel)
floor = EarningsFloor(panel.minwage)

bs = build_sample(frame, "BS", 2008, floor)
cs = build_sample(frame, "CS", 2008, floor)
print(f"2008 base sample: {len(bs)} persons, above-floor subset: {len(cs)}")

earn = frame.set_index(["person_id", "year"]).loc[
    [(p, 2008) for p in cs.members], "earn"].to_numpy()
print(f"  P90/P10 ratio {quantile(earn, .9) / quantile(earn, .1):.2f}, "
      f"Gini {gini(earn):.3f}, Kelley skewness of logs "
      f"{kelley_skewness(np.log(earn)):.3f}")

counts = sample_counts(panel, floor, years=[2004, 2008, 2012])
print("\nsample counts:")
print(counts.pivot(index="year", columns="kind", values="n"))

jobs = panel.jobs.copy()
jobs["earn"] = jobs[["q1", "q2", "q3", "q4"]].sum(axis=1)
jobs = jobs[jobs["earn"] > 0]
sol = fit_two_way_fe(jobs["person_id"], jobs["employer_id"],
                     np.log(jobs["earn"]))
print(f"\ntwo-way FE: {sol.iterations} iterations, "
      f"sd(person) {sol.person_effects.std():.3f}, "
      f"sd(firm) {sol.firm_effects.std():.3f}")

window = (2004, 2015)
cohort12 = build_cohort12(frame, window)
print(f"\n12-year cohort: {len(cohort12)} persons")
cohort = dc.build_design(frame, cohort12, window)
fits = {g: dc.fit_group_quantiles(cohort, g)
        for g in sorted(cohort["group"].unique())
        if (cohort["group"] == g).sum() >= 50}
g = max(fits)
res = dc.decompose_gap(cohort, fits, g, seed=1)
print(f"\ngap decomposition for group {g} (ordering 1):")
print(res[res["ordering"] == 1]
      [["theta", "actual", "covariates", "coefficients"]]
      .to_string(index=False))
