"""Run the full pipeline on a small generated world and print headlines.

Usage: python3 demos/quickstart.py [outdir]
"""

import os
import sys

import pandas as pd

from earnkit.pipeline import RunConfig, emit_report, run_pipeline

outdir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
cfg = RunConfig(outdir=outdir, seed=7, n_persons=4000, n_firms=300)
manifest = run_pipeline(cfg)

for stage, record in manifest["stages"].items():
    print(f"{stage:>11}: {record['status']:>7}  "
          f"({record.get('seconds', 0.0):6.1f}s)")

print()
print(emit_report(outdir))

tab5 = pd.read_csv(os.path.join(outdir, "table5.csv"))
medians = tab5[(tab5["theta"] == 50) & (tab5["ordering"] == 1)]
print("\nmedian log-earnings gaps vs the reference group:")
print(medians[["group", "actual", "covariates", "coefficients"]]
      .to_string(index=False))
