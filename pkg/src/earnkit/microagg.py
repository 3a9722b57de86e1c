"""Micro-aggregation disclosure-avoidance binning.

Within each (year, sex, birth-year) cell, records are sorted by the
target variable and partitioned into consecutive bins of at least
min_bin_size records; each value is replaced by its bin mean.  Cell
counts, sums, and means are preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

CELL_KEYS = ["year", "sex", "birth_year"]


@dataclass(frozen=True)
class BinPlan:
    min_bin_size: int = 10
    cell_keys: tuple = tuple(CELL_KEYS)


def _bin_boundaries(n: int, k: int):
    """Consecutive bins of size k; the remainder merges into the last bin."""
    if n < k:
        return [(0, n)]
    n_bins = n // k
    bounds = [(i * k, (i + 1) * k) for i in range(n_bins)]
    lo, _ = bounds[-1]
    bounds[-1] = (lo, n)
    return bounds


def microaggregate(records: pd.DataFrame, variables, plan: BinPlan = BinPlan(),
                   id_col: str = "person_id"):
    """Replace each variable by its within-bin mean.

    Each variable is binned independently.  Returns (binned records,
    audit table).  Cells smaller than min_bin_size become a single bin
    and are flagged in the audit.
    """
    if isinstance(variables, str):
        variables = [variables]
    keys = list(plan.cell_keys)
    missing = [c for c in keys + list(variables) if c not in records.columns]
    if missing:
        raise ValueError(f"records missing columns {missing}")
    out = records.copy()
    audit_rows = []
    for var in variables:
        new_vals = out[var].to_numpy(dtype=float).copy()
        grouper = records.reset_index(drop=True).groupby(keys, sort=True)
        for cell, idx in grouper.indices.items():
            vals = new_vals[idx]
            tiebreak = records[id_col].to_numpy()[idx] if id_col in records else idx
            order = np.lexsort((tiebreak, vals))
            small = len(idx) < plan.min_bin_size
            for b, (lo, hi) in enumerate(_bin_boundaries(len(idx), plan.min_bin_size)):
                sel = idx[order[lo:hi]]
                mean = float(new_vals[sel].mean())
                new_vals[sel] = mean
                audit_rows.append(cell + (var, b, hi - lo, mean, small))
        out[var] = new_vals
    audit = pd.DataFrame(audit_rows,
                         columns=keys + ["variable", "bin", "size", "mean",
                                         "small_cell_flag"])
    return out, audit
