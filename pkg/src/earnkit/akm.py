"""Two-way person/firm fixed effects on log job-year earnings.

The model log e = theta_person + psi_firm + residual is identified within
connected components of the bipartite person-firm graph.  The solver is
alternating per-node (weighted) means, which minimizes the least-squares
objective monotonically; each component is normalized so that the
employment-weighted mean firm effect is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


class UnionFind:
    """Union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def connected_components(persons, firms):
    """Component labels of the bipartite person-firm graph.

    persons and firms are parallel arrays of node identifiers (one pair
    per job-year edge).  Returns (person_component, firm_component) as
    Series mapping node id -> deterministic component label (0, 1, ... in
    order of first appearance of the smallest member id).
    """
    p_codes, p_index = pd.factorize(np.asarray(persons), sort=True)
    f_codes, f_index = pd.factorize(np.asarray(firms), sort=True)
    n_p, n_f = len(p_index), len(f_index)
    uf = UnionFind(n_p + n_f)
    for pc, fc in zip(p_codes, f_codes):
        uf.union(pc, n_p + fc)
    roots = np.array([uf.find(i) for i in range(n_p + n_f)])
    _, labels = np.unique(roots, return_inverse=True)
    return (pd.Series(labels[:n_p], index=p_index),
            pd.Series(labels[n_p:], index=f_index))


@dataclass
class FeSolution:
    person_effects: pd.Series      # person id -> theta
    firm_effects: pd.Series        # firm id -> psi
    person_component: pd.Series
    firm_component: pd.Series
    rss: float
    iterations: int
    converged: bool
    objective_path: np.ndarray


def fit_two_way_fe(persons, firms, log_earnings, weights=None,
                   tol: float = 1e-8, max_iter: int = 10000) -> FeSolution:
    """Least-squares person and firm effects by alternating means.

    Iterates theta_i <- weighted mean residual of person i, then psi_j <-
    weighted mean residual of firm j, until the gradient norm (max
    absolute weighted residual sum per node) drops below tol.  Firm
    effects are then recentered so each component's employment-weighted
    mean is zero.
    """
    y = np.asarray(log_earnings, float)
    if not np.isfinite(y).all():
        raise ValueError("log earnings must be finite (positive-earnings rows only)")
    w = np.ones_like(y) if weights is None else np.asarray(weights, float)
    p_codes, p_index = pd.factorize(np.asarray(persons), sort=True)
    f_codes, f_index = pd.factorize(np.asarray(firms), sort=True)
    n_p, n_f = len(p_index), len(f_index)

    theta = np.zeros(n_p)
    psi = np.zeros(n_f)
    wp = np.bincount(p_codes, weights=w, minlength=n_p)
    wf = np.bincount(f_codes, weights=w, minlength=n_f)

    obj_path = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = y - psi[f_codes]
        theta = np.bincount(p_codes, weights=w * r, minlength=n_p) / wp
        r = y - theta[p_codes]
        psi = np.bincount(f_codes, weights=w * r, minlength=n_f) / wf
        resid = y - theta[p_codes] - psi[f_codes]
        obj_path.append(float((w * resid ** 2).sum()))
        g_p = np.bincount(p_codes, weights=w * resid, minlength=n_p)
        g_f = np.bincount(f_codes, weights=w * resid, minlength=n_f)
        grad = max(np.abs(g_p).max(initial=0.0), np.abs(g_f).max(initial=0.0))
        if grad <= tol:
            converged = True
            break

    p_comp, f_comp = connected_components(persons, firms)
    # normalization: employment-weighted mean firm effect zero per component
    n_j = np.bincount(f_codes, weights=w, minlength=n_f)
    comp_of_firm = f_comp.to_numpy()
    for c in np.unique(comp_of_firm):
        sel = comp_of_firm == c
        shift = float((psi[sel] * n_j[sel]).sum() / n_j[sel].sum())
        psi[sel] -= shift
        theta[p_comp.to_numpy() == c] += shift

    resid = y - theta[p_codes] - psi[f_codes]
    return FeSolution(
        person_effects=pd.Series(theta, index=p_index),
        firm_effects=pd.Series(psi, index=f_index),
        person_component=p_comp,
        firm_component=f_comp,
        rss=float((w * resid ** 2).sum()),
        iterations=it,
        converged=converged,
        objective_path=np.asarray(obj_path),
    )


def person_average_firm_effect(solution: FeSolution, persons, firms) -> pd.Series:
    """Job-year-count-weighted mean firm effect per person."""
    df = pd.DataFrame({"person": np.asarray(persons),
                       "psi": solution.firm_effects.reindex(np.asarray(firms)).to_numpy()})
    return df.groupby("person", sort=True)["psi"].mean().rename("avg_firm_effect")
