"""Deterministic synthetic panel generator.

Produces administrative-style person/job-year tables with known ground truth (true
person effects, firm effects, education, hours) so that every downstream
stage can be tested against an oracle.  Random streams are counter-based
and keyed by (seed, person index): adding persons never perturbs the
draws of existing persons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .geo import HOURS_REPORTING_STATES, SECTOR_LETTERS, STATE_TO_DIVISION
from .panel import EDUCATION_LEVELS, GROUPS, Panel, group_id

_STATES = sorted(STATE_TO_DIVISION)

# Stream tags so per-person, per-firm, and global draws never collide.
_PERSON_STREAM = 1
_FIRM_STREAM = 2


class ConfigError(ValueError):
    """Raised for invalid generator configuration fields."""


@dataclass
class GroupParams:
    """Earnings-process parameters for one demographic group."""

    person_mu: float = 10.0          # mean log annual earnings level
    person_sd: float = 0.5
    ar_rho: float = 0.6              # AR(1) persistence of transitory shock
    ar_sd: float = 0.3               # innovation scale
    participation: float = 0.9       # annual probability of any activity
    full_year_rate: float = 0.85     # P(4 active quarters | active)
    mobility: float = 0.12           # annual employer-change probability
    second_job_rate: float = 0.08    # probability of a coincident second job
    educ_probs: tuple = (0.1, 0.3, 0.3, 0.3)   # LTHS, HS, SomeCollege, BAplus


@dataclass
class GenConfig:
    seed: int = 12345
    n_persons: int = 1000
    n_firms: int = 200
    year_start: int = 1998
    year_end: int = 2019
    group_shares: tuple = tuple([0.05] * 20)
    group_params: dict = field(default_factory=dict)  # group id -> GroupParams
    firm_sd: float = 0.25
    death_hazard: float = 0.002
    birth_year_lo: int = 1945
    birth_year_hi: int = 1985
    educ_observed_rate: float = 0.2
    hours_const: float = 3.0         # log hours = const + elast * log(earn) + noise
    hours_elast: float = 0.4
    hours_sd: float = 0.15
    inflation: float = 0.02
    minwage_base: float = 7.25

    def params_for(self, g: int) -> GroupParams:
        return self.group_params.get(g, GroupParams())

    def validate(self):
        if self.n_persons <= 0:
            raise ConfigError("n_persons must be positive")
        if self.n_firms <= 0:
            raise ConfigError("n_firms must be positive")
        if self.year_end < self.year_start:
            raise ConfigError("year_end before year_start")
        shares = np.asarray(self.group_shares, float)
        if shares.shape != (20,):
            raise ConfigError("group_shares must have 20 entries")
        if (shares < 0).any():
            raise ConfigError("group_shares must be non-negative")
        if abs(shares.sum() - 1.0) > 1e-9:
            raise ConfigError("group_shares must sum to 1")
        if not 0.0 <= self.death_hazard <= 1.0:
            raise ConfigError("death_hazard must be in [0, 1]")
        for g in range(20):
            p = self.params_for(g)
            for name in ("participation", "full_year_rate", "mobility",
                         "second_job_rate"):
                v = getattr(p, name)
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"group {g}: {name} must be in [0, 1]")
            if not 0.0 <= p.ar_rho < 1.0:
                raise ConfigError(f"group {g}: ar_rho must be in [0, 1)")
            ep = np.asarray(p.educ_probs, float)
            if ep.shape != (4,) or (ep < 0).any() or abs(ep.sum() - 1) > 1e-9:
                raise ConfigError(f"group {g}: educ_probs must be 4 probabilities summing to 1")


def _person_rng(seed: int, idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, (_PERSON_STREAM << 48) + idx]))


def _split_quarters(rng, total: float, n_active: int) -> np.ndarray:
    """Split an annual amount over n_active random quarters, summing exactly."""
    q = np.zeros(4)
    slots = np.sort(rng.permutation(4)[:n_active]) if n_active < 4 \
        else np.arange(4)
    if n_active == 1:
        q[slots[0]] = total
        return q
    w = rng.uniform(0.5, 1.5, size=n_active)
    w /= w.sum()
    amounts = total * w
    amounts[-1] = total - amounts[:-1].sum()
    q[slots] = amounts
    return q


def gen_population(config: GenConfig):
    """Generate a Panel plus ground-truth tables.

    Returns (panel, truth) where truth is a dict with keys
    'persons' (true effects, education, hours model), 'firms'
    (true firm effects), and 'group_params'.
    """
    config.validate()
    years = np.arange(config.year_start, config.year_end + 1)
    n_years = len(years)

    firm_rng = np.random.Generator(
        np.random.Philox(key=[config.seed, _FIRM_STREAM << 48]))
    firm_ids = [f"F{i:06d}" for i in range(config.n_firms)]
    firm_effects = firm_rng.normal(0.0, config.firm_sd, size=config.n_firms)
    firm_sector = [SECTOR_LETTERS[i % len(SECTOR_LETTERS)] for i in range(config.n_firms)]
    firm_state = [_STATES[int(firm_rng.integers(len(_STATES)))] for _ in range(config.n_firms)]

    shares = np.asarray(config.group_shares, float)
    cum_shares = np.cumsum(shares)

    person_rows = []
    job_cols = {k: [] for k in ("person_id", "employer_id", "year",
                                "q1", "q2", "q3", "q4",
                                "industry_sector", "state", "hours")}
    truth_rows = []
    truth_hours = []

    for idx in range(config.n_persons):
        rng = _person_rng(config.seed, idx)
        pid = f"P{idx:07d}"
        g = int(np.searchsorted(cum_shares, rng.uniform()))
        g = min(g, 19)
        birth, sex, race = GROUPS[g]
        par = config.params_for(g)

        birth_year = int(rng.integers(config.birth_year_lo, config.birth_year_hi + 1))
        state = _STATES[int(rng.integers(len(_STATES)))]
        educ = EDUCATION_LEVELS[min(int(np.searchsorted(
            np.cumsum(par.educ_probs), rng.uniform())), 3)]
        educ_obs = rng.uniform() < config.educ_observed_rate

        death_draws = rng.uniform(size=n_years)
        death_year = np.nan
        if config.death_hazard > 0:
            hits = np.flatnonzero(death_draws < config.death_hazard)
            if hits.size:
                death_year = float(years[hits[0]])

        theta = rng.normal(par.person_mu, par.person_sd) if par.person_sd > 0 \
            else par.person_mu
        firm_idx = int(rng.integers(config.n_firms))

        person_rows.append((pid, sex, race, birth == "foreign", birth_year,
                            death_year, True, educ if educ_obs else None, state))
        truth_rows.append((pid, g, theta, educ, death_year))

        # one batched draw per process keeps the per-year loop cheap
        active_draws = rng.uniform(size=n_years)
        innovs = rng.normal(size=n_years) if par.ar_sd > 0 else np.zeros(n_years)
        moves = rng.uniform(size=n_years) < par.mobility
        move_targets = rng.integers(config.n_firms, size=n_years)
        seconds = rng.uniform(size=n_years) < par.second_job_rate
        second_idxs = rng.integers(config.n_firms, size=n_years)
        quarter_draws = rng.uniform(size=n_years)
        partial_quarters = 1 + rng.integers(3, size=n_years)
        hours_noises = (rng.normal(0.0, config.hours_sd, size=n_years)
                        if config.hours_sd > 0 else np.zeros(n_years))
        second_shares = rng.uniform(0.05, 0.3, size=n_years)

        x = 0.0
        for yi, year in enumerate(years):
            x = par.ar_rho * x + par.ar_sd * innovs[yi]
            if moves[yi]:
                firm_idx = int(move_targets[yi])
            second = seconds[yi]
            second_idx = int(second_idxs[yi])
            n_active = 4 if quarter_draws[yi] < par.full_year_rate \
                else int(partial_quarters[yi])
            split_rng_state = rng  # quarterly split consumes the same stream
            hours_noise = hours_noises[yi]
            second_share = second_shares[yi]

            if not np.isnan(death_year) and year >= death_year:
                continue
            if active_draws[yi] >= par.participation:
                continue

            earn = float(np.exp(theta + firm_effects[firm_idx] + x))
            jobs_this_year = [(firm_idx, earn)]
            if second and second_idx != firm_idx:
                jobs_this_year = [(firm_idx, earn * (1 - second_share)),
                                  (second_idx, earn * second_share)]
            for f_idx, amount in jobs_this_year:
                q = _split_quarters(split_rng_state, amount, n_active)
                f_state = firm_state[f_idx]
                true_hours = float(np.exp(config.hours_const
                                          + config.hours_elast * np.log(amount)
                                          + hours_noise))
                job_cols["person_id"].append(pid)
                job_cols["employer_id"].append(firm_ids[f_idx])
                job_cols["year"].append(int(year))
                for qi, qc in enumerate(("q1", "q2", "q3", "q4")):
                    job_cols[qc].append(q[qi])
                job_cols["industry_sector"].append(firm_sector[f_idx])
                job_cols["state"].append(f_state)
                observed = f_state in HOURS_REPORTING_STATES
                job_cols["hours"].append(true_hours if observed else np.nan)
                truth_hours.append((pid, firm_ids[f_idx], int(year), true_hours))

    persons = pd.DataFrame(person_rows, columns=[
        "person_id", "sex", "race_eth", "foreign_born", "birth_year",
        "death_year", "ssn_active", "education", "state"])
    jobs = pd.DataFrame(job_cols)
    jobs = jobs.sort_values(["person_id", "year", "employer_id"],
                            kind="mergesort").reset_index(drop=True)

    deflator = pd.Series(
        100.0 * (1.0 + config.inflation) ** (years - config.year_start),
        index=years)
    minwage = pd.Series(
        config.minwage_base * (1.0 + config.inflation) ** (years - config.year_start),
        index=years)

    from .panel import load_panel
    panel = load_panel(
        persons, jobs,
        pd.DataFrame({"year": years, "index": deflator.to_numpy()}),
        pd.DataFrame({"year": years, "min_wage": minwage.to_numpy()}),
        reference_year=int(years[-1]))

    truth = {
        "persons": pd.DataFrame(truth_rows, columns=[
            "person_id", "group", "person_effect", "education", "death_year"]),
        "firms": pd.DataFrame({
            "employer_id": firm_ids,
            "firm_effect": firm_effects,
            "industry_sector": firm_sector,
            "state": firm_state}),
        "hours": pd.DataFrame(truth_hours, columns=[
            "person_id", "employer_id", "year", "hours"]),
        "group_params": pd.DataFrame(
            [(g,) + tuple(vars(config.params_for(g)).values())[:8]
             for g in range(20)],
            columns=["group", "person_mu", "person_sd", "ar_rho", "ar_sd",
                     "participation", "full_year_rate", "mobility",
                     "second_job_rate"]),
    }
    return panel, truth
