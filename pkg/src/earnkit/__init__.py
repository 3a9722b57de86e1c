"""Batch analytics for person-year earnings panels.

Sample construction, earnings-dynamics indicators, rank-rank mobility,
micro-aggregation binning, two-way person/firm fixed effects, and
quantile-regression counterfactual decompositions of group earnings
gaps, plus a deterministic synthetic panel generator for testing.
"""

from .panel import Panel, PanelError, load_panel, deflate, reinflate
from .samples import AnalysisSample, EarningsFloor, build_sample, build_cohort12
from .synth import GenConfig, GroupParams, gen_population
from .pipeline import RunConfig, StageError, run_pipeline, emit_report

__all__ = [
    "Panel", "PanelError", "load_panel", "deflate", "reinflate",
    "AnalysisSample", "EarningsFloor", "build_sample", "build_cohort12",
    "GenConfig", "GroupParams", "gen_population",
    "RunConfig", "StageError", "run_pipeline", "emit_report",
]

__version__ = "0.1.0"
