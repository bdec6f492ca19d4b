"""Randomization tests for weak null hypotheses in multi-arm experiments."""

from .asymptotics import LimitLaw, PopulationSpec, limit_weights, reference_pvalue, weighted_chi2_tail
from .contrast import (
    Hypothesis,
    anova_contrast,
    complete_contrast,
    factorial_contrast,
    make_hypothesis,
    model_matrix,
    preset_contrast,
    trend_contrast,
)
from .data import ExperimentDataset, GroupSummaries, group_summaries
from .engine import FrtResult, RandomizationScheme, enumerate_assignments, frt_pvalue
from .errors import WeakNullError
from .imputation import ScienceTable, impute
from .inference import bonferroni_inequalities, confidence_region, hl_estimate
from .kernels import BACKEND
from .statistics import Statistic

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExperimentDataset",
    "FrtResult",
    "GroupSummaries",
    "Hypothesis",
    "LimitLaw",
    "PopulationSpec",
    "RandomizationScheme",
    "ScienceTable",
    "Statistic",
    "WeakNullError",
    "anova_contrast",
    "bonferroni_inequalities",
    "complete_contrast",
    "confidence_region",
    "enumerate_assignments",
    "factorial_contrast",
    "frt_pvalue",
    "group_summaries",
    "hl_estimate",
    "impute",
    "limit_weights",
    "make_hypothesis",
    "model_matrix",
    "preset_contrast",
    "reference_pvalue",
    "trend_contrast",
    "weighted_chi2_tail",
]
