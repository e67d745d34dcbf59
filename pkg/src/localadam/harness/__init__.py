"""Experiment configs, seed sweeps, canned suites and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .runner import (
    BudgetError,
    ComparisonReport,
    SummaryReport,
    compare,
    final_metric,
    run_experiment,
)
from .suites import AppendixDParams, AppendixDReport, LemmaReport, run_appendix_d, run_lemma_suite

__all__ = [
    "AppendixDParams", "AppendixDReport", "BudgetError", "ComparisonReport", "ConfigError",
    "ExperimentConfig", "LemmaReport", "SummaryReport", "compare", "final_metric", "load_config",
    "parse_config", "run_appendix_d", "run_experiment", "run_lemma_suite", "serialize_config",
]
