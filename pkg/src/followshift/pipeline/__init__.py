"""Orchestration: run configuration, analysis, reports, synthetic data."""
from .analysis import (
    NEW_FOLLOWERS,
    UNFOLLOWERS,
    CohortComparison,
    CohortWindowStats,
    CompositionReport,
    EmptyCohort,
    PipelineStageError,
    classify_cohort,
    load_account_series,
    run_analysis,
)
from .config import AnalysisConfig, read_kv_config
from .datafiles import (
    load_faces,
    read_labels,
    read_profiles,
    save_faces,
    write_drops,
    write_labels,
    write_predictions,
    write_profiles,
)
from .report import render_csv, render_markdown, render_report, report_from_csv, report_to_json
from .synth import SyntheticDataset, SyntheticSpec, gen_synthetic, read_truth
from .training import assemble_training_set

__all__ = [
    "AnalysisConfig",
    "CohortComparison",
    "CohortWindowStats",
    "CompositionReport",
    "EmptyCohort",
    "NEW_FOLLOWERS",
    "PipelineStageError",
    "SyntheticDataset",
    "SyntheticSpec",
    "UNFOLLOWERS",
    "assemble_training_set",
    "classify_cohort",
    "gen_synthetic",
    "load_account_series",
    "load_faces",
    "read_kv_config",
    "read_labels",
    "read_profiles",
    "read_truth",
    "render_csv",
    "render_markdown",
    "render_report",
    "report_from_csv",
    "report_to_json",
    "run_analysis",
    "save_faces",
    "write_drops",
    "write_labels",
    "write_predictions",
    "write_profiles",
]
