from .accuracy import (
    MergedPredictor,
    MetricsRecord,
    PlainPredictor,
    aggregate_groups,
    eval_accuracy,
    extract_answer,
)
from .alignment import AlignmentReport, alignment_reports, probe_states, rep_alignment
from .compare import compare_records, compare_runs, compare_variants, load_run_metrics
from .report import accuracy_table, export_report, pca_projection
from .translation import TranslationReport, token_f1, translation_eval


__all__ = [
    "AlignmentReport",
    "MergedPredictor",
    "MetricsRecord",
    "PlainPredictor",
    "TranslationReport",
    "accuracy_table",
    "aggregate_groups",
    "alignment_reports",
    "compare_records",
    "compare_runs",
    "compare_variants",
    "eval_accuracy",
    "export_report",
    "extract_answer",
    "load_run_metrics",
    "pca_projection",
    "probe_states",
    "rep_alignment",
    "token_f1",
    "translation_eval",
]
