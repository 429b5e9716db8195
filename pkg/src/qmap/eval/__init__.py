"""Correlation metrics, logistic mapping and evaluation studies."""

from .logistic import LogisticParams, fit_logistic, logistic
from .metrics import plcc, srcc
from .report import EvalReport, evaluate, logistic_holdout, write_reports
from .study import (
    STUDY_BLOCKS,
    SplitSummary,
    StudyRow,
    StudySetup,
    patch_average_study,
    repeated_splits,
    train_eval_maps,
    write_study,
)

__all__ = [
    "EvalReport",
    "LogisticParams",
    "STUDY_BLOCKS",
    "SplitSummary",
    "StudyRow",
    "StudySetup",
    "evaluate",
    "fit_logistic",
    "logistic",
    "logistic_holdout",
    "patch_average_study",
    "plcc",
    "repeated_splits",
    "srcc",
    "train_eval_maps",
    "write_reports",
    "write_study",
]
