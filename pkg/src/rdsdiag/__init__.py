"""Diagnostics toolkit for respondent-driven sampling studies."""

from .convergence import ConvergenceConfig, convergence_batch, convergence_flag
from .dataset import (
    IngestOptions,
    Respondent,
    StudyDataset,
    TraitSpec,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .estimators import SSConfig, ss_estimate, vh_estimate
from .forest import RecruitmentForest, build_forest
from .report import PipelineConfig, ReportBundle, run_pipeline
from .sim import NetworkConfig, SimConfig, generate_network, simulate_rds

__version__ = "1.0.0"

__all__ = [
    "ConvergenceConfig",
    "IngestOptions",
    "NetworkConfig",
    "PipelineConfig",
    "RecruitmentForest",
    "ReportBundle",
    "Respondent",
    "SSConfig",
    "SimConfig",
    "StudyDataset",
    "TraitSpec",
    "build_forest",
    "convergence_batch",
    "convergence_flag",
    "generate_network",
    "load_dataset",
    "run_pipeline",
    "save_dataset",
    "simulate_rds",
    "ss_estimate",
    "validate_dataset",
    "vh_estimate",
]
