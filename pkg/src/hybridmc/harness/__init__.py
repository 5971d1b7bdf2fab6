"""Experiment orchestration: configs, replicate farms, reports."""

from .aerosol import (
    AerosolDataset,
    AerosolResult,
    DataError,
    aerosol_blocks,
    dataset_from_config,
    load_aerosol_data,
    moment_guess,
    run_aerosol_experiment,
    synth_aerosol,
)
from .config import AlgorithmConfig, ConfigError, ExperimentConfig, load_config, load_schema, schema_path
from .report import emit_report, read_reports_csv, summary_document, validate_summary, write_reports_csv
from .runner import (
    BenchmarkResult,
    DetectionResult,
    HarnessError,
    build_target,
    initial_population,
    mode_detection_campaign,
    replicate_rng,
    replicate_seed,
    run_benchmark,
    run_replicate,
    target_mean,
    tune_xi_scan,
)
