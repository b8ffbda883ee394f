"""Two-stage protocol simulation and the Monte-Carlo sweep harness."""

from .experiment import (
    CSV_HEADER,
    ExperimentResult,
    SweepReport,
    TrialOutcome,
    aggregate,
    emit_csv,
    evaluate_protocol,
    format_csv,
    run_experiment,
    run_sweep,
    run_trial,
    trial_rng,
)
from .protocol import stage1_indicators, stage2_indicators, stage2_snr, stage2_snrs

__all__ = [
    "CSV_HEADER", "ExperimentResult", "SweepReport", "TrialOutcome", "aggregate",
    "emit_csv", "evaluate_protocol", "format_csv", "run_experiment", "run_sweep",
    "run_trial", "trial_rng", "stage1_indicators", "stage2_indicators",
    "stage2_snr", "stage2_snrs",
]
