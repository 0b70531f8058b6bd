"""Seizure prediction with a channel-aware set transformer."""

from ._core import (
    ConfigError,
    Predictor,
    SeizsetError,
    alarms,
    config_lines,
    extract_features,
    parameter_count,
    plot_trace,
    read_trace,
    run_experiment,
    score,
    select_channels,
    synth,
    write_synthetic_cohort,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Predictor",
    "SeizsetError",
    "alarms",
    "config_lines",
    "extract_features",
    "parameter_count",
    "plot_trace",
    "read_trace",
    "run_experiment",
    "score",
    "select_channels",
    "synth",
    "write_synthetic_cohort",
]
