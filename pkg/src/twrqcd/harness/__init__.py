"""Configuration-driven experiment harness."""
from .config import ExperimentConfig, MultiSpec, build_detector, config_from_dict, load_config
from .runner import (
    ExperimentResult,
    MultiResult,
    ablation_variants,
    attribute_alarms,
    run_ablation,
    run_experiment,
    run_llr_trace,
    run_multi_change,
    run_sweep,
)

__all__ = [
    "ExperimentConfig", "ExperimentResult", "MultiResult", "MultiSpec", "ablation_variants", "attribute_alarms",
    "build_detector", "config_from_dict", "load_config", "run_ablation", "run_experiment", "run_llr_trace",
    "run_multi_change", "run_sweep",
]
