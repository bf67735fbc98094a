"""Change detectors: oracle, TWR, adaptive and GLR."""
import math

import numpy as np

from .. import statistics as st
from ..errors import InvalidArgumentError
from .adaptive import AdaptiveConfig, adaptive_path, fit_pre_change
from .base import (
    TRACE_COLUMNS,
    DetectionTask,
    DetectorPath,
    RunResult,
    result_from_path,
    stop_level_for,
)
from .glr import GlrConfig, glr_path, glr_split_scores
from .oracle import OracleConfig, oracle_llr, oracle_path, oracle_step
from .twr import (
    TwrConfig,
    TwrState,
    init_state,
    penalize,
    twr_loss_grads,
    twr_losses,
    twr_path,
    twr_reset_for_next_change,
    twr_sequential,
    twr_step,
)


def detector_path(task, config, rng=None, stop_level=None, trace=False):
    """Score path of the detector described by ``config`` on ``task``."""
    if isinstance(config, OracleConfig):
        return oracle_path(task, config, trace=trace)
    if isinstance(config, TwrConfig):
        return twr_path(task, config, rng, stop_level=stop_level, trace=trace)
    if isinstance(config, AdaptiveConfig):
        return adaptive_path(task, config, rng, stop_level=stop_level, trace=trace)
    if isinstance(config, GlrConfig):
        return glr_path(task, config, rng, stop_level=stop_level, trace=trace)
    raise InvalidArgumentError(f"unknown detector config {type(config).__name__}")


def run_detector(task, config, threshold, horizon=None, seed=0, trace=False):
    """Drive a detector to its first passage over ``threshold`` or to the horizon."""
    horizon = task.horizon if horizon is None else horizon
    if horizon < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    if horizon < task.horizon:
        task = DetectionTask(task.family, task.stream.head(horizon), task.true_params, task.history, task.lam)
    rng = np.random.Generator(np.random.PCG64(seed))
    stat = getattr(config, "statistic", st.CUSUM)
    stop = st.crossing_level(stat, threshold) if math.isfinite(threshold) else None
    path = detector_path(task, config, rng, stop_level=stop, trace=trace)
    return result_from_path(path, threshold, horizon)


__all__ = [
    "AdaptiveConfig", "DetectionTask", "DetectorPath", "GlrConfig", "OracleConfig", "RunResult",
    "TRACE_COLUMNS", "TwrConfig", "TwrState", "adaptive_path", "detector_path", "fit_pre_change",
    "glr_path", "glr_split_scores", "init_state", "oracle_llr", "oracle_path", "oracle_step", "penalize",
    "result_from_path", "run_detector", "stop_level_for", "twr_loss_grads", "twr_losses", "twr_path",
    "twr_reset_for_next_change", "twr_sequential", "twr_step",
]
