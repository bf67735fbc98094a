"""Shared detector types: the detection task, score paths and run results.

Every detector produces a *score path*: one statistic value per processed
transition, on the scale returned by ``statistics.crossing_level``.  Index
``i`` of the path is the statistic after transition ``X_i -> X_{i+1}``, so
the alarm time of a first passage at index ``i`` is ``nu = i + 1``.

Detector parameters never depend on the cutting threshold, so one path
serves a whole threshold grid and stopping times are monotone in B by
construction.  Paths may be truncated once they exceed ``stop_level``;
any threshold at or below that level is still decided exactly.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .. import statistics as st
from ..errors import InvalidArgumentError

TRACE_COLUMNS = ("t", "detector", "S", "L_raw", "L_penalized", "kl_estimate", "Delta", "p0", "D_bar", "mu", "s", "fired")


@dataclass(frozen=True)
class DetectionTask:
    """One stream to monitor plus whatever side information detectors may use.

    ``true_params`` feeds the oracle, ``history`` (pre-change transitions
    from an independent run) feeds the adaptive baseline.
    """

    family: object
    stream: object
    true_params: tuple = None
    history: object = None
    lam: int = None

    @property
    def horizon(self):
        return len(self.stream)


@dataclass
class DetectorPath:
    name: str
    statistic: str
    scores: np.ndarray
    llr_raw: np.ndarray
    llr_used: np.ndarray
    truncated: bool = False
    trace: list = None
    diagnostics: dict = field(default_factory=dict)

    def stopping_time(self, threshold):
        """Alarm time nu for cutting threshold B, or None when censored."""
        level = st.crossing_level(self.statistic, threshold)
        i = st.first_passage(self.scores, level)
        if i is None and self.truncated:
            raise InvalidArgumentError("threshold lies above the level the path was truncated at")
        return None if i is None else i + 1


@dataclass(frozen=True)
class RunResult:
    stopping_time: int
    fired: bool
    horizon: int
    trace: list = None

    def __post_init__(self):
        if self.fired != (self.stopping_time is not None and self.stopping_time <= self.horizon):
            raise InvalidArgumentError("fired must hold exactly when the stopping time is within the horizon")


def result_from_path(path, threshold, horizon=None):
    horizon = len(path.scores) if horizon is None else horizon
    nu = path.stopping_time(threshold) if math.isfinite(threshold) else None
    if nu is not None and nu > horizon:
        nu = None
    trace = None
    if path.trace is not None:
        cut = len(path.trace) if nu is None else nu
        trace = [dict(row, fired=(row["t"] == nu)) for row in path.trace[:cut]]
    return RunResult(stopping_time=nu, fired=nu is not None, horizon=horizon, trace=trace)


def stop_level_for(statistic, thresholds):
    """Largest crossing level over a threshold grid (None for an unbounded grid)."""
    top = max(thresholds)
    return None if not math.isfinite(top) else st.crossing_level(statistic, top)


def clip_norm(g, max_norm):
    n = float(np.sqrt(np.dot(g, g)))
    if n > max_norm:
        return g * (max_norm / n)
    return g


def sample_batch(rng, t, batch_size):
    """Uniform indices from [0, t) without replacement, min(batch_size, t) of them."""
    k = min(batch_size, t)
    if k == t:
        return np.arange(t)
    return np.sort(rng.choice(t, size=k, replace=False))


class GrowBuffer:
    """Append-only row buffer with amortised O(1) appends."""

    def __init__(self, width, capacity=64):
        self._data = np.empty((capacity, width))
        self.n = 0

    def append(self, row):
        if self.n == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self._data.shape[1]))
            grown[: self.n] = self._data[: self.n]
            self._data = grown
        self._data[self.n] = row
        self.n += 1

    def clear(self):
        self.n = 0

    @property
    def view(self):
        return self._data[: self.n]

    def __len__(self):
        return self.n
