"""Shiryaev, Shiryaev-Roberts and CuSum detection statistics.

Two representations live here:

* ``StatisticState`` plus the ``*_update`` functions: an O(1) per-step value
  type used by the online detectors.
* ``score_path``: the whole statistic path for a log-ratio array at once,
  used by the oracle and by threshold sweeps (numba kernel, numpy fallback).

CuSum is carried in the log domain.  Shiryaev-type statistics are carried
in the ratio domain and switch to storing ``log S`` once ``S`` exceeds
``LOG_SWITCH`` so that threshold sweeps up to 1e50 and beyond never overflow.
Paths are always returned on the *score* scale: ``S`` for CuSum and
``log S`` for the ratio-domain statistics; compare them with
``crossing_level(kind, B)``.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, select
from .errors import InvalidArgumentError, InvalidInputError, NotDerivableError

SHIRYAEV = "shiryaev"
SHIRYAEV_ROBERTS = "shiryaev-roberts"
CUSUM = "cusum"
KINDS = (SHIRYAEV, SHIRYAEV_ROBERTS, CUSUM)

LOG_SWITCH = 1e100
_LOG_LOG_SWITCH = math.log(LOG_SWITCH)


@dataclass(frozen=True)
class StatisticState:
    kind: str
    value: float = 0.0
    rho: float = 0.0
    log_scale: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown statistic kind {self.kind!r}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1)")
        if self.kind != SHIRYAEV and self.rho != 0.0:
            raise InvalidArgumentError("rho is only meaningful for the shiryaev statistic")

    @property
    def score(self):
        """Value on the comparison scale: S for CuSum, log S otherwise."""
        if self.kind == CUSUM or self.log_scale:
            return self.value
        return math.log(self.value) if self.value > 0 else -math.inf

    def exceeds(self, threshold):
        return self.score > crossing_level(self.kind, threshold)


def new_state(kind, rho=0.0):
    return StatisticState(kind=kind, rho=rho if kind == SHIRYAEV else 0.0)


def crossing_level(kind, threshold):
    """Map a cutting threshold B to the score scale used by paths and states."""
    if kind == CUSUM:
        return float(threshold)
    if threshold <= 0:
        return -math.inf
    return math.log(threshold)


def _advance(state, value, log_scale):
    # kind and rho are unchanged, so skip re-validation on the hot path
    out = object.__new__(StatisticState)
    object.__setattr__(out, "kind", state.kind)
    object.__setattr__(out, "value", value)
    object.__setattr__(out, "rho", state.rho)
    object.__setattr__(out, "log_scale", log_scale)
    return out


def _ratio_step(state, keep, log_r, ratio):
    # S' = (1 + S) R / keep, keep = 1 - rho
    if not state.log_scale:
        nxt = (1.0 + state.value) / keep * ratio if ratio is not None else math.inf
        if math.isfinite(nxt) and nxt <= LOG_SWITCH:
            return _advance(state, nxt, False)
        log_prev = math.log1p(state.value)
    else:
        log_prev = np.logaddexp(0.0, state.value)
    log_next = float(log_prev - math.log(keep) + log_r)
    if log_next <= _LOG_LOG_SWITCH:
        return _advance(state, math.exp(log_next), False)
    return _advance(state, log_next, True)


def _check_ratio(r):
    if not (math.isfinite(r) and r > 0):
        raise InvalidInputError(f"likelihood ratio must be finite and > 0, got {r}")


def shiryaev_update(state, ratio):
    """S <- (1 + S) R / (1 - rho)."""
    if state.kind != SHIRYAEV:
        raise InvalidArgumentError("shiryaev_update needs a shiryaev state")
    _check_ratio(ratio)
    return _ratio_step(state, 1.0 - state.rho, math.log(ratio), ratio)


def shiryaev_roberts_update(state, ratio):
    """S <- (1 + S) R."""
    if state.kind != SHIRYAEV_ROBERTS:
        raise InvalidArgumentError("shiryaev_roberts_update needs a shiryaev-roberts state")
    _check_ratio(ratio)
    return _ratio_step(state, 1.0, math.log(ratio), ratio)


def cusum_update(state, log_ratio):
    """S <- max(0, S + log R)."""
    if state.kind != CUSUM:
        raise InvalidArgumentError("cusum_update needs a cusum state")
    if not math.isfinite(log_ratio):
        raise InvalidInputError(f"log-ratio must be finite, got {log_ratio}")
    return _advance(state, max(0.0, state.value + log_ratio), False)


def update_log(state, log_ratio):
    """Advance any statistic by one step given the log likelihood ratio."""
    if not math.isfinite(log_ratio):
        raise InvalidInputError(f"log-ratio must be finite, got {log_ratio}")
    if state.kind == CUSUM:
        return cusum_update(state, log_ratio)
    keep = 1.0 - state.rho if state.kind == SHIRYAEV else 1.0
    ratio = math.exp(log_ratio) if log_ratio < 700.0 else None
    return _ratio_step(state, keep, log_ratio, ratio)


def reset(state):
    return _advance(state, 0.0, False)


# ---------------------------------------------------------------------------
# batch oracles (tests only)
# ---------------------------------------------------------------------------


def shiryaev_batch(ratios, rho, log=False):
    """Direct evaluation of the geometric-prior Shiryaev sum.

    S_n = (1 - rho)^-n  sum_{k=1..n} (1 - rho)^(k-1) prod_{t=k..n} R_t

    Every term is formed in the log domain from suffix sums and combined with
    ``math.fsum`` after factoring out the largest exponent, so no intermediate
    overflows.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise InvalidArgumentError("ratios must be a non-empty 1-D sequence")
    if r.size > 200:
        raise InvalidArgumentError("shiryaev_batch is a test oracle capped at n = 200")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise InvalidInputError("ratios must be finite and > 0")
    n = r.size
    log_keep = math.log1p(-rho)
    suffix = np.cumsum(np.log(r)[::-1])[::-1]  # suffix[k-1] = sum_{t=k..n} log R_t
    terms = np.arange(n) * log_keep + suffix - n * log_keep
    top = float(terms.max())
    log_s = top + math.log(math.fsum(np.exp(terms - top)))
    return log_s if log else math.exp(log_s)


def cusum_batch(log_ratios):
    """max(0, max_k sum_{t=k..n} log R_t), evaluated over every start k at once."""
    lr = np.asarray(log_ratios, dtype=np.float64)
    if lr.ndim != 1:
        raise InvalidArgumentError("log_ratios must be 1-D")
    if lr.size > 10_000:
        raise InvalidArgumentError("cusum_batch is capped at n = 10^4")
    if lr.size == 0:
        return 0.0
    suffix = np.cumsum(lr[::-1])[::-1]
    return max(0.0, float(suffix.max()))


def threshold_from_alpha(kind, alpha):
    """B_alpha = (1 - alpha) / alpha for the Shiryaev statistic."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    if kind != SHIRYAEV:
        raise NotDerivableError(f"no closed-form threshold for the {kind} statistic; sweep B directly")
    return (1.0 - alpha) / alpha


# ---------------------------------------------------------------------------
# whole-path kernels
# ---------------------------------------------------------------------------


@njit
def _nb_cusum_path(log_r):
    out = np.empty(log_r.shape[0])
    s = 0.0
    for i in range(log_r.shape[0]):
        s = s + log_r[i]
        if s < 0.0:
            s = 0.0
        out[i] = s
    return out


def _np_cusum_path(log_r):
    c = np.cumsum(log_r)
    floor = np.minimum.accumulate(np.minimum(c, 0.0))
    return np.maximum(c - floor, 0.0)


@njit
def _nb_ratio_log_path(log_r, growth):
    out = np.empty(log_r.shape[0])
    ls = -np.inf
    for i in range(log_r.shape[0]):
        if ls > 0.0:
            base = ls + math.log1p(math.exp(-ls))
        else:
            base = math.log1p(math.exp(ls))
        ls = base + growth + log_r[i]
        out[i] = ls
    return out


def _np_ratio_log_path(log_r, growth):
    # log S_n = C_n + n g + logcumsumexp_k(-C_{k-1} - (k-1) g)
    n = log_r.shape[0]
    c = np.concatenate([[0.0], np.cumsum(log_r)])
    idx = np.arange(n + 1, dtype=np.float64)
    inner = np.logaddexp.accumulate(-c[:-1] - idx[:-1] * growth)
    return c[1:] + idx[1:] * growth + inner


cusum_path = select(_nb_cusum_path, _np_cusum_path)
ratio_log_path = select(_nb_ratio_log_path, _np_ratio_log_path)


def score_path(kind, log_ratios, rho=0.0):
    """Statistic path on the score scale for a whole log-ratio stream."""
    lr = np.ascontiguousarray(log_ratios, dtype=np.float64)
    if lr.size and not np.all(np.isfinite(lr)):
        raise InvalidInputError("log-ratios must be finite")
    if kind == CUSUM:
        return cusum_path(lr)
    if kind == SHIRYAEV:
        return ratio_log_path(lr, -math.log1p(-rho))
    if kind == SHIRYAEV_ROBERTS:
        return ratio_log_path(lr, 0.0)
    raise InvalidArgumentError(f"unknown statistic kind {kind!r}")


def first_passage(path, level, start=0):
    """Index of the first entry of ``path[start:]`` strictly above ``level``, or None."""
    hits = np.flatnonzero(np.asarray(path)[start:] > level)
    return int(hits[0]) + start if hits.size else None
