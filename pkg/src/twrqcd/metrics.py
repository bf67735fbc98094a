"""Detection-performance estimators over collections of trial records.

Censoring rule: a run that never crosses the threshold before the horizon
has ``nu = None``.  It counts as "no alarm" for PFA, is excluded from the
delay means (and reported in ``n_censored``), and contributes the horizon
to the mean stopping time behind FAR, which then becomes an upper bound.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgumentError, UndefinedResultError

CHANGE = "change"
NO_CHANGE = "no-change"


@dataclass(frozen=True)
class TrialRecord:
    lam: int
    nu: int
    threshold: float
    detector: str
    seed: int
    oracle_nu: int = None
    horizon: int = None
    stream: str = CHANGE
    trial: int = None

    def __post_init__(self):
        if self.nu is not None and self.nu < 1:
            raise InvalidArgumentError("a fired run needs nu >= 1")

    @property
    def fired(self):
        return self.nu is not None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_used: int
    n_censored: int = 0
    is_bound: bool = False

    def __float__(self):
        return float(self.value)


def _sem(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def _require(records):
    records = list(records)
    if not records:
        raise UndefinedResultError("no records to estimate from")
    return records


def estimate_pfa(records):
    """P(nu < lambda); censored runs count as no alarm, no-change runs never count as early."""
    records = _require(records)
    early = np.array([r.fired and r.lam is not None and r.nu < r.lam for r in records], dtype=np.float64)
    p = float(early.mean())
    se = math.sqrt(p * (1 - p) / early.size) if early.size > 1 else math.nan
    return Estimate(p, se, early.size, sum(not r.fired for r in records))


def delays(records):
    """nu - lambda over fired runs with nu >= lambda."""
    return [r.nu - r.lam for r in records if r.fired and r.lam is not None and r.nu >= r.lam]


def estimate_add(records):
    """Mean of nu - lambda over fired runs with nu >= lambda; censored runs excluded and counted."""
    records = _require(records)
    d = delays(records)
    n_cens = sum(not r.fired for r in records)
    if not d:
        raise UndefinedResultError("no fired run with nu >= lambda")
    return Estimate(float(np.mean(d)), _sem(d), len(d), n_cens)


def estimate_far(records_no_change):
    """1 / mean stopping time on change-free streams.

    Censored runs contribute their horizon, so with any censoring the mean
    time is a lower bound and the returned rate an upper bound.
    """
    records = _require(records_no_change)
    times = []
    n_cens = 0
    for r in records:
        if r.fired:
            times.append(r.nu)
        else:
            if r.horizon is None:
                raise InvalidArgumentError("censored no-change records need a horizon")
            times.append(r.horizon)
            n_cens += 1
    mean_t = float(np.mean(times))
    se_t = _sem(times)
    return Estimate(1.0 / mean_t, se_t / mean_t**2, len(times), n_cens, is_bound=n_cens > 0)


def estimate_cadd(records):
    """Largest group-conditional mean delay over the distinct change points."""
    records = _require(records)
    groups = {}
    for r in records:
        if r.lam is not None:
            groups.setdefault(r.lam, []).append(r)
    if len(groups) < 2:
        raise UndefinedResultError("CADD needs at least two distinct change points")
    best = None
    for lam in sorted(groups):
        est = estimate_add(groups[lam])
        if best is None or est.value > best.value:
            best = est
    return best


def regret(records):
    """Mean (nu_a - nu_oracle) over runs with nu_a >= nu_oracle >= lambda."""
    records = _require(records)
    extra = [
        r.nu - r.oracle_nu
        for r in records
        if r.fired and r.oracle_nu is not None and r.lam is not None and r.nu >= r.oracle_nu >= r.lam
    ]
    if not extra:
        raise UndefinedResultError("no run with nu_a >= nu_oracle >= lambda")
    return Estimate(float(np.mean(extra)), _sem(extra), len(extra), sum(not r.fired for r in records))


def safe(estimator, records):
    """Estimator value or NaN-filled Estimate when it is undefined."""
    try:
        return estimator(records)
    except UndefinedResultError:
        return Estimate(math.nan, math.nan, 0)


AGGREGATE_COLUMNS = (
    "detector", "B", "n_trials", "n_censored", "pfa", "add", "far", "cadd", "regret",
    "pfa_stderr", "add_stderr", "far_stderr", "cadd_stderr", "regret_stderr", "far_is_bound",
)


def aggregate(records, detector, threshold):
    """One aggregate row for a (detector, threshold) cell."""
    cell = [r for r in records if r.detector == detector and r.threshold == threshold]
    chg = [r for r in cell if r.stream == CHANGE]
    nc = [r for r in cell if r.stream == NO_CHANGE]
    pfa = safe(estimate_pfa, chg) if chg else Estimate(math.nan, math.nan, 0)
    add = safe(estimate_add, chg) if chg else Estimate(math.nan, math.nan, 0)
    far = safe(estimate_far, nc) if nc else Estimate(math.nan, math.nan, 0)
    cadd = safe(estimate_cadd, chg) if chg else Estimate(math.nan, math.nan, 0)
    reg = safe(regret, chg) if chg else Estimate(math.nan, math.nan, 0)
    return {
        "detector": detector, "B": threshold, "n_trials": len(chg), "n_censored": sum(not r.fired for r in chg),
        "pfa": pfa.value, "add": add.value, "far": far.value, "cadd": cadd.value, "regret": reg.value,
        "pfa_stderr": pfa.stderr, "add_stderr": add.stderr, "far_stderr": far.stderr,
        "cadd_stderr": cadd.stderr, "regret_stderr": reg.stderr, "far_is_bound": far.is_bound,
    }
