"""Logistic approximation of the change-point posterior given a detection at time n.

The asymptotic delay law of the Shiryaev procedure, ``|log alpha| / (kl + d)``,
fixes the first moment; matching it with a Logistic(mu, s) law gives

    mu = n - |log alpha| / (kl + d)
    s  = sqrt(3) |log alpha| / (pi (kl + d))

Observations before ``mu`` are mostly pre-change, later ones post-change.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError

KL_FLOOR = 1e-4
DEFAULT_RHO = 0.005


@dataclass(frozen=True)
class LogisticPosterior:
    mu: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidArgumentError(f"logistic scale must be > 0, got {self.s}")

    @property
    def mean(self):
        return self.mu

    def cdf(self, t):
        return expit((np.asarray(t, dtype=np.float64) - self.mu) / self.s)

    def sf(self, t):
        return expit((self.mu - np.asarray(t, dtype=np.float64)) / self.s)


@dataclass(frozen=True)
class PriorSpec:
    """Change-point prior summary.

    ``d`` is the prior's exponential tail rate; for a geometric prior it is
    ``-log(1 - rho)``.  ``B_alpha`` is the cutting threshold.
    """

    rho: float = DEFAULT_RHO
    d: float = None
    alpha: float = 0.01
    B_alpha: float = None

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.d is None:
            object.__setattr__(self, "d", geometric_d(self.rho))
        if self.d < 0:
            raise InvalidArgumentError("d must be >= 0")
        if self.B_alpha is None:
            object.__setattr__(self, "B_alpha", (1.0 - self.alpha) / self.alpha)
        if not self.B_alpha > 0:
            raise InvalidArgumentError("B_alpha must be > 0")

    @classmethod
    def minmax(cls, alpha=0.01, B_alpha=None):
        """Prior-free setting used with CuSum: d = 0."""
        return cls(rho=0.0, d=0.0, alpha=alpha, B_alpha=B_alpha)


def geometric_d(rho):
    return -math.log1p(-rho)


def build_posterior(n, alpha, kl_estimate, d, kl_floor=KL_FLOOR):
    """Logistic posterior of the change point given a detection at time ``n``.

    ``kl_estimate + d`` is floored at ``kl_floor`` so that the cold-start
    regime (both parameter estimates equal, kl ~ 0) stays well defined.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    rate = max(float(kl_estimate) + float(d), kl_floor)
    log_alpha = abs(math.log(alpha))
    delay = log_alpha / rate
    s = math.sqrt(3.0) * log_alpha / (math.pi * rate)
    # alpha -> 1 collapses the law onto n; keep s representable.
    return LogisticPosterior(mu=float(n) - delay, s=max(s, np.finfo(float).tiny))


def pre_weight(posterior, t, shift=0):
    """P(lambda > t - shift): weight of time ``t`` in the pre-change objective."""
    return posterior.sf(np.asarray(t, dtype=np.float64) - shift)


def post_weight(posterior, t):
    """P(lambda < t): weight of time ``t`` in the post-change objective."""
    return posterior.cdf(t)
