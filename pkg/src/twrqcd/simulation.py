"""Observation streams under the piecewise-stationary change model.

Indexing convention: observations are ``X_0 .. X_T``.  ``X_0`` is the end of
a burn-in run under the first parameter.  For ``t >= 1`` the observation
``X_t`` is drawn from ``f_{theta_k}(. | state_{t-1})`` where ``k`` is the
number of change points ``<= t``; so ``X_lambda`` is the first post-change
observation and a detector stopping at ``nu = lambda`` has zero delay.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; PCG64 is
a documented, platform-independent bit generator.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_BURN_IN = 200


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ChangeSpec:
    change_points: tuple
    params: tuple
    horizon: int
    x0: np.ndarray = None
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "params", tuple(np.asarray(p, dtype=np.float64) for p in self.params))
        if len(self.params) != len(cps) + 1:
            raise InvalidArgumentError("need exactly one more parameter vector than change points")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise InvalidArgumentError("change points must be strictly increasing")
        if cps and not (0 < cps[0] and cps[-1] < self.horizon):
            raise InvalidArgumentError("change points must lie strictly inside (0, horizon)")
        if self.horizon < 1 or self.burn_in < 0:
            raise InvalidArgumentError("horizon must be >= 1 and burn_in >= 0")

    @property
    def lam(self):
        """The single change point, or None for a no-change stream."""
        if len(self.change_points) > 1:
            raise InvalidArgumentError("lam is only defined for single-change specs")
        return self.change_points[0] if self.change_points else None

    def segment_of(self, t):
        return int(np.searchsorted(self.change_points, t, side="right"))

    @classmethod
    def single(cls, theta0, theta1, lam, horizon, **kw):
        return cls(change_points=(lam,), params=(theta0, theta1), horizon=horizon, **kw)

    @classmethod
    def no_change(cls, theta0, horizon, **kw):
        return cls(change_points=(), params=(theta0,), horizon=horizon, **kw)


@dataclass(frozen=True)
class Transitions:
    """Conditioning states and next observations, row k is transition X_k -> X_{k+1}."""

    states: np.ndarray
    obs: np.ndarray

    def __len__(self):
        return self.obs.shape[0]

    def head(self, n):
        return Transitions(self.states[:n], self.obs[:n])


@dataclass(frozen=True)
class Trajectory:
    observations: np.ndarray
    spec: ChangeSpec
    seed: int
    segments: np.ndarray
    history: np.ndarray = field(default=None)

    @property
    def horizon(self):
        return self.spec.horizon

    def transitions(self, order=1):
        """States and targets for the ``horizon`` transitions of the stream."""
        d = self.observations.shape[1]
        hist = self.history if self.history is not None else np.empty((0, d))
        if hist.shape[0] != order - 1:
            raise InvalidArgumentError(f"trajectory history holds {hist.shape[0]} rows, order {order} needs {order - 1}")
        full = np.concatenate([hist, self.observations], axis=0)
        n = self.observations.shape[0] - 1
        if order == 1:
            states = self.observations[:-1]
        else:
            states = np.stack([full[k : k + n] for k in range(order)], axis=1).reshape(n, order * d)
        return Transitions(np.ascontiguousarray(states), np.ascontiguousarray(self.observations[1:]))

    def to_csv(self, path):
        d = self.observations.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *[f"x_{i + 1}" for i in range(d)], "segment_index"])
            for t, (row, seg) in enumerate(zip(self.observations, self.segments)):
                w.writerow([t, *(repr(float(v)) for v in row), int(seg)])


def generate(family, spec, seed):
    """Simulate ``X_0 .. X_T`` for ``spec`` under ``family``."""
    for p in spec.params:
        family.check_theta(p)
    rng = make_rng(seed)
    x0 = np.zeros(family.obs_dim) if spec.x0 is None else np.asarray(spec.x0, dtype=np.float64)
    state = family.stationary_warmup(spec.params[0], x0, spec.burn_in, rng)
    d = family.obs_dim
    obs = np.empty((spec.horizon + 1, d))
    segments = np.zeros(spec.horizon + 1, dtype=np.int64)
    obs[0] = state[-d:]
    history = state[:-d].reshape(family.order - 1, d).copy()
    for t in range(1, spec.horizon + 1):
        k = spec.segment_of(t)
        x = family.sample(spec.params[k], state, rng)
        obs[t] = x
        segments[t] = k
        state = family.push(state, x)
    return Trajectory(observations=obs, spec=spec, seed=seed, segments=segments, history=history)


def sample_next_at_kl(family, theta, target_kl, tol, rng, s_max=50.0, retries=20, n_base=512,
                      burn_in=DEFAULT_BURN_IN):
    """Draw theta' = theta + s u with KL rate D(f_theta || f_theta') within ``tol`` (relative) of ``target_kl``.

    u is a random unit direction and s is found by bisection.  The KL rate is
    averaged over ``n_base`` stationary states of the theta chain.
    """
    if target_kl <= 0 or tol <= 0:
        raise InvalidArgumentError("target_kl and tol must be > 0")
    theta = family.check_theta(theta)
    lo_band, hi_band = target_kl * (1 - tol), target_kl * (1 + tol)
    p = family.param_dim
    base = family.stationary_states(theta, n_base, rng, burn_in=burn_in)
    for _ in range(retries):
        u = rng.standard_normal(p)
        u /= np.linalg.norm(u)

        def kl_at(s):
            return family.kl_rate_estimate(theta, theta + s * u, base)

        if kl_at(s_max) < lo_band:
            continue
        lo, hi = 0.0, float(s_max)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            k = kl_at(mid)
            if lo_band <= k <= hi_band:
                return theta + mid * u
            if k < lo_band:
                lo = mid
            else:
                hi = mid
    raise InvalidArgumentError(f"could not reach KL {target_kl} within s_max={s_max} after {retries} directions")


def sample_pair_at_kl(family, target_kl, tol, rng, **kw):
    """Draw theta0 ~ N(0, I) and a theta1 at KL rate ``target_kl`` from it."""
    if target_kl <= 0 or tol <= 0:
        raise InvalidArgumentError("target_kl and tol must be > 0")
    theta0 = rng.standard_normal(family.param_dim)
    return theta0, sample_next_at_kl(family, theta0, target_kl, tol, rng, **kw)


def sample_change_point(prior, rng):
    """Geometric change point on {1, 2, ...} with P(lambda > n) = (1 - rho)^n."""
    rho = prior.rho
    if not 0.0 < rho < 1.0:
        raise InvalidArgumentError("geometric change point needs 0 < rho < 1")
    return int(rng.geometric(rho))
