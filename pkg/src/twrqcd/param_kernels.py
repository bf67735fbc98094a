"""Parametric Markov transition kernels f_theta(x' | state) with diagonal Gaussian laws.

Three families are provided:

``iid-gaussian-mean``
    mean = theta, std = sigma; the conditioning state is ignored.
``linear-gaussian-ar``
    mean = A(theta) @ state + b(theta), std = sigma, where ``A`` is the first
    ``obs_dim * state_dim`` entries of theta reshaped row-major and scaled by
    ``ar_scale``, and ``b`` is the remainder.
``mlp-gaussian``
    mean and pre-softplus std are two fixed random tanh networks applied to
    ``concat(theta, state)``; std = varsigma_min + softplus(net output).

The conditioning state is the concatenation of the last ``order``
observations (oldest first), so ``order=1`` is an ordinary Markov chain.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _mlp
from .errors import InvalidArgumentError

IID = "iid-gaussian-mean"
LINEAR = "linear-gaussian-ar"
MLP = "mlp-gaussian"
KINDS = (IID, LINEAR, MLP)

VARSIGMA_MIN = 1e-3

ParamVec = np.ndarray


@dataclass(frozen=True)
class ConditionalGaussian:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class KernelFamily:
    kind: str
    obs_dim: int
    param_dim: int
    seed: int = 0
    widths: tuple = (16, 16)
    sigma: float = 1.0
    varsigma_min: float = VARSIGMA_MIN
    order: int = 1
    ar_scale: float = 0.5
    _mean_net: object = field(default=None, init=False, repr=False, compare=False)
    _std_net: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown family kind {self.kind!r}")
        if self.obs_dim < 1 or self.param_dim < 1 or self.order < 1:
            raise InvalidArgumentError("obs_dim, param_dim and order must be positive")
        if self.varsigma_min <= 0:
            raise InvalidArgumentError("varsigma_min must be > 0")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.kind == IID:
            if self.param_dim != self.obs_dim:
                raise InvalidArgumentError("iid-gaussian-mean needs param_dim == obs_dim")
            if self.sigma <= 0:
                raise InvalidArgumentError("sigma must be > 0")
        elif self.kind == LINEAR:
            expected = self.obs_dim * self.state_dim + self.obs_dim
            if self.param_dim != expected:
                raise InvalidArgumentError(
                    f"linear-gaussian-ar needs param_dim == {expected} for this obs_dim/order"
                )
            if self.sigma <= 0:
                raise InvalidArgumentError("sigma must be > 0")
        else:
            if not self.widths or min(self.widths) < 1:
                raise InvalidArgumentError("mlp-gaussian needs at least one positive hidden width")
            rng = np.random.default_rng(self.seed)
            sizes = [self.param_dim + self.state_dim, *self.widths, self.obs_dim]
            object.__setattr__(self, "_mean_net", _mlp.FixedNet(sizes, rng))
            object.__setattr__(self, "_std_net", _mlp.FixedNet(sizes, rng))

    @property
    def state_dim(self):
        return self.order * self.obs_dim

    # -- validation helpers -------------------------------------------------

    def check_theta(self, theta):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (self.param_dim,):
            raise InvalidArgumentError(f"theta must have shape ({self.param_dim},), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidArgumentError("theta has non-finite entries")
        return theta

    def _check_states(self, states):
        states = np.ascontiguousarray(states, dtype=np.float64)
        if states.ndim == 1:
            states = states.reshape(1, -1)
        if states.ndim != 2 or states.shape[1] != self.state_dim:
            raise InvalidArgumentError(f"states must have {self.state_dim} columns, got shape {states.shape}")
        return states

    def _check_obs(self, xs, n):
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs.reshape(1, -1)
        if xs.shape != (n, self.obs_dim):
            raise InvalidArgumentError(f"observations must have shape ({n}, {self.obs_dim}), got {xs.shape}")
        return xs

    # -- batched core -------------------------------------------------------

    def _linear_parts(self, theta):
        k = self.obs_dim * self.state_dim
        a = self.ar_scale * theta[:k].reshape(self.obs_dim, self.state_dim)
        return a, theta[k:]

    def mean_std(self, theta, states):
        """Conditional means and stds, each of shape (n, obs_dim)."""
        theta = self.check_theta(theta)
        states = self._check_states(states)
        n = states.shape[0]
        if self.kind == IID:
            return np.tile(theta, (n, 1)), np.full((n, self.obs_dim), float(self.sigma))
        if self.kind == LINEAR:
            a, b = self._linear_parts(theta)
            return states @ a.T + b, np.full((n, self.obs_dim), float(self.sigma))
        return _mlp.mean_std(self._mean_net, self._std_net, theta, states, self.varsigma_min)

    def loglik(self, theta, states, xs):
        """Per-transition log f_theta(x_k | state_k), shape (n,)."""
        return self.loglik_grad(theta, states, xs, want_grad=False)[0]

    def loglik_grad(self, theta, states, xs, want_grad=True):
        """Per-transition log-densities and their theta-gradients, shapes (n,) and (n, p)."""
        theta = self.check_theta(theta)
        states = self._check_states(states)
        xs = self._check_obs(xs, states.shape[0])
        if self.kind == MLP:
            return _mlp.loglik_grad(
                self._mean_net, self._std_net, theta, states, xs, self.varsigma_min, want_grad
            )
        sigma = float(self.sigma)
        if self.kind == IID:
            resid = xs - theta
        else:
            a, b = self._linear_parts(theta)
            resid = xs - (states @ a.T + b)
        ll = np.sum(-0.5 * _mlp.LOG_2PI - math.log(sigma) - 0.5 * (resid / sigma) ** 2, axis=1)
        if not want_grad:
            return ll, np.zeros((0, self.param_dim))
        g = resid / sigma**2
        if self.kind == IID:
            return ll, g
        n = states.shape[0]
        ga = self.ar_scale * (g[:, :, None] * states[:, None, :]).reshape(n, -1)
        return ll, np.concatenate([ga, g], axis=1)

    def kl_batch(self, theta_a, theta_b, states):
        """KL(f_a(.|s) || f_b(.|s)) for every row s of ``states``."""
        ma, sa = self.mean_std(theta_a, states)
        mb, sb = self.mean_std(theta_b, states)
        return np.sum(np.log(sb / sa) + (sa**2 + (ma - mb) ** 2) / (2.0 * sb**2) - 0.5, axis=1)

    # -- single-point API ---------------------------------------------------

    def conditional(self, theta, state):
        mean, std = self.mean_std(theta, self._single_state(state))
        return ConditionalGaussian(mean=mean[0], std=std[0])

    def log_density(self, theta, state, x):
        return float(self.loglik(theta, self._single_state(state), x)[0])

    def grad_log_density(self, theta, state, x):
        return self.loglik_grad(theta, self._single_state(state), x)[1][0]

    def sample(self, theta, state, rng):
        mean, std = self.mean_std(theta, self._single_state(state))
        return mean[0] + std[0] * rng.standard_normal(self.obs_dim)

    def kl_conditional(self, theta_a, theta_b, state):
        return float(self.kl_batch(theta_a, theta_b, self._single_state(state))[0])

    def kl_rate_estimate(self, theta_a, theta_b, base_states):
        """Average conditional KL over a set of base states (empirical stationary law)."""
        base_states = np.asarray(base_states, dtype=np.float64)
        if base_states.size == 0:
            raise InvalidArgumentError("kl_rate_estimate needs at least one base state")
        return float(np.mean(self.kl_batch(theta_a, theta_b, base_states)))

    def _single_state(self, state):
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.state_dim,):
            raise InvalidArgumentError(f"state must have shape ({self.state_dim},), got {state.shape}")
        return state.reshape(1, -1)

    # -- chain helpers ------------------------------------------------------

    def initial_state(self, x0):
        """Conditioning state built by repeating one observation ``order`` times."""
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape == (self.state_dim,):
            return x0.copy()
        if x0.shape != (self.obs_dim,):
            raise InvalidArgumentError(f"x0 must have shape ({self.obs_dim},) or ({self.state_dim},)")
        return np.tile(x0, self.order)

    def push(self, state, x):
        if self.order == 1:
            return np.array(x, dtype=np.float64)
        return np.concatenate([state[self.obs_dim :], x])

    def stationary_warmup(self, theta, x0, burn_in, rng):
        """Run the chain ``burn_in`` steps from ``x0`` and return the final conditioning state."""
        if burn_in < 0:
            raise InvalidArgumentError("burn_in must be >= 0")
        theta = self.check_theta(theta)
        state = self.initial_state(x0)
        for _ in range(int(burn_in)):
            state = self.push(state, self.sample(theta, state, rng))
        return state

    def stationary_states(self, theta, n, rng, burn_in=200, x0=None):
        """``n`` consecutive chain states after a burn-in, shape (n, state_dim)."""
        x0 = np.zeros(self.obs_dim) if x0 is None else x0
        state = self.stationary_warmup(theta, x0, burn_in, rng)
        out = np.empty((n, self.state_dim))
        for i in range(n):
            out[i] = state
            state = self.push(state, self.sample(theta, state, rng))
        return out

    # -- serialisation ------------------------------------------------------

    def to_dict(self):
        return {
            "kind": self.kind,
            "obs_dim": self.obs_dim,
            "param_dim": self.param_dim,
            "seed": self.seed,
            "widths": list(self.widths),
            "sigma": self.sigma,
            "varsigma_min": self.varsigma_min,
            "order": self.order,
            "ar_scale": self.ar_scale,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"kind", "obs_dim", "param_dim", "seed", "widths", "sigma", "varsigma_min", "order", "ar_scale"}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown family fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "widths" in kwargs:
            kwargs["widths"] = tuple(kwargs["widths"])
        return cls(**kwargs)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def with_seed(self, seed):
        d = self.to_dict()
        d["seed"] = int(seed)
        return KernelFamily.from_dict(d)


def iid_gaussian(dim=1, sigma=1.0):
    return KernelFamily(kind=IID, obs_dim=dim, param_dim=dim, sigma=sigma)


def linear_gaussian_ar(dim=1, sigma=1.0, ar_scale=0.5, order=1):
    return KernelFamily(
        kind=LINEAR, obs_dim=dim, param_dim=dim * dim * order + dim, sigma=sigma, ar_scale=ar_scale, order=order
    )


def mlp_gaussian(dim=4, param_dim=None, widths=(16, 16), seed=0, varsigma_min=VARSIGMA_MIN, order=1):
    return KernelFamily(
        kind=MLP,
        obs_dim=dim,
        param_dim=dim if param_dim is None else param_dim,
        widths=widths,
        seed=seed,
        varsigma_min=varsigma_min,
        order=order,
    )
