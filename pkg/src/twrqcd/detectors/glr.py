"""Generalised likelihood ratio baseline with a single unknown split.

    S_n = max_k [ sup_{th1} sum_{k <= t < n} log f_th1
                + sup_{th0} sum_{t < k}      log f_th0
                - sup_{th}  sum_{t < n}      log f_th ]

over candidate splits ``k`` on a stride grid, floored at 0.  Segment suprema
are exact for the iid and linear-AR families (prefix sufficient statistics)
and approximated by warm-started minibatch SGD for the MLP family.  In the
SGD case each segment value is also lower-bounded by the whole-stream fit,
so every split term stays non-negative, as it is for exact suprema.
"""
import math
from dataclasses import dataclass

import numpy as np

from .. import statistics as st
from ..errors import InvalidArgumentError
from ..param_kernels import IID, LINEAR
from .._mlp import LOG_2PI
from ._fit import sgd_fit
from .base import DetectorPath


@dataclass(frozen=True)
class GlrConfig:
    stride: int = 5
    epochs: int = 20
    batch_size: int = 32
    step_size: float = 0.05
    refit_every: int = None
    clip: float = 10.0
    name: str = "glr"

    def __post_init__(self):
        if self.stride < 1:
            raise InvalidArgumentError("stride must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if self.refit_every is not None and self.refit_every < 1:
            raise InvalidArgumentError("refit_every must be >= 1")

    @property
    def statistic(self):
        # S_n is a log-likelihood ratio, compared with B like CuSum
        return st.CUSUM

    @property
    def refit_period(self):
        return self.stride if self.refit_every is None else self.refit_every


# ---------------------------------------------------------------------------
# exact segment suprema
# ---------------------------------------------------------------------------


class _IidSup:
    def __init__(self, family, stream):
        x = stream.obs
        self.d = x.shape[1]
        self.var = float(family.sigma) ** 2
        self.c1 = np.concatenate([np.zeros((1, self.d)), np.cumsum(x, axis=0)])
        self.c2 = np.concatenate([[0.0], np.cumsum(np.sum(x * x, axis=1))])

    def __call__(self, a, b):
        m = (b - a).astype(np.float64)
        sx = self.c1[b] - self.c1[a]
        sxx = self.c2[b] - self.c2[a]
        with np.errstate(invalid="ignore", divide="ignore"):
            rss = np.where(m > 0, sxx - np.sum(sx * sx, axis=1) / np.maximum(m, 1.0), 0.0)
        rss = np.maximum(rss, 0.0)
        return -0.5 * m * self.d * (LOG_2PI + math.log(self.var)) - 0.5 * rss / self.var


class _LinearSup:
    def __init__(self, family, stream):
        z = np.concatenate([stream.states, np.ones((len(stream), 1))], axis=1)
        y = stream.obs
        self.d = y.shape[1]
        self.var = float(family.sigma) ** 2
        q = z.shape[1]
        zero = lambda *s: np.zeros((1, *s))
        self.zz = np.concatenate([zero(q, q), np.cumsum(z[:, :, None] * z[:, None, :], axis=0)])
        self.zy = np.concatenate([zero(q, self.d), np.cumsum(z[:, :, None] * y[:, None, :], axis=0)])
        self.yy = np.concatenate([[0.0], np.cumsum(np.sum(y * y, axis=1))])

    def __call__(self, a, b):
        m = (b - a).astype(np.float64)
        zz = self.zz[b] - self.zz[a]
        zy = self.zy[b] - self.zy[a]
        coef = np.linalg.pinv(zz, hermitian=True) @ zy
        rss = self.yy[b] - self.yy[a] - np.einsum("kqd,kqd->k", zy, coef)
        rss = np.maximum(rss, 0.0)
        return -0.5 * m * self.d * (LOG_2PI + math.log(self.var)) - 0.5 * rss / self.var


def _exact_solver(family, stream):
    if family.kind == IID:
        return _IidSup(family, stream)
    if family.kind == LINEAR:
        return _LinearSup(family, stream)
    return None


def candidate_splits(n, stride):
    """Split points k with both segments [0, k) and [k, n) non-empty."""
    return np.arange(stride, n, stride, dtype=np.int64)


def glr_split_scores(task, n, stride=1):
    """(splits, split terms) at time n for families with exact segment suprema."""
    solver = _exact_solver(task.family, task.stream)
    if solver is None:
        raise InvalidArgumentError("exact split scores are only available for the iid and linear families")
    ks = candidate_splits(n, stride)
    if ks.size == 0:
        return ks, np.zeros(0)
    zeros = np.zeros_like(ks)
    ns = np.full_like(ks, n)
    whole = solver(np.array([0]), np.array([n]))[0]
    return ks, solver(ks, ns) + solver(zeros, ks) - whole


# ---------------------------------------------------------------------------
# path
# ---------------------------------------------------------------------------


def _exact_path(task, config, stop_level):
    solver = _exact_solver(task.family, task.stream)
    n_total = len(task.stream)
    scores = np.zeros(n_total)
    end = n_total
    for i in range(n_total):
        n = i + 1
        ks = candidate_splits(n, config.stride)
        if ks.size:
            whole = solver(np.array([0]), np.array([n]))[0]
            terms = solver(ks, np.full_like(ks, n)) + solver(np.zeros_like(ks), ks) - whole
            scores[i] = max(0.0, float(np.max(terms)))
        if stop_level is not None and scores[i] > stop_level:
            end = n
            break
    return scores[:end], end < n_total


def _sgd_path(task, config, rng, stop_level):
    fam = task.family
    S, X = task.stream.states, task.stream.obs
    n_total = len(task.stream)
    period = config.refit_period

    def fit(theta, a, b):
        return sgd_fit(fam, theta, S[a:b], X[a:b], config.epochs, config.batch_size, config.step_size, rng, config.clip)

    def seg_ll(theta, a, b):
        return fam.loglik(theta, S[a:b], X[a:b])

    theta_all = fam.check_theta(rng.standard_normal(fam.param_dim))
    ll_all = np.zeros(0)  # per-transition log-lik under theta_all, prefix [0, n)
    pre_val = {}  # k -> sup over [0, k)  (fixed once computed)
    pre_theta = {}
    post_theta = {}
    post_val = {}  # k -> running sum of log-lik over [k, n) at post_theta[k]
    scores = np.zeros(n_total)
    end = n_total
    last_k = None
    for i in range(n_total):
        n = i + 1
        refit = (n % period == 0) or n == 1
        if refit:
            theta_all = fit(theta_all, 0, n)
            ll_all = seg_ll(theta_all, 0, n)
        else:
            ll_all = np.concatenate([ll_all, seg_ll(theta_all, i, n)])
        for k in candidate_splits(n, config.stride):
            if k not in pre_theta:
                start = pre_theta[last_k] if last_k is not None else theta_all
                pre_theta[k] = fit(start, 0, k)
                pre_val[k] = float(np.sum(seg_ll(pre_theta[k], 0, k)))
                post_theta[k] = fit(theta_all, k, n)
                post_val[k] = float(np.sum(seg_ll(post_theta[k], k, n)))
                last_k = k
            elif refit:
                post_theta[k] = fit(post_theta[k], k, n)
                post_val[k] = float(np.sum(seg_ll(post_theta[k], k, n)))
            else:
                post_val[k] += float(seg_ll(post_theta[k], i, n)[0])
        if pre_val:
            cum = np.concatenate([[0.0], np.cumsum(ll_all)])
            whole = cum[n]
            best = 0.0
            for k in pre_val:
                v0 = max(pre_val[k], cum[k])
                v1 = max(post_val[k], whole - cum[k])
                best = max(best, v0 + v1 - whole)
            scores[i] = best
        if stop_level is not None and scores[i] > stop_level:
            end = n
            break
    return scores[:end], end < n_total


def glr_path(task, config=GlrConfig(), rng=None, stop_level=None, trace=False):
    if _exact_solver(task.family, task.stream) is not None:
        scores, truncated = _exact_path(task, config, stop_level)
    else:
        if rng is None:
            raise InvalidArgumentError("the SGD-based GLR needs a random generator")
        scores, truncated = _sgd_path(task, config, rng, stop_level)
    rows = None
    if trace:
        rows = [{"t": i + 1, "detector": config.name, "S": float(v), "L_raw": np.nan, "L_penalized": np.nan,
                 "kl_estimate": np.nan, "Delta": 0, "p0": 1.0, "D_bar": np.nan, "mu": np.nan, "s": np.nan,
                 "fired": False} for i, v in enumerate(scores)]
    nan = np.full(scores.shape, np.nan)
    return DetectorPath(config.name, config.statistic, scores, nan, nan, truncated=truncated, trace=rows)
