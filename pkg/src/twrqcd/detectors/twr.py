"""Temporal weight redistribution: online estimation of both parameters.

Each past transition is weighted by the approximate posterior probability
that it was generated before (resp. after) the change, given a detection at
the current time.  A few SGD epochs per observation pull ``theta0`` towards
the pre-change law and ``theta1`` towards the post-change law, and their
log-ratio drives a detection statistic.

Two corrections keep the estimates apart:

* penalisation: ``L_hat = max(L - c / KL, L_min)`` suppresses the positive
  bias of the log-ratio while both estimates still describe the same law;
* annealing: whenever the running KL exceeds its historical mean, the
  pre-change objective is delayed by one more step (``Delta``) and the
  probability ``p0`` of updating ``theta0`` drops by ``eps``.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import statistics as st
from ..errors import InvalidArgumentError
from ..posterior import KL_FLOOR, PriorSpec, build_posterior, post_weight, pre_weight
from .base import DetectorPath, GrowBuffer, clip_norm, sample_batch

LOSS_KINDS = ("kl", "sqrt", "xlogx")
SHIFT_MODES = ("posterior", "weight")
INIT_MODES = ("random", "equal")


@dataclass(frozen=True)
class TwrConfig:
    """Hyper-parameters of the TWR detector.

    ``anneal_shift`` selects how ``Delta`` enters the pre-change weights:
    ``"posterior"`` evaluates them under the posterior for a detection at
    ``t - Delta`` (weight ``P(lambda > tau + Delta)``, which freezes the
    pre-change window once the KL starts rising); ``"weight"`` uses
    ``P(lambda > tau - Delta)``.  ``anneal=False`` disables both the shift
    and the ``p0`` decay.
    """

    n_epochs: int = 5
    batch_size: int = 32
    step_size: float = 0.3
    penalty: float = 0.1
    anneal_eps: float = 0.01
    L_min: float = -1.5
    alpha: float = 0.3
    prior: PriorSpec = field(default_factory=PriorSpec)
    statistic: str = st.CUSUM
    kl_window: int = 64
    loss_kind: str = "kl"
    anneal: bool = True
    anneal_shift: str = "posterior"
    clip: float = 10.0
    init: str = "equal"
    predictive: bool = True
    kl_floor: float = KL_FLOOR
    name: str = "twr"

    def __post_init__(self):
        if self.n_epochs < 0 or self.batch_size < 1 or self.kl_window < 1:
            raise InvalidArgumentError("n_epochs must be >= 0, batch_size and kl_window >= 1")
        if not self.step_size > 0 or self.clip <= 0:
            raise InvalidArgumentError("step_size and clip must be > 0")
        if self.penalty < 0 or self.anneal_eps < 0:
            raise InvalidArgumentError("penalty and anneal_eps must be >= 0")
        if not self.L_min < 0:
            raise InvalidArgumentError("L_min must be < 0")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.statistic not in st.KINDS:
            raise InvalidArgumentError(f"unknown statistic {self.statistic!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidArgumentError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.anneal_shift not in SHIFT_MODES:
            raise InvalidArgumentError(f"anneal_shift must be one of {SHIFT_MODES}")
        if self.init not in INIT_MODES:
            raise InvalidArgumentError(f"init must be one of {INIT_MODES}")

    @property
    def d(self):
        # the prior tail rate only enters the Shiryaev delay law
        return self.prior.d if self.statistic == st.SHIRYAEV else 0.0

    @property
    def rho(self):
        return self.prior.rho if self.statistic == st.SHIRYAEV else 0.0

    def variant(self, **changes):
        return replace(self, **changes)


@dataclass
class TwrState:
    family: object
    theta0: np.ndarray
    theta1: np.ndarray
    S: st.StatisticState
    Delta: int = 0
    p0: float = 1.0
    D_bar: float = 0.0
    t: int = 0
    step: int = 0
    prev_states: GrowBuffer = None
    obs: GrowBuffer = None
    skipped_epochs: int = 0
    last_kl: float = 0.0
    last_L: float = 0.0
    last_L_hat: float = 0.0
    last_posterior: object = None

    def __post_init__(self):
        if self.prev_states is None:
            self.prev_states = GrowBuffer(self.family.state_dim)
        if self.obs is None:
            self.obs = GrowBuffer(self.family.obs_dim)


def init_state(family, config, rng=None, theta0=None, theta1=None):
    """Fresh TWR state; unspecified parameters are drawn from N(0, I)."""
    p = family.param_dim
    if theta0 is None:
        theta0 = rng.standard_normal(p)
    if theta1 is None:
        theta1 = theta0.copy() if config.init == "equal" else rng.standard_normal(p)
    return TwrState(
        family=family,
        theta0=family.check_theta(theta0).copy(),
        theta1=family.check_theta(theta1).copy(),
        S=st.new_state(config.statistic, config.rho),
    )


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def link(loss_kind, log_ratio):
    """g(r) evaluated at r = exp(log_ratio)."""
    L = np.asarray(log_ratio, dtype=np.float64)
    if loss_kind == "kl":
        return L
    if loss_kind == "sqrt":
        return np.exp(0.5 * L) - 1.0
    if loss_kind == "xlogx":
        return np.expm1(L) * L
    raise InvalidArgumentError(f"unknown loss kind {loss_kind!r}")


def link_slope(loss_kind, log_ratio):
    """d g(exp(L)) / dL."""
    L = np.asarray(log_ratio, dtype=np.float64)
    if loss_kind == "kl":
        return np.ones_like(L)
    if loss_kind == "sqrt":
        return 0.5 * np.exp(0.5 * L)
    if loss_kind == "xlogx":
        e = np.exp(L)
        return e * L + e - 1.0
    raise InvalidArgumentError(f"unknown loss kind {loss_kind!r}")


def _weight_times(indices):
    # transition tau carries observation X_{tau+1}
    return np.asarray(indices, dtype=np.float64) + 1.0


def twr_weights(state, posterior, indices, config):
    times = _weight_times(indices)
    shift = 0
    if config.anneal:
        shift = -state.Delta if config.anneal_shift == "posterior" else state.Delta
    return pre_weight(posterior, times, shift), post_weight(posterior, times)


def twr_losses(family, theta0, theta1, states, obs, w0, w1, loss_kind="kl"):
    """Scalar objectives (pre-change loss to minimise, post-change loss to maximise)."""
    L = family.loglik(theta1, states, obs) - family.loglik(theta0, states, obs)
    g = link(loss_kind, L)
    return float(np.dot(w0, g)), float(np.dot(w1, g))


def twr_loss_grads(state, posterior, indices, loss_kind="kl", config=None):
    """Gradients of the weighted objectives over the transitions in ``indices``.

    Returns ``(grad_theta0, grad_theta1)``: the first is to be descended,
    the second ascended.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise InvalidArgumentError("twr_loss_grads needs a non-empty index batch")
    if np.any(indices < 0) or np.any(indices >= state.t):
        raise InvalidArgumentError("indices must lie in [0, t)")
    config = TwrConfig(loss_kind=loss_kind) if config is None else config
    w0, w1 = twr_weights(state, posterior, indices, config)
    return _grads(state, indices, w0, w1, loss_kind, True)


def _grads(state, indices, w0, w1, loss_kind, want0):
    fam = state.family
    s = state.prev_states.view[indices]
    x = state.obs.view[indices]
    ll1, g1 = fam.loglik_grad(state.theta1, s, x)
    if want0:
        ll0, g0 = fam.loglik_grad(state.theta0, s, x)
    else:
        ll0 = fam.loglik(state.theta0, s, x)
    h = link_slope(loss_kind, ll1 - ll0)
    grad1 = (w1 * h) @ g1
    grad0 = -((w0 * h) @ g0) if want0 else None
    return grad0, grad1


# ---------------------------------------------------------------------------
# online step
# ---------------------------------------------------------------------------


def window_kl(state, config, extra=None):
    """Mean KL(f_theta0 || f_theta1) over the last ``kl_window`` conditioning states.

    ``extra`` is the conditioning state of the transition about to be
    scored; it is already observed, so it belongs to the window.
    """
    lo = max(0, state.t - config.kl_window + (extra is not None))
    base = state.prev_states.view[lo : state.t]
    if extra is not None:
        base = np.vstack([base, np.asarray(extra, dtype=np.float64).reshape(1, -1)])
    if base.shape[0] == 0:
        return 0.0
    return float(np.mean(state.family.kl_batch(state.theta0, state.theta1, base)))


def penalize(L, kl, config):
    return max(L - config.penalty / max(kl, config.kl_floor), config.L_min)


def _train(state, config, rng, extra):
    t = state.t
    if t == 0:
        return
    for _ in range(config.n_epochs):
        kl = window_kl(state, config, extra)
        posterior = build_posterior(t, config.alpha, kl, config.d, config.kl_floor)
        idx = sample_batch(rng, t, config.batch_size)
        do0 = rng.random() < state.p0
        w0, w1 = twr_weights(state, posterior, idx, config)
        grad0, grad1 = _grads(state, idx, w0, w1, config.loss_kind, do0)
        if not np.all(np.isfinite(grad1)) or (do0 and not np.all(np.isfinite(grad0))):
            state.skipped_epochs += 1
            continue
        scale = config.step_size / idx.size
        if do0:
            state.theta0 = state.theta0 - scale * clip_norm(grad0, config.clip * idx.size)
        state.theta1 = state.theta1 + scale * clip_norm(grad1, config.clip * idx.size)
        state.last_posterior = posterior


def twr_step(state, config, x_prev, x, rng, threshold=math.inf, trace=None):
    """Process one transition ``x_prev -> x``; returns ``(state, fired)``.

    ``x_prev`` is the conditioning state (the last ``order`` observations).
    With ``config.predictive`` the epochs use the transitions seen so far and
    the new transition is scored before it joins the training data;
    otherwise it is appended first and scored after the epochs.
    The state is updated in place and also returned.
    """
    fam = state.family
    if config.predictive:
        _train(state, config, rng, x_prev)
        kl = window_kl(state, config, x_prev)
    else:
        state.prev_states.append(x_prev)
        state.obs.append(x)
        state.t += 1
        _train(state, config, rng, None)
        kl = window_kl(state, config)
    xp = np.asarray(x_prev, dtype=np.float64).reshape(1, -1)
    xo = np.asarray(x, dtype=np.float64).reshape(1, -1)
    L = float(fam.loglik(state.theta1, xp, xo)[0] - fam.loglik(state.theta0, xp, xo)[0])
    if not math.isfinite(L):
        # a degenerate estimate; count it and feed the floor instead
        state.skipped_epochs += 1
        L_hat = config.L_min
    else:
        L_hat = penalize(L, kl, config)
    state.S = st.update_log(state.S, L_hat)

    state.step += 1
    k = state.step
    if config.anneal and kl > state.D_bar:
        state.Delta += 1
        state.p0 = max(0.0, state.p0 - config.anneal_eps)
    state.D_bar = ((k - 1) / k) * state.D_bar + kl / k
    state.last_kl = kl
    state.last_L, state.last_L_hat = L, L_hat
    if config.predictive:
        state.prev_states.append(x_prev)
        state.obs.append(x)
        state.t += 1
    fired = state.S.exceeds(threshold)
    if trace is not None:
        post = build_posterior(state.t, config.alpha, kl, config.d, config.kl_floor)
        trace.append({
            "t": k, "detector": config.name, "S": state.S.score, "L_raw": L, "L_penalized": L_hat,
            "kl_estimate": kl, "Delta": state.Delta, "p0": state.p0, "D_bar": state.D_bar,
            "mu": post.mu, "s": post.s, "fired": fired,
        })
    return state, fired


def twr_reset_for_next_change(state):
    """Restart after a detection: the post-change estimate becomes the new pre-change one."""
    state.S = st.reset(state.S)
    state.Delta = 0
    state.p0 = 1.0
    state.D_bar = 0.0
    state.theta0 = state.theta1.copy()
    state.t = 0
    state.step = 0
    state.prev_states.clear()
    state.obs.clear()
    return state


def twr_path(task, config, rng, stop_level=None, trace=False, theta0=None, theta1=None):
    """Run TWR over the whole stream (or until the score exceeds ``stop_level``)."""
    state = init_state(task.family, config, rng, theta0, theta1)
    stream = task.stream
    n = len(stream)
    scores = np.empty(n)
    raw = np.empty(n)
    used = np.empty(n)
    rows = [] if trace else None
    kl_hist = np.empty(n)
    end = n
    for i in range(n):
        state, _ = twr_step(state, config, stream.states[i], stream.obs[i], rng, trace=rows)
        scores[i] = state.S.score
        kl_hist[i] = state.last_kl
        raw[i], used[i] = state.last_L, state.last_L_hat
        if stop_level is not None and scores[i] > stop_level:
            end = i + 1
            break
    path = DetectorPath(
        config.name, config.statistic, scores[:end], raw[:end], used[:end],
        truncated=end < n, trace=rows,
        diagnostics={"skipped_epochs": state.skipped_epochs, "Delta": state.Delta, "p0": state.p0,
                     "kl": kl_hist[:end], "theta0": state.theta0, "theta1": state.theta1},
    )
    return path


def twr_sequential(task, config, threshold, rng, theta0=None, theta1=None):
    """Run TWR with restarts over a multi-change stream; returns every alarm time in order.

    After each alarm the state is reset with ``twr_reset_for_next_change``
    so that the current post-change estimate becomes the next pre-change one.
    Up to the first alarm this matches ``twr_path`` draw for draw.
    """
    state = init_state(task.family, config, rng, theta0, theta1)
    stream = task.stream
    alarms = []
    for i in range(len(stream)):
        state, fired = twr_step(state, config, stream.states[i], stream.obs[i], rng, threshold=threshold)
        if fired:
            alarms.append(i + 1)
            twr_reset_for_next_change(state)
    return alarms
