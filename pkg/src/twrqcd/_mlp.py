"""Fixed random tanh networks and their hand-written reverse-mode gradients.

Two networks map the concatenation ``(theta, state)`` to the mean and the
(pre-softplus) standard deviation of a diagonal Gaussian.  Only gradients
with respect to the ``theta`` inputs are ever needed, so backprop stops at
the first ``p`` input units.

Each network is stored as one flat float64 vector with per-layer offsets so
the numba kernels can loop over an arbitrary depth.
"""
import math

import numpy as np

from ._accel import njit, select

LOG_2PI = math.log(2.0 * math.pi)


class FixedNet:
    """A dense tanh network with a linear output layer and frozen weights."""

    def __init__(self, sizes, rng):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        woffs, aoffs = [], [0]
        flat = []
        off = 0
        for nin, nout in zip(sizes[:-1], sizes[1:]):
            woffs.append(off)
            w = rng.standard_normal((nin, nout)) / math.sqrt(nin)
            b = 0.1 * rng.standard_normal(nout)
            flat.append(w.ravel())
            flat.append(b)
            off += nin * nout + nout
            aoffs.append(aoffs[-1] + nin)
        self.flat = np.ascontiguousarray(np.concatenate(flat))
        self.woffs = np.asarray(woffs, dtype=np.int64)
        self.aoffs = np.asarray(aoffs, dtype=np.int64)
        self.n_acts = int(np.sum(self.sizes))
        self.layers = []
        for l, (nin, nout) in enumerate(zip(sizes[:-1], sizes[1:])):
            w0 = self.woffs[l]
            w = self.flat[w0 : w0 + nin * nout].reshape(nin, nout)
            b = self.flat[w0 + nin * nout : w0 + nin * nout + nout]
            self.layers.append((w, b))

    @property
    def n_out(self):
        return int(self.sizes[-1])


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit
def _forward(flat, sizes, woffs, aoffs, acts):
    n_layers = sizes.shape[0] - 1
    for l in range(n_layers):
        nin = sizes[l]
        nout = sizes[l + 1]
        w0 = woffs[l]
        b0 = w0 + nin * nout
        ai = aoffs[l]
        ao = aoffs[l + 1]
        for j in range(nout):
            acts[ao + j] = flat[b0 + j]
        for i in range(nin):
            a = acts[ai + i]
            row = w0 + i * nout
            for j in range(nout):
                acts[ao + j] += a * flat[row + j]
        if l < n_layers - 1:
            for j in range(nout):
                # exp-based tanh: ~3x cheaper than libm tanh, saturates correctly
                acts[ao + j] = 1.0 - 2.0 / (math.exp(2.0 * acts[ao + j]) + 1.0)


@njit
def _backward(flat, sizes, woffs, aoffs, acts, gcur, gnxt, n_keep, gin):
    # gcur holds d(out)/d(linear output) on entry; gin receives d/d(input[:n_keep]).
    n_layers = sizes.shape[0] - 1
    for l in range(n_layers - 1, -1, -1):
        nin = sizes[l]
        nout = sizes[l + 1]
        w0 = woffs[l]
        lim = nin if l > 0 else n_keep
        for i in range(lim):
            row = w0 + i * nout
            acc = 0.0
            for j in range(nout):
                acc += flat[row + j] * gcur[j]
            gnxt[i] = acc
        if l > 0:
            ai = aoffs[l]
            for i in range(nin):
                a = acts[ai + i]
                gcur[i] = gnxt[i] * (1.0 - a * a)
        else:
            for i in range(lim):
                gin[i] = gnxt[i]


@njit
def _nb_mean_std(fm, sm, wm, am, fs, ss, ws, as_, theta, states, floor):
    n = states.shape[0]
    p = theta.shape[0]
    m_in = states.shape[1]
    d = sm[sm.shape[0] - 1]
    mean = np.empty((n, d))
    std = np.empty((n, d))
    acts_m = np.empty(np.sum(sm))
    acts_s = np.empty(np.sum(ss))
    om = am[am.shape[0] - 1]
    os_ = as_[as_.shape[0] - 1]
    for k in range(n):
        for i in range(p):
            acts_m[i] = theta[i]
            acts_s[i] = theta[i]
        for i in range(m_in):
            acts_m[p + i] = states[k, i]
            acts_s[p + i] = states[k, i]
        _forward(fm, sm, wm, am, acts_m)
        _forward(fs, ss, ws, as_, acts_s)
        for i in range(d):
            mean[k, i] = acts_m[om + i]
            std[k, i] = floor + _softplus(acts_s[os_ + i])
    return mean, std


@njit
def _nb_loglik_grad(fm, sm, wm, am, fs, ss, ws, as_, theta, states, xs, floor, want_grad):
    n = states.shape[0]
    p = theta.shape[0]
    m_in = states.shape[1]
    d = sm[sm.shape[0] - 1]
    ll = np.empty(n)
    grad = np.zeros((n if want_grad else 0, p))
    acts_m = np.empty(np.sum(sm))
    acts_s = np.empty(np.sum(ss))
    width = max(np.max(sm), np.max(ss))
    gcur = np.empty(width)
    gnxt = np.empty(width)
    gin = np.empty(p)
    dmean = np.empty(d)
    dsig = np.empty(d)
    om = am[am.shape[0] - 1]
    os_ = as_[as_.shape[0] - 1]
    half_log_2pi = 0.5 * math.log(2.0 * math.pi)
    for k in range(n):
        for i in range(p):
            acts_m[i] = theta[i]
            acts_s[i] = theta[i]
        for i in range(m_in):
            acts_m[p + i] = states[k, i]
            acts_s[p + i] = states[k, i]
        _forward(fm, sm, wm, am, acts_m)
        _forward(fs, ss, ws, as_, acts_s)
        acc = 0.0
        for i in range(d):
            zs = acts_s[os_ + i]
            sd = floor + _softplus(zs)
            r = (xs[k, i] - acts_m[om + i]) / sd
            acc += -half_log_2pi - math.log(sd) - 0.5 * r * r
            dmean[i] = r / sd
            dsig[i] = (r * r - 1.0) / sd * _sigmoid(zs)
        ll[k] = acc
        if want_grad:
            for i in range(d):
                gcur[i] = dmean[i]
            _backward(fm, sm, wm, am, acts_m, gcur, gnxt, p, gin)
            for i in range(p):
                grad[k, i] = gin[i]
            for i in range(d):
                gcur[i] = dsig[i]
            _backward(fs, ss, ws, as_, acts_s, gcur, gnxt, p, gin)
            for i in range(p):
                grad[k, i] += gin[i]
    return ll, grad


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------


def _np_softplus(z):
    return np.logaddexp(0.0, z)


def _np_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _np_forward(net, inputs):
    acts = [inputs]
    h = inputs
    n_layers = len(net.layers)
    for l, (w, b) in enumerate(net.layers):
        h = h @ w + b
        if l < n_layers - 1:
            h = np.tanh(h)
        acts.append(h)
    return acts


def _np_backward(net, acts, gout, n_keep):
    g = gout
    for l in range(len(net.layers) - 1, -1, -1):
        w, _ = net.layers[l]
        if l == 0:
            return g @ w[:n_keep].T
        g = (g @ w.T) * (1.0 - acts[l] ** 2)
    raise AssertionError("unreachable")


def _np_inputs(theta, states):
    n = states.shape[0]
    return np.concatenate([np.broadcast_to(theta, (n, theta.shape[0])), states], axis=1)


def _np_mean_std(mean_net, std_net, theta, states, floor):
    z = _np_inputs(theta, states)
    mean = _np_forward(mean_net, z)[-1]
    std = floor + _np_softplus(_np_forward(std_net, z)[-1])
    return mean, std


def _np_loglik_grad(mean_net, std_net, theta, states, xs, floor, want_grad):
    z = _np_inputs(theta, states)
    acts_m = _np_forward(mean_net, z)
    acts_s = _np_forward(std_net, z)
    zs = acts_s[-1]
    sd = floor + _np_softplus(zs)
    r = (xs - acts_m[-1]) / sd
    ll = np.sum(-0.5 * LOG_2PI - np.log(sd) - 0.5 * r * r, axis=1)
    p = theta.shape[0]
    if not want_grad:
        return ll, np.zeros((0, p))
    g_mean = r / sd
    g_sig = (r * r - 1.0) / sd * _np_sigmoid(zs)
    grad = _np_backward(mean_net, acts_m, g_mean, p) + _np_backward(std_net, acts_s, g_sig, p)
    return ll, grad


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _nb_mean_std_call(mean_net, std_net, theta, states, floor):
    return _nb_mean_std(
        mean_net.flat, mean_net.sizes, mean_net.woffs, mean_net.aoffs,
        std_net.flat, std_net.sizes, std_net.woffs, std_net.aoffs,
        theta, states, floor,
    )


def _nb_loglik_grad_call(mean_net, std_net, theta, states, xs, floor, want_grad):
    return _nb_loglik_grad(
        mean_net.flat, mean_net.sizes, mean_net.woffs, mean_net.aoffs,
        std_net.flat, std_net.sizes, std_net.woffs, std_net.aoffs,
        theta, states, xs, floor, want_grad,
    )


mean_std = select(_nb_mean_std_call, _np_mean_std)
loglik_grad = select(_nb_loglik_grad_call, _np_loglik_grad)
