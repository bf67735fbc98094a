"""Maximum-likelihood fitting by minibatch SGD."""
import numpy as np

from .base import clip_norm, sample_batch


def sgd_fit(family, theta, states, obs, epochs, batch_size, step_size, rng, clip=10.0):
    """Ascend the mean log-likelihood of ``obs`` given ``states`` from ``theta``.

    Epochs whose gradient is non-finite are skipped.  Returns a new array.
    """
    theta = np.array(theta, dtype=np.float64)
    m = obs.shape[0]
    if m == 0:
        return theta
    for _ in range(epochs):
        idx = sample_batch(rng, m, batch_size)
        _, g = family.loglik_grad(theta, states[idx], obs[idx])
        mg = g.mean(axis=0)
        if np.all(np.isfinite(mg)):
            theta = theta + step_size * clip_norm(mg, clip)
    return theta
