"""Per-trial data: seeds, parameters and streams, rebuilt deterministically from (config, trial index)."""
import math
from dataclasses import dataclass

import numpy as np

from .. import simulation as sim
from ..detectors import DetectionTask

# seed purposes; each trial draws every random quantity from its own stream
FAMILY, PAIR, CHANGE_STREAM, NO_CHANGE_STREAM, HISTORY, DETECTOR, LAMBDA, PILOT = range(8)


def derive_seed(master, *keys):
    """A 64-bit seed determined by the master seed and an integer key path."""
    ss = np.random.SeedSequence([int(master), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def detector_seed(master, trial, detector_index, stream_index):
    return derive_seed(master, trial, DETECTOR, detector_index, stream_index)


@dataclass
class TrialData:
    index: int
    family: object
    theta0: np.ndarray
    theta1: np.ndarray
    lam: int
    change: DetectionTask
    no_change: DetectionTask = None


def draw_lambda(config, trial):
    """Fixed change point, or a prior draw conditioned on landing inside the horizon."""
    if config.lam is not None:
        return config.lam
    rng = sim.make_rng(derive_seed(config.master_seed, trial, LAMBDA))
    prior = config.prior_spec()
    for _ in range(10_000):
        lam = int(sim.sample_change_point(prior, rng))
        if lam < config.horizon:
            return lam
    raise RuntimeError("prior puts almost no mass inside the horizon")


def build_trial(config, trial):
    """Family, parameter pair and streams of one trial."""
    m = config.master_seed
    fam = config.family_for_trial(derive_seed(m, trial, FAMILY))
    theta0, theta1 = sim.sample_pair_at_kl(fam, config.target_kl, config.kl_tol,
                                           sim.make_rng(derive_seed(m, trial, PAIR)))
    lam = draw_lambda(config, trial)
    chg = sim.generate(fam, sim.ChangeSpec.single(theta0, theta1, lam, config.horizon),
                       derive_seed(m, trial, CHANGE_STREAM))
    hist = sim.generate(fam, sim.ChangeSpec.no_change(theta0, config.history_length),
                        derive_seed(m, trial, HISTORY)).transitions()
    change = DetectionTask(fam, chg.transitions(), (theta0, theta1), hist, lam)
    no_change = None
    if config.no_change:
        nc = sim.generate(fam, sim.ChangeSpec.no_change(theta0, config.no_change_horizon),
                          derive_seed(m, trial, NO_CHANGE_STREAM))
        no_change = DetectionTask(fam, nc.transitions(), (theta0, theta1), hist, None)
    return TrialData(trial, fam, theta0, theta1, lam, change, no_change)


def build_multi_trial(config, trial, gap):
    """Stream with ``n_changes`` changes spaced ``gap`` apart, each at the target KL from the last."""
    m = config.master_seed
    k = config.multi.n_changes
    fam = config.family_for_trial(derive_seed(m, trial, FAMILY))
    rng = sim.make_rng(derive_seed(m, trial, PAIR))
    params = list(sim.sample_pair_at_kl(fam, config.target_kl, config.kl_tol, rng))
    while len(params) < k + 1:
        params.append(sim.sample_next_at_kl(fam, params[-1], config.target_kl, config.kl_tol, rng))
    points = [gap * (j + 1) for j in range(k)]
    horizon = gap * (k + 1)
    spec = sim.ChangeSpec(points, params, horizon)
    traj = sim.generate(fam, spec, derive_seed(m, trial, CHANGE_STREAM))
    return DetectionTask(fam, traj.transitions(), tuple(params), None, points[0]), points


def gap_from_add(add, factor):
    if not math.isfinite(add) or add < 0:
        raise ValueError(f"pilot oracle delay is not usable: {add}")
    return max(1, int(math.ceil(factor * max(add, 1.0))))
