"""Known-parameter detector: the optimal log-likelihood ratio fed to a statistic."""
from dataclasses import dataclass

import numpy as np

from .. import statistics as st
from ..errors import InvalidArgumentError
from ..posterior import DEFAULT_RHO
from .base import DetectorPath


@dataclass(frozen=True)
class OracleConfig:
    statistic: str = st.CUSUM
    rho: float = DEFAULT_RHO
    name: str = "oracle"

    def __post_init__(self):
        if self.statistic not in st.KINDS:
            raise InvalidArgumentError(f"unknown statistic {self.statistic!r}")


def oracle_llr(family, theta0, theta1, stream):
    """L*_t = log f_theta1(x | prev) - log f_theta0(x | prev) for every transition."""
    return family.loglik(theta1, stream.states, stream.obs) - family.loglik(theta0, stream.states, stream.obs)


def oracle_step(state, family, theta0, theta1, x_prev, x, threshold):
    """One oracle update; returns the new statistic state and whether it fired."""
    llr = family.log_density(theta1, x_prev, x) - family.log_density(theta0, x_prev, x)
    state = st.update_log(state, llr)
    return state, state.exceeds(threshold)


def oracle_path(task, config=OracleConfig(), trace=False):
    if task.true_params is None:
        raise InvalidArgumentError("the oracle needs the true parameters")
    theta0, theta1 = task.true_params[0], task.true_params[1]
    llr = oracle_llr(task.family, theta0, theta1, task.stream)
    rho = config.rho if config.statistic == st.SHIRYAEV else 0.0
    scores = st.score_path(config.statistic, llr, rho)
    rows = None
    if trace:
        rows = [
            {"t": i + 1, "detector": config.name, "S": float(scores[i]), "L_raw": float(llr[i]),
             "L_penalized": float(llr[i]), "kl_estimate": np.nan, "Delta": 0, "p0": 1.0,
             "D_bar": np.nan, "mu": np.nan, "s": np.nan, "fired": False}
            for i in range(len(llr))
        ]
    return DetectorPath(config.name, config.statistic, scores, llr, llr, trace=rows)
