"""Compare the numba kernels with their pure-numpy fallbacks.

Kernel timings run in-process (both implementations are importable side by
side); the end-to-end TWR timing runs once per backend in a subprocess,
because the backend is fixed at import time by ``TWRQCD_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from twrqcd import _mlp, statistics
from twrqcd._accel import NUMBA_ENABLED
from twrqcd.param_kernels import mlp_gaussian

END_TO_END = r"""
import json, time
import numpy as np
from twrqcd import param_kernels as pk, simulation as sim
from twrqcd._accel import backend
from twrqcd.detectors import DetectionTask, TwrConfig, twr_path
fam = pk.mlp_gaussian(dim=4, seed=3)
t0, t1 = sim.sample_pair_at_kl(fam, 0.3, 0.05, sim.make_rng(1))
tr = sim.generate(fam, sim.ChangeSpec.single(t0, t1, 100, 200), 2).transitions()
task = DetectionTask(fam, tr, (t0, t1), None, 100)
twr_path(task, TwrConfig(), np.random.default_rng(0))  # warm-up / compile
start = time.perf_counter()
twr_path(task, TwrConfig(), np.random.default_rng(0))
print(json.dumps({"backend": backend(), "seconds": time.perf_counter() - start}))
"""


def _time(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(repeat):
    fam = mlp_gaussian(dim=4, seed=7)
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(fam.param_dim)
    mean_net, std_net = fam._mean_net, fam._std_net
    rows = []
    for batch in (1, 32, 512):
        states = rng.standard_normal((batch, fam.state_dim))
        xs = rng.standard_normal((batch, fam.obs_dim))
        t_np = _time(lambda: _mlp._np_loglik_grad(mean_net, std_net, theta, states, xs, fam.varsigma_min, True), repeat)
        t_nb = (_time(lambda: _mlp._nb_loglik_grad_call(mean_net, std_net, theta, states, xs, fam.varsigma_min, True),
                      repeat) if NUMBA_ENABLED else float("nan"))
        rows.append((f"mlp loglik+grad, batch {batch}", t_nb, t_np))
    for n in (1_000, 100_000):
        log_r = rng.normal(-0.1, 1.0, n)
        t_np = _time(lambda: statistics._np_cusum_path(log_r), repeat)
        t_nb = _time(lambda: statistics._nb_cusum_path(log_r), repeat) if NUMBA_ENABLED else float("nan")
        rows.append((f"cusum path, n {n}", t_nb, t_np))
    return rows


def end_to_end():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, TWRQCD_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        rec = json.loads(res.stdout.strip().splitlines()[-1])
        out[rec["backend"]] = rec["seconds"]
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    print(f"{'kernel':32s} {'numba [us]':>12s} {'numpy [us]':>12s} {'speed-up':>9s}")
    for name, t_nb, t_np in kernel_rows(args.repeat):
        print(f"{name:32s} {t_nb * 1e6:12.1f} {t_np * 1e6:12.1f} {t_np / t_nb:9.1f}")
    if not args.skip_end_to_end:
        e2e = end_to_end()
        nb, npy = e2e.get("numba", float("nan")), e2e.get("numpy", float("nan"))
        print(f"\nTWR run, 200 steps: numba {nb:.2f} s, numpy {npy:.2f} s, speed-up {npy / nb:.1f}x")


if __name__ == "__main__":
    main()
