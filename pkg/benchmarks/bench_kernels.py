"""Compare the numba and numpy backends on the hot kernels.

The backend is fixed at import time, so each one runs in its own interpreter:

    python3 benchmarks/bench_kernels.py            # both backends, side by side
    python3 benchmarks/bench_kernels.py --child    # current backend only (JSON)

Each kernel is warmed up once (JIT compilation is excluded) and timed as the
best of ``--repeat`` runs. The MMD permutation kernel uses BLAS matrix
products on both backends, so its two columns should agree.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def run_child(repeat: int, scale: float) -> dict:
    from calib_lab import backend
    from calib_lab.core.distributions import Normal
    from calib_lab.core.rng import StreamBatch, uniform_block
    from calib_lab.gof import ks_statistic, mmd_permutation_test
    from calib_lab.core.rng import RngStream
    from calib_lab.procedures.abc import AbcConfig, AbcProcedure
    from calib_lab.procedures.gk import GKModel
    from calib_lab.procedures.laplace import laplace_rows

    n_u = int(2_000_000 * scale)
    n_lap = int(100_000 * scale)
    n_abc = max(int(200 * scale), 10)
    rng = np.random.default_rng(0)
    ys = rng.standard_t(3, size=(n_lap, 5))
    pits = rng.uniform(size=n_u // 2)
    X = rng.normal(size=(300, 1))
    Y = rng.normal(size=(300, 1))

    model = GKModel(n_obs=20)
    proc = AbcProcedure(model, AbcConfig(2.0, 99, 10**8, noisy=False))
    prior = Normal(0.0, 1.0)
    ids = np.arange(n_abc)
    data = model.simulate_batch(prior.quantile(StreamBatch(7, ids, 0).uniform(1)), StreamBatch(7, ids, 1))
    props = proc.infer_batch(prior, data, StreamBatch(7, ids, 2)).proposals.sum()

    kernels = {
        "uniforms (per draw)": (lambda: uniform_block(1, 0, 0, 0, n_u), n_u),
        "laplace (per replicate)": (lambda: laplace_rows(ys, 0.0, 1.0, 3.0, 1.0), n_lap),
        "abc g-and-k (per proposal)": (lambda: proc.infer_batch(prior, data, StreamBatch(7, ids, 2)), int(props)),
        "ks statistic (per value)": (lambda: ks_statistic(pits), pits.size),
        "mmd 999 perms (per perm)": (lambda: mmd_permutation_test(X, Y, 0.0, 999, RngStream(1, 0, 6)), 999),
    }
    out = {"backend": backend(), "results": {}}
    for name, (fn, units) in kernels.items():
        t = _best(fn, repeat)
        out["results"][name] = {"seconds": t, "ns_per_unit": 1e9 * t / max(units, 1)}
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--child", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="shrink or grow every workload")
    args = ap.parse_args()
    if args.child:
        print(json.dumps(run_child(args.repeat, args.scale)))
        return

    runs = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = {**os.environ, "CALIB_LAB_DISABLE_NUMBA": flag}
        cmd = [sys.executable, __file__, "--child", "--repeat", str(args.repeat), "--scale", str(args.scale)]
        res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        runs[label] = json.loads(res.stdout.strip().splitlines()[-1])["results"]

    print(f"{'kernel':30s} {'numba ns/unit':>14s} {'numpy ns/unit':>14s} {'speed-up':>9s}")
    for name in runs["numba"]:
        a = runs["numba"][name]["ns_per_unit"]
        b = runs["numpy"][name]["ns_per_unit"]
        print(f"{name:30s} {a:14.1f} {b:14.1f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
