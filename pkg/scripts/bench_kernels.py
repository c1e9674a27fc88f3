#!/usr/bin/env python3
"""Benchmark the hot kernels with and without numba compilation.

The backend is fixed at import time by the PCGAP_NO_NUMBA environment
variable, so this script re-executes itself in a subprocess for each
backend and prints a timing table.

Usage: python3 scripts/bench_kernels.py
"""
from __future__ import annotations

import json
import os
import subprocess
import sys
import time


def run_benchmarks() -> dict:
    from pcgap import kernels, lingauss
    from pcgap.encoder_opt import _problem_matrices
    from pcgap.neural import _gru_args, init_gru
    from pcgap.rng import substream

    results = {"backend": "numba" if kernels.USING_NUMBA else "numpy"}

    # PGD on the N=10 high-dimensional risk (50 restarts)
    spec = lingauss.build_highdim_spec(10, 0.05, 0.05, -0.95, 0.10)
    cov = lingauss.solve_covariance_general(spec)
    sigma, bmat, u, css = _problem_matrices(spec, cov)
    w0s = substream(0, 0).standard_normal((50, sigma.shape[0]))
    kernels.pgd_restarts(sigma, bmat, u, 0, 0.0, css, w0s[:1], 20000, 1e-9)  # warm-up
    t0 = time.perf_counter()
    kernels.pgd_restarts(sigma, bmat, u, 0, 0.0, css, w0s, 20000, 1e-9)
    results["pgd_50_restarts_n10_s"] = time.perf_counter() - t0

    # Duffing integration, 200 trajectories x 2000 steps
    rng = substream(0, 1)
    s0 = 0.1 * rng.standard_normal(200)
    e0 = 0.1 * rng.standard_normal(200)
    xi_s = rng.standard_normal((200, 2000))
    xi_e = rng.standard_normal((200, 2000))
    kernels.duffing_path(s0[:2], e0[:2], xi_s[:2], xi_e[:2],
                         0.5, 1.0, 1.0, 0.3, 0.01, 0.2, 0.05, 1e6)  # warm-up
    t0 = time.perf_counter()
    kernels.duffing_path(s0, e0, xi_s, xi_e, 0.5, 1.0, 1.0, 0.3, 0.01, 0.2,
                         0.05, 1e6)
    results["duffing_200x2000_s"] = time.perf_counter() - t0

    # GRU forward+backward on 256 windows of length 20
    gru = init_gru(0, "unconstrained")
    windows = rng.standard_normal((256, 20, 2))
    targets = windows[:, 1:, :]
    args = _gru_args(gru.params)
    out = kernels.gru_forward(windows[:2], *args)  # warm-up
    kernels.gru_backward(windows[:2], targets[:2], *out, *args)
    t0 = time.perf_counter()
    out = kernels.gru_forward(windows, *args)
    kernels.gru_backward(windows, targets, *out, *args)
    results["gru_fwd_bwd_256x20_s"] = time.perf_counter() - t0
    return results


def main() -> int:
    if os.environ.get("PCGAP_BENCH_CHILD") == "1":
        print(json.dumps(run_benchmarks()))
        return 0
    rows = []
    for no_numba in ("0", "1"):
        env = dict(os.environ, PCGAP_BENCH_CHILD="1", PCGAP_NO_NUMBA=no_numba)
        out = subprocess.run([sys.executable, os.path.abspath(__file__)],
                             env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))
    keys = [k for k in rows[0] if k != "backend"]
    width = max(len(k) for k in keys) + 2
    print(f"{'kernel':<{width}}" + "".join(f"{r['backend']:>12}" for r in rows)
          + f"{'speedup':>10}")
    for k in keys:
        base, alt = rows[0][k], rows[1][k]
        print(f"{k:<{width}}" + f"{base:>12.4f}{alt:>12.4f}"
              + f"{alt / base:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
