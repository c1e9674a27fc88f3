"""Backend equivalence: the numba-compiled kernels and the pure-numpy path
execute the same source and must produce bit-identical results."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pcgap import kernels
from pcgap.encoder_opt import _problem_matrices
from pcgap.lingauss import DynamicsSpec, solve_covariance_closed_form
from pcgap.neural import _gru_args, init_gru
from pcgap.rng import substream

_CHILD_SCRIPT = r"""
import hashlib, json, sys
import numpy as np
from pcgap import kernels
from pcgap.encoder_opt import _problem_matrices
from pcgap.lingauss import DynamicsSpec, solve_covariance_closed_form
from pcgap.neural import _gru_args, init_gru
from pcgap.rng import substream

digests = {}
spec = DynamicsSpec.from_2d(0.05, 0.98, -0.90, 0.05, 0.10)
cov = solve_covariance_closed_form(spec)
sigma, bmat, u, css = _problem_matrices(spec, cov)
w0s = substream(0, 0).standard_normal((8, 2))
ws, fs, conv = kernels.pgd_restarts(sigma, bmat, u, 0, 0.0, css, w0s, 20000, 1e-9)
digests["pgd"] = hashlib.sha256(
    ws.tobytes() + fs.tobytes() + np.asarray(conv).tobytes()).hexdigest()

rng = substream(0, 1)
s0 = 0.1 * rng.standard_normal(4)
e0 = 0.1 * rng.standard_normal(4)
xi_s = rng.standard_normal((4, 50))
xi_e = rng.standard_normal((4, 50))
states, ok = kernels.duffing_path(s0, e0, xi_s, xi_e, 0.5, 1.0, 1.0, 0.3,
                                  0.01, 0.2, 0.05, 1e6)
digests["duffing"] = hashlib.sha256(np.asarray(states).tobytes()).hexdigest()

gru = init_gru(0, "unconstrained", hidden=8)
windows = substream(0, 2).standard_normal((5, 6, 2))
args = _gru_args(gru.params)
preds, zs, rs, cs, hs = kernels.gru_forward(windows, *args)
out = kernels.gru_backward(windows, windows[:, 1:, :], preds, zs, rs, cs, hs, *args)
blob = np.asarray(preds).tobytes() + b"".join(np.asarray(g).tobytes() for g in out[1:])
digests["gru"] = hashlib.sha256(np.float64(out[0]).tobytes() + blob).hexdigest()
print("DIGESTS " + json.dumps(digests))
"""


def _run_child(no_numba: str) -> dict:
    env = dict(os.environ, PCGAP_NO_NUMBA=no_numba)
    out = subprocess.run([sys.executable, "-c", _CHILD_SCRIPT], env=env,
                         capture_output=True, text=True, check=True)
    line = [l for l in out.stdout.splitlines() if l.startswith("DIGESTS ")][-1]
    return json.loads(line[len("DIGESTS "):])


def test_backends_bit_identical():
    with_numba = _run_child("0")
    without_numba = _run_child("1")
    assert with_numba == without_numba


def test_flag_selects_backend():
    env = dict(os.environ, PCGAP_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from pcgap import kernels; print(kernels.USING_NUMBA)"],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_sphere_objective_modes():
    spec = DynamicsSpec.from_2d(0.05, 0.98, -0.90, 0.05, 0.10)
    cov = solve_covariance_closed_form(spec)
    sigma, bmat, u, css = _problem_matrices(spec, cov)
    w = np.array([1.0, 0.0])
    # latent risk of the NZ direction
    assert kernels.sphere_objective(w, sigma, bmat, u, 0, 0.0, css) == \
        pytest.approx(0.17378, abs=1e-4)
    # IB with beta=0 equals the latent value
    assert kernels.sphere_objective(w, sigma, bmat, u, 2, 0.0, css) == \
        kernels.sphere_objective(w, sigma, bmat, u, 0, 0.0, css)


def test_sphere_gradient_matches_fd():
    spec = DynamicsSpec.from_2d(0.3, 0.7, -0.4, 0.2, 0.10)
    cov = solve_covariance_closed_form(spec)
    sigma, bmat, u, css = _problem_matrices(spec, cov)
    rng = substream(1, 0)
    for mode, beta in ((0, 0.0), (1, 0.0), (2, 0.05)):
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        grad = kernels.sphere_gradient(w, sigma, bmat, u, mode, beta)
        eps = 1e-7
        for i in range(2):
            wp, wm = w.copy(), w.copy()
            wp[i] += eps
            wm[i] -= eps
            fd = (kernels.sphere_objective(wp, sigma, bmat, u, mode, beta, css)
                  - kernels.sphere_objective(wm, sigma, bmat, u, mode, beta, css)) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)
