"""Hot numeric kernels.

Every function here is written in numba-compatible numpy style and compiled
with ``@njit`` when numba is available.  Setting the environment variable
``PCGAP_NO_NUMBA=1`` (or running without numba installed) selects the pure
numpy/Python path; both paths execute the same source, so results are
identical.  ``scripts/bench_kernels.py`` compares the two.
"""
from __future__ import annotations

import os

import numpy as np

if os.environ.get("PCGAP_NO_NUMBA") == "1":
    USING_NUMBA = False
else:
    try:
        from numba import njit as _njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover
        USING_NUMBA = False

if USING_NUMBA:
    def maybe_njit(func):
        return _njit(cache=True)(func)
else:
    def maybe_njit(func):
        return func


_INV_LN2 = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10


@maybe_njit
def exp_elementwise(x):
    """Elementwise exp from arithmetic, rint, and ldexp only.

    ``np.exp`` is not bit-identical between the compiled and plain backends
    (libm vs SIMD implementations can disagree in the last ulp), so the
    neural kernels use this shared reduction instead: Cody-Waite argument
    reduction followed by a degree-13 Taylor polynomial, accurate to within
    a couple of ulps and deterministic across backends by construction.
    """
    xc = np.minimum(np.maximum(x, -745.0), 709.0)
    k = np.rint(xc * _INV_LN2)
    r = (xc - k * _LN2_HI) - k * _LN2_LO
    poly = np.ones_like(r)
    for i in range(13, 0, -1):
        poly = 1.0 + poly * r / i
    return np.ldexp(poly, k.astype(np.int64))


@maybe_njit
def sphere_objective(w, sigma, bmat, u, mode, beta, css):
    """Risk value for a unit vector w.

    mode 0: latent self-prediction, 1: system prediction, 2: IB (latent +
    beta*log variance).  ``bmat`` is the symmetrized A @ sigma, ``u`` the
    system-prediction cross vector, ``css`` the constant target variance.
    """
    v = w @ sigma @ w
    if mode == 1:
        p = u @ w
        return css - p * p / v
    g = w @ bmat @ w
    f = v - g * g / v
    if mode == 2:
        f += beta * np.log(v)
    return f


@maybe_njit
def sphere_gradient(w, sigma, bmat, u, mode, beta):
    sw = sigma @ w
    v = w @ sw
    if mode == 1:
        p = u @ w
        return (-2.0 * p / v) * u + (2.0 * p * p / (v * v)) * sw
    bw = bmat @ w
    g = w @ bw
    a = g / v
    grad = 2.0 * ((1.0 + a * a) * sw - 2.0 * a * bw)
    if mode == 2:
        grad += (2.0 * beta / v) * sw
    return grad


@maybe_njit
def pgd_restarts(sigma, bmat, u, mode, beta, css, w0s, max_iter, grad_tol):
    """Projected gradient descent on the unit sphere, one row of w0s per restart.

    Armijo backtracking (slope 1e-4, shrink 0.5) with renormalization after
    every step.  Returns final iterates, risk values, and convergence flags:
    projected gradient norm < grad_tol, or descent has hit the float64 floor
    (line-search underflow, or per-step decrease below 1e-15 * (1 + |f|))
    with the gradient within 1e4 * grad_tol.
    """
    n_restarts, dim = w0s.shape
    ws = np.empty((n_restarts, dim))
    fs = np.empty(n_restarts)
    converged = np.zeros(n_restarts, dtype=np.bool_)
    for k in range(n_restarts):
        w = w0s[k] / np.sqrt(w0s[k] @ w0s[k])
        f = sphere_objective(w, sigma, bmat, u, mode, beta, css)
        step = 1.0
        for _ in range(max_iter):
            grad = sphere_gradient(w, sigma, bmat, u, mode, beta)
            pg = grad - (grad @ w) * w
            pg_norm = np.sqrt(pg @ pg)
            if pg_norm < grad_tol:
                converged[k] = True
                break
            step = min(step * 2.0, 1e6)
            while True:
                w_new = w - step * pg
                w_new = w_new / np.sqrt(w_new @ w_new)
                f_new = sphere_objective(w_new, sigma, bmat, u, mode, beta, css)
                if f_new <= f - 1e-4 * step * pg_norm * pg_norm:
                    break
                step *= 0.5
                if step < 1e-20:
                    break
            if step < 1e-20:
                if pg_norm < 1e4 * grad_tol:
                    converged[k] = True
                break
            if f - f_new <= 1e-15 * (1.0 + abs(f)) and pg_norm < 1e4 * grad_tol:
                w = w_new
                f = f_new
                converged[k] = True
                break
            w = w_new
            f = f_new
        ws[k] = w
        fs[k] = f
    return ws, fs, converged


@maybe_njit
def duffing_path(s0, e0, xi_s, xi_e, alpha_s, beta_s, gamma_se, sigma_s,
                 alpha_e, sigma_e, dt, blowup):
    """Explicit Euler integration of the Duffing-OU map.

    Noise enters scaled by dt, matching the discrete map being studied.
    Returns (states, ok); ok is False when any |s| or |e| exceeded blowup.
    """
    n_traj = s0.shape[0]
    n_steps = xi_s.shape[1]
    out = np.empty((n_traj, n_steps + 1, 2))
    ok = True
    for i in range(n_traj):
        s = s0[i]
        e = e0[i]
        out[i, 0, 0] = s
        out[i, 0, 1] = e
        for t in range(n_steps):
            s_new = s + (-alpha_s * s - beta_s * s ** 3 + gamma_se * e
                         + sigma_s * xi_s[i, t]) * dt
            e_new = e + (-alpha_e * e + sigma_e * xi_e[i, t]) * dt
            s = s_new
            e = e_new
            out[i, t + 1, 0] = s
            out[i, t + 1, 1] = e
            if abs(s) > blowup or abs(e) > blowup:
                ok = False
    return out, ok


@maybe_njit
def gru_forward(x, wz, uz, bz, wr, ur, br, wn, un, bn, wo, bo):
    """Forward pass over a window batch x of shape (n_win, T, n_in).

    Hidden starts at zero; after consuming x[:, t] the readout predicts the
    next step.  The reset gate multiplies the hidden state before the
    candidate transform (the "reset-before-matmul" GRU variant).
    Returns predictions (n_win, T-1, n_out) and the per-step caches needed
    for backpropagation.
    """
    n_win, n_steps, _ = x.shape
    hidden = wz.shape[0]
    n_out = wo.shape[0]
    n_pred = n_steps - 1
    zs = np.empty((n_pred, n_win, hidden))
    rs = np.empty((n_pred, n_win, hidden))
    cs = np.empty((n_pred, n_win, hidden))
    hs = np.empty((n_pred + 1, n_win, hidden))
    preds = np.empty((n_win, n_pred, n_out))
    hs[0] = np.zeros((n_win, hidden))
    for t in range(n_pred):
        xt = x[:, t, :].copy()
        h = hs[t]
        z = 1.0 / (1.0 + exp_elementwise(-(xt @ wz.T + h @ uz.T + bz)))
        r = 1.0 / (1.0 + exp_elementwise(-(xt @ wr.T + h @ ur.T + br)))
        # tanh expressed through the shared exp so both backends agree bitwise
        pre = xt @ wn.T + (r * h) @ un.T + bn
        decay = exp_elementwise(-2.0 * np.abs(pre))
        c = np.sign(pre) * (1.0 - decay) / (1.0 + decay)
        h_new = (1.0 - z) * c + z * h
        zs[t] = z
        rs[t] = r
        cs[t] = c
        hs[t + 1] = h_new
        preds[:, t, :] = h_new @ wo.T + bo
    return preds, zs, rs, cs, hs


@maybe_njit
def gru_backward(x, targets, preds, zs, rs, cs, hs,
                 wz, uz, bz, wr, ur, br, wn, un, bn, wo, bo):
    """BPTT gradients of the mean squared prediction error.

    The loss is the mean over windows, steps, and output dimensions of
    (pred - target)^2.  Returns (loss, gradients in parameter order).
    """
    n_win, n_pred, n_out = preds.shape
    hidden = wz.shape[0]
    denom = n_win * n_pred * n_out
    err = preds - targets
    # reductions go through BLAS (dot/gemv): np.sum is pairwise in one
    # backend and sequential in the other, which breaks bit-identity
    err_flat = err.ravel()
    loss = (err_flat @ err_flat) / denom
    ones = np.ones(n_win)

    d_wz = np.zeros_like(wz)
    d_uz = np.zeros_like(uz)
    d_bz = np.zeros_like(bz)
    d_wr = np.zeros_like(wr)
    d_ur = np.zeros_like(ur)
    d_br = np.zeros_like(br)
    d_wn = np.zeros_like(wn)
    d_un = np.zeros_like(un)
    d_bn = np.zeros_like(bn)
    d_wo = np.zeros_like(wo)
    d_bo = np.zeros_like(bo)

    dh_carry = np.zeros((n_win, hidden))
    for t in range(n_pred - 1, -1, -1):
        dy = (2.0 / denom) * err[:, t, :]
        d_wo += dy.T @ hs[t + 1]
        d_bo += ones @ dy
        dh = dy @ wo + dh_carry

        z = zs[t]
        r = rs[t]
        c = cs[t]
        h_prev = hs[t]
        xt = x[:, t, :].copy()

        dz = dh * (h_prev - c)
        dc = dh * (1.0 - z)
        dh_carry = dh * z

        da_c = dc * (1.0 - c * c)
        d_wn += da_c.T @ xt
        d_un += da_c.T @ (r * h_prev)
        d_bn += ones @ da_c
        d_rh = da_c @ un
        dr = d_rh * h_prev
        dh_carry += d_rh * r

        da_r = dr * r * (1.0 - r)
        d_wr += da_r.T @ xt
        d_ur += da_r.T @ h_prev
        d_br += ones @ da_r
        dh_carry += da_r @ ur

        da_z = dz * z * (1.0 - z)
        d_wz += da_z.T @ xt
        d_uz += da_z.T @ h_prev
        d_bz += ones @ da_z
        dh_carry += da_z @ uz

    return loss, d_wz, d_uz, d_bz, d_wr, d_ur, d_br, d_wn, d_un, d_bn, d_wo, d_bo
