"""Pure numpy implementation of the numerical kernels.

The compiled module ``_ckernels`` exposes the same two functions with the same
signatures. A *leg* is the tuple ``(code, p, scale, gens)`` produced by
:meth:`refloc.norms.NormSpec.kernel_leg`; codes are 0 = lp, 1 = l1, 2 = linf,
3 = polyhedral.

Smoothing never overestimates the norm. lp and l1 use the pseudo-Huber form
``(sum (v_j^2 + mu^2)^(p/2))^(1/p) - d^(1/p) mu``; linf and polyhedral norms use
a log-sum-exp over the dual generators shifted by ``mu log m``.
"""
from __future__ import annotations

import numpy as np

ARMIJO = 1e-4
MAX_HALVINGS = 60
STALL_DEC = 1e-8
GTOL = 1e-11
ROUND = 8 * np.finfo(float).eps


def norm_smooth(leg, V, mu, order=2):
    """Smoothed value, gradient and (if ``order >= 2``) Hessian, row by row."""
    code, p, scale, gens = leg
    V = np.asarray(V, dtype=float)
    n, d = V.shape
    if code == 0 or code == 1:
        w = np.sqrt(V * V + mu * mu)
        if code == 1:
            val = w.sum(axis=1) - d * mu
            grad = V / w
            hess = None
            if order >= 2:
                hess = np.zeros((n, d, d))
                idx = np.arange(d)
                hess[:, idx, idx] = mu * mu / (w * w * w)
        else:
            wm = w.max(axis=1, keepdims=True)
            N = wm[:, 0] * ((w / wm) ** p).sum(axis=1) ** (1.0 / p)
            rho = w / N[:, None]
            val = N - d ** (1.0 / p) * mu
            grad = rho ** (p - 1.0) * V / w
            hess = None
            if order >= 2:
                diag = rho ** (p - 2.0) * ((p - 1.0) * V * V + mu * mu) / (w * w)
                hess = (1.0 - p) * grad[:, :, None] * grad[:, None, :]
                idx = np.arange(d)
                hess[:, idx, idx] += diag
                hess /= N[:, None, None]
    else:
        G = np.vstack([np.eye(d), -np.eye(d)]) if code == 2 else np.asarray(gens, dtype=float)
        Z = V @ G.T / mu
        m = Z.shape[1]
        top = Z.argmax(axis=1)
        zmax = Z[np.arange(n), top]
        E = np.exp(Z - zmax[:, None])
        S = E.sum(axis=1)
        pi = E / S[:, None]
        val = mu * (zmax + np.log(S)) - mu * np.log(m)
        # gradient written relative to the dominant generator so that the
        # centred differences below keep full precision when pi is nearly one-hot
        Gtop = G[top]
        D = G[None, :, :] - Gtop[:, None, :]
        shift = np.einsum("nk,nki->ni", pi, D)
        grad = Gtop + shift
        hess = None
        if order >= 2:
            C = D - shift[:, None, :]
            hess = np.einsum("nk,nki,nkj->nij", pi, C, C) / mu
    val = scale * val
    grad = scale * grad
    if hess is not None:
        hess = scale * hess
    return val, grad, hess


def _regularised_solve(H, B):
    """Solve ``H x = B`` for a stack of small SPD matrices with a tiny ridge."""
    vec = B.ndim == 2
    Bm = B[..., None] if vec else B
    m = H.shape[-1]
    tr = np.abs(np.trace(H, axis1=1, axis2=2)) / m
    eye = np.eye(m)
    tau = 1e-13 * tr + 1e-300
    for _ in range(8):
        try:
            L = np.linalg.cholesky(H + tau[:, None, None] * eye)
        except np.linalg.LinAlgError:
            tau = tau * 100.0 + 1e-16 * (1.0 + tr)
            continue
        out = np.linalg.solve(np.swapaxes(L, 1, 2), np.linalg.solve(L, Bm))
        return out[..., 0] if vec else out
    out = np.linalg.pinv(H, hermitian=True) @ Bm
    return out[..., 0] if vec else out


class _Problem:
    """Batched gate objective in tangent coordinates.

    Leg vectors are formed as ``(Y0 - X) + U t`` so that a first leg of length
    ~mu is not swamped by the rounding of absolute coordinates. With a
    hyperplane leg the variables are ``(t, s)`` where ``y1 = Y0 + U t`` and
    ``y1 - y2 = U s``; carrying ``s`` directly keeps a vanishing hyperplane leg
    (coincident gates) as accurate as a vanishing first leg.
    """

    def __init__(self, leg1, leg2, legh, U, y0, X, Q, mu):
        self.leg1, self.leg2, self.legh = leg1, leg2, legh
        self.U, self.mu = U, mu
        self.D1 = y0 - X
        self.D2 = y0 - Q
        self.m = U.shape[1]

    def value(self, T, rows):
        U, m = self.U, self.m
        S1 = T[:, :m] @ U.T
        f = norm_smooth(self.leg1, self.D1[rows] + S1, self.mu, 0)[0]
        if self.legh is None:
            return f + norm_smooth(self.leg2, self.D2[rows] + S1, self.mu, 0)[0]
        Sh = T[:, m:] @ U.T
        f += norm_smooth(self.legh, Sh, self.mu, 0)[0]
        return f + norm_smooth(self.leg2, self.D2[rows] + (S1 - Sh), self.mu, 0)[0]

    def full(self, T, rows):
        U, m = self.U, self.m
        S1 = T[:, :m] @ U.T
        f1, g1, H1 = norm_smooth(self.leg1, self.D1[rows] + S1, self.mu)
        if self.legh is None:
            f2, g2, H2 = norm_smooth(self.leg2, self.D2[rows] + S1, self.mu)
            grad = (g1 + g2) @ U
            G = np.einsum("ia,nij,jb->nab", U, H1 + H2, U)
            return f1 + f2, grad, G, g1, H1, np.einsum("ia,nij,jb->nab", U, H2, U)
        Sh = T[:, m:] @ U.T
        fh, gh, Hh = norm_smooth(self.legh, Sh, self.mu)
        f2, g2, H2 = norm_smooth(self.leg2, self.D2[rows] + (S1 - Sh), self.mu)
        grad = np.concatenate([(g1 + g2) @ U, (gh - g2) @ U], axis=1)
        UH2U = np.einsum("ia,nij,jb->nab", U, H2, U)
        UHhU = np.einsum("ia,nij,jb->nab", U, Hh, U)
        G = np.empty((len(rows), 2 * m, 2 * m))
        G[:, :m, :m] = np.einsum("ia,nij,jb->nab", U, H1, U) + UH2U
        G[:, m:, m:] = UHhU + UH2U
        G[:, :m, m:] = -UH2U
        G[:, m:, :m] = -UH2U
        return f1 + fh + f2, grad, G, g1, H1, UHhU


def _swap_coords(T, m):
    """``(t1, t2) <-> (t1, t1 - t2)``; the map is its own inverse."""
    out = T.copy()
    out[:, m:] = T[:, :m] - T[:, m:]
    return out


def solve_gates(leg1, leg2, legh, U, y0, X, Q, T, mu, tol, maxit, sens=True):
    """Damped Newton on every row of a batch of gate problems.

    Row ``i`` minimises ``phi1(y - X_i) + phi2(y - Q_i)`` over ``y = Y0_i + U t``
    (single gate), or ``phi1(y1 - X_i) + phih(y1 - y2) + phi2(y2 - Q_i)`` over
    two tangent vectors when ``legh`` is given. ``Y0`` holds one anchor on the
    hyperplane per row (anchoring at the foot of ``X_i`` keeps short first legs
    accurate). Returns the optimal tangent
    coordinates, smoothed values, the gradient and reduced Hessian of the
    optimal value with respect to ``X_i``, iteration counts and convergence flags.
    With ``sens=False`` the gradient and Hessian are left as zeros.
    """
    U = np.ascontiguousarray(U, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    y0 = np.ascontiguousarray(np.broadcast_to(np.asarray(y0, dtype=float), X.shape))
    Q = np.ascontiguousarray(Q, dtype=float)
    T = np.array(T, dtype=float, copy=True)
    n, d = X.shape
    m = U.shape[1]
    prob = _Problem(leg1, leg2, legh, U, y0, X, Q, mu)
    if legh is not None:
        T = _swap_coords(T, m)
    iters = np.zeros(n, dtype=np.int64)
    conv = np.zeros(n, dtype=bool)
    active = np.arange(n)
    val = np.zeros(n)
    gscale = leg1[2] + leg2[2] + (0.0 if legh is None else legh[2])
    for _ in range(maxit):
        if active.size == 0:
            break
        Ta = T[active]
        f, g, G, *_ = prob.full(Ta, active)
        step = -_regularised_solve(G, g)
        dec = -(g * step).sum(axis=1)
        # the decrement alone is not enough: with curvature ~1/mu it underflows
        # while the gradient (which feeds the envelope gradient) is still large
        small = (dec <= 2.0 * tol * (1.0 + np.abs(f))) & (np.abs(g).max(axis=1) <= GTOL * gscale)
        bad = ~(dec >= 0) | ~np.isfinite(dec)
        if np.any(bad):
            step[bad] = -g[bad]
            dec[bad] = (g[bad] ** 2).sum(axis=1)
        s = np.ones(active.size)
        fnew = prob.value(Ta + step, active)
        # inside the quadratic region the decrease drops below the rounding of
        # f; the full Newton step is then taken as long as f does not grow
        near = dec <= STALL_DEC * (1.0 + np.abs(f))
        ok = (fnew <= f - ARMIJO * s * dec) | (near & (fnew <= f + ROUND * (1.0 + np.abs(f))))
        for _h in range(MAX_HALVINGS):
            if ok.all():
                break
            nz = np.flatnonzero(~ok)
            s[nz] *= 0.5
            fnew[nz] = prob.value(Ta[nz] + s[nz, None] * step[nz], active[nz])
            ok[nz] = fnew[nz] <= f[nz] - ARMIJO * s[nz] * dec[nz]
        iters[active] += 1
        T[active[ok]] = Ta[ok] + s[ok, None] * step[ok]
        val[active] = np.where(ok, fnew, f)
        stalled = ~ok
        done = small | (stalled & (dec <= STALL_DEC * (1.0 + np.abs(f))))
        conv[active[done]] = True
        active = active[~(done | stalled)]
    rows = np.arange(n)
    T_out = T if legh is None else _swap_coords(T, m)
    if not sens:
        return T_out, prob.value(T, rows), np.zeros((n, d)), np.zeros((n, d, d)), iters, conv
    # sensitivities at the final point
    val, g, G, g1, H1, C = prob.full(T, rows)
    HU = H1 @ U
    rhs = np.zeros((n, G.shape[1], d))
    rhs[:, :m, :] = np.swapaxes(HU, 1, 2)
    K = _regularised_solve(G, rhs)
    # Reduced Hessian H1 - H1 U K1. Its tangential rows equal C K1 (single gate,
    # C = U'H2U) or C Ks (transit, C = U'HhU, Ks the sensitivity of s); that
    # form avoids the cancellation between two large terms when the first leg
    # is nearly zero.
    K1 = K[:, :m, :]
    Kt = K1 if legh is None else K[:, m:, :]
    tang = C @ Kt
    full = H1 - HU @ K1
    nrm = np.eye(d) - U @ U.T
    hxx = nrm @ full + U @ tang
    hxx = 0.5 * (hxx + np.swapaxes(hxx, 1, 2))
    return T_out, val, -g1, hxx, iters, conv
