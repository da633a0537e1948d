# cython: language_level=3
"""Compiled gate kernels.

Row-by-row transcription of :mod:`refloc._kernels_py`: the same smoothing, the
same damped Newton iteration with its stopping rules, and the same
sensitivities. Each batch runs without the GIL, so the thread pool in
:mod:`refloc.kernels` can split a batch across cores.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, exp, log, fabs, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

cnp.import_array()

cdef double ARMIJO = 1e-4
cdef int MAX_HALVINGS = 60
cdef double STALL_DEC = 1e-8
cdef double GTOL = 1e-11
cdef double ROUND = 8 * 2.220446049250313e-16


cdef struct Leg:
    int code
    double p
    double scale
    double droot   # d ** (1/p), the offset that keeps the smoothed lp value below the norm
    double* G      # generators, ng x d row-major (linf and polyhedral)
    int ng


cdef double leg_eval(Leg* L, const double* v, int d, double mu, int order,
                     double* g, double* H, double* work) noexcept nogil:
    """Smoothed norm of ``v``; writes the gradient to ``g`` and, if ``order >= 2``, the Hessian to ``H``.

    ``work`` needs room for ``max(d, ng) + d`` doubles.
    """
    cdef int j, k, q, top
    cdef double val, wm, N, p = L.p, s, zmax, S, pk, c_j, c_k
    cdef double* w = work
    cdef double* t
    if L.code == 0 or L.code == 1:
        wm = 0.0
        for j in range(d):
            w[j] = sqrt(v[j] * v[j] + mu * mu)
            if w[j] > wm:
                wm = w[j]
        if L.code == 1:
            val = -d * mu
            for j in range(d):
                val += w[j]
                g[j] = v[j] / w[j]
            if order >= 2:
                memset(H, 0, d * d * sizeof(double))
                for j in range(d):
                    H[j * d + j] = mu * mu / (w[j] * w[j] * w[j])
        else:
            # t_j = (w_j / wm)^p; every other power of w_j / N follows from it
            t = w + d
            s = 0.0
            for j in range(d):
                t[j] = pow(w[j] / wm, p)
                s += t[j]
            N = wm * pow(s, 1.0 / p)
            val = N - L.droot * mu
            for j in range(d):
                t[j] = t[j] / s * N / w[j]        # (w_j / N)^(p - 1)
                g[j] = t[j] * v[j] / w[j]
            if order >= 2:
                for j in range(d):
                    for k in range(d):
                        H[j * d + k] = (1.0 - p) * g[j] * g[k]
                    H[j * d + j] += t[j] * N / w[j] * ((p - 1.0) * v[j] * v[j] + mu * mu) / (w[j] * w[j])
                for j in range(d * d):
                    H[j] /= N
    else:
        # z_k = G_k . v / mu, kept in work[0:ng]; shift vector in work[ng:ng+d]
        top = 0
        zmax = -1e308
        for k in range(L.ng):
            s = 0.0
            for j in range(d):
                s += L.G[k * d + j] * v[j]
            w[k] = s / mu
            if w[k] > zmax:
                zmax = w[k]
                top = k
        S = 0.0
        for k in range(L.ng):
            w[k] = exp(w[k] - zmax)
            S += w[k]
        for k in range(L.ng):
            w[k] /= S
        val = mu * (zmax + log(S)) - mu * log(<double>L.ng)
        # gradient relative to the dominant generator (see the numpy version)
        for j in range(d):
            s = 0.0
            for k in range(L.ng):
                s += w[k] * (L.G[k * d + j] - L.G[top * d + j])
            w[L.ng + j] = s
            g[j] = L.G[top * d + j] + s
        if order >= 2:
            memset(H, 0, d * d * sizeof(double))
            for k in range(L.ng):
                pk = w[k]
                if pk == 0.0:
                    continue
                for j in range(d):
                    c_j = L.G[k * d + j] - L.G[top * d + j] - w[L.ng + j]
                    for q in range(d):
                        c_k = L.G[k * d + q] - L.G[top * d + q] - w[L.ng + q]
                        H[j * d + q] += pk * c_j * c_k
            for j in range(d * d):
                H[j] /= mu
    val *= L.scale
    for j in range(d):
        g[j] *= L.scale
    if order >= 2:
        for j in range(d * d):
            H[j] *= L.scale
    return val


cdef int chol_solve(const double* A, int n, double* B, int nrhs, double* L) noexcept nogil:
    """Solve ``A X = B`` in place (``B`` is n x nrhs) with a small growing ridge. Returns 0 on success."""
    cdef int i, j, k, attempt, r
    cdef double tr = 0.0, tau, s
    cdef bint okay
    for i in range(n):
        tr += A[i * n + i]
    tr = fabs(tr) / n
    tau = 1e-13 * tr + 1e-300
    for attempt in range(8):
        okay = True
        for i in range(n):
            for j in range(i + 1):
                s = A[i * n + j]
                if i == j:
                    s += tau
                for k in range(j):
                    s -= L[i * n + k] * L[j * n + k]
                if i == j:
                    if not (s > 0.0) or not isfinite(s):
                        okay = False
                        break
                    L[i * n + i] = sqrt(s)
                else:
                    L[i * n + j] = s / L[j * n + j]
            if not okay:
                break
        if okay:
            for r in range(nrhs):
                for i in range(n):
                    s = B[i * nrhs + r]
                    for k in range(i):
                        s -= L[i * n + k] * B[k * nrhs + r]
                    B[i * nrhs + r] = s / L[i * n + i]
                for i in range(n - 1, -1, -1):
                    s = B[i * nrhs + r]
                    for k in range(i + 1, n):
                        s -= L[k * n + i] * B[k * nrhs + r]
                    B[i * nrhs + r] = s / L[i * n + i]
            return 0
        tau = tau * 100.0 + 1e-16 * (1.0 + tr)
    return 1


cdef struct Ctx:
    Leg* l1
    Leg* l2
    Leg* lh
    bint transit
    const double* U     # d x m
    int d
    int m
    double mu
    double* v           # d
    double* gtmp        # d
    double* work
    double* g1
    double* g2
    double* gh
    double* H1
    double* H2
    double* Hh


cdef void tangent_to(Ctx* c, const double* base, const double* t, double* out) noexcept nogil:
    cdef int j, a
    cdef double s
    for j in range(c.d):
        s = 0.0
        for a in range(c.m):
            s += c.U[j * c.m + a] * t[a]
        out[j] = base[j] + s


cdef double prob_value(Ctx* c, const double* D1, const double* D2, const double* t) noexcept nogil:
    """Smoothed objective; with a hyperplane leg ``t`` holds ``(t1, s)`` with ``y1 - y2 = U s``."""
    cdef double f
    cdef int j, a
    cdef double s
    tangent_to(c, D1, t, c.v)
    f = leg_eval(c.l1, c.v, c.d, c.mu, 0, c.gtmp, NULL, c.work)
    if not c.transit:
        tangent_to(c, D2, t, c.v)
        return f + leg_eval(c.l2, c.v, c.d, c.mu, 0, c.gtmp, NULL, c.work)
    for j in range(c.d):
        s = 0.0
        for a in range(c.m):
            s += c.U[j * c.m + a] * t[c.m + a]
        c.v[j] = s
    f += leg_eval(c.lh, c.v, c.d, c.mu, 0, c.gtmp, NULL, c.work)
    for j in range(c.d):
        s = 0.0
        for a in range(c.m):
            s += c.U[j * c.m + a] * (t[a] - t[c.m + a])
        c.v[j] = D2[j] + s
    return f + leg_eval(c.l2, c.v, c.d, c.mu, 0, c.gtmp, NULL, c.work)


cdef void project(Ctx* c, const double* H, double* out, int ld, int r0, int c0, double sign, bint add) noexcept nogil:
    """out[r0+a, c0+b] (+)= sign * (U' H U)[a, b] with leading dimension ``ld``."""
    cdef int a, b, i, j
    cdef double s
    for a in range(c.m):
        for b in range(c.m):
            s = 0.0
            for i in range(c.d):
                for j in range(c.d):
                    s += c.U[i * c.m + a] * H[i * c.d + j] * c.U[j * c.m + b]
            if add:
                out[(r0 + a) * ld + c0 + b] += sign * s
            else:
                out[(r0 + a) * ld + c0 + b] = sign * s


cdef double prob_full(Ctx* c, const double* D1, const double* D2, const double* t,
                      double* grad, double* G) noexcept nogil:
    cdef double f
    cdef int j, a, nt
    cdef double s
    cdef int m = c.m
    tangent_to(c, D1, t, c.v)
    f = leg_eval(c.l1, c.v, c.d, c.mu, 2, c.g1, c.H1, c.work)
    if not c.transit:
        tangent_to(c, D2, t, c.v)
        f += leg_eval(c.l2, c.v, c.d, c.mu, 2, c.g2, c.H2, c.work)
        for a in range(m):
            s = 0.0
            for j in range(c.d):
                s += (c.g1[j] + c.g2[j]) * c.U[j * m + a]
            grad[a] = s
        project(c, c.H1, G, m, 0, 0, 1.0, False)
        project(c, c.H2, G, m, 0, 0, 1.0, True)
        return f
    nt = 2 * m
    for j in range(c.d):
        s = 0.0
        for a in range(m):
            s += c.U[j * m + a] * t[m + a]
        c.v[j] = s
    f += leg_eval(c.lh, c.v, c.d, c.mu, 2, c.gh, c.Hh, c.work)
    for j in range(c.d):
        s = 0.0
        for a in range(m):
            s += c.U[j * m + a] * (t[a] - t[m + a])
        c.v[j] = D2[j] + s
    f += leg_eval(c.l2, c.v, c.d, c.mu, 2, c.g2, c.H2, c.work)
    for a in range(m):
        s = 0.0
        for j in range(c.d):
            s += (c.g1[j] + c.g2[j]) * c.U[j * m + a]
        grad[a] = s
        s = 0.0
        for j in range(c.d):
            s += (c.gh[j] - c.g2[j]) * c.U[j * m + a]
        grad[m + a] = s
    project(c, c.H2, G, nt, 0, 0, 1.0, False)
    project(c, c.H2, G, nt, m, m, 1.0, False)
    project(c, c.H2, G, nt, 0, m, -1.0, False)
    project(c, c.H2, G, nt, m, 0, -1.0, False)
    project(c, c.H1, G, nt, 0, 0, 1.0, True)
    project(c, c.Hh, G, nt, m, m, 1.0, True)
    return f


cdef Leg make_leg(object leg, int d, list keep):
    cdef Leg L
    cdef cnp.ndarray[double, ndim=2, mode="c"] G
    code, p, scale, gens = leg
    L.code = int(code)
    L.p = float(p)
    L.scale = float(scale)
    L.droot = (<double>d) ** (1.0 / L.p) if L.code == 0 else 0.0
    if L.code == 2:
        G = np.ascontiguousarray(np.vstack([np.eye(d), -np.eye(d)]), dtype=float)
    elif L.code == 3:
        G = np.ascontiguousarray(gens, dtype=float)
    else:
        G = np.zeros((1, d))
    keep.append(G)
    L.G = &G[0, 0]
    L.ng = G.shape[0] if L.code >= 2 else 0
    return L


def norm_smooth(leg, V, double mu, int order=2):
    """Smoothed value, gradient and (if ``order >= 2``) Hessian, row by row."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] Vc = np.ascontiguousarray(V, dtype=float)
    cdef Py_ssize_t n = Vc.shape[0], i
    cdef int d = Vc.shape[1]
    keep = []
    cdef Leg L = make_leg(leg, d, keep)
    cdef cnp.ndarray[double, ndim=1] val = np.zeros(n)
    cdef cnp.ndarray[double, ndim=2, mode="c"] grad = np.zeros((n, d))
    cdef cnp.ndarray[double, ndim=3, mode="c"] hess = np.zeros((n if order >= 2 else 1, d, d))
    cdef double* work = <double*> malloc((max(d, L.ng) + d + 1) * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                val[i] = leg_eval(&L, &Vc[i, 0], d, mu, order, &grad[i, 0],
                                  &hess[i, 0, 0] if order >= 2 else NULL, work)
    finally:
        free(work)
    return val, grad, (hess if order >= 2 else None)


def solve_gates(leg1, leg2, legh, U, y0, X, Q, T, double mu, double tol, int maxit, bint sens=True):
    """Damped Newton on every row of a batch of gate problems (see the numpy version)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] Uc = np.ascontiguousarray(U, dtype=float)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xc = np.ascontiguousarray(X, dtype=float)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Yc = np.ascontiguousarray(
        np.broadcast_to(np.asarray(y0, dtype=float), np.shape(X)))
    cdef cnp.ndarray[double, ndim=2, mode="c"] Qc = np.ascontiguousarray(Q, dtype=float)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Tc = np.array(T, dtype=float, order="C", copy=True)
    cdef Py_ssize_t n = Xc.shape[0], i
    cdef int d = Xc.shape[1], m = Uc.shape[1]
    cdef bint transit = legh is not None
    cdef int nt = 2 * m if transit else m
    keep = []
    cdef Leg L1 = make_leg(leg1, d, keep)
    cdef Leg L2 = make_leg(leg2, d, keep)
    cdef Leg LH = make_leg(legh if transit else leg1, d, keep)
    cdef double gscale = L1.scale + L2.scale + (LH.scale if transit else 0.0)
    cdef cnp.ndarray[double, ndim=1] val = np.zeros(n)
    cdef cnp.ndarray[double, ndim=2, mode="c"] gx = np.zeros((n, d))
    cdef cnp.ndarray[double, ndim=3, mode="c"] hxx = np.zeros((n, d, d))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] iters = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] conv = np.zeros(n, dtype=np.uint8)
    if n == 0:
        return Tc, val, gx, hxx, iters, conv.astype(bool)
    cdef int ng = max(L1.ng, L2.ng, LH.ng, d)
    cdef int nbuf = 8 * d + 6 * d * d + ng + d + 6 * nt + 3 * nt * nt + 2 * nt * d + 16
    cdef double* buf = <double*> malloc(nbuf * sizeof(double))
    cdef Ctx c
    cdef double* D1
    cdef double* D2
    cdef double* grad
    cdef double* Gm
    cdef double* Lw
    cdef double* step
    cdef double* tn
    cdef double* K
    cdef double* full
    cdef double* tang
    cdef double* t
    cdef double f, fnew, dec, s, gmax, af, acc
    cdef bint small, bad, near, ok
    cdef int it, h, a, b, j, k
    c.l1 = &L1
    c.l2 = &L2
    c.lh = &LH
    c.transit = transit
    c.U = &Uc[0, 0]
    c.d = d
    c.m = m
    c.mu = mu
    c.v = buf
    c.gtmp = buf + d
    c.g1 = buf + 2 * d
    c.g2 = buf + 3 * d
    c.gh = buf + 4 * d
    D1 = buf + 5 * d
    D2 = buf + 6 * d
    c.H1 = buf + 8 * d
    c.H2 = c.H1 + d * d
    c.Hh = c.H2 + d * d
    full = c.Hh + d * d
    tang = full + d * d          # m x d
    c.work = full + 3 * d * d    # ng + d
    grad = c.work + ng + d
    step = grad + nt
    tn = step + nt
    Gm = tn + nt
    Lw = Gm + nt * nt
    K = Lw + nt * nt             # nt x d
    try:
        with nogil:
            for i in range(n):
                t = &Tc[i, 0]
                for j in range(d):
                    D1[j] = Yc[i, j] - Xc[i, j]
                    D2[j] = Yc[i, j] - Qc[i, j]
                if transit:
                    for a in range(m):
                        t[m + a] = t[a] - t[m + a]     # (t1, t2) -> (t1, s)
                for it in range(maxit):
                    f = prob_full(&c, D1, D2, t, grad, Gm)
                    af = 1.0 + fabs(f)
                    for a in range(nt):
                        step[a] = grad[a]
                    bad = chol_solve(Gm, nt, step, 1, Lw) != 0
                    dec = 0.0
                    gmax = 0.0
                    for a in range(nt):
                        step[a] = -step[a]
                        dec -= grad[a] * step[a]
                        if fabs(grad[a]) > gmax:
                            gmax = fabs(grad[a])
                    small = dec <= 2.0 * tol * af and gmax <= GTOL * gscale
                    if bad or not (dec >= 0) or not isfinite(dec):
                        dec = 0.0
                        for a in range(nt):
                            step[a] = -grad[a]
                            dec += grad[a] * grad[a]
                    s = 1.0
                    for a in range(nt):
                        tn[a] = t[a] + step[a]
                    fnew = prob_value(&c, D1, D2, tn)
                    near = dec <= STALL_DEC * af
                    ok = (fnew <= f - ARMIJO * s * dec) or (near and fnew <= f + ROUND * af)
                    h = 0
                    while not ok and h < MAX_HALVINGS:
                        s *= 0.5
                        for a in range(nt):
                            tn[a] = t[a] + s * step[a]
                        fnew = prob_value(&c, D1, D2, tn)
                        ok = fnew <= f - ARMIJO * s * dec
                        h += 1
                    iters[i] += 1
                    if ok:
                        for a in range(nt):
                            t[a] = tn[a]
                    if small or (not ok and near):
                        conv[i] = 1
                        break
                    if not ok:
                        break
                if not sens:
                    val[i] = prob_value(&c, D1, D2, t)
                else:
                    val[i] = prob_full(&c, D1, D2, t, grad, Gm)
                if transit:
                    for a in range(m):
                        t[m + a] = t[a] - t[m + a]     # back to (t1, t2)
                if not sens:
                    continue
                # sensitivities at the final point
                for j in range(d):
                    gx[i, j] = -c.g1[j]
                # rhs rows 0..m-1: (H1 U)^T, remaining rows zero
                memset(K, 0, nt * d * sizeof(double))
                for a in range(m):
                    for j in range(d):
                        acc = 0.0
                        for k in range(d):
                            acc += c.H1[j * d + k] * c.U[k * m + a]
                        K[a * d + j] = acc
                if chol_solve(Gm, nt, K, d, Lw) != 0:
                    memset(K, 0, nt * d * sizeof(double))
                # Kt = K1 (single) or the sensitivity of s (transit)
                if transit:
                    memcpy(tang, K + m * d, m * d * sizeof(double))
                else:
                    memcpy(tang, K, m * d * sizeof(double))
                # full = H1 - (H1 U) K1
                for j in range(d):
                    for k in range(d):
                        acc = c.H1[j * d + k]
                        for a in range(m):
                            s = 0.0
                            for b in range(d):
                                s += c.H1[j * d + b] * c.U[b * m + a]
                            acc -= s * K[a * d + k]
                        full[j * d + k] = acc
                # C = U' H2 U (single) or U' Hh U (transit), written into Lw (m x m)
                project(&c, c.Hh if transit else c.H2, Lw, m, 0, 0, 1.0, False)
                # hxx = (I - U U') full + U (C Kt)
                for a in range(m):
                    for k in range(d):
                        acc = 0.0
                        for b in range(m):
                            acc += Lw[a * m + b] * tang[b * d + k]
                        K[a * d + k] = acc      # reuse as C Kt
                for j in range(d):
                    for k in range(d):
                        acc = full[j * d + k]
                        for b in range(d):
                            s = 0.0
                            for a in range(m):
                                s += c.U[j * m + a] * c.U[b * m + a]
                            acc -= s * full[b * d + k]
                        for a in range(m):
                            acc += c.U[j * m + a] * K[a * d + k]
                        hxx[i, j, k] = acc
                for j in range(d):
                    for k in range(j + 1, d):
                        s = 0.5 * (hxx[i, j, k] + hxx[i, k, j])
                        hxx[i, j, k] = s
                        hxx[i, k, j] = s
    finally:
        free(buf)
    return Tc, val, gx, hxx, iters, conv.astype(bool)
