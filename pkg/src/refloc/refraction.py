"""Shortest weighted paths across the hyperplane.

A path from ``a`` (side A) to ``b`` (side B) either crosses the hyperplane at a
single gate, or, when the hyperplane carries its own norm, enters it at one gate
and leaves at another. Gates are found by damped Newton in tangent coordinates
on smoothed norms, tracking the smoothing parameter down to a tiny floor; all
reported lengths are recomputed with the exact norms at the returned gates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import kernels
from .geometry import DemandPoint, Hyperplane, Side, project_lp, projection_face, side_of
from .norms import (Hull, LqBall, NormSpec, Singleton, norm_eval, subgradient)

MU_FLOOR = 1e-12
MU_START = 1e-2
MU_FACTOR = 1e-2
NEWTON_TOL = 1e-15


class RefractionError(ValueError):
    pass


def mu_schedule(length_scale: float, mu_min: float | None = None):
    """Decreasing smoothing levels from ``1e-2 L`` to ``mu_min`` (default ``1e-12 L``)."""
    L = max(1.0, float(length_scale))
    floor = MU_FLOOR * L if mu_min is None else mu_min
    mus = []
    mu = MU_START * L
    while mu > floor:
        mus.append(mu)
        mu *= MU_FACTOR
    mus.append(floor)
    return mus


class GateBatch:
    """Batched gate solves for many (origin, destination) pairs sharing legs.

    ``norm_x`` measures the leg that starts at the origin ``X_i``, ``norm_q`` the
    leg that ends at ``Q_i``; ``norm_h`` (optional) the leg along the hyperplane.
    Scales are multiplied by ``w_x``, ``w_q`` and ``w_h`` so that the kernel sees
    the weighted path.
    """

    def __init__(self, h: Hyperplane, norm_x: NormSpec, norm_q: NormSpec,
                 norm_h: NormSpec | None = None, w_x: float = 1.0, w_q: float = 1.0,
                 w_h: float = 1.0, backend: str | None = None):
        self.h = h
        self.d = h.dim
        self.norm_x, self.norm_q, self.norm_h = norm_x, norm_q, norm_h
        self.leg_x = norm_x.kernel_leg(self.d, w_x)
        self.leg_q = norm_q.kernel_leg(self.d, w_q)
        self.leg_h = None if norm_h is None else norm_h.kernel_leg(self.d, w_h)
        self.w = (w_x, w_q, w_h)
        self.U = h.tangent_basis()
        self.m = self.U.shape[1]
        self.backend = backend

    @property
    def transit(self) -> bool:
        return self.leg_h is not None

    def anchors(self, X) -> np.ndarray:
        """Euclidean feet of the rows of ``X`` on the hyperplane (tangent origins)."""
        X = np.atleast_2d(np.asarray(X, float))
        a = self.h.alpha
        return X - np.outer(self.h.signed(X), a / float(a @ a))

    def to_tangent(self, Y, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(Y, float)) - self.anchors(X)) @ self.U

    def from_tangent(self, T, X) -> np.ndarray:
        return self.anchors(X) + np.atleast_2d(np.asarray(T, float)) @ self.U.T

    def gates(self, T, X):
        T = np.atleast_2d(T)
        Y1 = self.from_tangent(T[:, : self.m], X)
        Y2 = self.from_tangent(T[:, self.m:], X) if self.transit else Y1
        return Y1, Y2

    def reanchor(self, T, X_old, X_new) -> np.ndarray:
        """Express tangent coordinates relative to the anchors of ``X_new``."""
        shift = (self.anchors(X_old) - self.anchors(X_new)) @ self.U
        if self.transit:
            shift = np.hstack([shift, shift])
        return T + shift

    def crossing_start(self, X, Q) -> np.ndarray:
        """Tangent coordinates where the straight segment X-Q meets the hyperplane."""
        X = np.atleast_2d(X)
        Q = np.atleast_2d(Q)
        sx = self.h.signed(X)
        sq = self.h.signed(Q)
        den = sx - sq
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(np.abs(den) > 0, sx / den, 0.5)
        theta = np.clip(np.nan_to_num(theta, nan=0.5), 0.0, 1.0)
        Y = X + theta[:, None] * (Q - X)
        t = self.to_tangent(Y, X)
        return np.hstack([t, t]) if self.transit else t

    def solve(self, X, Q, T=None, mu=None, length_scale=None, tol=NEWTON_TOL, maxit=100):
        """Solve all rows; ``mu`` is one level or a decreasing list of levels."""
        X = np.atleast_2d(np.asarray(X, float))
        Q = np.atleast_2d(np.asarray(Q, float))
        if X.shape[0] == 1 and Q.shape[0] > 1:
            X = np.repeat(X, Q.shape[0], axis=0)
        if T is None:
            T = self.crossing_start(X, Q)
        if mu is None:
            L = length_scale if length_scale is not None else 1.0 + float(np.abs(X - Q).max(initial=0.0))
            mu = mu_schedule(L)
        mus = [mu] if np.ndim(mu) == 0 else list(mu)
        total_it = np.zeros(X.shape[0], dtype=np.int64)
        Y0 = self.anchors(X)
        for k, level in enumerate(mus):
            T, val, gx, hxx, it, conv = kernels.solve_gates(
                self.leg_x, self.leg_q, self.leg_h, self.U, Y0, X, Q, T, level, tol, maxit,
                backend=self.backend, sens=k == len(mus) - 1)
            total_it += it
        return T, val, gx, hxx, total_it, conv

    def exact_legs(self, X, Q, T) -> np.ndarray:
        """Weighted exact leg lengths, shape (n, 2) or (n, 3)."""
        X = np.atleast_2d(X)
        Q = np.atleast_2d(Q)
        Y1, Y2 = self.gates(T, X)
        wx, wq, wh = self.w
        lx = wx * norm_eval(self.norm_x, Y1 - X)
        lq = wq * norm_eval(self.norm_q, Y2 - Q)
        if not self.transit:
            return np.column_stack([lx, lq])
        lh = wh * norm_eval(self.norm_h, Y1 - Y2)
        return np.column_stack([lx, lh, lq])


# --- single queries --------------------------------------------------------


@dataclass
class PathQuery:
    """Shortest-path request from ``a`` (side A) to ``b`` (side B).

    Leg weights are ``a.weight`` and ``b.weight``; the weight of the hyperplane leg
    is ``norm_h.scale * weight_h``.
    """

    a: DemandPoint
    b: DemandPoint
    hyperplane: Hyperplane
    norm_a: NormSpec
    norm_b: NormSpec
    norm_h: NormSpec | None = None
    weight_h: float = 1.0

    def __post_init__(self):
        if not isinstance(self.a, DemandPoint):
            self.a = DemandPoint(self.a)
        if not isinstance(self.b, DemandPoint):
            self.b = DemandPoint(self.b)
        if self.weight_h < 0 or not math.isfinite(self.weight_h):
            raise RefractionError("weight_h must be a nonnegative finite number")

    def validate(self):
        h = self.hyperplane
        if self.a.coords.size != h.dim or self.b.coords.size != h.dim:
            raise RefractionError("point dimension does not match the hyperplane")
        sa, sb = side_of(h, self.a.coords), side_of(h, self.b.coords)
        if sa == sb and sa != Side.ON:
            raise RefractionError(f"same side: both points lie strictly in H_{sa}")
        if sa == Side.B or sb == Side.A:
            raise RefractionError("point a must lie in H_A and b in H_B (or on H)")
        if np.array_equal(self.a.coords, self.b.coords):
            raise RefractionError("a and b coincide")


@dataclass
class PathResult:
    gates: list
    leg_lengths: list
    total: float
    snell_residual: float
    iterations: int
    converged: bool
    smoothed_total: float = field(default=math.nan, repr=False)


def _batch_for(q: PathQuery, transit: bool, backend=None) -> GateBatch:
    norm_h = q.norm_h if transit else None
    return GateBatch(q.hyperplane, q.norm_a, q.norm_b, norm_h, q.a.weight, q.b.weight,
                     q.weight_h, backend=backend)


def gate_single(q: PathQuery, residual: bool = True, backend: str | None = None) -> PathResult:
    """Best single crossing point between ``q.a`` and ``q.b``."""
    q.validate()
    gb = _batch_for(q, False, backend)
    a, b = q.a.coords[None, :], q.b.coords[None, :]
    T, val, _, _, it, conv = gb.solve(a, b)
    legs = gb.exact_legs(a, b, T)[0]
    gate = gb.gates(T, a)[0][0]
    gates = [gate]
    res = snell_residual(q, gates) if residual else math.nan
    return PathResult(gates, legs.tolist(), float(legs.sum()), res, int(it[0]), bool(conv[0]),
                      float(val[0]))


def gate_transit(q: PathQuery, residual: bool = True, backend: str | None = None) -> PathResult:
    """Best entry/exit pair when travel along the hyperplane is allowed."""
    if q.norm_h is None:
        raise RefractionError("gate_transit needs a hyperplane norm")
    q.validate()
    single = gate_single(q, residual=False, backend=backend)
    gb = _batch_for(q, True, backend)
    a, b = q.a.coords[None, :], q.b.coords[None, :]
    t0 = gb.to_tangent(single.gates[0][None, :], a)
    T, val, _, _, it, conv = gb.solve(a, b, T=np.hstack([t0, t0]))
    legs = gb.exact_legs(a, b, T)[0]
    Y1, Y2 = gb.gates(T, a)
    gates = [Y1[0], Y2[0]]
    total = float(legs.sum())
    if single.total < total:
        # the coincident pair is feasible for the transit problem
        g = single.gates[0]
        gates = [g, g.copy()]
        legs = np.array([single.leg_lengths[0], 0.0, single.leg_lengths[1]])
        total = float(legs.sum())
    res = snell_residual(q, gates) if residual else math.nan
    return PathResult(gates, legs.tolist(), total, res, int(it[0]) + single.iterations,
                      bool(conv[0]), float(val[0]))


def refracted_distance(q: PathQuery) -> float:
    return (gate_transit(q, residual=False) if q.norm_h is not None
            else gate_single(q, residual=False)).total


# --- optimality certificates ------------------------------------------------


def _pairwise_violation(alpha: np.ndarray, c: np.ndarray) -> float:
    """Largest violation of ``c`` being parallel to ``alpha`` in the componentwise form."""
    zero = alpha == 0.0
    worst = float(np.abs(c[zero]).max(initial=0.0))
    nz = ~zero
    if nz.sum() >= 2:
        ratios = c[nz] / alpha[nz]
        worst = max(worst, float(ratios.max() - ratios.min()))
    return worst


def _point_tol(q: PathQuery) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(q.a.coords - q.b.coords)))


def _sub(spec: NormSpec, v: np.ndarray, weight: float, tol: float):
    if float(np.abs(v).max()) <= tol:
        v = np.zeros_like(v)
    return subgradient(spec.with_scale(spec.scale * weight), v)


def snell_residual(q: PathQuery, gates) -> float:
    """Violation of the first-order conditions at the given gate(s).

    With smooth norms away from coincidences this is the largest componentwise
    mismatch ``|c_i/alpha_i - c_j/alpha_j|`` (and ``|c_j|`` where ``alpha_j = 0``)
    of the weighted gradient sums. Otherwise the subdifferential inclusions are
    tested and the Euclidean distance of the best subgradient combination from
    ``span(alpha)`` is returned.
    """
    h = q.hyperplane
    tol = max(h.default_tol, 1e-7 * (1.0 + float(np.abs(h.beta))))
    for g in gates:
        if abs(float(h.signed(g))) > tol * 1e3:
            raise RefractionError("gate is not on the hyperplane")
    ptol = _point_tol(q)
    a, b = q.a.coords, q.b.coords
    if len(gates) == 1:
        y = np.asarray(gates[0], float)
        sets = [_sub(q.norm_a, y - a, q.a.weight, ptol), _sub(q.norm_b, y - b, q.b.weight, ptol)]
        if all(isinstance(s, Singleton) for s in sets):
            return _pairwise_violation(h.alpha, sets[0].point + sets[1].point)
        return _inclusion_distance(h.alpha, [sets])
    y1, y2 = (np.asarray(g, float) for g in gates)
    sa = _sub(q.norm_a, y1 - a, q.a.weight, ptol)
    sh = _sub(q.norm_h, y1 - y2, q.weight_h, ptol)
    sb = _sub(q.norm_b, y2 - b, q.b.weight, ptol)
    if all(isinstance(s, Singleton) for s in (sa, sh, sb)):
        return max(_pairwise_violation(h.alpha, sa.point + sh.point),
                   _pairwise_violation(h.alpha, sb.point - sh.point))
    return _inclusion_distance(h.alpha, [[sa, sh], [sb, _Negated(sh)]])


@dataclass(frozen=True)
class _Negated:
    """``-S`` sharing the variable of ``S`` (used for the hyperplane leg)."""

    base: object


def _inclusion_distance(alpha, conditions, iters: int = 3000) -> float:
    """min over subgradients of max_k ||P(sum of condition k)||, P = projector onto alpha-perp.

    Variables shared between conditions (the hyperplane leg) are tied. Solved
    by accelerated projected gradient on the sum of squares.
    """
    a = alpha / np.linalg.norm(alpha)

    def P(v):
        return v - (v @ a) * a

    sets = []
    index = []
    for cond in conditions:
        row = []
        for s in cond:
            sign = 1.0
            if isinstance(s, _Negated):
                s, sign = s.base, -1.0
            for k, t in enumerate(sets):
                if t is s:
                    break
            else:
                sets.append(s)
                k = len(sets) - 1
            row.append((k, sign))
        index.append(row)
    z = [s.element() if not isinstance(s, Singleton) else s.point.copy() for s in sets]
    z = [s.project(v) for s, v in zip(sets, z)]
    y = [v.copy() for v in z]
    t = 1.0
    lip = float(sum(len(r) for r in index))

    def residuals(vars_):
        return [P(sum(sign * vars_[k] for k, sign in row)) for row in index]

    for _ in range(iters):
        r = residuals(y)
        grad = [np.zeros_like(v) for v in y]
        for row, rv in zip(index, r):
            for k, sign in row:
                grad[k] += sign * rv
        znew = [s.project(v - g / lip) for s, v, g in zip(sets, y, grad)]
        tnew = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = [zn + ((t - 1) / tnew) * (zn - zo) for zn, zo in zip(znew, z)]
        z, t = znew, tnew
        if max(float(np.linalg.norm(v)) for v in residuals(z)) < 1e-14:
            break
    return max(float(np.linalg.norm(v)) for v in residuals(z))


# --- rapid transit check ------------------------------------------------------


@dataclass
class RetmReport:
    holds: bool
    witness: np.ndarray | None = None
    condition: int | None = None
    violation: float = 0.0
    samples: int = 0

    def __bool__(self) -> bool:
        return self.holds


def _min_over_face(norm_h: NormSpec, X: np.ndarray, face: np.ndarray) -> np.ndarray:
    """min over conv(face) of norm_h(x - y) for each row x (exact for 1 or 2 vertices)."""
    if len(face) == 1:
        return norm_eval(norm_h, X - face[0])
    best = np.min([norm_eval(norm_h, X - v) for v in face], axis=0)
    for i in range(len(face)):
        for j in range(i + 1, len(face)):
            lo = np.zeros(len(X))
            hi = np.ones(len(X))
            p, r = face[i], face[j]
            for _ in range(80):  # ternary search on a convex function
                m1 = lo + (hi - lo) / 3
                m2 = hi - (hi - lo) / 3
                f1 = norm_eval(norm_h, X - (p + m1[:, None] * (r - p)))
                f2 = norm_eval(norm_h, X - (p + m2[:, None] * (r - p)))
                left = f1 <= f2
                hi = np.where(left, m2, hi)
                lo = np.where(left, lo, m1)
            s = 0.5 * (lo + hi)
            best = np.minimum(best, norm_eval(norm_h, X - (p + s[:, None] * (r - p))))
    return best


def retm_check(a, b, h: Hyperplane, norms, samples: int = 10_000, rtol: float = 1e-9) -> RetmReport:
    """Sampled falsifier of the rapid-enough-transit condition for one pair.

    ``norms`` is ``(norm_a, norm_b, norm_h)``. Both inequalities are checked on a
    deterministic Halton sample of hyperplane points covering the projections of
    ``a`` and ``b`` with margin ``||a - b||_2 + 1``. When the projection is a
    face (l1), the hyperplane leg is measured to the nearest point of the face.
    A ``holds`` answer means no counterexample was found.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    a = a if isinstance(a, DemandPoint) else DemandPoint(a)
    b = b if isinstance(b, DemandPoint) else DemandPoint(b)
    norm_a, norm_b, norm_h = norms
    U, y0 = h.tangent_basis(), h.anchor()
    m = U.shape[1]
    face_a = projection_face(h, a.coords, norm_a)
    face_b = projection_face(h, b.coords, norm_b)
    anchors = np.vstack([face_a, face_b]) - y0
    tc = anchors @ U
    margin = float(np.linalg.norm(a.coords - b.coords)) + 1.0
    lo, hi = tc.min(axis=0) - margin, tc.max(axis=0) + margin
    if m == 0:
        pts = np.zeros((1, 0))
    else:
        pts = qmc.Halton(d=m, scramble=False).random(samples)
    X = y0 + (lo + pts * (hi - lo)) @ U.T
    for cond, (pt, spec, face) in enumerate(((a, norm_a, face_a), (b, norm_b, face_b)), start=1):
        dist = pt.weight * norm_eval(spec, pt.coords - face[0])
        lhs = dist + _min_over_face(norm_h, X, face)
        rhs = pt.weight * norm_eval(spec, X - pt.coords)
        viol = lhs - rhs
        bad = viol > rtol * (1.0 + np.abs(rhs))
        if np.any(bad):
            k = int(np.argmax(viol))
            return RetmReport(False, X[k], cond, float(viol[k]), len(X))
    return RetmReport(True, samples=len(X))


# --- reduction rules ------------------------------------------------------------


@dataclass(frozen=True)
class ReductionReport:
    single_gate: bool
    may_use_segment: bool
    pt_equals_p: bool
    classification: str


def _speed_key(spec: NormSpec):
    if spec.kind in ("lp", "l1", "linf"):
        return spec.p
    return None


def _dominates(fast: NormSpec, slow: NormSpec, dim: int | None) -> bool | None:
    """True if ``fast(v) <= slow(v)`` for every ``v``; None when undecidable here."""
    pf, ps = _speed_key(fast), _speed_key(slow)
    if pf is None or ps is None:
        return None
    if dim is None:
        if pf >= ps and fast.scale <= slow.scale:
            return True
        if pf <= ps and fast.scale >= slow.scale and (pf, fast.scale) != (ps, slow.scale):
            return False
        return None
    # sup_v ||v||_pf / ||v||_ps
    const = 1.0 if pf >= ps else dim ** (1.0 / pf - 1.0 / ps)
    return fast.scale * const <= slow.scale * (1.0 + 1e-15)


def reduction_applies(norms, dim: int | None = None) -> ReductionReport:
    """Which structural shortcuts are guaranteed for ``(norm_a, norm_b, norm_h)``.

    ``single_gate``: some side norm is everywhere no larger than the hyperplane
    norm, so shortest paths cross at one point. ``may_use_segment``: the
    hyperplane norm is no larger than both side norms. ``pt_equals_p``: the
    ordered condition ``p_A >= p_B >= p_H`` holds (with non-opposing scales).
    With ``dim`` the comparisons use the exact norm-equivalence constants.
    """
    na, nb, nh = norms
    if any(_speed_key(s) is None for s in norms):
        return ReductionReport(False, False, False, "unknown")
    da, db = _dominates(na, nh, dim), _dominates(nb, nh, dim)
    ha, hb = _dominates(nh, na, dim), _dominates(nh, nb, dim)
    single = bool(da) or bool(db)
    segment = bool(ha) and bool(hb)
    ordered = (na.p >= nb.p >= nh.p) and bool(_dominates(nb, nh, dim)) and bool(_dominates(na, nb, dim))
    if single and segment:
        cls = "single_gate+may_use_segment"
    elif single:
        cls = "single_gate"
    elif segment:
        cls = "may_use_segment"
    elif None in (da, db, ha, hb):
        cls = "unknown"
    else:
        cls = "none"
    return ReductionReport(single, segment, ordered, cls)


__all__ = [
    "GateBatch", "PathQuery", "PathResult", "RefractionError", "ReductionReport", "RetmReport",
    "gate_single", "gate_transit", "mu_schedule", "reduction_applies", "refracted_distance",
    "retm_check", "snell_residual",
]
