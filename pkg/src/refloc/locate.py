"""Single-facility location with refracted (and optionally transit) distances.

The problem is split by halfspace. Within the closure of one side the objective
is convex in the facility ``x`` once every cross-side distance is replaced by
its optimal-gate value, so each side is solved by projected Newton on

    F(x) = sum_own w_i phi_own(x - p_i) + sum_other w_j min_gates path_j(x, gates)

where ``phi`` are smoothed norms and the inner minimisations are carried out by
the batched gate kernel. The gradient and Hessian of the inner minima follow
from the envelope theorem and a Schur complement (returned by the kernel).
The smoothing level is driven down geometrically to a floor of ``1e-12 L``.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import DemandPoint, Hyperplane, Side, side_of
from .norms import NormSpec, dual_exponent, dual_norm, norm_eval, subgradient
from .refraction import GateBatch, mu_schedule


class LocateError(RuntimeError):
    pass


class StandingAssumptionWarning(UserWarning):
    pass


@dataclass
class LocationInstance:
    dim: int
    hyperplane: Hyperplane
    norm_a: NormSpec
    norm_b: NormSpec
    points_A: list = field(default_factory=list)
    points_B: list = field(default_factory=list)
    norm_h: NormSpec | None = None
    name: str | None = None

    def __post_init__(self):
        if self.hyperplane.dim != self.dim:
            raise ValueError("hyperplane dimension does not match dim")
        self.points_A = [p if isinstance(p, DemandPoint) else DemandPoint(p) for p in self.points_A]
        self.points_B = [p if isinstance(p, DemandPoint) else DemandPoint(p) for p in self.points_B]
        for label, pts, bad in (("A", self.points_A, Side.B), ("B", self.points_B, Side.A)):
            for i, p in enumerate(pts):
                if p.coords.size != self.dim:
                    raise ValueError(f"point {label}[{i}] has dimension {p.coords.size}, expected {self.dim}")
                if side_of(self.hyperplane, p.coords) == bad:
                    raise ValueError(f"point {label}[{i}] = {p.coords.tolist()} lies strictly in H_{bad}")
        if not self.standing_assumption_holds():
            warnings.warn(f"p_A = {self.norm_a} is not at least p_B = {self.norm_b}; results remain valid "
                          "but side A is not the faster medium", StandingAssumptionWarning, stacklevel=2)

    def standing_assumption_holds(self) -> bool:
        pa, pb = self.norm_a.p, self.norm_b.p
        if math.isnan(pa) or math.isnan(pb):
            return True
        return pa >= pb

    @property
    def coords_A(self) -> np.ndarray:
        return np.array([p.coords for p in self.points_A], dtype=float).reshape(-1, self.dim)

    @property
    def coords_B(self) -> np.ndarray:
        return np.array([p.coords for p in self.points_B], dtype=float).reshape(-1, self.dim)

    @property
    def weights_A(self) -> np.ndarray:
        return np.array([p.weight for p in self.points_A], dtype=float)

    @property
    def weights_B(self) -> np.ndarray:
        return np.array([p.weight for p in self.points_B], dtype=float)

    @property
    def n_points(self) -> int:
        return len(self.points_A) + len(self.points_B)

    def all_coords(self) -> np.ndarray:
        return np.vstack([self.coords_A, self.coords_B])

    def length_scale(self) -> float:
        c = self.all_coords()
        if len(c) == 0:
            return 1.0
        return 1.0 + float(np.ptp(c, axis=0).max()) + float(np.abs(c).max()) * 1e-3


@dataclass
class SideSolution:
    x: np.ndarray
    f: float
    gates: dict
    diagnostics: dict


@dataclass
class LocateResult:
    x_star: np.ndarray
    f_star: float
    side: Side
    per_point_gates: dict
    side_objectives: tuple
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "f_star": float(self.f_star),
            "side": str(self.side),
            "f_A": float(self.side_objectives[0]),
            "f_B": float(self.side_objectives[1]),
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# --- exact objective ------------------------------------------------------------


def _side_data(inst: LocationInstance, side: Side):
    h = inst.hyperplane
    if side == Side.B:
        return (inst.coords_B, inst.weights_B, inst.norm_b,
                inst.coords_A, inst.weights_A, inst.norm_a, -h.alpha, -h.beta, "B", "A")
    return (inst.coords_A, inst.weights_A, inst.norm_a,
            inst.coords_B, inst.weights_B, inst.norm_b, h.alpha, h.beta, "A", "B")


def _cross_paths(inst, side, xs, transit, backend=None, both=True):
    """Exact weighted path lengths from each facility row of ``xs`` to the other side.

    Returns lengths of shape ``(k, n_cross)`` and gates ``(k, n_cross, 2, d)``.
    All facility/point pairs go through one batched gate solve.
    """
    own, own_w, n_own, oth, oth_w, n_oth, *_ = _side_data(inst, side)
    xs = np.atleast_2d(np.asarray(xs, float))
    k, d = xs.shape
    if len(oth) == 0:
        return np.zeros((k, 0)), np.zeros((k, 0, 2, d))
    L = inst.length_scale()
    X = np.repeat(xs, len(oth), axis=0)
    Q = np.tile(oth, (k, 1))
    gb = GateBatch(inst.hyperplane, n_own, n_oth, None, backend=backend)
    T, *_ = gb.solve(X, Q, length_scale=L)
    lengths = gb.exact_legs(X, Q, T).sum(axis=1)
    Y1, _ = gb.gates(T, X)
    gates = np.stack([Y1, Y1], axis=1)
    if transit:
        gt = GateBatch(inst.hyperplane, n_own, n_oth, inst.norm_h, backend=backend)
        Tt, *_ = gt.solve(X, Q, T=np.hstack([T, T]), length_scale=L)
        lt = gt.exact_legs(X, Q, Tt).sum(axis=1)
        if both:
            Tc, *_ = gt.solve(X, Q, length_scale=L)
            lc = gt.exact_legs(X, Q, Tc).sum(axis=1)
            pick = lc < lt
            Tt[pick], lt[pick] = Tc[pick], lc[pick]
        Z1, Z2 = gt.gates(Tt, X)
        better = lt < lengths
        lengths = np.where(better, lt, lengths)
        gates[better] = np.stack([Z1, Z2], axis=1)[better]
    w = np.tile(oth_w, k)
    return (w * lengths).reshape(k, -1), gates.reshape(k, len(oth), 2, d)


def batch_objective(inst: LocationInstance, xs, side: Side | str, transit: bool = False,
                    backend: str | None = None) -> np.ndarray:
    """Exact objective at many facility positions, all measured from ``side``'s closure."""
    side = Side(side)
    xs = np.atleast_2d(np.asarray(xs, float))
    own, own_w, n_own, *_ = _side_data(inst, side)
    vals = np.zeros(len(xs))
    if len(own):
        vals += (own_w[None, :] * norm_eval(n_own, own[None, :, :] - xs[:, None, :])).sum(axis=1)
    cross, _ = _cross_paths(inst, side, xs, transit, backend)
    return vals + cross.sum(axis=1)


def objective_eval(inst: LocationInstance, x, transit: bool = False, side: Side | str | None = None,
                   backend: str | None = None):
    """Exact objective at ``x`` and the gates used for each cross-side point.

    ``side`` forces the closure of one halfspace to be used (points on the
    hyperplane otherwise count as side A).
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if transit and inst.norm_h is None:
        raise ValueError("transit evaluation needs a hyperplane norm")
    if side is None:
        side = Side.B if side_of(inst.hyperplane, x) == Side.B else Side.A
    side = Side(side)
    own, own_w, n_own, oth, oth_w, n_oth, *_, own_lbl, oth_lbl = _side_data(inst, side)
    value = float(np.sum(own_w * norm_eval(n_own, own - x))) if len(own) else 0.0
    cross, gates = _cross_paths(inst, side, x, transit, backend)
    value += float(cross.sum())
    gates = gates[0]
    gate_map = {}
    for i in range(len(oth)):
        g1, g2 = gates[i]
        gate_map[(oth_lbl, i)] = [g1] if np.array_equal(g1, g2) else [g1, g2]
    return value, gate_map


# --- side solver --------------------------------------------------------------------


def _solve_spd(H, b):
    m = H.shape[0]
    tau = 1e-13 * abs(np.trace(H)) / m + 1e-300
    for _ in range(10):
        try:
            L = np.linalg.cholesky(H + tau * np.eye(m))
            return np.linalg.solve(L.T, np.linalg.solve(L, b))
        except np.linalg.LinAlgError:
            tau = tau * 100 + 1e-14 * (1 + abs(np.trace(H)) / m)
    return np.linalg.lstsq(H, b, rcond=None)[0]


class _SideProblem:
    def __init__(self, inst: LocationInstance, side: Side, transit: bool, backend=None):
        (self.own, self.own_w, self.n_own, self.oth, self.oth_w, self.n_oth,
         self.alpha, self.beta, self.own_lbl, self.oth_lbl) = _side_data(inst, side)
        self.inst = inst
        self.side = side
        self.transit = transit
        self.d = inst.dim
        self.L = inst.length_scale()
        self.leg_own = self.n_own.kernel_leg(self.d)
        self.gb = GateBatch(inst.hyperplane, self.n_own, self.n_oth,
                            inst.norm_h if transit else None, backend=backend)
        self.backend = backend
        self.T = None
        self.Tx = None          # facility position the warm start T is anchored at
        self.plane_tol = 1e-12 * (1.0 + abs(self.beta) + float(np.linalg.norm(self.alpha)) * self.L)
        self.gate_calls = 0

    # feasibility -----------------------------------------------------------
    def slack(self, x) -> float:
        return float(self.alpha @ x - self.beta)

    def project(self, x) -> np.ndarray:
        s = self.slack(x)
        if s <= 0:
            return x
        return x - s / float(self.alpha @ self.alpha) * self.alpha

    def snap_plane(self, x) -> np.ndarray:
        return x - self.slack(x) / float(self.alpha @ self.alpha) * self.alpha

    # smoothed objective ---------------------------------------------------------
    def evaluate(self, x, mu, T=None, order=2):
        f = 0.0
        g = np.zeros(self.d)
        H = np.zeros((self.d, self.d))
        if len(self.own):
            v, gr, hs = kernels.norm_smooth(self.leg_own, x - self.own, mu, order, backend=self.backend)
            f += float(self.own_w @ v)
            g += self.own_w @ gr
            if order >= 2:
                H += np.einsum("n,nij->ij", self.own_w, hs)
        Tn = None
        if len(self.oth):
            X = np.broadcast_to(x, self.oth.shape)
            if T is None and self.T is not None:
                T, Tx = self.T, self.Tx
            else:
                Tx = x
            if T is None:
                T0 = self.gb.crossing_start(X, self.oth)
            elif Tx is x or np.array_equal(Tx, x):
                T0 = T
            else:
                T0 = self.gb.reanchor(T, np.broadcast_to(Tx, self.oth.shape), X)
            Tn, val, gx, hxx, _, conv = kernels.solve_gates(
                self.gb.leg_x, self.gb.leg_q, self.gb.leg_h, self.gb.U, self.gb.anchors(X),
                X, self.oth, T0, mu, 1e-15, 100, backend=self.backend)
            self.gate_calls += 1
            f += float(self.oth_w @ val)
            g += self.oth_w @ gx
            if order >= 2:
                H += np.einsum("n,nij->ij", self.oth_w, hxx)
        return f, g, H, Tn

    def exact(self, x, T) -> float:
        f = float(np.sum(self.own_w * norm_eval(self.n_own, self.own - x))) if len(self.own) else 0.0
        if len(self.oth):
            X = np.broadcast_to(x, self.oth.shape)
            f += float(self.oth_w @ self.gb.exact_legs(X, self.oth, T).sum(axis=1))
        return f

    # Newton -------------------------------------------------------------------
    def newton(self, x, mus, tol, max_iter):
        total_it = 0
        stalled = False
        stagnated = False
        flat = 0
        dec = math.inf
        f = math.nan
        for stage, mu in enumerate(mus):
            final = stage == len(mus) - 1
            dec_tol = (1e-24 if final else 1e-10) * (1.0 + abs(f) if math.isfinite(f) else 1.0)
            for _ in range(max_iter):
                f, g, H, Tn = self.evaluate(x, mu)
                self.T, self.Tx = Tn, x
                step = -_solve_spd(H, g)
                slack = min(0.0, self.slack(x))
                exits = float(self.alpha @ step) > -slack
                if exits:
                    # the Newton model leaves the halfspace: minimise it on the boundary
                    Ha = _solve_spd(H, self.alpha)
                    lam = (float(self.alpha @ step) + slack) / float(self.alpha @ Ha)
                    step = step - lam * Ha
                dec = -float(g @ step)
                if not (dec >= 0) or not np.isfinite(dec):
                    step, dec = -g, float(g @ g)
                total_it += 1
                if dec <= 2 * dec_tol:
                    break
                s = 1.0
                accepted = False
                for _h in range(60):
                    xt = x + s * step
                    if exits and s == 1.0:
                        xt = self.snap_plane(xt)
                    elif self.slack(xt) > 0:
                        xt = self.project(xt)
                    ft, _, _, Tt = self.evaluate(xt, mu, order=0)
                    if ft <= f - 1e-4 * s * dec:
                        accepted = True
                        break
                    s *= 0.5
                if not accepted:
                    stalled = True
                    break
                if f - ft <= 4 * np.finfo(float).eps * abs(f):
                    flat += 1
                    if flat >= 3 and final:
                        x, self.T, self.Tx = xt, Tt, xt
                        stagnated = True
                        break
                else:
                    flat = 0
                x, self.T, self.Tx = xt, Tt, xt
                dec_tol = (1e-24 if final else 1e-10) * (1.0 + abs(f))
            if stalled and not final:
                stalled = False
        converged = stagnated or dec <= 2 * dec_tol or dec <= 1e-10 * (1 + abs(f))
        return x, total_it, converged, dec

    # certificates ----------------------------------------------------------------
    def kkt_residual(self, x, mu) -> float:
        """Distance from zero to the (approximate) subdifferential plus normal cone.

        Two kinds of kinks are handled explicitly. A facility on a demand point
        contributes that point's dual ball. A facility on the hyperplane whose
        gates coincide with it has zero-length first legs; each such path
        contributes a segment of subgradients along ``alpha``, whose upper end
        is found by bisection.
        """
        f, g, _, Tn = self.evaluate(x, mu, order=1)
        self.T, self.Tx = Tn, x
        on_plane = self.slack(x) >= -self.plane_tol * 10
        na = float(self.alpha @ self.alpha)
        hit = np.zeros(len(self.own), dtype=bool)
        if len(self.own):
            dist = np.abs(self.own - x).max(axis=1)
            hit = dist <= 1e-9 * self.L
        tau_lo = 0.0 if on_plane else None
        if on_plane and len(self.oth):
            X = np.broadcast_to(x, self.oth.shape)
            Y1, _ = self.gb.gates(Tn, X)
            zero = np.abs(Y1 - X).max(axis=1) <= 1e-9 * self.L
            if zero.any():
                _, gx, _ = kernels.norm_smooth(self.gb.leg_x, Y1[zero] - X[zero], mu, 1,
                                               backend=self.backend)
                gx = -gx * self.oth_w[zero, None]
                tau_lo = -float(_segment_top(self.n_own, gx, self.alpha, self.oth_w[zero]).sum())

        if not hit.any():
            if tau_lo is None:
                return float(np.linalg.norm(g))
            tau = max(tau_lo, -float(self.alpha @ g) / na)
            return float(np.linalg.norm(g + tau * self.alpha))
        # facility sits on demand point(s): remove their smoothed terms and test
        # the remaining gradient against the weighted dual balls
        v, gr, _ = kernels.norm_smooth(self.leg_own, x - self.own[hit], mu, 1, backend=self.backend)
        rest = g - self.own_w[hit] @ gr
        ball = subgradient(self.n_own.with_scale(self.n_own.scale * float(self.own_w[hit].sum())),
                           np.zeros(self.d))

        def r(tau):
            return ball.distance(-(rest + tau * self.alpha))

        if tau_lo is None:
            return r(0.0)
        from scipy.optimize import minimize_scalar
        span = 10.0 * (1.0 + float(np.linalg.norm(rest))) / math.sqrt(na)
        res = minimize_scalar(r, bounds=(tau_lo, tau_lo + span + abs(tau_lo)), method="bounded",
                              options={"xatol": 1e-14})
        return float(min(res.fun, r(tau_lo)))

    def gates_dict(self, T, x) -> dict:
        out = {}
        if T is None or not len(self.oth):
            return out
        Y1, Y2 = self.gb.gates(T, np.broadcast_to(x, self.oth.shape))
        for i in range(len(self.oth)):
            out[(self.oth_lbl, i)] = [Y1[i]] if (not self.transit or np.array_equal(Y1[i], Y2[i])) \
                else [Y1[i], Y2[i]]
        return out


def _dual_rows(spec: NormSpec, W: np.ndarray) -> np.ndarray:
    if spec.kind == "poly":
        return np.array([dual_norm(spec, w) for w in W])
    q = dual_exponent(spec)
    A = np.abs(W)
    if math.isinf(q):
        out = A.max(axis=1)
    elif q == 1.0:
        out = A.sum(axis=1)
    else:
        m = np.maximum(A.max(axis=1), 1e-300)
        out = m * ((A / m[:, None]) ** q).sum(axis=1) ** (1.0 / q)
    return out / spec.scale


def _segment_top(spec: NormSpec, C: np.ndarray, alpha: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Largest ``t`` with ``dual(C_i - t alpha) <= radius_i``, row by row.

    The feasible ``t`` form an interval. When it is empty (the gate is only
    approximately optimal) the minimiser of the dual norm is returned.
    """
    da = _dual_rows(spec, alpha[None, :])[0]
    bound = (radius + _dual_rows(spec, C)) / da + 1.0
    lo, hi = -bound, bound.copy()
    phi = lambda t: _dual_rows(spec, C - t[:, None] * alpha)
    for _ in range(200):  # golden-section search for the minimiser
        a = lo + 0.381966 * (hi - lo)
        b = lo + 0.618034 * (hi - lo)
        left = phi(a) <= phi(b)
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
        if np.all(hi - lo <= 1e-15 * bound):
            break
    tmin = 0.5 * (lo + hi)
    ok = phi(tmin) <= radius
    lo, hi = tmin, bound.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        inside = phi(mid) <= radius
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 1e-15 * bound):
            break
    return np.where(ok, lo, tmin)


def _starts(inst: LocationInstance, prob: _SideProblem, start):
    if start is not None:
        return [prob.project(np.asarray(start, float))]
    allc = inst.all_coords()
    w = np.concatenate([inst.weights_A, inst.weights_B])
    starts = [prob.project(w @ allc / w.sum())]
    if len(prob.own):
        c = prob.own_w @ prob.own / prob.own_w.sum()
        c = prob.project(c)
        if not np.allclose(c, starts[0], rtol=0, atol=1e-9 * prob.L):
            starts.append(c)
    return starts


def solve_side(inst: LocationInstance, side, transit: bool = False, start=None, tol: float = 1e-8,
               max_iter: int = 200, backend: str | None = None, multistart: bool = True) -> SideSolution:
    """Minimise the objective over the closure of one halfspace.

    Returns the minimiser, its exact objective value (exact norms at the
    returned gates), the gates per cross-side point and solver diagnostics.
    """
    side = Side(side)
    if side == Side.ON:
        raise ValueError("side must be A or B")
    if transit and inst.norm_h is None:
        raise ValueError("transit solve needs a hyperplane norm")
    if inst.n_points == 0:
        raise ValueError("instance has no demand points")
    t0 = time.perf_counter()
    prob = _SideProblem(inst, side, transit, backend)
    mus = mu_schedule(prob.L)
    mu_min = mus[-1]
    starts = _starts(inst, prob, start)
    if not multistart:
        starts = starts[:1]
    best = None
    runs = []
    for x0 in starts:
        prob.T = None
        x, iters, conv, dec = prob.newton(x0.copy(), mus, tol, max_iter)
        fx = prob.exact(x, prob.T)
        runs.append({"start": x0.tolist(), "iterations": iters, "converged": bool(conv), "f": fx})
        if best is None or fx < best[1]:
            best = (x, fx, prob.T, iters, conv)
    x, fx, T, iters, conv = best
    prob.T, prob.Tx = T, x
    # snap to a nearby demand point or to the hyperplane when that is no worse
    candidates = []
    if len(prob.own):
        dist = np.abs(prob.own - x).max(axis=1)
        for k in np.flatnonzero(dist <= 1e-6 * prob.L):
            candidates.append(prob.own[k].copy())
    if prob.slack(x) >= -1e-6 * prob.L:
        candidates.append(prob.snap_plane(x))
    for c in candidates:
        _, _, _, Tc = prob.evaluate(c, mu_min, order=0)
        fc = prob.exact(c, Tc)
        if fc <= fx:
            x, fx, T = c, fc, Tc
    prob.T, prob.Tx = T, x
    kkt = prob.kkt_residual(x, mu_min)
    T = prob.T
    fx = min(fx, prob.exact(x, T))
    if kkt > tol:
        conv = False
    diag = {"iterations": int(sum(r["iterations"] for r in runs)), "converged": bool(conv),
            "kkt_residual": float(kkt), "runs": runs, "gate_batches": prob.gate_calls,
            "seconds": time.perf_counter() - t0}
    return SideSolution(np.asarray(x, float), float(fx), prob.gates_dict(T, x), diag)


def solve(inst: LocationInstance, transit: bool = False, tol: float = 1e-8, max_iter: int = 200,
          probes: int = 100, seed: int = 0, backend: str | None = None) -> LocateResult:
    """Solve both halfspace problems and return the better one.

    ``transit=True`` allows travel along the hyperplane with ``inst.norm_h``.
    """
    if inst.n_points == 0:
        raise ValueError("instance has no demand points")
    t0 = time.perf_counter()
    sols = {s: solve_side(inst, s, transit, tol=tol, max_iter=max_iter, backend=backend)
            for s in (Side.A, Side.B)}
    probe_info = {"count": 0, "improved": 0, "ok": True}
    if probes:
        rng = np.random.default_rng(seed)
        c = inst.all_coords()
        lo, hi = c.min(axis=0), c.max(axis=0)
        pad = 0.1 * (hi - lo) + 1e-3
        P = lo - pad + rng.random((probes, inst.dim)) * (hi - lo + 2 * pad)
        best_probe = {Side.A: (math.inf, None), Side.B: (math.inf, None)}
        in_b = inst.hyperplane.signed(P) > 0
        for s, rows in ((Side.A, P[~in_b]), (Side.B, P[in_b])):
            if len(rows):
                vals = batch_objective(inst, rows, s, transit, backend)
                k = int(np.argmin(vals))
                best_probe[s] = (float(vals[k]), rows[k])
        probe_info["count"] = probes
        for s, (val, p) in best_probe.items():
            if p is not None and val < sols[s].f - 1e-9 * (1 + abs(sols[s].f)):
                probe_info["improved"] += 1
                alt = solve_side(inst, s, transit, start=p, tol=tol, max_iter=max_iter, backend=backend)
                if alt.f < sols[s].f:
                    sols[s] = alt
                probe_info["ok"] = False
    fA, fB = sols[Side.A].f, sols[Side.B].f
    tie = 1e-9 * (1.0 + abs(fA))
    win = Side.A if fA <= fB + tie else Side.B
    sol = sols[win]
    if not (sols[Side.A].diagnostics["converged"] or sols[Side.B].diagnostics["converged"]):
        raise LocateError(f"neither side converged: A={sols[Side.A].diagnostics}, B={sols[Side.B].diagnostics}")
    side = win
    if win == Side.B and side_of(inst.hyperplane, sol.x) == Side.ON:
        side = Side.ON
    diag = {"A": sols[Side.A].diagnostics, "B": sols[Side.B].diagnostics, "probes": probe_info,
            "transit": transit, "backend": kernels.BACKEND if backend is None else backend,
            "seconds": time.perf_counter() - t0}
    return LocateResult(sol.x, sol.f, side, sol.gates, (fA, fB), diag)


# --- uniqueness ---------------------------------------------------------------------


@dataclass
class UniquenessReport:
    size_ok: bool
    A_noncollinear: bool
    B_noncollinear: bool
    pA_finite: bool
    pB_above_one: bool
    guaranteed_P: bool
    guaranteed_PT: bool
    message: str


def _noncollinear(c: np.ndarray, tol: float = 1e-9) -> bool:
    if len(c) < 3:
        return False
    cc = c - c.mean(axis=0)
    s = np.linalg.svd(cc, compute_uv=False)
    return bool(len(s) >= 2 and s[1] > tol * max(1.0, s[0]))


def uniqueness_report(inst: LocationInstance) -> UniquenessReport:
    """Check the sufficient conditions for a unique optimum of the plain and transit problems."""
    size_ok = min(len(inst.points_A), len(inst.points_B)) > 2
    a_nc = _noncollinear(inst.coords_A)
    b_nc = _noncollinear(inst.coords_B)
    pa_fin = inst.norm_a.kind == "lp" or inst.norm_a.kind == "l1"
    pb_gt1 = inst.norm_b.kind in ("lp", "linf")
    spread = a_nc or b_nc
    g_p = size_ok and spread and pa_fin and pb_gt1
    g_pt = size_ok and spread and (pa_fin or pb_gt1)
    if g_p:
        msg = "unique optimum guaranteed"
    else:
        reasons = []
        if not size_ok:
            reasons.append("min(|A|,|B|) <= 2")
        if not spread:
            reasons.append("points of A and of B are collinear")
        if not pa_fin:
            reasons.append("p_A is infinite or polyhedral")
        if not pb_gt1:
            reasons.append("p_B = 1 or polyhedral")
        msg = "uniqueness not guaranteed: " + "; ".join(reasons)
    return UniquenessReport(size_ok, a_nc, b_nc, pa_fin, pb_gt1, g_p, g_pt, msg)
