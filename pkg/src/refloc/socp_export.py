"""Conic (SOCP / MINLP) formulations of the location problems as plain text.

A :class:`ConicModel` holds named variables, sparse linear rows, rational power
rows ``t^r <= xi^s z^(r-s)``, rotated cone rows ``X^2 <= Y Z`` and binaries.
Builders emit the halfspace models (single gate and transit) and the big-M
mixed-binary model. :func:`expand_powers` turns every power row into a tower of
rotated cone rows, and :func:`count_audit` checks the row counts.

Length variables (``z``, ``w``, ``u``, ``h``) hold *unscaled* norms; a norm's
scale factor enters through the objective coefficient (halfspace models) or the
big-M row coefficients (mixed-binary model).

Variable naming, with ``o`` an own-side point label and ``c`` a cross-side
label (points are labelled ``a1, a2, ...`` and ``b1, b2, ...``)::

    x[k]                facility coordinates
    z[o], t[o,k], xi[o,k]         own-side leg ||x - o||
    w[c], v[c,k], rho[c,k]        first leg ||x - y1_c||
    u[c], g[c,k], psi[c,k]        last leg ||c - y2_c||
    h[c], e[c,k], eta[c,k]        hyperplane leg ||y1_c - y2_c||  (transit)
    y[c,k] / y1[c,k], y2[c,k]     gate coordinates
    Z[p], gamma                   path lengths and side indicator (mixed-binary)
    aux<n>                        tower variables created by expand_powers
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .locate import LocationInstance
from .norms import NormSpec, format_norm

FORMAT_VERSION = 1
_SENSES = ("<=", ">=", "=")
_SENSE_CODE = {"<=": "L", ">=": "G", "=": "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}
_BOUNDS = ("free", "nonneg", "binary")


class ModelError(ValueError):
    pass


class AuditError(AssertionError):
    pass


@dataclass
class ConicModel:
    name: str = "model"
    var_names: list = field(default_factory=list)
    var_bounds: list = field(default_factory=list)
    linear: list = field(default_factory=list)   # (((var, coef), ...), sense, rhs)
    powers: list = field(default_factory=list)   # (t, xi, z, r, s)
    rsoc: list = field(default_factory=list)     # (X, Y, Z): X^2 <= Y Z
    objective: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index = {n: i for i, n in enumerate(self.var_names)}

    # construction -----------------------------------------------------------------
    def add_var(self, name: str, bound: str = "free") -> int:
        if bound not in _BOUNDS:
            raise ModelError(f"unknown variable bound {bound!r}")
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if not name or any(ch.isspace() for ch in name):
            raise ModelError(f"invalid variable name {name!r}")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        self.var_bounds.append(bound)
        return self._index[name]

    def var(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def add_linear(self, coefs, sense: str, rhs: float = 0.0) -> None:
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        merged: dict[int, float] = {}
        for v, c in (coefs.items() if isinstance(coefs, dict) else coefs):
            merged[v] = merged.get(v, 0.0) + float(c)
        row = tuple((v, c) for v, c in merged.items() if c != 0.0)
        self.linear.append((row, sense, float(rhs)))

    def add_power(self, t: int, xi: int, z: int, r: int, s: int) -> None:
        if not (r > s >= 1 and math.gcd(r, s) == 1):
            raise ModelError(f"power row needs r > s >= 1 coprime, got {r}/{s}")
        self.powers.append((t, xi, z, int(r), int(s)))

    def add_rsoc(self, X: int, Y: int, Z: int) -> None:
        self.rsoc.append((X, Y, Z))

    # views --------------------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def binaries(self) -> list:
        return [i for i, b in enumerate(self.var_bounds) if b == "binary"]

    def validate(self) -> None:
        n = self.n_vars
        refs = [v for row, _, _ in self.linear for v, _ in row]
        refs += [v for p in self.powers for v in p[:3]]
        refs += [v for q in self.rsoc for v in q]
        refs += list(self.objective)
        bad = [v for v in refs if not (0 <= v < n)]
        if bad:
            raise ModelError(f"model references unknown variable index {bad[0]}")
        for t, xi, z, r, s in self.powers:
            if not (r > s >= 1 and math.gcd(r, s) == 1):
                raise ModelError(f"invalid power exponents {r}/{s}")

    def copy(self) -> "ConicModel":
        return ConicModel(self.name, list(self.var_names), list(self.var_bounds), list(self.linear),
                          list(self.powers), list(self.rsoc), dict(self.objective), dict(self.meta))

    # evaluation --------------------------------------------------------------------
    def objective_value(self, values) -> float:
        values = np.asarray(values, dtype=float)
        return float(sum(c * values[v] for v, c in self.objective.items()))

    def max_violation(self, values) -> float:
        """Largest violation of any bound or row at ``values`` (one entry per variable)."""
        val = np.asarray(values, dtype=float)
        worst = 0.0
        for i, b in enumerate(self.var_bounds):
            if b == "nonneg":
                worst = max(worst, -val[i])
            elif b == "binary":
                worst = max(worst, min(abs(val[i]), abs(val[i] - 1.0)))
        for row, sense, rhs in self.linear:
            lhs = sum(c * val[v] for v, c in row)
            gap = {"<=": lhs - rhs, ">=": rhs - lhs, "=": abs(lhs - rhs)}[sense]
            worst = max(worst, gap)
        for t, xi, z, r, s in self.powers:
            worst = max(worst, _power_gap(val[t], val[xi], val[z], r, s))
        for X, Y, Z in self.rsoc:
            worst = max(worst, val[X] ** 2 - val[Y] * val[Z], -val[Y], -val[Z])
        return float(worst)


def _power_gap(t, xi, z, r, s) -> float:
    """Violation of ``t^r <= xi^s z^(r-s)`` measured on the ``t`` scale."""
    if xi < 0 or z < 0:
        return max(-xi, -z)
    bound = xi ** (s / r) * z ** ((r - s) / r)
    return max(0.0, abs(t) - bound)


# --- norm templates ----------------------------------------------------------------


class _Vec(list):
    """Marks a list of variable indices (as opposed to a constant vector)."""


def _diff(left, right, k: int):
    """Linear expression ``(coefs, const)`` for ``left_k - right_k``.

    Each side is either a :class:`_Vec` of variable indices or a constant vector.
    """
    coefs: dict[int, float] = {}
    const = 0.0
    for sign, part in ((1.0, left), (-1.0, right)):
        if isinstance(part, _Vec):
            coefs[part[k]] = coefs.get(part[k], 0.0) + sign
        else:
            const += sign * float(part[k])
    return coefs, const


def _norm_leg(m: ConicModel, spec: NormSpec, left, right, length: str, q: str, aux: str, tag: str,
              d: int) -> int:
    """Rows enforcing ``length >= ||left - right||`` (unscaled); returns the length index.

    lp norms use the per-coordinate template (two absolute-value rows, one power
    row and one sum row per leg); the other kinds use one row per dual extreme point.
    """
    L = m.add_var(f"{length}[{tag}]", "nonneg")
    diffs = [_diff(left, right, k) for k in range(d)]
    if spec.kind == "lp":
        Q = [m.add_var(f"{q}[{tag},{k + 1}]", "nonneg") for k in range(d)]
        R = [m.add_var(f"{aux}[{tag},{k + 1}]", "nonneg") for k in range(d)]
        for k, (coefs, const) in enumerate(diffs):
            # Q_k - (left_k - right_k) >= 0  and  Q_k + (left_k - right_k) >= 0
            m.add_linear([(Q[k], 1.0)] + [(v, -c) for v, c in coefs.items()], ">=", const)
            m.add_linear([(Q[k], 1.0)] + list(coefs.items()), ">=", -const)
        for k in range(d):
            m.add_power(Q[k], R[k], L, spec.r, spec.s)
        m.add_linear([(L, 1.0)] + [(R[k], -1.0) for k in range(d)], ">=", 0.0)
        return L
    G = spec.generator_matrix(d)
    for e in G:
        coefs: dict[int, float] = {L: 1.0}
        const = 0.0
        for k, (ck, kk) in enumerate(diffs):
            for v, c in ck.items():
                coefs[v] = coefs.get(v, 0.0) - e[k] * c
            const += e[k] * kk
        m.add_linear(coefs, ">=", const)
    return L


def _leg_rows(spec: NormSpec, d: int) -> int:
    return 2 * d + 1 if spec.kind == "lp" else len(spec.generator_matrix(d))


# --- builders ------------------------------------------------------------------------


def _const(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


def _plane_row(m: ConicModel, alpha, vars_, beta) -> None:
    m.add_linear([(v, float(a)) for v, a in zip(vars_, alpha)], "=", beta)


def _side_parts(inst: LocationInstance, side: str):
    if side == "A":
        return (inst.coords_A, inst.weights_A, inst.norm_a, "a",
                inst.coords_B, inst.weights_B, inst.norm_b, "b")
    return (inst.coords_B, inst.weights_B, inst.norm_b, "b",
            inst.coords_A, inst.weights_A, inst.norm_a, "a")


def _meta(inst: LocationInstance, kind: str) -> dict:
    meta = {"kind": kind, "dim": str(inst.dim), "nA": str(len(inst.points_A)),
            "nB": str(len(inst.points_B)), "norm_a": format_norm(inst.norm_a),
            "norm_b": format_norm(inst.norm_b)}
    if inst.norm_h is not None:
        meta["norm_h"] = format_norm(inst.norm_h)
    return meta


def _build_side(inst: LocationInstance, side: str, transit: bool) -> ConicModel:
    if transit and inst.norm_h is None:
        raise ModelError("transit model needs a hyperplane norm")
    d = inst.dim
    h = inst.hyperplane
    own, own_w, n_own, o_lbl, oth, oth_w, n_oth, c_lbl = _side_parts(inst, side)
    kind = ("PT" if transit else "P") + side
    m = ConicModel(name=inst.name or kind, meta=_meta(inst, kind))
    X = _Vec(m.add_var(f"x[{k + 1}]") for k in range(d))
    for i, p in enumerate(own):
        tag = f"{o_lbl}{i + 1}"
        z = _norm_leg(m, n_own, X, _const(p), "z", "t", "xi", tag, d)
        m.objective[z] = float(own_w[i]) * n_own.scale
    for i, p in enumerate(oth):
        tag = f"{c_lbl}{i + 1}"
        if transit:
            Y1 = _Vec(m.add_var(f"y1[{tag},{k + 1}]") for k in range(d))
            Y2 = _Vec(m.add_var(f"y2[{tag},{k + 1}]") for k in range(d))
        else:
            Y1 = Y2 = _Vec(m.add_var(f"y[{tag},{k + 1}]") for k in range(d))
        w = _norm_leg(m, n_own, X, Y1, "w", "v", "rho", tag, d)
        u = _norm_leg(m, n_oth, _const(p), Y2, "u", "g", "psi", tag, d)
        m.objective[w] = float(oth_w[i]) * n_own.scale
        m.objective[u] = float(oth_w[i]) * n_oth.scale
        if transit:
            t = _norm_leg(m, inst.norm_h, Y1, Y2, "h", "e", "eta", tag, d)
            m.objective[t] = float(oth_w[i]) * inst.norm_h.scale
        _plane_row(m, h.alpha, Y1, h.beta)
        if transit:
            _plane_row(m, h.alpha, Y2, h.beta)
    # closed halfspace of the facility
    m.add_linear([(X[k], float(h.alpha[k])) for k in range(d)], "<=" if side == "A" else ">=", h.beta)
    return m


def build_PA(inst: LocationInstance) -> ConicModel:
    """Facility restricted to ``alpha.x <= beta`` (single gate per cross-side point)."""
    return _build_side(inst, "A", False)


def build_PB(inst: LocationInstance) -> ConicModel:
    """Facility restricted to ``alpha.x >= beta``."""
    return _build_side(inst, "B", False)


def build_PTA(inst: LocationInstance) -> ConicModel:
    """Transit version of :func:`build_PA` (two gates and a hyperplane leg)."""
    return _build_side(inst, "A", True)


def build_PTB(inst: LocationInstance) -> ConicModel:
    return _build_side(inst, "B", True)


def build_side_model(inst: LocationInstance, side: str, transit: bool = False) -> ConicModel:
    side = str(side)
    if side not in ("A", "B"):
        raise ModelError("side must be 'A' or 'B'")
    return _build_side(inst, side, transit)


def big_m_constants(inst: LocationInstance) -> dict:
    """Big-M values for the mixed-binary model.

    ``R`` is the largest pairwise Euclidean distance between demand points. An
    optimal facility lies within ``R`` of the data in every coordinate direction,
    so ``|alpha.x - beta| <= ||alpha||_2 (sqrt(d) R + R) + max |alpha.p - beta|``.
    Every path that matters is at most ``3 sqrt(d) R`` long in the Euclidean
    sense, and ``||v||_p <= sqrt(d) ||v||_2`` for every p >= 1 (polyhedral norms
    use their largest generator norm instead), which bounds the unscaled legs.
    """
    P = inst.all_coords()
    d = inst.dim
    R = 1.0
    if len(P) > 1:
        diff = P[:, None, :] - P[None, :, :]
        R = max(R, float(np.sqrt((diff ** 2).sum(-1)).max()))
    h = inst.hyperplane
    na = float(np.linalg.norm(h.alpha))
    spread = float(np.abs(P @ h.alpha - h.beta).max()) if len(P) else 0.0
    M = na * (math.sqrt(d) + 1.0) * R + spread

    def factor(spec: NormSpec | None) -> float:
        if spec is None:
            return 0.0
        if spec.kind == "poly":
            g = spec.generator_matrix(d)
            return spec.scale * float(np.linalg.norm(g, axis=1).max())
        return spec.scale * math.sqrt(d)

    c = max(factor(inst.norm_a), factor(inst.norm_b), factor(inst.norm_h))
    path = 3.0 * R * c * (3.0 if inst.norm_h is not None else 2.0)
    return {"R": R, "M": M, "M_point": path}


def build_minlp(inst: LocationInstance, transit: bool = False) -> ConicModel:
    """Single mixed-binary model; ``gamma = 1`` selects ``alpha.x <= beta``."""
    if transit and inst.norm_h is None:
        raise ModelError("transit model needs a hyperplane norm")
    d = inst.dim
    h = inst.hyperplane
    consts = big_m_constants(inst)
    M, Mp = consts["M"], consts["M_point"]
    kind = "MINLP-T" if transit else "MINLP"
    m = ConicModel(name=inst.name or kind, meta=_meta(inst, kind))
    m.meta.update({"M": repr(M), "M_point": repr(Mp)})
    X = _Vec(m.add_var(f"x[{k + 1}]") for k in range(d))
    gamma = m.add_var("gamma", "binary")
    groups = (("a", inst.coords_A, inst.weights_A, inst.norm_a, inst.norm_b, 1.0),
              ("b", inst.coords_B, inst.weights_B, inst.norm_b, inst.norm_a, 0.0))
    for lbl, pts, wts, n_home, n_far, home_gamma in groups:
        for i, p in enumerate(pts):
            tag = f"{lbl}{i + 1}"
            Zp = m.add_var(f"Z[{tag}]", "nonneg")
            m.objective[Zp] = float(wts[i])
            z = _norm_leg(m, n_home, X, _const(p), "z", "t", "xi", tag, d)
            if transit:
                Y1 = _Vec(m.add_var(f"y1[{tag},{k + 1}]") for k in range(d))
                Y2 = _Vec(m.add_var(f"y2[{tag},{k + 1}]") for k in range(d))
            else:
                Y1 = Y2 = _Vec(m.add_var(f"y[{tag},{k + 1}]") for k in range(d))
            # facility on the far side: first leg in the far norm, last leg at home
            w = _norm_leg(m, n_far, X, Y1, "w", "v", "rho", tag, d)
            u = _norm_leg(m, n_home, _const(p), Y2, "u", "g", "psi", tag, d)
            cross = [(w, n_far.scale), (u, n_home.scale)]
            if transit:
                t = _norm_leg(m, inst.norm_h, Y1, Y2, "h", "e", "eta", tag, d)
                cross.append((t, inst.norm_h.scale))
            # home side active when gamma == home_gamma
            if home_gamma == 1.0:
                # c z - Z <= M (1 - gamma);  sum - Z <= M gamma
                m.add_linear([(z, n_home.scale), (Zp, -1.0), (gamma, Mp)], "<=", Mp)
                m.add_linear(cross + [(Zp, -1.0), (gamma, -Mp)], "<=", 0.0)
            else:
                m.add_linear([(z, n_home.scale), (Zp, -1.0), (gamma, -Mp)], "<=", 0.0)
                m.add_linear(cross + [(Zp, -1.0), (gamma, Mp)], "<=", Mp)
            _plane_row(m, h.alpha, Y1, h.beta)
            if transit:
                _plane_row(m, h.alpha, Y2, h.beta)
    ax = [(X[k], float(h.alpha[k])) for k in range(d)]
    m.add_linear(ax + [(gamma, M)], "<=", h.beta + M)       # alpha.x - beta <= M (1 - gamma)
    m.add_linear(ax + [(gamma, M)], ">=", h.beta)           # alpha.x - beta >= -M gamma
    return m


# --- power towers ----------------------------------------------------------------------


def _tower_plan(leaves: list, root):
    """Rows ``(node, left, right)`` of a geometric-mean tree over ``leaves``.

    A segment holding a single variable is that variable (no row). Mixed
    segments become fresh nodes, shared when the same leaf pattern repeats.
    """
    rows = []
    memo = {}

    def node(lo, hi, is_root=False):
        seg = tuple(leaves[lo:hi])
        if not is_root and len(set(seg)) == 1:
            return seg[0]
        if not is_root and seg in memo:
            return memo[seg]
        mid = (lo + hi) // 2
        left, right = node(lo, mid), node(mid, hi)
        me = root if is_root else ("new", len(memo))
        if not is_root:
            memo[seg] = me
        rows.append((me, left, right))
        return me

    node(0, len(leaves), True)
    return rows


def power_tower(r: int, s: int):
    """Best leaf ordering for ``t^r <= xi^s z^(r-s)`` and its tower rows.

    With ``2^k >= r`` the inequality is ``t <= (xi^s z^(r-s) t^(2^k-r))^(1/2^k)``,
    a geometric mean over ``2^k`` leaves. Each of the six block orders is tried
    and the one with the fewest rows is kept; at most two mixed segments occur per
    level, so the count never exceeds ``2 ceil(log2 r)``.
    """
    k = max(1, math.ceil(math.log2(r)))
    blocks = {"xi": s, "z": r - s, "t": 2 ** k - r}
    best = None
    for order in itertools.permutations(("xi", "z", "t")):
        leaves = [name for name in order for _ in range(blocks[name])]
        rows = _tower_plan(leaves, "t")
        if best is None or len(rows) < len(best):
            best = rows
    return best


def expand_powers(m: ConicModel) -> ConicModel:
    """Replace every power row by a tower of rotated cone rows."""
    out = m.copy()
    out.powers = []
    n_aux = sum(1 for nm in out.var_names if nm.startswith("aux"))
    for t, xi, z, r, s in m.powers:
        names = {"t": t, "xi": xi, "z": z}
        local = {}
        for me, left, right in power_tower(r, s):
            idx = []
            for item in (me, left, right):
                if isinstance(item, tuple):
                    if item not in local:
                        n_aux += 1
                        local[item] = out.add_var(f"aux{n_aux}", "nonneg")
                    idx.append(local[item])
                else:
                    idx.append(names[item])
            out.add_rsoc(*idx)
    out.meta = dict(m.meta, expanded="1")
    return out


def fill_tower(m: ConicModel, values) -> np.ndarray:
    """Set every tower variable to the geometric mean of its row's right side.

    Rows are emitted children-first, so one pass suffices. With this choice the
    tower is feasible exactly when the original power row is.
    """
    val = np.array(values, dtype=float, copy=True)
    aux = {i for i, nm in enumerate(m.var_names) if nm.startswith("aux")}
    for X, Y, Z in m.rsoc:
        if X in aux:
            val[X] = math.sqrt(max(val[Y], 0.0) * max(val[Z], 0.0))
    return val


# --- audit ---------------------------------------------------------------------------------


@dataclass
class AuditReport:
    kind: str
    linear_rows: int
    expected_linear: int
    formula_applies: bool
    power_rows: int
    rsoc_rows: int
    rsoc_bound: int | None
    ok: bool

    def __str__(self) -> str:
        bound = "n/a" if self.rsoc_bound is None else str(self.rsoc_bound)
        return (f"{self.kind}: linear rows {self.linear_rows} (expected {self.expected_linear}), "
                f"power rows {self.power_rows}, rsoc rows {self.rsoc_rows} (bound {bound}), "
                f"{'ok' if self.ok else 'FAILED'}")


def _clog2(r: int) -> int:
    return max(1, math.ceil(math.log2(r)))


def _spec_from_meta(token: str) -> NormSpec:
    from .norms import parse_norm
    return parse_norm(token)


def count_audit(m: ConicModel, inst: LocationInstance | None = None, strict: bool = True) -> AuditReport:
    """Compare row counts with the closed-form counts.

    For the single-gate halfspace model with lp norms on both sides the linear
    rows number ``n_own (2d+1) + n_cross (4d+3) + 1``. Other norm kinds replace a
    leg's ``2d+1`` rows by its generator count, and transit models add one more
    leg and one more gate equation per cross-side point. After expansion the
    rotated cone rows are bounded by ``4d`` times the sum over legs of
    ``ceil(log2 r)``.
    """
    kind = m.meta.get("kind", "")
    if kind not in ("PA", "PB", "PTA", "PTB"):
        raise ModelError(f"count_audit needs a halfspace model, got kind {kind!r}")
    d = int(m.meta["dim"])
    nA, nB = int(m.meta["nA"]), int(m.meta["nB"])
    if inst is not None:
        na, nb, nh = inst.norm_a, inst.norm_b, inst.norm_h
    else:
        na, nb = _spec_from_meta(m.meta["norm_a"]), _spec_from_meta(m.meta["norm_b"])
        nh = _spec_from_meta(m.meta["norm_h"]) if "norm_h" in m.meta else None
    side = kind[-1]
    transit = kind.startswith("PT")
    n_own, n_oth = (nA, nB) if side == "A" else (nB, nA)
    s_own, s_oth = (na, nb) if side == "A" else (nb, na)
    legs_own = _leg_rows(s_own, d)
    legs_cross = _leg_rows(s_own, d) + _leg_rows(s_oth, d) + 1
    if transit:
        legs_cross += _leg_rows(nh, d) + 1
    expected = n_own * legs_own + n_oth * legs_cross + 1
    applies = not transit and s_own.kind == "lp" and s_oth.kind == "lp"
    if applies:
        assert expected == n_own * (2 * d + 1) + n_oth * (4 * d + 3) + 1
    log = lambda spec: _clog2(spec.r) if spec.kind == "lp" else 0  # noqa: E731
    bound = 4 * d * (n_own * log(s_own) + n_oth * (log(s_own) + log(s_oth)
                                                   + (log(nh) if transit else 0)))
    expanded = m.meta.get("expanded") == "1"
    ok = len(m.linear) == expected and (not expanded or len(m.rsoc) <= bound)
    rep = AuditReport(kind, len(m.linear), expected, applies, len(m.powers), len(m.rsoc),
                      bound if expanded else None, ok)
    if strict and not ok:
        raise AuditError(str(rep))
    return rep


# --- text format -----------------------------------------------------------------------------


def _num(x: float) -> str:
    return f"{x:.17g}"


def dumps_model(m: ConicModel) -> str:
    m.validate()
    nm = m.var_names
    out = [f"# refloc conic model, format {FORMAT_VERSION}", f"NAME {m.name}"]
    for key in sorted(m.meta):
        out.append(f"META {key} {m.meta[key]}")
    out.append(f"VARS {m.n_vars}")
    out += [f"{n} {b}" for n, b in zip(nm, m.var_bounds)]
    out.append(f"LIN {len(m.linear)}")
    for row, sense, rhs in m.linear:
        terms = " ".join(f"{_num(c)} {nm[v]}" for v, c in row)
        out.append(f"{_SENSE_CODE[sense]} {_num(rhs)} {len(row)} {terms}".rstrip())
    out.append(f"POW {len(m.powers)}")
    out += [f"{nm[t]} {nm[xi]} {nm[z]} {r} {s}" for t, xi, z, r, s in m.powers]
    out.append(f"RSOC {len(m.rsoc)}")
    out += [f"{nm[X]} {nm[Y]} {nm[Z]}" for X, Y, Z in m.rsoc]
    out.append(f"BIN {len(m.binaries)}")
    out += [nm[b] for b in m.binaries]
    out.append(f"OBJ {len(m.objective)}")
    out += [f"{_num(c)} {nm[v]}" for v, c in m.objective.items()]
    out.append("END")
    return "\n".join(out) + "\n"


def loads_model(text: str) -> ConicModel:
    lines = []
    for no, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((no, body))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ModelError("unexpected end of model file")
        pos += 1
        return lines[pos - 1]

    def section(name):
        no, body = take()
        parts = body.split()
        if parts[0] != name or len(parts) != 2:
            raise ModelError(f"line {no}: expected '{name} <count>'")
        return int(parts[1])

    no, body = take()
    if not body.startswith("NAME "):
        raise ModelError(f"line {no}: expected NAME")
    m = ConicModel(name=body[5:].strip())
    while lines[pos][1].startswith("META "):
        _, body = take()
        _, key, value = body.split(" ", 2)
        m.meta[key] = value
    try:
        for _ in range(section("VARS")):
            no, body = take()
            name, bound = body.split()
            m.add_var(name, bound)
        for _ in range(section("LIN")):
            no, body = take()
            parts = body.split()
            sense, rhs, k = _CODE_SENSE[parts[0]], float(parts[1]), int(parts[2])
            if len(parts) != 3 + 2 * k:
                raise ModelError(f"line {no}: row length mismatch")
            row = [(m.var(parts[3 + 2 * j + 1]), float(parts[3 + 2 * j])) for j in range(k)]
            m.linear.append((tuple(row), sense, rhs))
        for _ in range(section("POW")):
            no, body = take()
            t, xi, z, r, s = body.split()
            m.add_power(m.var(t), m.var(xi), m.var(z), int(r), int(s))
        for _ in range(section("RSOC")):
            no, body = take()
            X, Y, Z = body.split()
            m.add_rsoc(m.var(X), m.var(Y), m.var(Z))
        bins = [m.var(take()[1]) for _ in range(section("BIN"))]
        if sorted(bins) != m.binaries:
            raise ModelError("BIN section disagrees with variable bounds")
        for _ in range(section("OBJ")):
            no, body = take()
            c, name = body.split()
            m.objective[m.var(name)] = float(c)
    except (ValueError, KeyError) as exc:
        raise ModelError(f"line {no}: {exc}") from exc
    no, body = take()
    if body != "END":
        raise ModelError(f"line {no}: expected END")
    return m


def write_model(m: ConicModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(m), encoding="ascii")


def read_model(path: str | Path) -> ConicModel:
    return loads_model(Path(path).read_text(encoding="ascii"))


def sdp_pattern(m: ConicModel) -> str:
    """3x3 linear matrix inequality equivalent to each rotated cone row."""
    nm = m.var_names
    out = []
    for X, Y, Z in m.rsoc:
        x, y, z = nm[X], nm[Y], nm[Z]
        s = f"{y}+{z}"
        out.append(f"# {x}^2 <= {y}*{z}\n"
                   f"[[{s}, 0, 2*{x}], [0, {s}, {y}-{z}], [2*{x}, {y}-{z}, {s}]] >= 0")
    return "\n".join(out) + ("\n" if out else "")
