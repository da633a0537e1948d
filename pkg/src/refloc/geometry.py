"""Hyperplane arithmetic: sidedness, norm projections and generalized sines."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .norms import NormSpec, dual_exponent, norm_eval


class Side(str, Enum):
    A = "A"
    B = "B"
    ON = "On"

    def __str__(self) -> str:
        return self.value


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """``{x : alpha . x = beta}``; ``H_A`` is ``alpha . x <= beta``."""

    alpha: np.ndarray
    beta: float

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(-1)
        if a.size == 0 or not np.any(a != 0.0):
            raise GeometryError("hyperplane normal alpha must be nonzero")
        if not (np.all(np.isfinite(a)) and math.isfinite(float(self.beta))):
            raise GeometryError("hyperplane coefficients must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", float(self.beta))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Hyperplane) and self.beta == other.beta
                and np.array_equal(self.alpha, other.alpha))

    def __hash__(self) -> int:
        return hash((tuple(self.alpha.tolist()), self.beta))

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def default_tol(self) -> float:
        return 1e-9 * (1.0 + abs(self.beta) + float(np.linalg.norm(self.alpha)))

    def signed(self, x) -> np.ndarray | float:
        """``alpha . x - beta`` (vectorised over leading axes)."""
        return np.asarray(x, dtype=float) @ self.alpha - self.beta

    def translated(self, t) -> "Hyperplane":
        return Hyperplane(self.alpha, self.beta + float(self.alpha @ np.asarray(t, float)))

    def anchor(self) -> np.ndarray:
        """Point of the hyperplane closest to the origin in the Euclidean sense."""
        return self.beta * self.alpha / float(self.alpha @ self.alpha)

    def tangent_basis(self) -> np.ndarray:
        """Orthonormal basis of ``alpha``'s orthogonal complement, as columns (d, d-1)."""
        _, _, vt = np.linalg.svd(self.alpha[None, :])
        return np.ascontiguousarray(vt[1:].T)

    def __str__(self) -> str:
        return format_hyperplane(self)


def parse_hyperplane(text: str) -> Hyperplane:
    """Parse ``alpha=a1,...,ad;beta=b`` or the planar shorthand ``y=<lambda>x``."""
    s = text.strip().replace(" ", "")
    m = re.fullmatch(r"y=([^x]*)x", s)
    if m:
        lam = m.group(1)
        lam = {"": "1", "-": "-1", "+": "1"}.get(lam, lam)
        try:
            return Hyperplane(np.array([float(Fraction(lam)), -1.0]), 0.0)
        except (ValueError, ZeroDivisionError) as exc:
            raise GeometryError(f"bad slope in {text!r}") from exc
    fields = {}
    for part in filter(None, s.split(";")):
        key, eq, val = part.partition("=")
        if not eq:
            raise GeometryError(f"malformed hyperplane field {part!r}")
        fields[key.lower()] = val
    if set(fields) != {"alpha", "beta"}:
        raise GeometryError(f"hyperplane needs exactly alpha= and beta=, got {text!r}")
    try:
        alpha = np.array([float(Fraction(t)) for t in fields["alpha"].split(",")])
        beta = float(Fraction(fields["beta"]))
    except (ValueError, ZeroDivisionError) as exc:
        raise GeometryError(f"non-numeric hyperplane coefficient in {text!r}") from exc
    return Hyperplane(alpha, beta)


def format_hyperplane(h: Hyperplane) -> str:
    coefs = ",".join(f"{c:.17g}" for c in h.alpha)
    return f"alpha={coefs};beta={h.beta:.17g}"


@dataclass(frozen=True, eq=False)
class DemandPoint:
    coords: np.ndarray
    weight: float = 1.0
    label: str | None = None

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise GeometryError("demand point coordinates must be finite")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise GeometryError(f"demand weight must be positive, got {self.weight}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "weight", float(self.weight))

    def __eq__(self, other) -> bool:
        return (isinstance(other, DemandPoint) and self.weight == other.weight
                and self.label == other.label and np.array_equal(self.coords, other.coords))

    def __hash__(self) -> int:
        return hash((tuple(self.coords.tolist()), self.weight, self.label))


def side_of(h: Hyperplane, x, tol: float | None = None) -> Side:
    tol = h.default_tol if tol is None else tol
    s = float(h.signed(x))
    if abs(s) <= tol:
        return Side.ON
    return Side.A if s < 0 else Side.B


def _lp_direction(alpha: np.ndarray, spec: NormSpec) -> np.ndarray:
    """Unit-ball maximiser of ``alpha . delta`` (unscaled norm) with the min-l2 tie-break."""
    a = np.abs(alpha)
    sgn = np.sign(alpha)
    if spec.kind == "l1":
        top = a >= a.max() * (1.0 - 1e-15)
        return np.where(top, sgn, 0.0) / top.sum()
    if spec.kind == "linf":
        return sgn
    q = dual_exponent(spec)
    m = a.max()
    nq = m * ((a / m) ** q).sum() ** (1.0 / q)
    return sgn * (a / nq) ** (q - 1.0)


def project_lp(h: Hyperplane, a, spec: NormSpec) -> np.ndarray:
    """Closest point of ``h`` to ``a`` measured in ``spec``.

    For l1/linf the minimiser can be a whole face; the returned representative
    is the one with the smallest Euclidean displacement.
    """
    a = np.asarray(a, dtype=float)
    r = float(h.signed(a))
    if r == 0.0:
        return a.copy()
    if spec.kind == "poly":
        return _project_poly(h, a, spec)
    delta = _lp_direction(h.alpha, spec)
    y = a - (r / float(h.alpha @ delta)) * delta
    # remove the rounding residue along the normal
    return y - (float(h.signed(y)) / float(h.alpha @ h.alpha)) * h.alpha


def _project_poly(h: Hyperplane, a: np.ndarray, spec: NormSpec) -> np.ndarray:
    from scipy.optimize import linprog

    g = spec.generator_matrix(h.dim)
    d = h.dim
    # variables (y, z): min z  s.t.  e.(a - y) <= z,  alpha.y = beta
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-g, -np.ones((len(g), 1))])
    b_ub = -g @ a
    A_eq = np.append(h.alpha, 0.0)[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[h.beta],
                  bounds=[(None, None)] * (d + 1), method="highs")
    if res.status != 0:
        raise GeometryError("polyhedral projection LP failed")
    return res.x[:d]


def distance_to_hyperplane(h: Hyperplane, a, spec: NormSpec) -> float:
    return float(norm_eval(spec, np.asarray(a, float) - project_lp(h, a, spec)))


def projection_face(h: Hyperplane, a, spec: NormSpec, tol: float = 1e-12) -> np.ndarray:
    """Vertices of the set of nearest points of ``h`` (a single row when unique)."""
    a = np.asarray(a, dtype=float)
    y = project_lp(h, a, spec)
    r = float(h.signed(a))
    if r == 0.0 or spec.kind not in ("l1",):
        return y[None, :]
    m = np.abs(h.alpha).max()
    top = np.flatnonzero(np.abs(h.alpha) >= m * (1.0 - 1e-15))
    verts = []
    for j in top:
        delta = np.zeros_like(a)
        delta[j] = np.sign(h.alpha[j])
        verts.append(a - (r / float(h.alpha @ delta)) * delta)
    return np.asarray(verts)


def generalized_sine(h: Hyperplane, a, x, spec: NormSpec, tol: float | None = None):
    """``|alpha.a - beta| / ||a - x||`` and its per-coordinate parts."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    tol = h.default_tol if tol is None else tol
    if abs(float(h.signed(x))) > tol:
        raise GeometryError("generalized sine needs x on the hyperplane")
    dist = float(norm_eval(spec, a - x))
    if dist == 0.0:
        raise GeometryError("generalized sine is undefined when a coincides with x")
    comps = np.abs(h.alpha * (a - x)) / dist
    return abs(float(h.signed(a))) / dist, comps
