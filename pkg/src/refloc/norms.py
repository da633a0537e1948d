"""Norm specifications, exact evaluation, duality and subdifferentials.

Every distance in the package goes through a :class:`NormSpec`. The exponent of
an ``lp`` norm is kept as the exact rational ``r/s`` so that the conic export and
the solvers agree on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

LP, L1, LINF, POLY = 0, 1, 2, 3
MAX_GENERATOR_DIM = 16


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class NormSpec:
    """A scaled norm: ``scale * ||v||``.

    ``kind`` is one of ``"lp"``, ``"l1"``, ``"linf"``, ``"poly"``. For ``"lp"`` the
    exponent is ``r/s`` with ``gcd(r, s) == 1`` and ``r > s >= 1``. A polyhedral norm
    is ``max_e e.v`` over the extreme points of its dual unit ball.
    """

    kind: str
    r: int | None = None
    s: int | None = None
    generators: tuple[tuple[float, ...], ...] | None = None
    scale: float = 1.0
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise NormError(f"scale must be positive and finite, got {self.scale}")
        if self.kind == "lp":
            if self.r is None or self.s is None:
                raise NormError("lp norm needs r and s")
            if self.s < 1 or self.r <= self.s:
                raise NormError(f"lp exponent r/s={self.r}/{self.s} must satisfy r > s >= 1")
            if math.gcd(self.r, self.s) != 1:
                raise NormError(f"lp exponent {self.r}/{self.s} is not in lowest terms")
        elif self.kind == "poly":
            gens = self.generators
            if not gens:
                raise NormError("polyhedral norm needs at least one generator")
            dim = len(gens[0])
            arr = np.asarray(gens, dtype=float)
            if arr.ndim != 2 or any(len(g) != dim for g in gens):
                raise NormError("polyhedral generators must share one dimension")
            if np.any(np.all(arr == 0.0, axis=1)):
                raise NormError("polyhedral generators may not contain the zero vector")
            keys = {tuple(g) for g in arr.tolist()}
            if any(tuple((-arr[i]).tolist()) not in keys for i in range(len(arr))):
                raise NormError("polyhedral generators must be symmetric under negation")
        elif self.kind not in ("l1", "linf"):
            raise NormError(f"unknown norm kind {self.kind!r}")

    # constructors -----------------------------------------------------------
    @classmethod
    def lp(cls, r: int, s: int = 1, scale: float = 1.0) -> "NormSpec":
        return cls("lp", r=int(r), s=int(s), scale=float(scale))

    @classmethod
    def l1(cls, scale: float = 1.0) -> "NormSpec":
        return cls("l1", scale=float(scale))

    @classmethod
    def linf(cls, scale: float = 1.0) -> "NormSpec":
        return cls("linf", scale=float(scale))

    @classmethod
    def polyhedral(cls, generators, scale: float = 1.0, source: str | None = None) -> "NormSpec":
        gens = tuple(tuple(float(c) for c in g) for g in np.atleast_2d(np.asarray(generators, float)))
        return cls("poly", generators=gens, scale=float(scale), source=source)

    # properties -------------------------------------------------------------
    @property
    def p(self) -> float:
        """Exponent as an extended real (``inf`` for ``linf``; ``nan`` for polyhedral)."""
        if self.kind == "lp":
            return self.r / self.s
        if self.kind == "l1":
            return 1.0
        if self.kind == "linf":
            return math.inf
        return math.nan

    @property
    def exponent(self) -> Fraction | None:
        return Fraction(self.r, self.s) if self.kind == "lp" else None

    @property
    def is_smooth(self) -> bool:
        return self.kind == "lp"

    @property
    def code(self) -> int:
        return {"lp": LP, "l1": L1, "linf": LINF, "poly": POLY}[self.kind]

    def with_scale(self, scale: float) -> "NormSpec":
        return NormSpec(self.kind, self.r, self.s, self.generators, float(scale), self.source)

    def generator_matrix(self, dim: int) -> np.ndarray:
        """Extreme points of the dual unit ball (unscaled), one per row."""
        if self.kind == "poly":
            g = np.asarray(self.generators, dtype=float)
            if g.shape[1] != dim:
                raise NormError(f"polyhedral generators have dimension {g.shape[1]}, expected {dim}")
            return g
        if dim > MAX_GENERATOR_DIM:
            raise NormError(f"refusing to materialise generators in dimension {dim} > {MAX_GENERATOR_DIM}")
        if self.kind == "l1":
            signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * dim), indexing="ij")).reshape(dim, -1).T
            return signs
        if self.kind == "linf":
            eye = np.eye(dim)
            return np.vstack([eye, -eye])
        raise NormError("smooth lp norms have no finite generator set")

    def kernel_leg(self, dim: int, weight: float = 1.0):
        """Tuple consumed by the numerical kernels: ``(code, p, scale, generators)``."""
        if self.kind == "poly":
            gens = np.ascontiguousarray(self.generator_matrix(dim))
        else:
            gens = np.zeros((0, dim))
        p = self.r / self.s if self.kind == "lp" else 1.0
        return (self.code, float(p), float(self.scale * weight), gens)

    def __str__(self) -> str:
        return format_norm(self)


def parse_norm(token: str, base_dir: str | Path | None = None) -> NormSpec:
    """Parse ``lp:r/s[:scale]``, ``l1[:scale]``, ``linf[:scale]`` or ``poly:<path>[:scale]``."""
    token = token.strip()
    if not token:
        raise NormError("empty norm token")
    head, _, rest = token.partition(":")
    head = head.lower()
    try:
        if head == "lp":
            parts = rest.split(":")
            if not parts[0]:
                raise NormError(f"missing exponent in {token!r}")
            num, _, den = parts[0].partition("/")
            r, s = int(num), int(den) if den else 1
            scale = _parse_scalar(parts[1]) if len(parts) > 1 else 1.0
            if len(parts) > 2:
                raise NormError(f"too many fields in {token!r}")
            return NormSpec.lp(r, s, scale)
        if head in ("l1", "linf"):
            scale = _parse_scalar(rest) if rest else 1.0
            return NormSpec.l1(scale) if head == "l1" else NormSpec.linf(scale)
        if head == "poly":
            path, scale = rest, 1.0
            if ":" in rest:
                maybe_path, _, maybe_scale = rest.rpartition(":")
                try:
                    scale = _parse_scalar(maybe_scale)
                    path = maybe_path
                except ValueError:
                    path, scale = rest, 1.0
            if not path:
                raise NormError(f"missing generator file in {token!r}")
            full = Path(path)
            if base_dir is not None and not full.is_absolute():
                full = Path(base_dir) / full
            return NormSpec.polyhedral(read_generators(full), scale, source=path)
    except NormError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise NormError(f"malformed norm token {token!r}: {exc}") from exc
    raise NormError(f"unknown norm kind in {token!r}")


def _parse_scalar(text: str) -> float:
    return float(Fraction(text.strip()))


def format_norm(spec: NormSpec) -> str:
    if spec.kind == "lp":
        body = f"lp:{spec.r}/{spec.s}"
    elif spec.kind == "poly":
        body = f"poly:{spec.source or '<inline>'}"
    else:
        body = spec.kind
    if spec.scale != 1.0:
        body += f":{spec.scale!r}"
    return body


def read_generators(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.split()])
            except ValueError as exc:
                raise NormError(f"{path}:{lineno}: bad generator row") from exc
    if not rows:
        raise NormError(f"{path}: no generators")
    return np.asarray(rows, dtype=float)


def _as_vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


def norm_eval(spec: NormSpec, v) -> np.ndarray | float:
    """``scale * ||v||`` along the last axis."""
    v = _as_vec(v)
    a = np.abs(v)
    if spec.kind == "l1":
        out = a.sum(axis=-1)
    elif spec.kind == "linf":
        out = a.max(axis=-1) if v.shape[-1] else np.zeros(v.shape[:-1])
    elif spec.kind == "poly":
        g = spec.generator_matrix(v.shape[-1])
        out = (v @ g.T).max(axis=-1)
    else:
        p = spec.r / spec.s
        m = a.max(axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        out = (m[..., 0] * ((a / safe) ** p).sum(axis=-1) ** (1.0 / p))
    out = spec.scale * out
    return float(out) if np.ndim(out) == 0 else out


def dual_exponent(spec: NormSpec) -> float:
    """Hölder conjugate ``q`` with ``1/p + 1/q = 1``."""
    if spec.kind == "lp":
        return spec.r / (spec.r - spec.s)
    if spec.kind == "l1":
        return math.inf
    if spec.kind == "linf":
        return 1.0
    raise NormError("dual exponent is undefined for a polyhedral norm; exchange generators instead")


def dual_norm(spec: NormSpec, w) -> float:
    """Dual norm of ``w`` with respect to ``scale * ||.||`` (so it carries ``1/scale``)."""
    w = _as_vec(w)
    if spec.kind == "poly":
        val = _gauge_of_hull(spec.generator_matrix(w.size), w)
    else:
        q = dual_exponent(spec)
        a = np.abs(w)
        if math.isinf(q):
            val = a.max()
        elif q == 1.0:
            val = a.sum()
        else:
            m = a.max()
            val = 0.0 if m == 0 else m * ((a / m) ** q).sum() ** (1.0 / q)
    return float(val) / spec.scale


def _gauge_of_hull(gens: np.ndarray, w: np.ndarray) -> float:
    """min sum(lam) s.t. gens.T @ lam = w, lam >= 0 (gauge of the symmetric hull)."""
    from scipy.optimize import linprog

    if not np.any(w):
        return 0.0
    res = linprog(np.ones(len(gens)), A_eq=gens.T, b_eq=w, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NormError("polyhedral generators do not span the space")
    return float(res.fun)


# --- subdifferentials -------------------------------------------------------


class Subdifferential:
    """Closed convex set of subgradients with membership and projection."""

    def project(self, g) -> np.ndarray:
        raise NotImplementedError

    def element(self) -> np.ndarray:
        raise NotImplementedError

    def distance(self, g) -> float:
        g = _as_vec(g)
        return float(np.linalg.norm(g - self.project(g)))

    def contains(self, g, tol: float = 1e-9) -> bool:
        return self.distance(g) <= tol


@dataclass(frozen=True)
class Singleton(Subdifferential):
    point: np.ndarray

    def project(self, g):
        return np.array(self.point, dtype=float)

    def element(self):
        return np.array(self.point, dtype=float)


@dataclass(frozen=True)
class Box(Subdifferential):
    """Product of intervals; the shape of an l1 subdifferential."""

    lo: np.ndarray
    hi: np.ndarray

    def project(self, g):
        return np.clip(_as_vec(g), self.lo, self.hi)

    def element(self):
        return np.clip(np.zeros_like(self.lo), self.lo, self.hi)


@dataclass(frozen=True)
class Hull(Subdifferential):
    """Convex hull of finitely many points (rows of ``vertices``)."""

    vertices: np.ndarray

    def project(self, g):
        return min_norm_point(self.vertices - _as_vec(g)) + _as_vec(g)

    def element(self):
        return self.vertices.mean(axis=0)


@dataclass(frozen=True)
class LqBall(Subdifferential):
    """``{g : ||g||_q <= radius}`` for a finite ``q > 1``."""

    q: float
    radius: float
    dim: int

    def project(self, g):
        return project_lq_ball(_as_vec(g), self.q, self.radius)

    def element(self):
        return np.zeros(self.dim)

    def contains(self, g, tol: float = 1e-9) -> bool:
        g = _as_vec(g)
        a = np.abs(g)
        m = a.max()
        nq = 0.0 if m == 0 else m * ((a / m) ** self.q).sum() ** (1.0 / self.q)
        return nq <= self.radius + tol


def subgradient(spec: NormSpec, v, face_tol: float = 1e-9) -> Subdifferential:
    """Subdifferential of ``scale * ||.||`` at ``v``.

    ``face_tol`` is relative to ``max|v|`` and decides which coordinates or
    generators count as active.
    """
    v = _as_vec(v)
    d = v.size
    s = spec.scale
    amax = float(np.abs(v).max()) if d else 0.0
    tol = face_tol * max(amax, 1e-300)
    zero = amax == 0.0
    if spec.kind == "lp":
        p = spec.r / spec.s
        if zero:
            q = dual_exponent(spec)
            if q == 2.0:
                return LqBall(2.0, s, d)
            return LqBall(q, s, d)
        nv = norm_eval(NormSpec.lp(spec.r, spec.s), v)
        return Singleton(s * np.sign(v) * (np.abs(v) / nv) ** (p - 1.0))
    if spec.kind == "l1":
        free = np.abs(v) <= tol
        sign = np.sign(v)
        lo = np.where(free, -s, s * sign)
        hi = np.where(free, s, s * sign)
        return Box(lo, hi)
    if spec.kind == "linf":
        if zero:
            eye = np.eye(d)
            return Hull(s * np.vstack([eye, -eye]))
        act = np.flatnonzero(np.abs(v) >= amax - tol)
        verts = np.zeros((act.size, d))
        verts[np.arange(act.size), act] = s * np.sign(v[act])
        return Hull(verts) if act.size > 1 else Singleton(verts[0])
    gens = spec.generator_matrix(d)
    vals = gens @ v
    act = vals >= vals.max() - face_tol * max(float(np.abs(vals).max()), 1e-300)
    if zero:
        act[:] = True
    verts = s * gens[act]
    return Hull(verts) if len(verts) > 1 else Singleton(verts[0])


def min_norm_point(points: np.ndarray, max_iter: int = 500) -> np.ndarray:
    """Minimum Euclidean norm point of ``conv(points)`` (Wolfe's algorithm)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    k = len(P)
    if k == 1:
        return P[0].copy()
    scale = max(1.0, float(np.abs(P).max()))
    eps = 1e-14 * scale * scale
    j0 = int(np.argmin(np.einsum("ij,ij->i", P, P)))
    S = [j0]
    lam = np.array([1.0])
    x = P[j0].copy()
    for _ in range(max_iter):
        j = int(np.argmin(P @ x))
        if x @ x - P[j] @ x <= eps or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            Q = P[S]
            # affine minimiser over the current corral
            G = Q @ Q.T
            m = len(S)
            K = np.zeros((m + 1, m + 1))
            K[:m, :m] = G
            K[:m, m] = 1.0
            K[m, :m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            mu = sol[:m]
            if np.all(mu > 1e-15):
                lam = mu
                x = mu @ Q
                break
            neg = mu <= 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            lam = lam + theta * (mu - lam)
            keep = lam > 1e-15
            S = [s_ for s_, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ P[S]
    return x


def project_lq_ball(z: np.ndarray, q: float, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{y : ||y||_q <= radius}`` for ``1 < q < inf``."""
    a = np.abs(z)
    m = a.max() if a.size else 0.0
    if m == 0 or (m * ((a / m) ** q).sum() ** (1.0 / q)) <= radius:
        return z.copy()
    if q == 2.0:
        return z * (radius / np.linalg.norm(z))

    def coords(theta):
        # u + theta*q*u**(q-1) = a, solved per coordinate by bisection
        lo = np.zeros_like(a)
        hi = a.copy()
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            big = mid + theta * q * mid ** (q - 1.0) > a
            hi = np.where(big, mid, hi)
            lo = np.where(big, lo, mid)
        return 0.5 * (lo + hi)

    def excess(theta):
        u = coords(theta)
        return (u ** q).sum() - radius ** q

    t_lo, t_hi = 0.0, 1.0
    while excess(t_hi) > 0:
        t_hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (t_lo + t_hi)
        if excess(mid) > 0:
            t_lo = mid
        else:
            t_hi = mid
    return np.sign(z) * coords(t_hi)


def generators_from_rows(rows: Sequence[Sequence[float]]) -> np.ndarray:
    return np.asarray(rows, dtype=float)
