"""Instance files, embedded datasets and reproducible random instances.

File format (UTF-8, line oriented, ``#`` starts a comment)::

    schema_version 1
    name example            # optional
    dim 2
    hyperplane y=3/2x       # or alpha=a1,...,ad;beta=b
    norm_a lp:2/1
    norm_b lp:3/1
    norm_h linf:1/4         # optional, used by the transit model
    points 3
    auto 1 1 2              # <set> <weight> <coordinates...>
    A 2.5 2 8
    B 1 9 1

``set`` is ``A``, ``B`` or ``auto``. Automatic points are classified with
:func:`refloc.geometry.side_of`; points on the hyperplane go to ``A``. An
explicit label may not contradict strict sidedness. Numbers accept fractions
(``1/4``) and are written back with 17 significant digits, so a written file
reloads to the same floats.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import DemandPoint, GeometryError, Hyperplane, Side, format_hyperplane, parse_hyperplane, side_of
from .locate import LocationInstance
from .norms import NormError, NormSpec, format_norm, parse_norm

SCHEMA_VERSION = 1
DATA_ENV = "REFLOC_DATA"
_EXTERNAL = {
    "parlar4": "4 planar demand points with unit weights",
    "zaferanieh30": "30 planar demand points",
    "zaferanieh50": "50 planar demand points",
}


class InstanceFormatError(ValueError):
    pass


class MissingDataError(FileNotFoundError):
    pass


@dataclass
class PointRecord:
    coords: tuple
    weight: float = 1.0
    set: str = "auto"


@dataclass
class InstanceFile:
    dim: int
    hyperplane: Hyperplane
    norms: dict
    points: list = field(default_factory=list)
    name: str | None = None
    schema_version: int = SCHEMA_VERSION

    def classified(self) -> tuple[list, list]:
        """Split the points into the A and B lists, resolving ``auto`` labels."""
        A, B = [], []
        tol = self.hyperplane.default_tol
        for i, p in enumerate(self.points):
            side = side_of(self.hyperplane, np.asarray(p.coords, float), tol)
            label = p.set
            if label == "auto":
                label = "B" if side == Side.B else "A"
            elif (label == "A" and side == Side.B) or (label == "B" and side == Side.A):
                raise InstanceFormatError(f"point {i + 1} is labelled {label} but lies strictly in H_{side}")
            (A if label == "A" else B).append(DemandPoint(p.coords, p.weight))
        return A, B

    def to_instance(self) -> LocationInstance:
        A, B = self.classified()
        return LocationInstance(self.dim, self.hyperplane, self.norms["a"], self.norms["b"], A, B,
                                self.norms.get("h"), name=self.name)


def _num(text: str, lineno: int) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise InstanceFormatError(f"line {lineno}: not a number: {text!r}") from None


def parse_instance(text: str, base_dir: str | Path | None = None) -> InstanceFile:
    header: dict[str, tuple[str, int]] = {}
    points: list[PointRecord] = []
    expected = None
    dim = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if expected is not None and len(points) < expected:
            parts = line.split()
            if len(parts) != 2 + dim:
                raise InstanceFormatError(f"line {lineno}: expected <set> <weight> and {dim} coordinates")
            label = parts[0] if parts[0] == "auto" else parts[0].upper()
            if label not in ("A", "B", "auto"):
                raise InstanceFormatError(f"line {lineno}: unknown set {parts[0]!r}")
            w = _num(parts[1], lineno)
            if not w > 0:
                raise InstanceFormatError(f"line {lineno}: weight must be positive")
            points.append(PointRecord(tuple(_num(t, lineno) for t in parts[2:]), w, label))
            continue
        key, _, value = line.partition(" ")
        value = value.strip()
        if key in header:
            raise InstanceFormatError(f"line {lineno}: duplicate field {key!r}")
        if key not in ("schema_version", "name", "dim", "hyperplane", "norm_a", "norm_b", "norm_h", "points"):
            raise InstanceFormatError(f"line {lineno}: unknown field {key!r}")
        header[key] = (value, lineno)
        if key == "dim":
            try:
                dim = int(value)
            except ValueError:
                raise InstanceFormatError(f"line {lineno}: dim must be an integer") from None
            if dim < 1:
                raise InstanceFormatError(f"line {lineno}: dim must be positive")
        elif key == "points":
            if dim is None:
                raise InstanceFormatError(f"line {lineno}: 'points' must come after 'dim'")
            try:
                expected = int(value)
            except ValueError:
                raise InstanceFormatError(f"line {lineno}: point count must be an integer") from None
    for key in ("schema_version", "dim", "hyperplane", "norm_a", "norm_b", "points"):
        if key not in header:
            raise InstanceFormatError(f"missing field {key!r}")
    version, lineno = header["schema_version"]
    if version != str(SCHEMA_VERSION):
        raise InstanceFormatError(f"line {lineno}: unsupported schema_version {version!r}")
    if len(points) != expected:
        raise InstanceFormatError(f"expected {expected} points, found {len(points)}")
    try:
        h = parse_hyperplane(header["hyperplane"][0])
    except GeometryError as exc:
        raise InstanceFormatError(f"line {header['hyperplane'][1]}: {exc}") from None
    if h.dim != dim:
        raise InstanceFormatError(f"line {header['hyperplane'][1]}: hyperplane has dimension {h.dim}, not {dim}")
    norms = {}
    for key in ("a", "b", "h"):
        if f"norm_{key}" in header:
            value, lineno = header[f"norm_{key}"]
            try:
                norms[key] = parse_norm(value, base_dir)
            except NormError as exc:
                raise InstanceFormatError(f"line {lineno}: {exc}") from None
    name = header["name"][0] if "name" in header else None
    return InstanceFile(dim, h, norms, points, name)


def load_file(path: str | Path) -> InstanceFile:
    path = Path(path)
    if not path.exists():
        raise MissingDataError(f"instance file not found: {path}")
    return parse_instance(path.read_text(encoding="utf-8"), base_dir=path.parent)


def load(path: str | Path) -> LocationInstance:
    """Read an instance file and return the validated :class:`LocationInstance`."""
    return load_file(path).to_instance()


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps(inst: InstanceFile) -> str:
    lines = [f"schema_version {inst.schema_version}"]
    if inst.name:
        lines.append(f"name {inst.name}")
    lines += [f"dim {inst.dim}", f"hyperplane {format_hyperplane(inst.hyperplane)}"]
    for key in ("a", "b", "h"):
        spec = inst.norms.get(key)
        if spec is None:
            continue
        if spec.kind == "poly" and not spec.source:
            raise InstanceFormatError("polyhedral norms need a generator file to be written out")
        lines.append(f"norm_{key} {format_norm(spec)}")
    lines.append(f"points {len(inst.points)}")
    for p in inst.points:
        lines.append(" ".join([p.set, _fmt(p.weight)] + [_fmt(c) for c in p.coords]))
    return "\n".join(lines) + "\n"


def dump(inst: InstanceFile, path: str | Path) -> None:
    Path(path).write_text(dumps(inst), encoding="utf-8")


def from_instance(inst: LocationInstance) -> InstanceFile:
    pts = [PointRecord(tuple(float(c) for c in p.coords), p.weight, "A") for p in inst.points_A]
    pts += [PointRecord(tuple(float(c) for c in p.coords), p.weight, "B") for p in inst.points_B]
    norms = {"a": inst.norm_a, "b": inst.norm_b}
    if inst.norm_h is not None:
        norms["h"] = inst.norm_h
    return InstanceFile(inst.dim, inst.hyperplane, norms, pts, inst.name)


# --- datasets ------------------------------------------------------------------------


def dataset_names() -> list[str]:
    bundled = sorted(p.name[:-4] for p in resources.files("refloc").joinpath("data").iterdir()
                     if p.name.endswith(".txt"))
    return bundled + sorted(_EXTERNAL)


def embedded_dataset(name: str, data_dir: str | Path | None = None) -> InstanceFile:
    """Load a named dataset.

    Bundled sets ship with the package. Sets that are only cited elsewhere must
    be supplied as ``<name>.txt`` in ``data_dir`` or in the directory named by
    the ``REFLOC_DATA`` environment variable.
    """
    res = resources.files("refloc").joinpath("data", f"{name}.txt")
    if res.is_file():
        return parse_instance(res.read_text(encoding="utf-8"))
    for base in (data_dir, os.environ.get(DATA_ENV)):
        if base and (Path(base) / f"{name}.txt").is_file():
            return load_file(Path(base) / f"{name}.txt")
    if name in _EXTERNAL:
        raise MissingDataError(
            f"dataset {name!r} ({_EXTERNAL[name]}) is not bundled; supply {name}.txt in the instance "
            f"format via --data-dir or ${DATA_ENV}")
    raise MissingDataError(f"unknown dataset {name!r}; known: {', '.join(dataset_names())}")


# --- random instances ----------------------------------------------------------------

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** with its state filled from splitmix64(seed).

    ``random()`` returns ``(next() >> 11) * 2**-53``, a double in ``[0, 1)``.
    """

    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        state = []
        for _ in range(4):
            sm = (sm + 0x9E3779B97F4A7C15) & _MASK
            z = sm
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
            state.append(z ^ (z >> 31))
        self.s = state

    def next(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self, n: int) -> np.ndarray:
        scale = 2.0 ** -53
        return np.array([(self.next() >> 11) * scale for _ in range(n)])


def generate_random(n: int, d: int, seed: int, norm_a: NormSpec | None = None,
                    norm_b: NormSpec | None = None, norm_h: NormSpec | None = None) -> InstanceFile:
    """``n`` uniform points in ``[0, 1]^d`` with unit weights, split by ``x_d = 0.5``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if d < 2:
        raise ValueError("d must be at least 2")
    coords = Xoshiro256(seed).random(n * d).reshape(n, d)
    alpha = np.zeros(d)
    alpha[-1] = 1.0
    norms = {"a": norm_a or NormSpec.lp(2), "b": norm_b or NormSpec.lp(2)}
    if norm_h is not None:
        norms["h"] = norm_h
    pts = [PointRecord(tuple(float(c) for c in row), 1.0, "auto") for row in coords]
    return InstanceFile(d, Hyperplane(alpha, 0.5), norms, pts, name=f"random-n{n}-d{d}-s{seed}")
