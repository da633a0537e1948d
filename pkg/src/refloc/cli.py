"""Command line interface: ``refloc <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure,
4 missing data file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import DemandPoint, GeometryError, Side, parse_hyperplane, side_of
from .instances import (InstanceFormatError, MissingDataError, dump, embedded_dataset, generate_random,
                        load_file)
from .locate import LocateError, LocationInstance, StandingAssumptionWarning, solve
from .norms import NormError, format_norm, parse_norm
from .refraction import PathQuery, RefractionError, gate_single, gate_transit, retm_check
from .socp_export import (ModelError, build_minlp, build_side_model, count_audit, expand_powers,
                          sdp_pattern, write_model)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


# --- helpers -----------------------------------------------------------------------------


def _vector(text: str) -> np.ndarray:
    from fractions import Fraction
    try:
        return np.array([float(Fraction(t)) for t in text.replace(" ", "").split(",")])
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad vector {text!r}; use comma separated numbers") from None


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _instance_from_args(args, need_h: bool = False) -> LocationInstance:
    if args.instance:
        f = load_file(args.instance)
    elif args.dataset:
        f = embedded_dataset(args.dataset, args.data_dir)
    else:
        raise ValueError("give --instance <file> or --dataset <name>")
    if getattr(args, "hyperplane", None):
        f.hyperplane = parse_hyperplane(args.hyperplane)
    for key in ("a", "b", "h"):
        tok = getattr(args, f"norm_{key}", None)
        if tok:
            f.norms[key] = parse_norm(tok)
    if need_h and "h" not in f.norms:
        raise ValueError("the transit model needs a hyperplane norm (norm_h in the file or --norm-h)")
    return f.to_instance()


def _locate(inst, transit, args):
    res = solve(inst, transit=transit, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    if not (res.diagnostics["A"]["converged"] or res.diagnostics["B"]["converged"]):
        raise NumericalFailure("solver did not converge")
    return res


def _result_json(res, inst) -> dict:
    out = res.to_dict()
    out["norms"] = {"a": format_norm(inst.norm_a), "b": format_norm(inst.norm_b)}
    if inst.norm_h is not None:
        out["norms"]["h"] = format_norm(inst.norm_h)
    out["gates"] = {f"{lbl}{i + 1}": [g.tolist() for g in gs] for (lbl, i), gs in res.per_point_gates.items()}
    return out


# --- subcommands -------------------------------------------------------------------------


def _distance_query(args) -> PathQuery:
    if args.instance:
        f = load_file(args.instance)
        if args.frm is None or args.to is None:
            raise ValueError("--instance needs --from and --to (1-based point indices)")
        n = len(f.points)
        for k in (args.frm, args.to):
            if not 1 <= k <= n:
                raise ValueError(f"point index {k} out of range 1..{n}")
        f.classified()  # validates the explicit labels
        labels = [rec.set if rec.set != "auto" else
                  ("B" if side_of(f.hyperplane, np.asarray(rec.coords)) == Side.B else "A") for rec in f.points]
        i, j = args.frm, args.to
        if labels[i - 1] == "B" and labels[j - 1] == "A":
            i, j = j, i
        elif not (labels[i - 1] == "A" and labels[j - 1] == "B"):
            raise RefractionError("--from and --to must lie on opposite sides of the hyperplane")
        pa, pb = f.points[i - 1], f.points[j - 1]
        norm_h = f.norms.get("h") if args.transit else None
        if args.transit and norm_h is None:
            raise ValueError("the instance has no norm_h for --transit")
        return PathQuery(DemandPoint(pa.coords, pa.weight), DemandPoint(pb.coords, pb.weight), f.hyperplane,
                         f.norms["a"], f.norms["b"], norm_h)
    missing = [flag for flag, v in (("--a", args.a), ("--b", args.b), ("--hyperplane", args.hyperplane),
                                    ("--norm-a", args.norm_a), ("--norm-b", args.norm_b)) if v is None]
    if missing:
        raise ValueError(f"give --instance with --from/--to, or {', '.join(missing)}")
    h = parse_hyperplane(args.hyperplane)
    return PathQuery(_vector(args.a), _vector(args.b), h, parse_norm(args.norm_a), parse_norm(args.norm_b),
                     parse_norm(args.norm_h) if args.norm_h else None)


def cmd_distance(args) -> int:
    q = _distance_query(args)
    r = gate_transit(q) if q.norm_h is not None else gate_single(q)
    _emit({"gates": [g.tolist() for g in r.gates], "leg_lengths": r.leg_lengths, "total": r.total,
           "snell_residual": r.snell_residual, "iterations": r.iterations, "converged": r.converged},
          args.output)
    return EXIT_OK if r.converged or r.snell_residual <= 1e-7 else EXIT_NUMERIC


def cmd_locate(args, transit: bool = False) -> int:
    inst = _instance_from_args(args, need_h=transit)
    res = _locate(inst, transit, args)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_star", "f_star", "side", "f_A", "f_B", "iterations_A", "iterations_B", "seconds"])
        d = res.diagnostics
        w.writerow([json.dumps(res.x_star.tolist()), repr(res.f_star), str(res.side),
                    repr(res.side_objectives[0]), repr(res.side_objectives[1]),
                    d["A"]["iterations"], d["B"]["iterations"], f"{d['seconds']:.6f}"])
        if args.output:
            Path(args.output).write_text(buf.getvalue(), encoding="utf-8")
        else:
            sys.stdout.write(buf.getvalue())
    else:
        _emit(_result_json(res, inst), args.output)
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _instance_from_args(args, need_h=args.transit)
    if args.minlp:
        m = build_minlp(inst, transit=args.transit)
    else:
        m = build_side_model(inst, args.side, transit=args.transit)
    if args.expand:
        m = expand_powers(m)
    write_model(m, args.output)
    if not args.minlp:
        print(count_audit(m, inst, strict=False))
    if args.emit_sdp:
        sys.stdout.write(sdp_pattern(m))
    return EXIT_OK


def cmd_gen(args) -> int:
    f = generate_random(args.n, args.dim, args.seed)
    dump(f, args.output)
    return EXIT_OK


def cmd_check_retm(args) -> int:
    h = parse_hyperplane(args.hyperplane)
    norms = (parse_norm(args.norm_a), parse_norm(args.norm_b), parse_norm(args.norm_h))
    rep = retm_check(_vector(args.a), _vector(args.b), h, norms, samples=args.samples)
    _emit({"holds": rep.holds, "condition": rep.condition, "violation": rep.violation,
           "witness": None if rep.witness is None else rep.witness.tolist(), "samples": rep.samples},
          args.output)
    return EXIT_OK


# --- plotting ----------------------------------------------------------------------------------


def render_svg(inst: LocationInstance, res, size: int = 600) -> str:
    """Points, hyperplane, facility and shortest paths as a standalone SVG."""
    if inst.dim != 2:
        raise ValueError("plotting needs a planar instance (dim = 2)")
    pts = inst.all_coords()
    allp = np.vstack([pts, res.x_star[None, :]])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    lo, hi = lo - 0.08 * span, lo + 1.08 * span
    scale = size / (hi - lo).max()

    def px(p):
        return f"{(p[0] - lo[0]) * scale:.3f}", f"{(hi[1] - p[1]) * scale:.3f}"

    def xy(p):
        return ",".join(px(p))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', f'<rect width="{size}" height="{size}" fill="white"/>']
    # hyperplane clipped to the box
    a, b = inst.hyperplane.alpha, inst.hyperplane.beta
    ends = []
    for t in (lo[0], hi[0]):
        if a[1] != 0:
            ends.append(np.array([t, (b - a[0] * t) / a[1]]))
    for t in (lo[1], hi[1]):
        if a[0] != 0:
            ends.append(np.array([(b - a[1] * t) / a[0], t]))
    ends = [e for e in ends if np.all(e >= lo - 1e-9) and np.all(e <= hi + 1e-9)]
    if len(ends) >= 2:
        (x1, y1), (x2, y2) = px(ends[0]), px(ends[-1])
        out.append(f'<line class="hyperplane" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                   'stroke="black" stroke-width="1.5"/>')
    x = res.x_star
    for lbl, coords in (("A", inst.coords_A), ("B", inst.coords_B)):
        for i, p in enumerate(coords):
            gates = res.per_point_gates.get((lbl, i), [])
            path = [x] + list(gates) + [p]
            poly = " ".join(xy(q) for q in path)
            out.append(f'<polyline class="path" points="{poly}" fill="none" stroke="#888" stroke-width="0.8"/>')
    for lbl, coords, color in (("A", inst.coords_A, "#1f5fbf"), ("B", inst.coords_B, "#bf3f1f")):
        for p in coords:
            cx, cy = px(p)
            out.append(f'<circle class="point{lbl}" cx="{cx}" cy="{cy}" r="4" fill="{color}"/>')
    cx, cy = px(x)
    out.append(f'<rect class="facility" x="{float(cx) - 5:.3f}" y="{float(cy) - 5:.3f}" width="10" height="10" '
               'fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args) -> int:
    inst = _instance_from_args(args, need_h=args.transit)
    if inst.dim != 2:
        raise ValueError("plot needs a planar instance (dim = 2)")
    res = _locate(inst, args.transit, args)
    Path(args.output).write_text(render_svg(inst, res), encoding="utf-8")
    return EXIT_OK


# --- bench ---------------------------------------------------------------------------------------

EXAMPLE_REFS = {"example1": 103.934734, "example2": 100.442353, "example3": 8.0}
TABLE1 = [  # dataset, hyperplane, reference f, reference x
    ("parlar4", "y=x", 26.951942, (3.333333, 1.666666)),
    ("parlar18", "y=3/2x", 112.350633, (8.926152, 6.465740)),
    ("zaferanieh30", "y=1/2x", 301.378686, (6.0, 4.0)),
    ("zaferanieh30", "y=x", 265.971645, (5.658661, 4.586579)),
    ("zaferanieh30", "y=3/2x", 257.814199, (5.512428, 4.561921)),
    ("zaferanieh50", "y=1/2x", 1126.392248, (11.0, 8.0)),
    ("zaferanieh50", "y=x", 966.377027, (10.730800, 8.661463)),
    ("zaferanieh50", "y=3/2x", 939.487369, (10.525793, 8.603231)),
]
TABLE2 = [
    ("parlar4", "y=x", 20.5307, (0.0, 0.000001)),
    ("parlar18", "y=3/2x", 108.3362, (8.811381, 7.119336)),
    ("zaferanieh30", "y=1/2x", 254.7805, (6.0, 3.0)),
    ("zaferanieh30", "y=x", 230.7513, (5.234851, 5.234838)),
    ("zaferanieh30", "y=3/2x", 244.4072, (5.153294, 5.102873)),
    ("zaferanieh50", "y=1/2x", 917.1736, (11.923664, 5.961832)),
    ("zaferanieh50", "y=x", 808.2990, (10.000020, 9.999995)),
    ("zaferanieh50", "y=3/2x", 892.4482, (10.521522, 9.571467)),
]


def _timed(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def _row(ident, inst, res, secs, ref=None, ref_x=None) -> dict:
    row = {"instance": ident, "norms": "/".join(format_norm(n) for n in (inst.norm_a, inst.norm_b, inst.norm_h)
                                                  if n is not None),
           "hyperplane": str(inst.hyperplane), "f_star": res["f"], "x_star": res["x"],
           "side": res["side"], "cpu_seconds": secs, "reference_value": ref, "abs_gap": None}
    if ref is not None:
        row["abs_gap"] = abs(res["f"] - ref)
    if ref_x is not None:
        row["x_gap"] = float(np.abs(np.asarray(res["x"]) - np.asarray(ref_x)).max())
    return row


def _bench_locate(inst, transit, args, repeats):
    def run():
        r = solve(inst, transit=transit, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        return {"f": r.f_star, "x": r.x_star.tolist(), "side": str(r.side)}
    return _timed(run, repeats)


def bench_rows(args) -> list:
    repeats = args.repeats
    rows = []
    if args.suite == "examples":
        f = embedded_dataset("parlar18")
        f.norms = {"a": parse_norm("lp:2"), "b": parse_norm("lp:3"), "h": parse_norm("linf:1/4")}
        inst = f.to_instance()
        res, t = _bench_locate(inst, False, args, repeats)
        rows.append(_row("example1", inst, res, t, EXAMPLE_REFS["example1"], (9.23792, 6.435661)))
        res, t = _bench_locate(inst, True, args, repeats)
        rows.append(_row("example2", inst, res, t, EXAMPLE_REFS["example2"], (9.133220, 6.897760)))
        h = parse_hyperplane("y=x")
        q = PathQuery((4.0, 5.0), (12.0, 11.0), h, parse_norm("l1"), parse_norm("l1"), parse_norm("linf"))
        pr, t = _timed(lambda: gate_transit(q), repeats)
        rows.append({"instance": "example3", "norms": "l1/l1/linf", "hyperplane": str(h), "f_star": pr.total,
                     "x_star": [g.tolist() for g in pr.gates], "side": "-", "cpu_seconds": t,
                     "reference_value": EXAMPLE_REFS["example3"], "abs_gap": abs(pr.total - 8.0)})
    elif args.suite in ("table1", "table2"):
        table, transit = (TABLE1, False) if args.suite == "table1" else (TABLE2, True)
        for name, hp, ref, ref_x in table:
            ident = f"{name}:{hp}"
            try:
                f = embedded_dataset(name, args.data_dir)
            except MissingDataError as exc:
                rows.append({"instance": ident, "skipped": str(exc), "reference_value": ref})
                continue
            f.hyperplane = parse_hyperplane(hp)
            f.norms = {"a": parse_norm("l1"), "b": parse_norm("lp:2")}
            if transit:
                f.norms["h"] = parse_norm("linf:1/4")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                inst = f.to_instance()
            res, t = _bench_locate(inst, transit, args, repeats)
            rows.append(_row(ident, inst, res, t, ref, ref_x))
    else:
        f = generate_random(args.n, args.dim, args.seed)
        inst = f.to_instance()
        res, t = _bench_locate(inst, False, args, repeats)
        rows.append(_row(f.name, inst, res, t))
    return rows


def cmd_bench(args) -> int:
    rows = bench_rows(args)
    if args.no_timing:
        for r in rows:
            if "cpu_seconds" in r:
                r["cpu_seconds"] = None
    fields = ["instance", "norms", "hyperplane", "f_star", "x_star", "side", "cpu_seconds",
              "reference_value", "abs_gap", "skipped"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in r.items()})
    if args.csv:
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    if args.json:
        Path(args.json).write_text(json.dumps({"suite": args.suite, "rows": rows}, indent=2) + "\n",
                                   encoding="utf-8")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------------


def _add_instance_args(p, norms=True):
    p.add_argument("--instance", help="instance file")
    p.add_argument("--dataset", help="named dataset (e.g. parlar18)")
    p.add_argument("--data-dir", help="directory with external dataset files")
    if norms:
        p.add_argument("--hyperplane", help="override the hyperplane, e.g. 'y=3/2x'")
        p.add_argument("--norm-a", help="override the side-A norm, e.g. lp:2")
        p.add_argument("--norm-b", help="override the side-B norm")
        p.add_argument("--norm-h", help="hyperplane norm for the transit model, e.g. linf:1/4")


def build_parser() -> argparse.ArgumentParser:
    def globals_(parser, defaults: bool):
        kw = (lambda v: {"default": v}) if defaults else (lambda v: {"default": argparse.SUPPRESS})
        parser.add_argument("--tol", type=float, help="KKT tolerance (default 1e-8)", **kw(1e-8))
        parser.add_argument("--max-iter", type=int, help="Newton iterations per smoothing stage", **kw(200))
        parser.add_argument("--threads", type=int, help="worker threads for gate batches", **kw(1))
        parser.add_argument("--seed", type=int, help="seed for probes and random instances", **kw(0))

    ap = argparse.ArgumentParser(prog="refloc", description="facility location across a refracting hyperplane")
    globals_(ap, True)
    common = argparse.ArgumentParser(add_help=False)
    globals_(common, False)
    sub = ap.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    p = sub.add_parser("distance", help="shortest path between two points across the hyperplane")
    p.add_argument("--instance", help="instance file; pick the endpoints with --from/--to")
    p.add_argument("--from", dest="frm", type=int, help="1-based index of a point in the instance file")
    p.add_argument("--to", type=int, help="1-based index of a point on the other side")
    p.add_argument("--transit", action="store_true", help="use the instance's norm_h")
    p.add_argument("--a", help="point in H_A, e.g. '4,5'")
    p.add_argument("--b", help="point in H_B")
    p.add_argument("--hyperplane")
    p.add_argument("--norm-a")
    p.add_argument("--norm-b")
    p.add_argument("--norm-h", help="allow travel along the hyperplane under this norm")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_distance)

    for name, transit in (("locate", False), ("locate-transit", True)):
        p = sub.add_parser(name, help=f"solve the {'transit ' if transit else ''}location problem")
        _add_instance_args(p)
        fmt = p.add_mutually_exclusive_group()
        fmt.add_argument("--json", action="store_true", help="JSON output (default)")
        fmt.add_argument("--csv", action="store_true", help="one CSV row instead of JSON")
        p.add_argument("-o", "--output")
        p.set_defaults(func=lambda a, t=transit: cmd_locate(a, t))

    p = sub.add_parser("export-socp", help="write the conic model as text")
    _add_instance_args(p)
    p.add_argument("--side", choices=["A", "B"], default="A")
    p.add_argument("--transit", action="store_true")
    p.add_argument("--minlp", action="store_true", help="single mixed-binary model instead of one side")
    p.add_argument("--expand", action="store_true", help="replace power rows by rotated cone towers")
    p.add_argument("--emit-sdp", action="store_true", help="also print the 3x3 matrix form of each cone row")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gen", help="random instance in [0,1]^d split by x_d = 0.5")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run a benchmark suite and report CSV/JSON")
    p.add_argument("--suite", choices=["examples", "table1", "table2", "random"], default="examples")
    p.add_argument("--data-dir")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--repeats", type=int, default=3, help="timing runs per row (median reported)")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--no-timing", action="store_true", help="leave cpu_seconds empty (byte-stable reports)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="SVG of a planar solution")
    _add_instance_args(p)
    p.add_argument("--transit", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("check-retm", help="sampled check of the rapid-enough-transit condition")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--hyperplane", required=True)
    p.add_argument("--norm-a", required=True)
    p.add_argument("--norm-b", required=True)
    p.add_argument("--norm-h", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_check_retm)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    kernels.set_threads(args.threads)
    warnings.simplefilter("ignore", StandingAssumptionWarning)
    try:
        return args.func(args)
    except (MissingDataError, FileNotFoundError) as exc:
        print(f"refloc: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalFailure, LocateError, np.linalg.LinAlgError) as exc:
        print(f"refloc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, NormError, GeometryError, InstanceFormatError, RefractionError, ModelError) as exc:
        print(f"refloc: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
