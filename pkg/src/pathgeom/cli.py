"""Command line front end: ``pathgeom <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import symexpr as se
from .characterize import SplitFailure, classify
from .invariants import binary_forms, fels_curvature, fels_torsion, roots_of_binary, scalar_invariants
from .jetcalc import SystemODE
from .lewy import LewyError, LewySpec, cubic_seeds, lewy_rhs, random_spec, residual_check, start_point, trace_lewy
from .paracr import DefiningFunction, catalog, sample_sigma
from .verify import format_table, report_json, run_suite


class InputError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_json(path: str):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: malformed JSON: {err}") from err


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _catalog_entry(name: str, n: int = 1):
    entries = catalog(n)
    if name not in entries:
        raise InputError(f"unknown catalog entry {name!r}; choose from {sorted(entries)}")
    return entries[name]


def _system(args) -> SystemODE:
    if args.catalog:
        sys_ = _catalog_entry(args.catalog).system
        if sys_ is None:
            raise InputError(f"catalog entry {args.catalog!r} has no ODE system")
        return sys_
    if not args.input:
        raise InputError("give an input file or --catalog")
    return SystemODE.from_json(_load_json(args.input))


def _phi(args) -> DefiningFunction:
    if args.catalog:
        return _catalog_entry(args.catalog, getattr(args, "n", 1)).phi
    if not args.input:
        raise InputError("give an input file or --catalog")
    return DefiningFunction.from_json(_load_json(args.input))


def _tensor_json(entries):
    if isinstance(entries, tuple):
        return [_tensor_json(e) for e in entries]
    return se.render(se.simplify(entries))


# ------------------------------------------------------------------ invariants

def cmd_invariants(args) -> int:
    sys_ = _system(args)
    report = {"system": sys_.to_json(), "seed": args.seed, "tol": args.tol}
    if sys_.n >= 2:
        T, C = fels_torsion(sys_), fels_curvature(sys_)
        report["torsion"] = _tensor_json(T.entries)
        report["curvature"] = _tensor_json(C.entries)
    else:
        P1, Q1 = scalar_invariants(sys_.rhs[0], sys_.independent, sys_.states[0], sys_.derivs[0])
        report["P1"] = se.render(se.simplify(P1))
        report["Q1"] = se.render(se.simplify(Q1))
    rows = []
    if sys_.n == 2:
        Q, W = binary_forms(T, C)
        names = sys_.chart.names
        report["quadric"] = [se.render(se.simplify(c)) for c in Q.coeffs]
        report["quartic"] = [se.render(se.simplify(c)) for c in W.coeffs]
        pts = se.sample_points(list(Q.coeffs) + list(W.coeffs), args.samples, args.seed, names=names)
        fq, fw = se.compile_exprs(Q.coeffs, names), se.compile_exprs(W.coeffs, names)
        profiles = []
        for p in pts:
            vals = [p[n] for n in names]
            q = roots_of_binary(fq(*vals), args.root_tol)
            w = roots_of_binary(fw(*vals), args.root_tol)
            profiles.append({"point": dict(p), "quadric": q.to_json(), "quartic": w.to_json()})
            rows.append(vals + [_sig(q), _sig(w)])
        report["root_profiles"] = profiles
    if args.format == "csv":
        if sys_.n != 2:
            raise InputError("csv output lists root profiles and needs a pair of equations")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(sys_.chart.names) + ["quadric_roots", "quartic_roots"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r[:-2]] + r[-2:])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_dumps(report), args.out)
    return 0


def _sig(profile) -> str:
    if profile.zero_form:
        return "zero"
    return " ".join(f"{'r' if real else 'c'}{m}" for m, real in profile.signature)


# ----------------------------------------------------------------- derive-lewy

def cmd_derive_lewy(args) -> int:
    if args.catalog:
        entry = _catalog_entry(args.catalog)
        phi, sys_ = entry.phi, entry.system
        chart = args.chart or entry.chart
        seeder = cubic_seeds if args.catalog == "cubic" else None
    else:
        phi = _phi(args)
        sys_ = SystemODE.from_json(_load_json(args.system)) if args.system else None
        chart = args.chart or "t"
        seeder = None
    if phi.n != 1:
        raise InputError("the elimination recipe is implemented for n = 1")
    if sys_ is not None:
        rep = residual_check(sys_, phi, args.samples, args.seed, args.tol, chart=chart, seeder=seeder)
        if args.format == "csv":
            _emit("deviation\n" + "".join(f"{float(d)!r}\n" for d in rep.deviations), args.out)
        else:
            out = {"chart": chart, "system": sys_.to_json(), "phi": phi.to_json(), **rep.to_json()}
            _emit(_dumps(out), args.out)
        return 0
    rng = np.random.default_rng(args.seed)
    rows = []
    for _ in range(args.samples):
        jet = rng.uniform(-2, 2, 5)
        try:
            acc = lewy_rhs(phi, jet, chart, seeds=seeder(jet) if seeder and chart == "t" else None)
        except (LewyError, se.DomainError):
            continue
        rows.append([float(v) for v in jet] + [float(v) for v in acc])
    r = {"t": ("t", "z", "b", "dz", "db", "ddz", "ddb"), "z": ("z", "t", "a", "dt", "da", "ddt", "dda")}[chart]
    if args.format == "json":
        _emit(_dumps({"chart": chart, "columns": list(r), "rows": rows}), args.out)
        return 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(r)
    w.writerows([[repr(v) for v in row] for row in rows])
    _emit(buf.getvalue(), args.out)
    return 0


# ----------------------------------------------------------------------- trace

def _spec_and_start(args):
    if args.catalog:
        phi = _catalog_entry(args.catalog, args.n).phi
        return random_spec(phi, args.seed)
    data = _load_json(args.input) if args.input else None
    if data is None:
        raise InputError("give a Lewy specification file or --catalog")
    spec = LewySpec.from_json(data)
    guess = data.get("start")
    if guess is None:
        guess = np.random.default_rng(args.seed).uniform(-1, 1, 2 * spec.phi.n + 2)
    return spec, start_point(spec, guess)


def cmd_trace(args) -> int:
    spec, w = _spec_and_start(args)
    spec.validate()
    if args.sigma:
        if spec.phi.n != 1:
            raise InputError("surface sampling is implemented for n = 1")
        anchor = spec.x_hats[0] if args.sigma == 1 else spec.y_hats[0]
        samples = sample_sigma(spec.phi, args.sigma, anchor, grid=args.grid)
        if args.format == "json":
            _emit(_dumps({"names": list(samples.names), "points": [list(map(float, p)) for p in samples.points],
                          "residuals": [float(r) for r in samples.residuals], "skipped": samples.skipped}),
                  args.out)
        else:
            _emit(samples.to_csv(), args.out)
        return 0
    tr = trace_lewy(spec, w, args.direction, args.steps, h0=args.h0, tol=args.tol)
    if tr.failed:
        print(f"warning: {tr.message}", file=sys.stderr)
    if args.format == "json":
        _emit(_dumps({"spec": spec.to_json(), "names": list(tr.names), **tr.summary()}), args.out)
    elif args.format == "svg":
        _emit(render_svg([("trace", np.asarray(tr.points))], [], tr.names, args.axes), args.out)
    else:
        _emit(tr.to_csv(), args.out)
    return 0


# -------------------------------------------------------------------- classify

def cmd_classify(args) -> int:
    sys_ = _system(args)
    rep = classify(sys_, samples=args.samples, seed=args.seed, tol=args.tol)
    if args.format == "json":
        _emit(_dumps(rep.to_json()), args.out)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(sys_.chart.names) + ["quadric_roots", "quartic_roots"])
        quadric = rep.quadric or [None] * len(rep.quartic)
        for q, c in zip(quadric, rep.quartic):
            pt = dict(c.point)
            w.writerow([repr(float(pt[n])) for n in sys_.chart.names]
                       + ["" if q is None else _sig(q), _sig(c)])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(rep.summary() + "\n", args.out)
    return 0


# ---------------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    checks = run_suite(seed=args.seed, samples=args.samples)
    if args.format == "json":
        text = report_json(checks) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "status", "title", "detail"])
        w.writerows([[c.id, "PASS" if c.passed else "FAIL", c.title, c.detail] for c in checks])
        text = buf.getvalue()
    else:
        text = format_table(checks)
    _emit(text, args.out)
    return 0 if all(c.passed for c in checks) else 1


# ------------------------------------------------------------------------ plot

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_svg(curves: Sequence[tuple], clouds: Sequence[tuple], names: Sequence[str],
               axes: Sequence[str] | None = None, size: int = 600) -> str:
    """Layered SVG: one polyline per curve, one group of dots per point cloud."""
    names = list(names)
    axes = list(axes or names[:2])
    try:
        ix = [names.index(a) for a in axes]
    except ValueError as err:
        raise InputError(f"unknown axis in {axes}; columns are {names}") from err
    layers = [(lbl, np.asarray(p, float)[:, ix]) for lbl, p in list(curves) + list(clouds) if len(p)]
    if not layers:
        raise InputError("nothing to plot")
    allp = np.vstack([p for _, p in layers])
    allp = allp[np.all(np.isfinite(allp), axis=1)]
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    w, h = hi - lo

    def xy(p):
        return f"{(p[0] - lo[0]) / w * size:.3f},{(hi[1] - p[1]) / h * size:.3f}"

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {size} {size}" '
           f'width="{size}" height="{size}">',
           f'<title>{escape(axes[0])} vs {escape(axes[1])}</title>',
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    k = 0
    for lbl, pts in clouds:
        pts = np.asarray(pts, float)[:, ix]
        out.append(f'<g id="{escape(lbl)}" fill="{COLORS[k % len(COLORS)]}" fill-opacity="0.6">')
        out += [f'<circle cx="{xy(p).split(",")[0]}" cy="{xy(p).split(",")[1]}" r="2"/>' for p in pts]
        out.append("</g>")
        k += 1
    for lbl, pts in curves:
        pts = np.asarray(pts, float)[:, ix]
        out.append(f'<polyline id="{escape(lbl)}" fill="none" stroke="{COLORS[k % len(COLORS)]}" '
                   f'stroke-width="1.5" points="{" ".join(xy(p) for p in pts)}"/>')
        k += 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _read_csv(path: str):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    if not rows:
        raise InputError(f"{path}: empty CSV")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as err:
        raise InputError(f"{path}: non-numeric CSV entry") from err
    return header, data


def cmd_plot(args) -> int:
    curves, clouds, names = [], [], None
    for path in args.inputs:
        if path.endswith(".json"):
            spec = LewySpec.from_json(_load_json(path))
            spec.validate()
            guess = _load_json(path).get("start")
            if guess is None:
                guess = np.random.default_rng(args.seed).uniform(-1, 1, 2 * spec.phi.n + 2)
            w = start_point(spec, guess)
            cols = spec.phi.names
            for d in (1, -1):
                tr = trace_lewy(spec, w, d, args.steps, tol=args.tol)
                curves.append((f"{Path(path).stem}-{'fwd' if d > 0 else 'bwd'}", tr.points))
            if spec.phi.n == 1:
                for k, anchor in ((1, spec.x_hats[0]), (2, spec.y_hats[0])):
                    s = sample_sigma(spec.phi, k, anchor)
                    if s.points:
                        clouds.append((f"{Path(path).stem}-sigma{k}", np.array(s.points)))
        else:
            header, data = _read_csv(path)
            cols = [c for c in header if c != "step" and not c.startswith("res")]
            data = data[:, :len(cols)]
            (curves if "step" in header else clouds).append((Path(path).stem, data))
        if names is None:
            names = list(cols)
        elif list(cols) != names:
            raise InputError(f"{path}: columns {list(cols)} differ from {names}")
    _emit(render_svg(curves, clouds, names, args.axes), args.out)
    return 0


# ---------------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, fmt: str | None, formats=("csv", "json", "svg"), tol: float = 1e-8,
            fmt_help: str | None = None):
    p.add_argument("--tol", type=float, default=tol, help=f"numerical tolerance (default {tol:g})")
    p.add_argument("--samples", type=int, default=20, help="random sample count (default 20)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--format", choices=formats, default=fmt, help=f"output format (default {fmt_help or fmt})")
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathgeom", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invariants", help="torsion, curvature, binary forms and root profiles of an ODE system")
    p.add_argument("input", nargs="?", help="SystemODE JSON file ('-' for stdin)")
    p.add_argument("--catalog", help="use a catalog system instead (flat, cubic)")
    p.add_argument("--root-tol", type=float, default=1e-7, help="root clustering tolerance (default 1e-7)")
    _common(p, "json", ("csv", "json"))
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("derive-lewy", help="Lewy-curve second derivatives by elimination, or a residual check")
    p.add_argument("input", nargs="?", help="defining function JSON (keys n, x_chart, y_chart, phi)")
    p.add_argument("--catalog", help="use a catalog entry (flat, cubic) with its closed-form system")
    p.add_argument("--system", help="closed-form SystemODE JSON to check against the recipe")
    p.add_argument("--chart", choices=("t", "z"), help="independent variable chart (default t)")
    _common(p, None, ("csv", "json"), tol=1e-6, fmt_help="json with --system or --catalog, else csv")
    p.set_defaults(func=cmd_derive_lewy, n=1)

    p = sub.add_parser("trace", help="integrate a Lewy curve, or sample a Segre surface with --sigma")
    p.add_argument("input", nargs="?", help="Lewy specification JSON (phi, x_hats, y_hats, optional start)")
    p.add_argument("--catalog", help="random Lewy data on a catalog defining function (flat, cubic)")
    p.add_argument("--n", type=int, default=1, help="dimension parameter for --catalog flat (default 1)")
    p.add_argument("--steps", type=int, default=200, help="integration steps (default 200)")
    p.add_argument("--h0", type=float, default=1e-2, help="step size cap (default 1e-2)")
    p.add_argument("--direction", type=int, choices=(1, -1), default=1, help="trace direction (default 1)")
    p.add_argument("--sigma", type=int, choices=(1, 2), help="write samples of Sigma^1 or Sigma^2 instead")
    p.add_argument("--grid", type=int, default=10, help="grid size for --sigma (default 10)")
    p.add_argument("--axes", nargs=2, help="coordinates for svg output (default first two)")
    p.add_argument("--chart", choices=("t", "z"), help="accepted for symmetry; charts switch automatically")
    _common(p, "csv")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("classify", help="torsion, root types and frame checks with a final label")
    p.add_argument("input", nargs="?", help="SystemODE JSON file with two equations")
    p.add_argument("--catalog", help="use a catalog system instead (flat, cubic)")
    _common(p, None, ("json", "csv"), tol=1e-6, fmt_help="text summary")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify", help="run the reproduction suite and print a pass/fail table")
    _common(p, None, ("csv", "json"), fmt_help="text table")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="render trace CSVs, Sigma CSVs and Lewy specifications as SVG")
    p.add_argument("inputs", nargs="+", help="CSV files (traces have a step column) or Lewy spec JSON")
    p.add_argument("--axes", nargs=2, help="coordinates to plot (default first two columns)")
    p.add_argument("--steps", type=int, default=200, help="steps per direction for JSON inputs (default 200)")
    _common(p, "svg", ("svg",))
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, KeyError, TypeError, se.ExprError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (LewyError, SplitFailure) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        sys.stderr.close()
        return 0


if __name__ == "__main__":
    sys.exit(main())
