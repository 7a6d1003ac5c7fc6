"""Frame-level tests for pairs of ODEs whose paths could be Lewy curves.

Given z'' = F(t, z, z') with two unknown functions, the torsion eigen-split
V = V1 + V2 of the vertical bundle is tested for

* integrability of B_i = span{X, V_i, [X, V_i]},
* existence of integrable K_1 = span{V1, V2, W1 + e1 X} and
  K_2 = span{V1, V2, W2 + e2 X}, where W_i = [X, V_i],
* the contact condition for the plane field spanned by K_1 and K_2.

Within B_1 the only rank-two subbundles containing V1 that can complete to
an integrable K_1 are spanned by V1 and W1 + e1 X.  Integrability of K_1
fixes e1 algebraically (the W2-component of [V2, W1]) and then imposes two
first-order conditions on e1, which are checked against the actual
derivatives of e1 computed by forward-mode differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import symexpr as se
from .invariants import (BinaryQuadric, BinaryQuartic, RootProfile, binary_forms,
                         fels_curvature, fels_torsion, roots_of_binary)
from .jetcalc import (SystemODE, VectorField, escape_ratio, evaluate_fields, frobenius_check,
                      lie_bracket, total_derivative, _row_basis)
from .symexpr import Expr

LABELS = ("flat-chains", "torsion-free", "Lewy-compatible", "excluded", "inconclusive")
INCONCLUSIVE_FRACTION = 0.2
NOT_CHECKED = "equivalence of the three induced para-CR structures: not checked"


class SplitFailure(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class VerticalSplit:
    V1: VectorField
    V2: VectorField
    lam1: Expr | None = None
    lam2: Expr | None = None
    points: tuple = ()


def _check_system(sys: SystemODE):
    if sys.n != 2:
        raise ValueError("frame checks are implemented for pairs of equations")


def _vertical(sys: SystemODE, v: Sequence[Expr]) -> VectorField:
    return VectorField(sys.chart, (se.ZERO,) * 3 + tuple(v))


def default_points(sys: SystemODE, samples: int = 20, seed: int = 0, extra: Sequence[Expr] = ()) -> list:
    T = fels_torsion(sys)
    exprs = [x for row in T.entries for x in row] + list(sys.rhs) + list(extra)
    pts = se.sample_points(exprs, samples, seed, names=sys.chart.names)
    return pts


def _branch_root(disc: Expr) -> Expr:
    """sqrt(disc), taken analytically when disc is a perfect square.

    A perfect-square discriminant touches zero without changing sign, and the
    eigenvalue branches cross there; |g| would swap them, g follows them.
    """
    import sympy

    try:
        num, den = sympy.fraction(sympy.together(se.to_sympy(disc)))
        parts = []
        for q in (num, den):
            c, facs = sympy.factor_list(q)
            if c <= 0 or any(m % 2 for _, m in facs):
                return se.power(disc, se.HALF)
            parts.append(sympy.sqrt(c) * sympy.Mul(*(f ** (m // 2) for f, m in facs)))
        return se.from_sympy(parts[0] / parts[1])
    except (sympy.PolynomialError, NotImplementedError, TypeError, ValueError):
        return se.power(disc, se.HALF)


def torsion_split(sys: SystemODE, points: Sequence[Mapping[str, float]] | None = None,
                  tol: float = 1e-6, samples: int = 20, seed: int = 0) -> VerticalSplit:
    """Eigen-split of the vertical bundle by the torsion endomorphism."""
    _check_system(sys)
    T = fels_torsion(sys)
    if points is None:
        points = default_points(sys, samples, seed)
    if not points:
        raise SplitFailure("inconclusive", "no admissible sample points")
    (a, b), (c, d) = T.entries
    names = sys.chart.names
    half_diff = se.mul(se.HALF, se.add(a, se.mul(-1, d)))
    disc = se.add(se.mul(half_diff, half_diff), se.mul(b, c))
    f = se.compile_exprs([a, b, c, d, disc], names)
    vals = np.array([f(*(p[n] for n in names)) for p in points])
    scale = np.max(np.abs(vals[:, :4]), axis=1)
    if np.all(scale <= tol):
        raise SplitFailure("torsion-free", "torsion vanishes at every sample point")
    rel = vals[:, 4] / np.maximum(scale, 1e-300) ** 2
    if np.any(rel < -tol):
        raise SplitFailure("excluded", "torsion has complex eigenvalues")
    near = rel <= tol
    if np.mean(near) > INCONCLUSIVE_FRACTION:
        raise SplitFailure("excluded", "torsion has a repeated eigenvalue")
    points = [p for p, bad in zip(points, near) if not bad]
    mean = se.mul(se.HALF, se.add(a, d))

    def eigvec(lam):
        cands = [(b, se.add(lam, se.mul(-1, a))), (se.add(lam, se.mul(-1, d)), c)]
        g = se.compile_exprs([x for cand in cands for x in cand], names)
        best, score = None, -1.0
        for k, cand in enumerate(cands):
            s = min(float(np.hypot(*g(*(p[n] for n in names))[2 * k: 2 * k + 2])) for p in points)
            if s > score:
                best, score = cand, s
        return best

    def build(root):
        if se.evaluate(root, points[0]) < 0:
            root = se.mul(-1, root)
        lam1, lam2 = se.add(mean, root), se.add(mean, se.mul(-1, root))
        split = VerticalSplit(_vertical(sys, eigvec(lam1)), _vertical(sys, eigvec(lam2)), lam1, lam2,
                              tuple(points))
        return split, _eigen_defect(T, split, points, names)

    split, defect = build(se.power(disc, se.HALF))
    if defect > tol:
        # branches cross where a perfect-square discriminant touches zero
        split, defect = build(_branch_root(disc))
    if defect > tol:
        raise SplitFailure("inconclusive", f"eigenfields not smooth across samples (defect {defect:.2e})")
    return split


def _eigen_defect(T, split: VerticalSplit, points, names) -> float:
    """Worst relative |T v - lambda v| over the sample points."""
    exprs = [x for row in T.entries for x in row] + [split.lam1, split.lam2]
    exprs += list(split.V1.components[3:]) + list(split.V2.components[3:])
    f = se.compile_exprs(exprs, names)
    worst = 0.0
    for p in points:
        v = np.asarray(f(*(p[n] for n in names)), float)
        M, lams, vecs = v[:4].reshape(2, 2), v[4:6], (v[6:8], v[8:10])
        for lam, vec in zip(lams, vecs):
            scale = np.linalg.norm(M) * np.linalg.norm(vec)
            if not np.isfinite(scale) or scale == 0:
                return np.inf
            worst = max(worst, float(np.linalg.norm(M @ vec - lam * vec) / scale))
    return worst


def check_B_integrability(sys: SystemODE, split: VerticalSplit, points, tol: float = 1e-6) -> tuple:
    X = total_derivative(sys)
    out = []
    for V in (split.V1, split.V2):
        out.append(frobenius_check([X, V, lie_bracket(X, V)], points, tol))
    return tuple(out)


# ---------------------------------------------------------------- frame data

class _Frame:
    """Frame (X, V1, V2, W1, W2) and the brackets needed by the K and contact tests."""

    def __init__(self, sys: SystemODE, split: VerticalSplit):
        X = total_derivative(sys)
        V1, V2 = split.V1, split.V2
        W1, W2 = lie_bracket(X, V1), lie_bracket(X, V2)
        self.fields = {
            "X": X, "V1": V1, "V2": V2, "W1": W1, "W2": W2,
            "V1W1": lie_bracket(V1, W1), "V2W1": lie_bracket(V2, W1),
            "V1W2": lie_bracket(V1, W2), "V2W2": lie_bracket(V2, W2),
            "W1X": lie_bracket(W1, X), "XW2": lie_bracket(X, W2), "W1W2": lie_bracket(W1, W2),
        }
        self.keys = list(self.fields)
        self.names = sys.chart.names
        comps = [c for k in self.keys for c in self.fields[k].components]
        self.fn = se.compile_exprs(comps, self.names)

    def evaluate(self, point: Mapping[str, float], direction: np.ndarray | None = None):
        x = [float(point[n]) for n in self.names]
        if direction is None:
            raw = np.array(self.fn(*x), dtype=float).reshape(len(self.keys), -1)
            return {k: raw[i] for i, k in enumerate(self.keys)}, None
        jets = [se.Jet(xi, float(di)) for xi, di in zip(x, direction)]
        raw = self.fn(*jets)
        val = np.array([r.a if isinstance(r, se.Jet) else r for r in raw], dtype=float)
        der = np.array([r.b if isinstance(r, se.Jet) else 0.0 for r in raw], dtype=float)
        shape = (len(self.keys), -1)
        val, der = val.reshape(shape), der.reshape(shape)
        return ({k: val[i] for i, k in enumerate(self.keys)},
                {k: der[i] for i, k in enumerate(self.keys)})


_BASIS = ("X", "V1", "V2", "W1", "W2")


def _coeffs(vals, dvals, key):
    """Frame coefficients of a bracket and their derivative along a direction."""
    M = np.column_stack([vals[k] for k in _BASIS])
    c = np.linalg.solve(M, vals[key])
    if dvals is None:
        return c, None
    dM = np.column_stack([dvals[k] for k in _BASIS])
    dc = np.linalg.solve(M, dvals[key] - dM @ c)
    return c, dc


FRAME_COND_MAX = 1e3


def _frame_ok(vals, cond_max=1e10) -> bool:
    M = np.column_stack([vals[k] for k in _BASIS])
    if not np.all(np.isfinite(M)):
        return False
    cols = M / np.maximum(np.linalg.norm(M, axis=0), 1e-300)
    return np.linalg.cond(cols) < cond_max


X_, V1_, V2_, W1_, W2_ = range(5)


def conditioned_points(sys: SystemODE, split: VerticalSplit, candidates, count: int,
                       cond_max: float = FRAME_COND_MAX) -> list:
    """First `count` candidates where the frame (X, V1, V2, W1, W2) is well conditioned.

    Derivatives of frame coefficients lose roughly cond**2 * eps of accuracy,
    so points close to the singular locus of the frame are skipped.
    """
    frame = _Frame(sys, split)
    out = []
    for p in candidates:
        if len(out) >= count:
            break
        try:
            base, _ = frame.evaluate(p)
        except se.DomainError:
            continue
        if _frame_ok(base, cond_max):
            out.append(p)
    return out


@dataclass
class KReport:
    solvable: tuple
    algebraic_residual: tuple
    differential_residual: tuple
    quartic_filter: bool | None
    points_used: int
    points_skipped: int
    e_values: list = field(default_factory=list)

    def to_json(self):
        return {"solvable": list(self.solvable),
                "algebraic_residual": [float(x) for x in self.algebraic_residual],
                "differential_residual": [float(x) for x in self.differential_residual],
                "quartic_filter": self.quartic_filter,
                "points_used": self.points_used, "points_skipped": self.points_skipped}


def _rel(res, *terms):
    return abs(res) / (1.0 + max(abs(t) for t in terms))


def _k_point(frame: _Frame, point):
    """Residuals of the K_1 and K_2 integrability conditions at one point."""
    base, _ = frame.evaluate(point)
    if not _frame_ok(base):
        return None
    dirs = {k: base[k] for k in ("V1", "V2")}
    out = {}
    for name, d in dirs.items():
        vals, dvals = frame.evaluate(point, d)
        out[name] = {k: _coeffs(vals, dvals, k) for k in ("V1W1", "V2W1", "V1W2", "V2W2")}
    a, da1 = out["V1"]["V1W1"]
    b, db1 = out["V1"]["V2W1"]
    _, db2 = out["V2"]["V2W1"]
    dd, _ = out["V2"]["V2W2"]
    f, df1 = out["V1"]["V1W2"]
    _, df2 = out["V2"]["V1W2"]
    # K_1: e1 = <W2>[V2, W1]; derivatives of e1 along V1, V2
    e1, V1e1, V2e1 = b[W2_], db1[W2_], db2[W2_]
    alg1 = _rel(a[W2_], a[X_], a[W1_], a[V2_])
    dif1 = max(_rel(V1e1 + a[X_] - e1 * (a[W1_] - e1), V1e1, a[X_], e1 * a[W1_], e1 * e1),
               _rel(V2e1 + b[X_] - e1 * b[W1_], V2e1, b[X_], e1 * b[W1_]))
    # K_2: e2 = <W1>[V1, W2]
    e2, V1e2, V2e2 = f[W1_], df1[W1_], df2[W1_]
    alg2 = _rel(dd[W1_], dd[X_], dd[W2_], dd[V1_])
    dif2 = max(_rel(V2e2 + dd[X_] - e2 * (dd[W2_] - e2), V2e2, dd[X_], e2 * dd[W2_], e2 * e2),
               _rel(V1e2 + f[X_] - e2 * f[W2_], V1e2, f[X_], e2 * f[W2_]))
    return alg1, dif1, alg2, dif2, e1, e2


def quartic_on_eigendirections(sys: SystemODE, split: VerticalSplit, points, tol: float = 1e-6):
    """True if the quartic vanishes (relative to tol) on both torsion eigen-directions."""
    T, C = fels_torsion(sys), fels_curvature(sys)
    _, W = binary_forms(T, C)
    names = sys.chart.names
    comps = list(W.coeffs) + list(split.V1.components[3:]) + list(split.V2.components[3:])
    f = se.compile_exprs(comps, names)
    worst = 0.0
    for p in points:
        vals = f(*(p[n] for n in names))
        w, v1, v2 = vals[:5], vals[5:7], vals[7:9]
        scale = max(abs(x) for x in w)
        if scale == 0:
            continue
        for v in (v1, v2):
            x, y = v / np.linalg.norm(v)
            worst = max(worst, abs(W.at_direction(w, x, y)) / scale)
    return worst <= tol, worst


def check_K_solvability(sys: SystemODE, split: VerticalSplit, points, tol: float = 1e-6,
                        use_filter: bool = True) -> KReport:
    """Existence of integrable K_1, K_2 at the sample points."""
    filt = None
    if use_filter:
        filt, _ = quartic_on_eigendirections(sys, split, points, tol)
        if not filt:
            return KReport((False, False), (np.inf, np.inf), (np.inf, np.inf), False, 0, 0)
    frame = _Frame(sys, split)
    alg = [0.0, 0.0]
    dif = [0.0, 0.0]
    used = skipped = 0
    es = []
    for p in points:
        try:
            r = _k_point(frame, p)
        except (se.DomainError, np.linalg.LinAlgError):
            r = None
        if r is None:
            skipped += 1
            continue
        used += 1
        alg = [max(alg[0], r[0]), max(alg[1], r[2])]
        dif = [max(dif[0], r[1]), max(dif[1], r[3])]
        es.append((r[4], r[5]))
    if not used or skipped > INCONCLUSIVE_FRACTION * len(points):
        return KReport((None, None), tuple(alg), tuple(dif), filt, used, skipped, es)
    ok = tuple(bool(alg[i] <= tol and dif[i] <= tol) for i in range(2))
    return KReport(ok, tuple(alg), tuple(dif), filt, used, skipped, es)


def check_contact(sys: SystemODE, split: VerticalSplit, points, tol: float = 1e-6):
    """True if span{K_1, K_2} is maximally non-integrable at every sample point.

    With Y_i = W_i + e_i X the plane field on the quotient is contact iff
    [Y1, Y2] leaves span{V1, V2, Y1, Y2}.
    """
    frame = _Frame(sys, split)
    verdicts = []
    for p in points:
        try:
            base, _ = frame.evaluate(p)
            if not _frame_ok(base):
                verdicts.append(None)
                continue
            de = {}
            for name in ("X", "W1", "W2"):
                vals, dvals = frame.evaluate(p, base[name])
                c1, dc1 = _coeffs(vals, dvals, "V2W1")
                c2, dc2 = _coeffs(vals, dvals, "V1W2")
                de[name] = (c1[W2_], dc1[W2_], c2[W1_], dc2[W1_])
        except (se.DomainError, np.linalg.LinAlgError):
            verdicts.append(None)
            continue
        e1, e2 = de["X"][0], de["X"][2]
        X, W1, W2 = base["X"], base["W1"], base["W2"]
        Y1, Y2 = W1 + e1 * X, W2 + e2 * X
        W1e2, W2e1 = de["W1"][3], de["W2"][1]
        Xe1, Xe2 = de["X"][1], de["X"][3]
        br = (base["W1W2"] + e2 * base["W1X"] + e1 * base["XW2"]
              + (W1e2 - W2e1 + e1 * Xe2 - e2 * Xe1) * X)
        rows = np.vstack([base["V1"], base["V2"], Y1, Y2])
        if len(_row_basis(rows, tol)) < 4:
            verdicts.append(None)
            continue
        verdicts.append(escape_ratio(rows, br, tol) > tol)
    decided = [v for v in verdicts if v is not None]
    if not decided or len(decided) < (1 - INCONCLUSIVE_FRACTION) * len(verdicts):
        return None
    return all(decided)


# ---------------------------------------------------------------- classify

@dataclass
class ClassificationReport:
    torsion_zero: bool
    quadric: list
    quartic: list
    B_integrable: tuple | None = None
    K_solvable: tuple | None = None
    contact: bool | None = None
    quartic_filter: bool | None = None
    label: str = "inconclusive"
    notes: list = field(default_factory=list)
    seed: int = 0
    tol: float = 1e-6
    samples: int = 20

    def to_json(self):
        return {
            "label": self.label, "torsion_zero": self.torsion_zero,
            "quadric_profiles": [p.to_json() for p in self.quadric],
            "quartic_profiles": [p.to_json() for p in self.quartic],
            "B_integrable": None if self.B_integrable is None else list(self.B_integrable),
            "K_solvable": None if self.K_solvable is None else list(self.K_solvable),
            "contact": self.contact, "quartic_vanishes_on_eigendirections": self.quartic_filter,
            "notes": list(self.notes), "seed": self.seed, "tol": self.tol, "samples": self.samples,
        }

    def summary(self) -> str:
        lines = [f"label: {self.label}", f"torsion zero: {self.torsion_zero}"]
        if self.quadric:
            lines.append(f"quadric roots (first point): {_describe(self.quadric[0])}")
        if self.quartic:
            lines.append(f"quartic roots (first point): {_describe(self.quartic[0])}")
        lines += [f"B integrable: {self.B_integrable}", f"K solvable: {self.K_solvable}",
                  f"contact: {self.contact}"]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _describe(p: RootProfile) -> str:
    if p.zero_form:
        return "identically zero"
    parts = []
    for r in p.roots:
        v = "inf" if r.value is None else (f"{r.value.real:.6g}" if r.real else f"{r.value:.6g}")
        parts.append(f"{v} (x{r.mult}{'' if r.real else ', complex'})")
    return ", ".join(parts)


def _consensus(profiles: Sequence[RootProfile], notes: list, what: str):
    sigs = {(p.zero_form, p.signature) for p in profiles}
    if len(sigs) > 1:
        notes.append(f"{what} root type differs across sample points")
    return sigs


def _generic(profiles, ok, notes, what) -> bool:
    """Root condition holds away from a thin set of sample points.

    A structural failure shows up at every point; isolated failures come
    from points close to a discriminant locus.
    """
    bad = sum(not ok(p) for p in profiles)
    if bad and bad <= INCONCLUSIVE_FRACTION * len(profiles):
        notes.append(f"{what} root condition fails at {bad} of {len(profiles)} points "
                     "(treated as near a discriminant locus)")
        return True
    return bad == 0


def _profiles(form, points, names, tol):
    f = se.compile_exprs(form.coeffs, names)
    out = []
    for p in points:
        vals = f(*(p[n] for n in names))
        out.append(roots_of_binary(vals, tol, tuple((n, p[n]) for n in names)))
    return out


def classify(sys: SystemODE, samples: int = 20, seed: int = 0, tol: float = 1e-6,
             root_tol: float = 1e-7, split: VerticalSplit | None = None) -> ClassificationReport:
    """Torsion, root types and frame checks, with a final label."""
    _check_system(sys)
    T, C = fels_torsion(sys), fels_curvature(sys)
    Q, W = binary_forms(T, C)
    names = sys.chart.names
    candidates = se.sample_points([x for row in T.entries for x in row] + list(W.coeffs) + list(sys.rhs),
                                  4 * samples, seed, names=names)
    notes = [NOT_CHECKED]
    rep = ClassificationReport(False, [], [], notes=notes, seed=seed, tol=tol, samples=samples)
    if not candidates:
        notes.append("no admissible sample points")
        return rep
    points = candidates[:samples]
    tf = se.compile_exprs([x for row in T.entries for x in row], names)
    tvals = np.array([tf(*(p[n] for n in names)) for p in points])
    if np.all(np.abs(tvals) <= tol):
        rep.torsion_zero = True
        rep.quartic = _profiles(W, points, names, root_tol)
        if not all(x.is_zero for x in (se.simplify(e) for row in T.entries for e in row)):
            notes.append("torsion vanishes numerically but not symbolically")
        sigs = _consensus(rep.quartic, notes, "quartic")
        if all(p.zero_form for p in rep.quartic):
            rep.label = "torsion-free"
            notes.append("curvature vanishes: flat model")
        elif sigs == {(False, ((2, True), (2, True)))}:
            rep.label = "flat-chains"
        else:
            rep.label = "torsion-free"
        return rep
    try:
        split = split or torsion_split(sys, candidates, tol)
    except SplitFailure as err:
        rep.quadric = _profiles(Q, points, names, root_tol)
        rep.quartic = _profiles(W, points, names, root_tol)
        notes.append(str(err))
        rep.label = "excluded" if err.kind == "excluded" else "inconclusive"
        return rep
    good = conditioned_points(sys, split, candidates, samples)
    if len(good) < (1 - INCONCLUSIVE_FRACTION) * samples:
        notes.append(f"only {len(good)} well-conditioned sample points")
        rep.label = "inconclusive"
        return rep
    points = good
    rep.quadric = _profiles(Q, points, names, root_tol)
    rep.quartic = _profiles(W, points, names, root_tol)
    _consensus(rep.quadric, notes, "quadric")
    _consensus(rep.quartic, notes, "quartic")
    quad_ok = _generic(rep.quadric, lambda p: p.distinct_real == 2 and not p.repeated, notes, "quadric")
    quart_ok = _generic(rep.quartic, lambda p: p.distinct_real >= 2 and not p.repeated and not p.zero_form,
                        notes, "quartic")
    if not quad_ok:
        notes.append("quadric does not have two distinct real roots")
    if not quart_ok:
        notes.append("quartic fails the root condition (needs >= 2 real roots, none repeated)")
    rep.B_integrable = check_B_integrability(sys, split, points, tol)
    if all(v is True for v in rep.B_integrable):
        k = check_K_solvability(sys, split, points, tol)
        rep.K_solvable, rep.quartic_filter = k.solvable, k.quartic_filter
        if all(v is True for v in k.solvable):
            rep.contact = check_contact(sys, split, points, tol)
    verdicts = list(rep.B_integrable) + list(rep.K_solvable or (None,)) + [rep.contact]
    if not (quad_ok and quart_ok) or any(v is False for v in verdicts):
        rep.label = "excluded"
    elif all(v is True for v in verdicts):
        rep.label = "Lewy-compatible"
    else:
        rep.label = "inconclusive"
    return rep
