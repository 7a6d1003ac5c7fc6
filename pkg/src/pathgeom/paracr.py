"""Defining functions of para-CR structures and the double fibration they induce.

A defining function Phi(x, y) on M1 x M2 cuts out N = {Phi = 0}.  Points of
M1 use the chart (t1..tn, z) and points of M2 the chart (a1..an, b); for
n = 1 the names are simply t, z and a, b.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import symexpr as se
from .jetcalc import SystemODE, numeric_rank
from .symexpr import Expr


class NoIntersection(RuntimeError):
    """Newton could not locate a common point of the requested hypersurfaces."""


def default_charts(n: int) -> tuple:
    if n == 1:
        return ("t", "z"), ("a", "b")
    return (tuple(f"t{i}" for i in range(1, n + 1)) + ("z",),
            tuple(f"a{i}" for i in range(1, n + 1)) + ("b",))


# ---------------------------------------------------------------- Newton

@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float


def newton(fun: Callable, jac: Callable, x0, max_iter: int = 50, step_tol: float = 1e-12,
           res_tol: float = 1e-10) -> NewtonResult:
    """Damped Gauss-Newton with minimum-norm steps; never raises on divergence."""
    x = np.array(x0, dtype=float)
    try:
        r = np.asarray(fun(x), dtype=float)
    except (se.DomainError, ZeroDivisionError, OverflowError):
        return NewtonResult(x, False, 0, np.inf)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
        return NewtonResult(x, False, 0, np.inf)
    norm = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        if norm < res_tol:
            return NewtonResult(x, True, it - 1, norm)
        try:
            J = np.atleast_2d(np.asarray(jac(x), dtype=float))
            if not np.all(np.isfinite(J)):
                return NewtonResult(x, False, it, norm)
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        except (se.DomainError, np.linalg.LinAlgError, ZeroDivisionError, OverflowError):
            return NewtonResult(x, False, it, norm)
        if not np.all(np.isfinite(step)):
            return NewtonResult(x, False, it, norm)
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * step
            try:
                rn = np.asarray(fun(xn), dtype=float)
                nn = float(np.linalg.norm(rn)) if np.all(np.isfinite(rn)) else np.inf
            except (se.DomainError, ZeroDivisionError, OverflowError):
                nn = np.inf
            if np.isfinite(nn) and nn < norm * (1 - 1e-4 * lam) or nn < res_tol:
                break
            lam /= 2
        else:
            return NewtonResult(x, False, it, norm)
        x, r, norm = xn, rn, nn
        if np.linalg.norm(lam * step) < step_tol * (1 + np.linalg.norm(x)):
            return NewtonResult(x, norm < res_tol or norm < 1e-8, it, norm)
    return NewtonResult(x, norm < res_tol, max_iter, norm)


# ---------------------------------------------------------------- defining functions

@dataclass(frozen=True)
class DefiningFunction:
    n: int
    x_chart: tuple
    y_chart: tuple
    phi: Expr

    def __post_init__(self):
        object.__setattr__(self, "x_chart", tuple(self.x_chart))
        object.__setattr__(self, "y_chart", tuple(self.y_chart))
        phi = se.parse(self.phi) if isinstance(self.phi, str) else se._coerce(self.phi)
        object.__setattr__(self, "phi", phi)
        if len(self.x_chart) != self.n + 1 or len(self.y_chart) != self.n + 1:
            raise ValueError("each chart needs n + 1 coordinates")
        if set(self.x_chart) & set(self.y_chart):
            raise ValueError("chart symbols must be distinct")
        extra = phi.free_symbols - set(self.names)
        if extra:
            raise ValueError(f"phi uses symbols outside the charts: {sorted(extra)}")

    @property
    def names(self) -> tuple:
        return self.x_chart + self.y_chart

    def to_json(self) -> dict:
        return {"n": self.n, "x_chart": list(self.x_chart), "y_chart": list(self.y_chart),
                "phi": se.render(self.phi)}

    @classmethod
    def from_json(cls, data) -> "DefiningFunction":
        if isinstance(data, str):
            data = json.loads(data)
        for key in ("n", "x_chart", "y_chart", "phi"):
            if key not in data:
                raise ValueError(f"missing key {key!r}")
        return cls(int(data["n"]), tuple(data["x_chart"]), tuple(data["y_chart"]), data["phi"])

    def gradient(self) -> tuple:
        return tuple(se.differentiate(self.phi, s) for s in self.names)

    def _compiled(self):
        key = "_fn"
        fn = self.__dict__.get(key)
        if fn is None:
            fn = se.compile_exprs((self.phi,) + self.gradient(), self.names)
            object.__setattr__(self, key, fn)
        return fn

    def value_and_gradient(self, x: Sequence[float], y: Sequence[float]) -> tuple:
        out = self._compiled()(*map(float, x), *map(float, y))
        return float(out[0]), np.array(out[1:], dtype=float)

    def __call__(self, x: Sequence[float], y: Sequence[float]) -> float:
        return self.value_and_gradient(x, y)[0]


def _coords(pt, chart) -> list:
    if isinstance(pt, Mapping):
        return [float(pt[c]) for c in chart]
    pt = list(pt)
    if len(pt) != len(chart):
        raise ValueError(f"expected {len(chart)} coordinates for chart {chart}")
    return [float(v) for v in pt]


def incidence(phi: DefiningFunction, x, y, tol: float = 1e-10) -> bool:
    """True iff |Phi(x, y)| <= tol."""
    return abs(phi(_coords(x, phi.x_chart), _coords(y, phi.y_chart))) <= tol


def dualize(phi: DefiningFunction) -> DefiningFunction:
    """Swap the roles of M1 and M2."""
    return DefiningFunction(phi.n, phi.y_chart, phi.x_chart, phi.phi)


def relabel(phi: DefiningFunction, mapping: Mapping[str, str]) -> DefiningFunction:
    sub = {k: se.sym(v) for k, v in mapping.items()}
    r = lambda s: mapping.get(s, s)
    return DefiningFunction(phi.n, tuple(map(r, phi.x_chart)), tuple(map(r, phi.y_chart)),
                            se.replace(phi.phi, sub))


def graph_hessian(phi: DefiningFunction, side: str = "x") -> list:
    """Second derivatives of the last coordinate of one factor, solved from Phi = 0.

    Phi must be affine in that coordinate (as for z - g(t, a, b)).  With
    side "x" this is z_{t^i t^j} with y held fixed; with side "y" it is
    b_{a_i a_j} with x held fixed.  The flat model gives zero for both sides.
    """
    chart = phi.x_chart if side == "x" else phi.y_chart
    last = chart[-1]
    c = se.differentiate(phi.phi, last)
    if last in c.free_symbols:
        raise ValueError(f"Phi is not affine in {last}")
    rest = se.add(phi.phi, se.mul(-1, c, se.sym(last)))
    g = se.simplify(se.mul(-1, rest, se.power(c, -1)))
    return [[se.simplify(se.diff(g, u, v)) for v in chart[:-1]] for u in chart[:-1]]


# ---------------------------------------------------------------- general position

def general_position(phi: DefiningFunction, pts: Sequence, side: str = "x", tol: float = 1e-8,
                     seed: int = 0, tries: int = 20) -> bool:
    """Do the hypersurfaces H_{p_i} (in the other factor) meet transversely?

    A common point is located by minimum-norm Newton from random seeds; the
    k gradients of Phi(p_i, .) there must have numeric rank k.  When no
    common point exists and the gradients are already rank deficient the
    answer is False; otherwise NoIntersection is raised.
    """
    n = phi.n
    k = len(pts)
    if not 1 <= k <= n + 1:
        raise ValueError("need between 1 and n + 1 points")
    mine, other = (phi.x_chart, phi.y_chart) if side == "x" else (phi.y_chart, phi.x_chart)
    fixed = [_coords(p, mine) for p in pts]
    sl = slice(n + 1, None) if side == "x" else slice(0, n + 1)

    def evaluate(u):
        vals, grads = [], []
        for f in fixed:
            v, g = (phi.value_and_gradient(f, u) if side == "x" else phi.value_and_gradient(u, f))
            vals.append(v)
            grads.append(g[sl])
        return np.array(vals), np.array(grads)

    rng = np.random.default_rng(seed)
    last = None
    for _ in range(tries):
        u0 = rng.normal(size=n + 1)
        res = newton(lambda u: evaluate(u)[0], lambda u: evaluate(u)[1], u0)
        if res.converged:
            return numeric_rank(evaluate(res.x)[1], tol) == k
        last = res
    if last is not None and np.all(np.isfinite(last.x)):
        try:
            if numeric_rank(evaluate(last.x)[1], tol) < k:
                return False
        except se.DomainError:
            pass
    raise NoIntersection(f"no common point of the {k} hypersurfaces found from {tries} seeds")


# ---------------------------------------------------------------- PDE compatibility

def compatibility_check(f, samples: int = 20, seed: int = 0, tol: float = 1e-9) -> bool:
    """D_i f_jk == D_j f_ik with D_i = d_{t^i} + p_i d_z + f_ij d_{p_j}.

    f is a symmetric n x n array of expressions in t1..tn, z, p1..pn.
    """
    f = [[se.parse(e) if isinstance(e, str) else se._coerce(e) for e in row] for row in f]
    n = len(f)
    if n < 2 or any(len(row) != n for row in f):
        raise ValueError("compatibility needs a square array with n >= 2")
    for i in range(n):
        for j in range(i):
            if f[i][j] is not f[j][i] and se.equivalent(f[i][j], f[j][i], samples, tol, seed) is not True:
                raise ValueError("f must be symmetric")
    t = [f"t{i}" for i in range(1, n + 1)]
    p = [f"p{i}" for i in range(1, n + 1)]

    def D(i, g):
        terms = [se.differentiate(g, t[i]), se.mul(se.sym(p[i]), se.differentiate(g, "z"))]
        terms += [se.mul(f[i][j], se.differentiate(g, p[j])) for j in range(n)]
        return se.add(*terms)

    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                diff = se.add(D(i, f[j][k]), se.mul(-1, D(j, f[i][k])))
                if diff.is_zero or se.simplify(diff).is_zero:
                    continue
                if se.equivalent(diff, se.ZERO, samples, tol, seed) is not True:
                    return False
    return True


# ---------------------------------------------------------------- surface sampling

@dataclass
class SigmaSamples:
    names: tuple
    points: list
    residuals: list
    skipped: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.names) + ["residual"])
        for p, r in zip(self.points, self.residuals):
            w.writerow([repr(float(v)) for v in p] + [repr(float(r))])
        return buf.getvalue()


def sample_sigma(phi: DefiningFunction, which: int, anchor, grid: int = 10, span: float = 1.0,
                 center: Sequence[float] | None = None) -> SigmaSamples:
    """Points of Sigma^1_x = {Phi(x^, y^) = 0 = Phi(x, y^)} or Sigma^2_y = {Phi(x^, y^) = 0 = Phi(x^, y)}.

    n = 1 only.  In each factor the coordinate with the larger partial
    derivative at `center` is solved for by Newton; the other two
    coordinates run over a grid x grid square of half-width `span`.
    `center` is a point (t, z, a, b); by default the anchor fills its own
    factor and the other factor is set to zero.
    """
    if phi.n != 1:
        raise ValueError("surface sampling is implemented for n = 1")
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    anchor = np.array(_coords(anchor, phi.x_chart if which == 1 else phi.y_chart))
    if center is None:
        center = np.concatenate([anchor, np.zeros(2)]) if which == 1 else np.concatenate([np.zeros(2), anchor])
    center = np.array(center, dtype=float)

    def values(w):
        v1, g1 = phi.value_and_gradient(w[:2], w[2:])
        if which == 1:
            v2, g2 = phi.value_and_gradient(anchor, w[2:])
            g2 = np.concatenate([np.zeros(2), g2[2:]])
        else:
            v2, g2 = phi.value_and_gradient(w[:2], anchor)
            g2 = np.concatenate([g2[:2], np.zeros(2)])
        return np.array([v1, v2]), np.vstack([g1, g2])

    _, g = values(center)
    # constraint 2 lives on one factor only; constraint 1 fixes a coordinate of the other
    own = slice(2, 4) if which == 1 else slice(0, 2)
    rest = slice(0, 2) if which == 1 else slice(2, 4)
    u2 = own.start + int(np.argmax(np.abs(g[1, own])))
    u1 = rest.start + int(np.argmax(np.abs(g[0, rest])))
    unknown = [u1, u2]
    free = [k for k in range(4) if k not in unknown]
    axes = [center[k] + np.linspace(-span, span, grid) for k in free]

    pts, res, skipped = [], [], 0
    for v0 in axes[0]:
        for v1 in axes[1]:
            w = center.copy()
            w[free[0]], w[free[1]] = v0, v1

            def fun(u, w=w):
                w = w.copy()
                w[unknown] = u
                return values(w)[0]

            def jac(u, w=w):
                w = w.copy()
                w[unknown] = u
                return values(w)[1][:, unknown]

            r = newton(fun, jac, center[unknown])
            if not r.converged or r.residual > 1e-10:
                skipped += 1
                continue
            w[unknown] = r.x
            pts.append(tuple(float(x) for x in w))
            res.append(r.residual)
    return SigmaSamples(phi.names, pts, res, skipped)


def contact_slope(phi: DefiningFunction, x, y) -> np.ndarray:
    """p = -Phi_t / Phi_z at a point of N (the jet coordinate of the M1 side)."""
    _, g = phi.value_and_gradient(_coords(x, phi.x_chart), _coords(y, phi.y_chart))
    n = phi.n
    return -g[:n] / g[n]


def gradient_nonvanishing(phi: DefiningFunction, count: int = 50, seed: int = 0, tol: float = 1e-8) -> bool:
    pts = se.sample_points([phi.phi] + list(phi.gradient()), count, seed, names=phi.names)
    if len(pts) < count // 2:
        return False
    for p in pts:
        _, g = phi.value_and_gradient([p[s] for s in phi.x_chart], [p[s] for s in phi.y_chart])
        if np.linalg.norm(g) <= tol:
            return False
    return True


# ---------------------------------------------------------------- catalog

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    phi: DefiningFunction
    system: SystemODE | None = None
    chart: str = "t"
    note: str = ""


def flat_phi(n: int = 1) -> DefiningFunction:
    x, y = default_charts(n)
    dot = se.add(*(se.mul(se.sym(a), se.sym(t)) for a, t in zip(y[:-1], x[:-1])))
    return DefiningFunction(n, x, y, se.add(se.sym(x[-1]), se.mul(-1, dot), se.mul(-1, se.sym(y[-1]))))


def cubic_phi() -> DefiningFunction:
    return DefiningFunction(1, ("t", "z"), ("a", "b"), "z - (t^3/12 + b*t^2/4 + b^2*t/4 + a)")


# Lewy pair of the cubic entry with t as independent variable.  The second
# equation is fixed by the elimination recipe; FLIPPED_CUBIC_LEWY_G is the
# same expression with the opposite overall sign, kept as a reference variant.
CUBIC_LEWY_G = ("(-2*q^2*(q+1)^2*(t+b) + 4*sqrt(p)*q^2 + 2*q^3*sqrt((t+b)^2*q*(q+1) - 4*p*q))"
                "/(q*(4*p - (t+b)^2))")
FLIPPED_CUBIC_LEWY_G = ("(-2*q^2*(q+1)^2*(t+b) + 4*sqrt(p)*q^2 + 2*q^3*sqrt((t+b)^2*q*(q+1) - 4*p*q))"
                        "/(-q*(4*p - (t+b)^2))")


def cubic_lewy_system(flipped: bool = False) -> SystemODE:
    g = FLIPPED_CUBIC_LEWY_G if flipped else CUBIC_LEWY_G
    return SystemODE("t", ("z", "b"), ("p", "q"), ("sqrt(p)", g))


def flat_slope_phi() -> DefiningFunction:
    """Flat model with b as the slope; the chart-t flat Lewy pair is written for this labelling."""
    return DefiningFunction(1, ("t", "z"), ("a", "b"), "z - b*t - a")


def catalog(n: int = 1, user: DefiningFunction | None = None) -> dict:
    from .lewy import flat_lewy_system

    entries = {
        "flat": CatalogEntry("flat", flat_phi(n), flat_lewy_system(n, "PTstarM1"), "z",
                             "Phi = z - a.t - b; self-dual; Lewy system with z independent"),
        "cubic": CatalogEntry("cubic", cubic_phi(), cubic_lewy_system(), "t",
                              "general solution of z'' = sqrt(z'); Lewy pair with t independent"),
    }
    if user is not None:
        entries["user"] = CatalogEntry("user", user, None, "t", "user supplied")
    return entries
