"""Lewy curves: the elimination recipe, closed-form systems and constrained tracing.

For n = 1 a Lewy curve through non-incident (x^, y^) is the curve

    Phi(x, y) = Phi(x, y^) = Phi(x^, y) = 0

in M1 x M2 with coordinates (t, z, a, b).  Along the curve x moves on the
M1-curve {Phi(., y^) = 0} and y on the M2-curve {Phi(x^, .) = 0}; the
second derivatives of the chart coordinates follow from differentiating
these equations twice.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import RK45

from . import symexpr as se
from .jetcalc import SystemODE
from .paracr import DefiningFunction, NewtonResult, default_charts, incidence, newton
from .symexpr import Expr


class LewyError(RuntimeError):
    pass


class NewtonDivergence(LewyError):
    pass


class SingularJacobian(LewyError):
    """A linear solve of the recipe is singular: the jet lies on an excluded locus."""


class InsufficientJets(LewyError):
    pass


# Roles of the coordinates w = (t, z, a, b) for the two independent-variable choices.
#   s: independent, xs: tracked state on M1, ys: tracked state on M2, ya: solved from Phi = 0
CHARTS = {
    "t": {"s": 0, "xs": 1, "ys": 3, "ya": 2},
    "z": {"s": 1, "xs": 0, "ys": 2, "ya": 3},
}


class _Derivs:
    """Value, gradient and Hessian of Phi for n = 1."""

    def __init__(self, phi: DefiningFunction):
        if phi.n != 1:
            raise ValueError("the elimination recipe is implemented for n = 1")
        names = phi.names
        grad = [se.differentiate(phi.phi, s) for s in names]
        hess = [se.differentiate(grad[i], names[j]) for i in range(4) for j in range(4)]
        self.fn = se.compile_exprs([phi.phi] + grad + hess, names)

    def __call__(self, w) -> tuple:
        out = np.array(self.fn(*map(float, w)), dtype=float)
        return out[0], out[1:5], out[5:].reshape(4, 4)


_DERIV_CACHE: dict = {}


def _derivs(phi: DefiningFunction) -> _Derivs:
    d = _DERIV_CACHE.get(phi)
    if d is None:
        d = _DERIV_CACHE[phi] = _Derivs(phi)
    return d


def _solve(fun, jac, x0, what) -> np.ndarray:
    res = newton(fun, jac, x0)
    if not res.converged:
        J = np.atleast_2d(jac(res.x)) if np.all(np.isfinite(res.x)) else None
        if J is not None and not np.all(np.isfinite(J)):
            J = None
        if J is not None and np.linalg.matrix_rank(J, tol=1e-10 * max(1.0, np.abs(J).max())) < J.shape[0]:
            raise SingularJacobian(f"singular Jacobian while solving for {what}")
        raise NewtonDivergence(f"Newton did not converge for {what} (residual {res.residual:.3g})")
    J = np.atleast_2d(jac(res.x))
    if not np.all(np.isfinite(J)) or abs(np.linalg.det(J)) <= 1e-12 * max(1.0, np.abs(J).max()) ** J.shape[0]:
        raise SingularJacobian(f"singular Jacobian at the solution for {what}")
    return res.x


def _lin(A, b, what):
    A = np.atleast_2d(A)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise SingularJacobian(f"non-finite linear system for {what}")
    if abs(np.linalg.det(A)) <= 1e-12 * max(1.0, np.abs(A).max()) ** A.shape[0]:
        raise SingularJacobian(f"singular linear solve for {what}")
    return np.linalg.solve(A, b)


@dataclass
class RecipeState:
    """Intermediate values of one evaluation of the recipe (useful as continuation seeds)."""
    w: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def lewy_rhs(phi: DefiningFunction, jet: Sequence[float], chart: str = "t",
             seeds: Mapping[str, Sequence[float]] | None = None, full: bool = False):
    """Second derivatives of the Lewy curve through a 1-jet, by numeric elimination.

    Chart "t": jet = (t, z, b, z', b') and the result is (z'', b'').
    Chart "z": jet = (z, t, a, t', a') and the result is (t'', a'').
    `seeds` may give starting values "solved" (a, resp. b), "y_hat" and
    "x_hat" (each in its chart order) to select a branch.
    """
    if chart not in CHARTS:
        raise ValueError("chart must be 't' or 'z'")
    r = CHARTS[chart]
    seeds = dict(seeds or {})
    D = _derivs(phi)
    s0, xs0, ys0, d_xs, d_ys = map(float, jet)
    if not all(map(math.isfinite, (s0, xs0, ys0, d_xs, d_ys))):
        raise ValueError("jet must be finite")
    w = np.zeros(4)
    w[r["s"]], w[r["xs"]], w[r["ys"]] = s0, xs0, ys0
    ya = r["ya"]

    # the solved coordinate from Phi(x, y) = 0
    def f_a(u):
        ww = w.copy(); ww[ya] = u[0]
        return [D(ww)[0]]

    def j_a(u):
        ww = w.copy(); ww[ya] = u[0]
        return [[D(ww)[1][ya]]]

    w[ya] = _solve(f_a, j_a, [seeds.get("solved", 0.0)], "the solved coordinate")[0]
    x, y = w[:2], w[2:]

    x1 = np.zeros(2)
    x1[r["s"]], x1[r["xs"]] = 1.0, d_xs

    # y^ from Phi(x, y^) = 0 and X1 . grad_x Phi(x, y^) = 0
    def f_yh(u):
        v, g, _ = D(np.concatenate([x, u]))
        return [v, g[:2] @ x1]

    def j_yh(u):
        _, g, H = D(np.concatenate([x, u]))
        return [g[2:], x1 @ H[:2, 2:]]

    y_hat = _solve(f_yh, j_yh, seeds.get("y_hat", y), "the M2 parameter point")

    # velocity of the solved coordinate from d/ds Phi(x, y) = 0
    _, g, H = D(w)
    y1 = np.zeros(2)
    y1[r["ys"] - 2] = d_ys
    known = g[:2] @ x1 + g[2:] @ y1
    y1[ya - 2] = _lin([[g[ya]]], [-known], "the solved velocity")[0]

    # x^ from Phi(x^, y) = 0 and Y1 . grad_y Phi(x^, y) = 0
    def f_xh(u):
        v, gg, _ = D(np.concatenate([u, y]))
        return [v, gg[2:] @ y1]

    def j_xh(u):
        _, gg, HH = D(np.concatenate([u, y]))
        return [gg[:2], HH[:2, 2:] @ y1]

    x_hat = _solve(f_xh, j_xh, seeds.get("x_hat", x), "the M1 parameter point")

    # second derivatives
    _, g_xy, H_xy = D(np.concatenate([x, y_hat]))
    acc_x = -(x1 @ H_xy[:2, :2] @ x1) / _nz(g_xy[r["xs"]], "the M1 acceleration")
    x2 = np.zeros(2)
    x2[r["xs"]] = acc_x
    _, g_hy, H_hy = D(np.concatenate([x_hat, y]))
    w1 = np.concatenate([x1, y1])
    A = np.array([g_hy[2:], g[2:]])
    rhs = np.array([-(y1 @ H_hy[2:, 2:] @ y1), -(w1 @ H @ w1) - g[:2] @ x2])
    y2 = _lin(A, rhs, "the M2 acceleration")
    out = (float(acc_x), float(y2[r["ys"] - 2]))
    if full:
        return out, RecipeState(w, x_hat, y_hat, w1, np.concatenate([x2, y2]))
    return out


def _nz(v, what):
    if abs(v) <= 1e-12:
        raise SingularJacobian(f"vanishing coefficient for {what}")
    return v


def cubic_seeds(jet: Sequence[float]) -> dict:
    """Branch seeds for the cubic entry in chart t.

    The M2 parameter point is taken on the branch t + b^ = 2 sqrt(z') > 0,
    so that z'' = sqrt(z').  The M1 parameter point solves
    (t^^2/4 + b t^/2) b' + a' = 0; the root t^ = -b + sqrt(b'^2 b^2 - 4 a' b') / b'
    is the one whose second equation carries +sqrt((t+b)^2 b'(b'+1) - 4 z' b').
    """
    t, z, b, p, q = map(float, jet)
    if p <= 0:
        raise LewyError("z' must be positive on the cubic entry")
    bh = -t + 2 * math.sqrt(p)
    ah = z - (t ** 3 / 12 + bh * t ** 2 / 4 + bh ** 2 * t / 4)
    a = z - (t ** 3 / 12 + b * t ** 2 / 4 + b ** 2 * t / 4)
    a1 = p - (t + b) ** 2 / 4 - (t ** 2 / 4 + b * t / 2) * q
    disc = b * b - 4 * a1 / q if q else -1.0
    if disc < 0:
        raise LewyError("no real M1 parameter point for this jet")
    th = -b + math.copysign(math.sqrt(disc), q)
    try:
        zh = th ** 3 / 12 + b * th ** 2 / 4 + b ** 2 * th / 4 + a
    except OverflowError as err:
        raise LewyError("M1 parameter point out of floating-point range") from err
    return {"solved": a, "y_hat": (ah, bh), "x_hat": (th, zh)}


# ---------------------------------------------------------------- closed-form systems

def _names(prefix: str, n: int) -> tuple:
    return (prefix,) if n == 1 else tuple(f"{prefix}{i}" for i in range(1, n + 1))


def flat_lewy_system(n: int = 1, chart: str = "PTstarM1") -> SystemODE:
    """Lewy curves of the flat model.

    "PTstarM1": independent z, states t, a; t'' = 0, a'' = -2 (a'.t') / (1 - a.t') a'.
    "PTM1" (n = 1): independent t, states z, b; z'' = 0, b'' = -2 b'^2 / (z' - b).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if chart == "PTM1":
        if n != 1:
            raise ValueError("chart PTM1 is only defined for n = 1")
        return SystemODE("t", ("z", "b"), ("p", "q"), ("0", "-2*q^2/(p-b)"))
    if chart != "PTstarM1":
        raise ValueError("chart must be 'PTM1' or 'PTstarM1'")
    t, a = _names("t", n), _names("a", n)
    dt, da = tuple("d" + s for s in t), tuple("d" + s for s in a)
    S = se.sym
    adt = se.add(*(S(x) * S(y) for x, y in zip(da, dt)))
    at = se.add(*(S(x) * S(y) for x, y in zip(a, dt)))
    coef = se.mul(-2, adt, se.power(se.add(1, se.mul(-1, at)), -1))
    rhs = (se.ZERO,) * n + tuple(se.mul(coef, S(x)) for x in da)
    return SystemODE("z", t + a, dt + da, rhs)


def chains_system(n: int = 1) -> SystemODE:
    """Chains of the flat model: (t^i)'' = 0, p_i'' = 2 (p'.t') / (p.t' - 1) p_i'."""
    if n < 1:
        raise ValueError("n must be positive")
    t, p = _names("t", n), _names("p", n)
    dt, dp = tuple("d" + s for s in t), tuple("d" + s for s in p)
    S = se.sym
    pdt = se.add(*(S(x) * S(y) for x, y in zip(dp, dt)))
    pt = se.add(*(S(x) * S(y) for x, y in zip(p, dt)))
    coef = se.mul(2, pdt, se.power(se.add(pt, -1), -1))
    rhs = (se.ZERO,) * n + tuple(se.mul(coef, S(x)) for x in dp)
    return SystemODE("z", t + p, dt + dp, rhs)


def transform_system(sys: SystemODE, independent: str, states: Sequence[str], derivs: Sequence[str],
                     old_in_new: Mapping[str, Expr | str]) -> SystemODE:
    """Rewrite a system under a point transformation.

    `old_in_new` expresses the old independent variable and old states in
    the new coordinates.  The jets are prolonged by the total derivative in
    the new independent variable and the old equations are solved for the
    new second derivatives (Cramer's rule, so keep n small).
    """
    states, derivs = tuple(states), tuple(derivs)
    m = len(states)
    if m != sys.n:
        raise ValueError("the number of states must be preserved")
    phi = {k: (se.parse(v) if isinstance(v, str) else se._coerce(v)) for k, v in old_in_new.items()}
    for k in (sys.independent,) + sys.states:
        if k not in phi:
            raise ValueError(f"missing expression for {k}")
    acc = [se.sym(f"acc{i}x{len(states)}") for i in range(m)]
    if {u.value for u in acc} & (set(states) | set(derivs) | {independent}):
        raise ValueError("coordinate names clash with internal symbols")

    def D(f, second=False):
        terms = [se.differentiate(f, independent)]
        terms += [se.mul(se.sym(d), se.differentiate(f, s)) for s, d in zip(states, derivs)]
        if second:
            terms += [se.mul(u, se.differentiate(f, d)) for u, d in zip(acc, derivs)]
        return se.add(*terms)

    dx = D(phi[sys.independent])
    inv = se.power(dx, -1)
    first = [se.mul(D(phi[s]), inv) for s in sys.states]
    second = [se.mul(D(f, True), inv) for f in first]
    sub = {sys.independent: phi[sys.independent]}
    sub.update({s: phi[s] for s in sys.states})
    sub.update({d: f for d, f in zip(sys.derivs, first)})
    eqs = [se.add(s2, se.mul(-1, se.replace(f, sub))) for s2, f in zip(second, sys.rhs)]
    zero = {u.value: se.ZERO for u in acc}
    A = [[se.differentiate(e, u.value) for u in acc] for e in eqs]
    c = [se.mul(-1, se.replace(e, zero)) for e in eqs]
    sol = _cramer(A, c)
    return SystemODE(independent, states, derivs, tuple(sol))


def _det(M):
    k = len(M)
    if k == 1:
        return M[0][0]
    if k == 2:
        return se.add(se.mul(M[0][0], M[1][1]), se.mul(-1, M[0][1], M[1][0]))
    terms = []
    for j in range(k):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        terms.append(se.mul(-1 if j % 2 else 1, M[0][j], _det(minor)))
    return se.add(*terms)


def _cramer(A, c):
    det = _det(A)
    out = []
    for j in range(len(A)):
        Aj = [row[:j] + [c[i]] + row[j + 1:] for i, row in enumerate(A)]
        out.append(se.mul(_det(Aj), se.power(det, -1)))
    return out


def inversion_to_PTM1(sys: SystemODE) -> SystemODE:
    """Apply (x, y, a) -> (x, y, 1/a) to a pair with independent x, then name the result (t; z, b).

    Applied to the flat pair in (z; t, a) this yields the flat pair in (t; z, b).
    """
    if sys.n != 2:
        raise ValueError("the inversion relates pairs of equations")
    (y, a) = sys.states
    return transform_system(sys, "t", ("z", "b"), ("p", "q"),
                            {sys.independent: "t", y: "z", a: "1/b"})


# ---------------------------------------------------------------- residual check

@dataclass
class ResidualReport:
    max_deviation: float
    used: int
    failed: int
    passed: bool
    worst_jet: tuple | None = None
    deviations: list = field(default_factory=list)

    def to_json(self):
        return {"max_deviation": self.max_deviation, "used": self.used, "failed": self.failed,
                "passed": self.passed, "worst_jet": None if self.worst_jet is None else list(self.worst_jet)}


def residual_check(sys: SystemODE, phi: DefiningFunction, trials: int = 10, seed: int = 0,
                   tol: float = 1e-9, chart: str = "t", seeder: Callable | None = None,
                   ranges: Sequence[tuple] | None = None) -> ResidualReport:
    """Compare a closed-form system with lewy_rhs at random jets.

    The system's chart must use the names of the chosen chart: independent
    variable, then the tracked M1 and M2 states.  Deviation is
    |closed - recipe| / max(|recipe|, 1) per jet (vector norms).
    """
    if sys.n != 2 * phi.n:
        raise ValueError("a Lewy system for n has 2n equations")
    r = CHARTS[chart]
    names = phi.names
    expect = (names[r["s"]], names[r["xs"]], names[r["ys"]])
    if (sys.independent,) + sys.states != expect:
        raise ValueError(f"system chart {(sys.independent,) + sys.states} does not match {expect}")
    f = se.compile_exprs(sys.rhs, sys.chart.names)
    rng = np.random.default_rng(seed)
    ranges = ranges or [(-2.0, 2.0)] * 5
    devs, used, failed, worst, worst_jet = [], 0, 0, 0.0, None
    attempts = 0
    while used < trials and attempts < 50 * trials:
        attempts += 1
        jet = tuple(float(rng.uniform(lo, hi)) for lo, hi in ranges)
        try:
            closed = np.array(f(*jet), dtype=float)
        except se.DomainError:
            continue
        if not np.all(np.isfinite(closed)):
            continue
        try:
            seeds = seeder(jet) if seeder else None
            ref = np.array(lewy_rhs(phi, jet, chart, seeds), dtype=float)
        except (LewyError, se.DomainError):
            failed += 1
            continue
        used += 1
        dev = float(np.linalg.norm(closed - ref) / max(np.linalg.norm(ref), 1.0))
        devs.append(dev)
        if dev >= worst:
            worst, worst_jet = dev, jet
    if used < max(1, trials // 2):
        raise InsufficientJets(f"only {used} admissible jets out of {attempts} attempts")
    return ResidualReport(worst, used, failed, worst <= tol, worst_jet, devs)


# ---------------------------------------------------------------- tracing

@dataclass(frozen=True)
class LewySpec:
    phi: DefiningFunction
    x_hats: tuple
    y_hats: tuple

    def __post_init__(self):
        n = self.phi.n
        xs = tuple(tuple(map(float, p)) for p in self.x_hats)
        ys = tuple(tuple(map(float, p)) for p in self.y_hats)
        object.__setattr__(self, "x_hats", xs)
        object.__setattr__(self, "y_hats", ys)
        if len(xs) != n or len(ys) != n:
            raise ValueError("need n parameter points in each factor")
        if any(len(p) != n + 1 for p in xs + ys):
            raise ValueError("parameter points need n + 1 coordinates")

    def validate(self, tol: float = 1e-8):
        """Raise if a parameter pair is incident or a family is degenerate."""
        n = self.phi.n
        for xh, yh in zip(self.x_hats, self.y_hats):
            if incidence(self.phi, xh, yh, tol):
                raise ValueError(f"incident parameter pair {xh}, {yh}")
        if n > 1:
            # general position of the affine parts of the parameter points
            for pts in (self.x_hats, self.y_hats):
                if np.linalg.matrix_rank(np.array([p[:n] for p in pts]), tol) < n:
                    raise ValueError("parameter points are not in general position")

    def constraints(self, w) -> np.ndarray:
        n = self.phi.n
        x, y = w[: n + 1], w[n + 1:]
        out = [self.phi(x, y)]
        out += [self.phi(x, yh) for yh in self.y_hats]
        out += [self.phi(xh, y) for xh in self.x_hats]
        return np.array(out)

    def jacobian(self, w) -> np.ndarray:
        n = self.phi.n
        x, y = w[: n + 1], w[n + 1:]
        rows = [self.phi.value_and_gradient(x, y)[1]]
        for yh in self.y_hats:
            g = self.phi.value_and_gradient(x, yh)[1]
            rows.append(np.concatenate([g[: n + 1], np.zeros(n + 1)]))
        for xh in self.x_hats:
            g = self.phi.value_and_gradient(xh, y)[1]
            rows.append(np.concatenate([np.zeros(n + 1), g[n + 1:]]))
        return np.array(rows)

    def project(self, w) -> NewtonResult:
        return newton(self.constraints, self.jacobian, w)

    def to_json(self):
        return {"phi": self.phi.to_json(), "x_hats": [list(p) for p in self.x_hats],
                "y_hats": [list(p) for p in self.y_hats]}

    @classmethod
    def from_json(cls, data) -> "LewySpec":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(DefiningFunction.from_json(data["phi"]), tuple(map(tuple, data["x_hats"])),
                   tuple(map(tuple, data["y_hats"])))


@dataclass
class LewyTrace:
    names: tuple
    s: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    projected: np.ndarray
    steps: np.ndarray
    charts: list
    switches: list
    failed: bool = False
    message: str = ""
    tol: float = 1e-8

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    def constraint_labels(self) -> list:
        k = self.residuals.shape[1] if self.residuals.ndim == 2 else 0
        n = (k - 1) // 2
        return ["res_N"] + [f"res_yhat{i + 1}" for i in range(n)] + [f"res_xhat{i + 1}" for i in range(n)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.names) + self.constraint_labels() + ["step"])
        for p, r, h in zip(self.points, self.residuals, self.steps):
            w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in r] + [repr(float(h))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"points": int(len(self.points)), "max_residual": self.max_residual,
                "max_projected_residual": float(np.max(self.projected)) if self.projected.size else 0.0,
                "failed": self.failed, "message": self.message, "chart_switches": self.switches,
                "tol": self.tol, "arc_length": float(self.s[-1]) if len(self.s) else 0.0}


def _tangent(spec: LewySpec, w, ref):
    J = spec.jacobian(w)
    _, sv, vt = np.linalg.svd(J)
    v = vt[-1]
    if sv[-1] <= 1e-10 * sv[0]:
        raise SingularJacobian("constraints are not transverse (incidence boundary)")
    return v if v @ ref >= 0 else -v


def _chart_of(v, n) -> str:
    return "t" if abs(v[0]) >= abs(v[n]) else "z"


def trace_lewy(spec: LewySpec, start: Sequence[float], direction: int = 1, steps: int = 200,
               h0: float | None = 1e-2, tol: float = 1e-8, rtol: float = 1e-8, atol: float = 1e-10,
               project: bool = True, max_step: float | None = None,
               s_max: float = np.inf) -> LewyTrace:
    """Follow the intersection curve by arc length with a Dormand-Prince 4(5) pair.

    After every accepted step the point is projected back onto the
    constraint set by Newton.  `residuals` records the constraint values
    before projection (the integration drift), `projected` after it.  The
    trace is marked failed at the first residual above `tol`.  Steps are
    capped at h0 unless `max_step` is given (h0=None lets the integrator
    choose the first step); integration stops after
    `steps` steps or at arc length `s_max`.
    """
    n = spec.phi.n
    w0 = np.array(start, dtype=float)
    if np.max(np.abs(spec.constraints(w0))) > 1e-10:
        raise ValueError("start point does not satisfy the constraints to 1e-10")
    J = spec.jacobian(w0)
    v0 = np.linalg.svd(J)[2][-1]
    key = v0[0] if abs(v0[0]) > 1e-8 else v0[n]
    ref = {"v": v0 * (np.sign(key) or 1.0) * (1 if direction >= 0 else -1)}

    def fun(_, w):
        return _tangent(spec, w, ref["v"])

    names = spec.phi.names
    solver = RK45(fun, 0.0, w0, t_bound=s_max, first_step=h0,
                   max_step=(h0 or np.inf) if max_step is None else max_step, rtol=rtol, atol=atol)
    pts, res, proj, hs, ss = [w0], [np.abs(spec.constraints(w0))], [np.abs(spec.constraints(w0))], [0.0], [0.0]
    charts = [_chart_of(ref["v"], n)]
    switches, failed, msg = [], False, ""
    for k in range(steps):
        if solver.status == "finished":
            break
        prev_t = solver.t
        try:
            solver.step()
        except LewyError as err:
            failed, msg = True, f"step {k}: {err}; last good point {pts[-1].tolist()}"
            break
        if solver.status == "failed" or solver.t - prev_t < 1e-12:
            failed, msg = True, f"step {k}: step size underflow near a singular locus; last good point {pts[-1].tolist()}"
            break
        w = solver.y.copy()
        drift = np.abs(spec.constraints(w))
        if project:
            pr = spec.project(w)
            if not pr.converged:
                failed, msg = True, f"step {k}: projection failed; last good point {pts[-1].tolist()}"
                break
            w = pr.x
            solver.y = w
        try:
            v = _tangent(spec, w, ref["v"])
        except LewyError as err:
            failed, msg = True, f"step {k}: {err}; last good point {pts[-1].tolist()}"
            break
        ref["v"] = v
        solver.f = v
        c = _chart_of(v, n)
        if c != charts[-1]:
            switches.append({"step": k + 1, "from": charts[-1], "to": c})
        charts.append(c)
        pts.append(w)
        res.append(drift)
        proj.append(np.abs(spec.constraints(w)))
        hs.append(solver.t - prev_t)
        ss.append(solver.t)
        if np.max(drift) > tol:
            failed, msg = True, f"step {k + 1}: residual {np.max(drift):.3g} exceeds {tol:g}"
            break
    return LewyTrace(names, np.array(ss), np.array(pts), np.array(res), np.array(proj), np.array(hs),
                     charts, switches, failed, msg, tol)


def start_point(spec: LewySpec, guess: Sequence[float]) -> np.ndarray:
    """Project a guess onto the Lewy constraint set."""
    res = spec.project(np.array(guess, dtype=float))
    if not res.converged:
        raise NewtonDivergence("could not place the start point on the Lewy curve")
    return res.x


def random_spec(phi: DefiningFunction, seed: int = 0, scale: float = 1.0, attempts: int = 100) -> tuple:
    """A random non-incident LewySpec together with a start point on its curve."""
    rng = np.random.default_rng(seed)
    n = phi.n
    for _ in range(attempts):
        xh = tuple(tuple(rng.uniform(-scale, scale, n + 1)) for _ in range(n))
        yh = tuple(tuple(rng.uniform(-scale, scale, n + 1)) for _ in range(n))
        spec = LewySpec(phi, xh, yh)
        try:
            spec.validate(1e-3)
            w = start_point(spec, rng.uniform(-scale, scale, 2 * n + 2))
            _tangent(spec, w, np.ones(2 * n + 2))
        except (ValueError, LewyError, se.DomainError):
            continue
        if np.max(np.abs(w)) > 10 * scale:
            continue
        return spec, w
    raise LewyError("no admissible random Lewy data found")
