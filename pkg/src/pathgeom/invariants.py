"""Point invariants of second-order ODE systems.

Torsion and curvature of a system (z^i)'' = F^i(t, z, z'), their binary
forms for pairs of equations, root profiles of those forms, the two scalar
invariants of a single equation, and the fundamental invariant of a
para-CR structure given by a compatible PDE system.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Mapping, Sequence

import numpy as np

from . import symexpr as se
from .jetcalc import SystemODE, total_derivative
from .symexpr import Expr


def _d(e: Expr, name: str) -> Expr:
    return se.differentiate(e, name)


@dataclass(frozen=True)
class TorsionTensor:
    """T[i][j] is T^i_j; ``intermediate[i][j]`` is the untraced F^i_j."""

    n: int
    entries: tuple
    intermediate: tuple = field(repr=False, default=())

    def trace(self) -> Expr:
        return se.add(*(self.entries[i][i] for i in range(self.n)))

    def simplified(self) -> "TorsionTensor":
        return TorsionTensor(self.n, tuple(tuple(se.simplify(x) for x in row) for row in self.entries))

    def is_zero(self) -> bool:
        return all(se.simplify(x).is_zero for row in self.entries for x in row)


@dataclass(frozen=True)
class CurvatureTensor:
    """C[i][j][k][l] is C^i_{jkl}."""

    n: int
    entries: tuple

    def component(self, i, j, k, l) -> Expr:
        return self.entries[i][j][k][l]

    def trace(self, j: int, k: int) -> Expr:
        return se.add(*(self.entries[i][i][j][k] for i in range(self.n)))

    def simplified(self) -> "CurvatureTensor":
        n = self.n
        return CurvatureTensor(n, _tensor(lambda *ix: se.simplify(self.entries[ix[0]][ix[1]][ix[2]][ix[3]]), n, 4))

    def is_zero(self) -> bool:
        return all(se.simplify(x).is_zero for x in _flat(self.entries))


def _tensor(f, n, rank):
    if rank == 1:
        return tuple(f(i) for i in range(n))
    return tuple(_tensor(lambda *rest, i=i: f(i, *rest), n, rank - 1) for i in range(n))


def _flat(t):
    if isinstance(t, tuple):
        for x in t:
            yield from _flat(x)
    else:
        yield t


def _delta(i, j):
    return se.ONE if i == j else se.ZERO


def fels_torsion(sys: SystemODE) -> TorsionTensor:
    """F^i_j = -F^i_{z^j} + X(F^i_{p^j})/2 - F^i_{p^k} F^k_{p^j}/4, trace removed."""
    n = sys.n
    if n < 2:
        raise ValueError("torsion needs at least two equations")
    X = total_derivative(sys)
    F = sys.rhs
    Fp = [[_d(F[i], sys.derivs[j]) for j in range(n)] for i in range(n)]
    Fij = []
    for i in range(n):
        row = []
        for j in range(n):
            quad = se.add(*(se.mul(Fp[i][k], Fp[k][j]) for k in range(n)))
            row.append(se.add(se.mul(-1, _d(F[i], sys.states[j])),
                              se.mul(Fraction(1, 2), X(Fp[i][j])),
                              se.mul(Fraction(-1, 4), quad)))
        Fij.append(tuple(row))
    tr = se.add(*(Fij[k][k] for k in range(n)))
    T = tuple(tuple(se.add(Fij[i][j], se.mul(Fraction(-1, n), _delta(i, j), tr)) for j in range(n))
              for i in range(n))
    return TorsionTensor(n, T, tuple(Fij))


def fels_curvature(sys: SystemODE) -> CurvatureTensor:
    """C^i_{jkl} = F^i_{p^j p^k p^l} minus 3/(n+2) times the averaged trace term."""
    n = sys.n
    if n < 2:
        raise ValueError("curvature needs at least two equations")
    p = sys.derivs
    third = {}
    for i in range(n):
        for j, k, l in itertools.combinations_with_replacement(range(n), 3):
            third[i, j, k, l] = _d(_d(_d(sys.rhs[i], p[j]), p[k]), p[l])

    def F3(i, j, k, l):
        return third[(i,) + tuple(sorted((j, k, l)))]

    tr = {(j, k): se.add(*(F3(r, r, j, k) for r in range(n))) for j in range(n) for k in range(n)}
    c = Fraction(1, n + 2)

    def C(i, j, k, l):
        sym_part = se.add(se.mul(tr[j, k], _delta(i, l)), se.mul(tr[k, l], _delta(i, j)),
                          se.mul(tr[l, j], _delta(i, k)))
        return se.add(F3(i, j, k, l), se.mul(-c, sym_part))

    return CurvatureTensor(n, _tensor(C, n, 4))


# ------------------------------------------------------------- binary forms

@dataclass(frozen=True)
class BinaryForm:
    """sum_k binom(d,k) c_k x^(d-k) y^k."""

    coeffs: tuple

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def polynomial(self, values: Sequence[float]) -> np.ndarray:
        d = self.degree
        return np.array([comb(d, k) * v for k, v in enumerate(values)], dtype=float)

    def evaluate_coeffs(self, point: Mapping[str, float]) -> np.ndarray:
        names = sorted(frozenset().union(*(c.free_symbols for c in self.coeffs)))
        f = se.compile_exprs(self.coeffs, names)
        return np.array(f(*(float(point[n]) for n in names)), dtype=float)

    def at_direction(self, values: Sequence[float], x: float, y: float) -> float:
        d = self.degree
        return float(sum(comb(d, k) * v * x ** (d - k) * y ** k for k, v in enumerate(values)))


class BinaryQuadric(BinaryForm):
    pass


class BinaryQuartic(BinaryForm):
    pass


def binary_forms(T: TorsionTensor, C: CurvatureTensor) -> tuple:
    if T.n != 2 or C.n != 2:
        raise ValueError("binary forms are defined for pairs of equations")
    t, c = T.entries, C.entries
    quadric = BinaryQuadric((t[1][0], t[1][1], se.mul(-1, t[0][1])))
    quartic = BinaryQuartic((c[1][0][0][0], c[1][1][0][0], c[1][1][1][0], c[1][1][1][1],
                             se.mul(-1, c[0][1][1][1])))
    return quadric, quartic


@dataclass(frozen=True)
class Root:
    value: complex | None  # None is the point at infinity
    mult: int
    real: bool

    def to_json(self):
        if self.value is None:
            v = "inf"
        elif self.real:
            v = float(self.value.real)
        else:
            v = [float(self.value.real), float(self.value.imag)]
        return {"value": v, "mult": self.mult, "real": self.real}


@dataclass(frozen=True)
class RootProfile:
    roots: tuple
    degree: int
    point: tuple = ()
    zero_form: bool = False

    @property
    def distinct_real(self) -> int:
        return sum(1 for r in self.roots if r.real)

    @property
    def distinct(self) -> int:
        return len(self.roots)

    @property
    def repeated(self) -> bool:
        return any(r.mult > 1 for r in self.roots)

    @property
    def signature(self) -> tuple:
        """Sorted (multiplicity, real) pairs; comparable across points."""
        return tuple(sorted(((r.mult, r.real) for r in self.roots), reverse=True))

    def to_json(self):
        return {"degree": self.degree, "zero_form": self.zero_form,
                "roots": [r.to_json() for r in self.roots]}


def _clusters(values: list, tol: float) -> list:
    """Greedy grouping: m roots whose diameter is below tol**(1/m) form one root."""
    remaining = sorted(values, key=lambda z: (z.real, z.imag))
    groups = []
    for m in range(len(remaining), 1, -1):
        while len(remaining) >= m:
            best = None
            for combo in itertools.combinations(range(len(remaining)), m):
                pts = [remaining[i] for i in combo]
                centre = np.mean(pts)
                diam = max(abs(a - b) for a in pts for b in pts)
                if diam <= tol ** (1.0 / m) * (1 + abs(centre)) and (best is None or diam < best[0]):
                    best = (diam, combo)
            if best is None:
                break
            groups.append([remaining[i] for i in best[1]])
            remaining = [z for i, z in enumerate(remaining) if i not in best[1]]
    groups.extend([z] for z in remaining)
    return sorted(groups, key=lambda g: (np.mean(g).real, np.mean(g).imag))


def roots_of_binary(values: Sequence[float], tol: float = 1e-7, point=()) -> RootProfile:
    """Roots in x/y of sum binom(d,k) c_k x^(d-k) y^k, clustered by multiplicity."""
    values = np.asarray(values, dtype=float)
    d = len(values) - 1
    scale = np.max(np.abs(values))
    if scale <= tol:
        return RootProfile((), d, tuple(point), zero_form=True)
    poly = np.array([comb(d, k) * v for k, v in enumerate(values)]) / scale
    lead = 0
    while lead < d and abs(poly[lead]) <= tol:
        lead += 1
    finite = np.roots(poly[lead:]) if lead < d else np.array([])
    roots = []
    if lead:
        roots.append(Root(None, lead, True))
    for group in _clusters(list(finite), tol):
        centre = complex(np.mean(group))
        thr = tol ** (1.0 / len(group))
        real = abs(centre.imag) <= thr * (1 + abs(centre))
        roots.append(Root(complex(centre.real, 0.0) if real else centre, len(group), real))
    return RootProfile(tuple(roots), d, tuple(point))


def root_profile(form: BinaryForm, point: Mapping[str, float], tol: float = 1e-7) -> RootProfile:
    vals = form.evaluate_coeffs(point)
    return roots_of_binary(vals, tol, tuple(sorted(point.items())))


# ------------------------------------------------------------ scalar case

def scalar_invariants(F, t: str = "t", z: str = "z", p: str = "p") -> tuple:
    """(P1, Q1) for z'' = F(t, z, z') with p standing for z'."""
    F = se.parse(F) if isinstance(F, str) else se._coerce(F)
    sys = SystemODE(t, (z,), (p,), (F,))
    X = total_derivative(sys)
    Fp, Fz = _d(F, p), _d(F, z)
    Fpp = _d(Fp, p)
    Fzp = _d(Fz, p)
    XFpp = X(Fpp)
    P1 = se.add(X(XFpp), se.mul(-4, X(Fzp)), se.mul(-1, Fp, XFpp), se.mul(4, Fp, Fzp),
                se.mul(-3, Fz, _d(Fzp, p)), se.mul(6, _d(Fz, z)))
    Q1 = _d(_d(Fpp, p), p)
    return P1, Q1


# ---------------------------------------------------------- para-CR invariant

@dataclass(frozen=True)
class ParaCRInvariant:
    """K[i][l][j][k] is K^{il}_{jk}."""

    n: int
    entries: tuple

    def simplified(self) -> "ParaCRInvariant":
        e = self.entries
        return ParaCRInvariant(self.n, _tensor(lambda i, l, j, k: se.simplify(e[i][l][j][k]), self.n, 4))

    def is_zero(self) -> bool:
        return all(se.simplify(x).is_zero for x in _flat(self.entries))

    def trace(self, i: int, j: int) -> Expr:
        return se.add(*(self.entries[i][k][j][k] for k in range(self.n)))


def paracr_invariant(f: Sequence[Sequence], p: Sequence[str] | None = None) -> ParaCRInvariant:
    """Trace-free part of S^{il}_{jk} = -d^2 f_{jk} / dp_i dp_l."""
    n = len(f)
    if n < 2:
        raise ValueError("the para-CR invariant needs n >= 2")
    f = [[se.parse(x) if isinstance(x, str) else se._coerce(x) for x in row] for row in f]
    for i in range(n):
        if len(f[i]) != n:
            raise ValueError("f must be square")
        for j in range(i):
            if f[i][j] is not f[j][i] and not se.simplify(f[i][j] - f[j][i]).is_zero:
                raise ValueError("f must be symmetric")
    p = list(p) if p is not None else [f"p{i + 1}" for i in range(n)]
    S = _tensor(lambda i, l, j, k: se.mul(-1, _d(_d(f[j][k], p[i]), p[l])), n, 4)
    S1 = [[se.add(*(S[i][k][j][k] for k in range(n))) for j in range(n)] for i in range(n)]
    S0 = se.add(*(S1[i][i] for i in range(n)))
    a = Fraction(-4, n + 2) * Fraction(1, 4)
    b = Fraction(1, (n + 1) * (n + 2))

    def K(i, l, j, k):
        sym_part = se.add(se.mul(_delta(i, j), S1[l][k]), se.mul(_delta(i, k), S1[l][j]),
                          se.mul(_delta(l, j), S1[i][k]), se.mul(_delta(l, k), S1[i][j]))
        trace_part = se.add(se.mul(_delta(i, j), _delta(l, k)), se.mul(_delta(l, j), _delta(i, k)))
        return se.add(S[i][l][j][k], se.mul(a, sym_part), se.mul(b, trace_part, S0))

    return ParaCRInvariant(n, _tensor(K, n, 4))
