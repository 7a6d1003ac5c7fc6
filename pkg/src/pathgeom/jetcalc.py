"""Vector fields on jet-space charts, Lie brackets and pointwise rank tests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import symexpr as se
from .symexpr import Expr


@dataclass(frozen=True)
class Chart:
    names: tuple

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate coordinate names in {self.names}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def point(self, values: Sequence[float]) -> dict:
        return dict(zip(self.names, map(float, values)))

    def coords(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([point[n] for n in self.names], dtype=float)


class ChartMismatch(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.chart.dim:
            raise ValueError("component count must equal chart dimension")
        object.__setattr__(self, "components", tuple(se._coerce(c) for c in self.components))

    @classmethod
    def coordinate(cls, chart: Chart, name: str) -> "VectorField":
        return cls(chart, tuple(se.ONE if n == name else se.ZERO for n in chart.names))

    def __call__(self, f: Expr) -> Expr:
        """Directional derivative v(f)."""
        return se.add(*(se.mul(c, se.differentiate(f, n))
                        for c, n in zip(self.components, self.chart.names) if not c.is_zero))

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, tuple(a - b for a, b in zip(self.components, other.components)))

    def scale(self, f) -> "VectorField":
        return VectorField(self.chart, tuple(se.mul(f, c) for c in self.components))

    def simplify(self) -> "VectorField":
        return VectorField(self.chart, tuple(se.simplify(c) for c in self.components))

    def at(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array(evaluate_fields([self], [point])[0][0])

    def __str__(self):
        terms = [f"({c})*d_{n}" for c, n in zip(self.components, self.chart.names) if not c.is_zero]
        return " + ".join(terms) or "0"


def _same_chart(v: VectorField, w: VectorField):
    if v.chart != w.chart:
        raise ChartMismatch(f"{v.chart.names} != {w.chart.names}")


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    """[v, w]^k = v(w^k) - w(v^k)."""
    _same_chart(v, w)
    return VectorField(v.chart, tuple(se.add(v(b), se.mul(-1, w(a)))
                                      for a, b in zip(v.components, w.components)))


@dataclass(frozen=True)
class SystemODE:
    """(z^i)'' = F^i(t, z, z') with derivative symbols p^i standing for z'^i."""

    independent: str
    states: tuple
    derivs: tuple
    rhs: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "derivs", tuple(self.derivs))
        rhs = tuple(se.parse(r) if isinstance(r, str) else se._coerce(r) for r in self.rhs)
        object.__setattr__(self, "rhs", rhs)
        if not (len(self.states) == len(self.derivs) == len(rhs)):
            raise ValueError("states, derivs and rhs must have equal length")
        Chart(self.chart.names)
        allowed = set(self.chart.names)
        for r in rhs:
            extra = r.free_symbols - allowed
            if extra:
                raise ValueError(f"right-hand side uses symbols outside the chart: {sorted(extra)}")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def chart(self) -> Chart:
        return Chart((self.independent,) + self.states + self.derivs)

    def to_json(self) -> dict:
        return {"n": self.n, "independent": self.independent, "states": list(self.states),
                "derivs": list(self.derivs), "rhs": [se.render(r) for r in self.rhs]}

    @classmethod
    def from_json(cls, data) -> "SystemODE":
        if isinstance(data, str):
            data = json.loads(data)
        for key in ("n", "independent", "states", "derivs", "rhs"):
            if key not in data:
                raise ValueError(f"missing key {key!r}")
        sys_ = cls(data["independent"], tuple(data["states"]), tuple(data["derivs"]), tuple(data["rhs"]))
        if sys_.n != int(data["n"]):
            raise ValueError("n does not match the number of equations")
        return sys_

    def rename(self, mapping: Mapping[str, str]) -> "SystemODE":
        sub = {k: se.sym(v) for k, v in mapping.items()}
        r = lambda n: mapping.get(n, n)
        return SystemODE(r(self.independent), tuple(map(r, self.states)), tuple(map(r, self.derivs)),
                         tuple(se.replace(f, sub) for f in self.rhs))


def total_derivative(sys: SystemODE) -> VectorField:
    """X_F = d_t + p^i d_{z^i} + F^i d_{p^i}."""
    comps = (se.ONE,) + tuple(se.sym(p) for p in sys.derivs) + sys.rhs
    return VectorField(sys.chart, comps)


def evaluate_fields(fields: Sequence[VectorField], points: Sequence[Mapping[str, float]]) -> list:
    """Component matrices, one (len(fields), dim) array per point."""
    chart = fields[0].chart
    for f in fields:
        _same_chart(fields[0], f)
    comps = [c for f in fields for c in f.components]
    fn = se.compile_exprs(comps, chart.names)
    out = []
    for pt in points:
        vals = fn(*(float(pt[n]) for n in chart.names))
        out.append(np.array(vals, dtype=float).reshape(len(fields), chart.dim))
    return out


def numeric_rank(mat: np.ndarray, tol: float) -> int:
    """Number of singular values above tol times the largest one."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if not mat.size:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _row_basis(rows: np.ndarray, tol: float) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 0
    if not keep.any():
        return np.zeros((0, rows.shape[1]))
    unit = rows[keep] / norms[keep, None]
    _, s, vt = np.linalg.svd(unit, full_matrices=False)
    return vt[: int(np.sum(s > tol * s[0]))]


def escape_ratio(rows: np.ndarray, v: np.ndarray, tol: float = 1e-6) -> float:
    """Size of the part of v outside span(rows), relative to max(|v|, row scale)."""
    basis = _row_basis(rows, tol)
    res = v - basis.T @ (basis @ v)
    scale = max(np.linalg.norm(v), np.max(np.linalg.norm(rows, axis=1), initial=0.0))
    return float(np.linalg.norm(res) / scale) if scale > 0 else 0.0


def distribution_rank(fields: Sequence[VectorField], point: Mapping[str, float], tol: float = 1e-6) -> int:
    return numeric_rank(evaluate_fields(fields, [point])[0], tol)


def frobenius_check(fields: Sequence[VectorField], points: Sequence[Mapping[str, float]], tol: float = 1e-6):
    """True if involutive at every point, False if not, None if the rank varies.

    Ranks are taken on unit-normalised fields.  A bracket counts as leaving
    the span when its residual after projection exceeds tol relative to
    the larger of its own norm and the fields' norms.
    """
    fields = list(fields)
    brackets = [lie_bracket(fields[i], fields[j])
                for i in range(len(fields)) for j in range(i + 1, len(fields))]
    mats = evaluate_fields(fields + brackets, points)
    r = len(fields)
    ranks = [len(_row_basis(m[:r], tol)) for m in mats]
    if len(set(ranks)) != 1:
        return None
    for m in mats:
        for k in range(len(brackets)):
            if escape_ratio(m[:r], m[r + k], tol) > tol:
                return False
    return True
