"""Reproduction suite run by the ``verify`` subcommand.

Each check returns a :class:`Check` with a short deterministic detail
string, so two runs with the same seed give byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import mpmath
import numpy as np

from . import symexpr as se
from .characterize import classify
from .invariants import (binary_forms, fels_curvature, fels_torsion, paracr_invariant,
                         roots_of_binary, scalar_invariants)
from .jetcalc import SystemODE
from .lewy import (chains_system, cubic_seeds, flat_lewy_system, inversion_to_PTM1, random_spec,
                   residual_check, trace_lewy)
from .paracr import (CUBIC_LEWY_G, DefiningFunction, compatibility_check, cubic_lewy_system, cubic_phi, dualize,
                     flat_phi, flat_slope_phi, graph_hessian, incidence)


@dataclass
class Check:
    id: str
    title: str
    passed: bool
    detail: str


def _e(x: float) -> str:
    return f"{x:.2e}"


def check_flat_triviality(seed: int, samples: int) -> Check:
    zero = SystemODE("t", ("z1", "z2"), ("p1", "p2"), ("0", "0"))
    t_ok, c_ok = fels_torsion(zero).is_zero(), fels_curvature(zero).is_zero()
    P1, Q1 = scalar_invariants("0")
    k_ok = paracr_invariant([["0", "0"], ["0", "0"]]).is_zero()
    ok = t_ok and c_ok and P1.is_zero and Q1.is_zero and k_ok
    return Check("C1", "flat-model triviality", ok,
                 f"T=0:{t_ok} C=0:{c_ok} P1=0:{P1.is_zero} Q1=0:{Q1.is_zero} K=0:{k_ok}")


def check_flat_lewy_pair(seed: int, samples: int) -> Check:
    sys = flat_lewy_system(1, "PTM1")
    T, C = fels_torsion(sys), fels_curvature(sys)
    t_zero = T.is_zero()
    _, W = binary_forms(T, C)
    pts = se.sample_points(list(W.coeffs), samples, seed, names=sys.chart.names)
    f = se.compile_exprs(W.coeffs, sys.chart.names)
    sigs = set()
    for p in pts:
        prof = roots_of_binary(f(*(p[n] for n in sys.chart.names)), 1e-7)
        sigs.add(prof.signature)
    want = ((2, True), (2, True))
    label = classify(sys, samples=samples, seed=seed).label
    ok = t_zero and sigs == {want} and len(pts) == samples and label == "flat-chains"
    return Check("C2", "flat Lewy pair: torsion, quartic roots, label", ok,
                 f"T=0:{t_zero} quartic={sorted(sigs)} points={len(pts)} label={label}")


def check_chains(seed: int, samples: int) -> Check:
    parts = []
    ok = True
    for n in (1, 2, 3):
        lewy = flat_lewy_system(n, "PTstarM1")
        names = {a: "p" + a[1:] for a in lewy.states + lewy.derivs if a.startswith("a")}
        names.update({a: "dp" + a[2:] for a in lewy.derivs if a.startswith("da")})
        renamed = lewy.rename(names)
        chains = chains_system(n)
        same = renamed.chart == chains.chart and all(
            se.equivalent(x, y, samples=50, seed=seed) is True for x, y in zip(renamed.rhs, chains.rhs))
        ok &= same
        parts.append(f"n={n}:{same}")
    mapped = inversion_to_PTM1(flat_lewy_system(1, "PTstarM1"))
    target = flat_lewy_system(1, "PTM1")
    inv = all(se.equivalent(x, y, samples=samples, tol=1e-9, seed=seed) is True
              for x, y in zip(mapped.rhs, target.rhs))
    parts.append(f"inversion:{inv}")
    return Check("C3", "chains coincide with flat Lewy curves", ok and inv, " ".join(parts))


def check_recipe(seed: int, samples: int) -> Check:
    flipped = residual_check(cubic_lewy_system(flipped=True), cubic_phi(), max(samples, 10), seed, 1e-6,
                             seeder=cubic_seeds)
    recipe = residual_check(cubic_lewy_system(), cubic_phi(), max(samples, 10), seed, 1e-6,
                               seeder=cubic_seeds)
    flat = residual_check(flat_lewy_system(1, "PTM1"), flat_slope_phi(), max(samples, 10), seed, 1e-9)
    ok = flipped.passed and flat.passed
    return Check("C4", "elimination recipe reproduces the reference pairs", ok,
                 f"reference (sign-flipped) cubic dev={_e(flipped.max_deviation)} (n={flipped.used}); "
                 f"recipe-sign cubic dev={_e(recipe.max_deviation)}; "
                 f"flat dev={_e(flat.max_deviation)} (n={flat.used})")


def check_conservation(seed: int, samples: int) -> Check:
    worst, fails = 0.0, 0
    reduced = True
    for phi in (flat_phi(1), cubic_phi()):
        specs = [random_spec(phi, seed + k) for k in range(5)]
        for spec, w in specs:
            tr = trace_lewy(spec, w, 1, 200)
            worst = max(worst, tr.max_residual)
            fails += tr.failed
        coarse, fine = (max(trace_lewy(spec, w, 1, 5000, h0=None, rtol=r, atol=r * 1e-2, tol=1.0,
                                       max_step=np.inf, s_max=2.0).max_residual for spec, w in specs)
                        for r in (1e-6, 5e-7))
        reduced &= fine < coarse
    ok = worst <= 1e-8 and not fails and reduced
    return Check("C5", "constraint conservation along traces", ok,
                 f"max residual={_e(worst)} failed={fails} halving-reduces={reduced}")


def fd_scalar_invariants(F: Callable, t: float, z: float, p: float, dps: int = 40) -> tuple:
    """(P1, Q1) at one point from nested high-precision finite differences of F(t, z, p)."""
    with mpmath.workdps(dps):
        d = lambda g, order: (lambda *x: mpmath.diff(g, x, order))
        Fz, Fp = d(F, (0, 1, 0)), d(F, (0, 0, 1))
        Fpp, Fzp, Fzz = d(F, (0, 0, 2)), d(F, (0, 1, 1)), d(F, (0, 2, 0))
        Fzpp = d(F, (0, 1, 2))
        X = lambda g: (lambda *x: d(g, (1, 0, 0))(*x) + x[2] * d(g, (0, 1, 0))(*x) + F(*x) * d(g, (0, 0, 1))(*x))
        XFpp = X(Fpp)
        pt = (mpmath.mpf(t), mpmath.mpf(z), mpmath.mpf(p))
        P1 = (X(XFpp)(*pt) - 4 * X(Fzp)(*pt) - Fp(*pt) * XFpp(*pt) + 4 * Fp(*pt) * Fzp(*pt)
              - 3 * Fz(*pt) * Fzpp(*pt) + 6 * Fzz(*pt))
        Q1 = mpmath.diff(F, pt, (0, 0, 4))
        return float(P1), float(Q1)


def check_scalar(seed: int, samples: int) -> Check:
    P1, Q1 = scalar_invariants("sqrt(p)")
    q_exact = se.equivalent(Q1, se.parse("-15/16*p^(-7/2)"), samples=samples, seed=seed) is True
    p_exact = se.equivalent(P1, se.parse("-15/16*p^(-5/2)"), samples=samples, seed=seed) is True
    f = se.compile_exprs([P1, Q1], ("p",))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in rng.uniform(0.5, 3.0, 10):
        ref = fd_scalar_invariants(lambda t, z, q: mpmath.sqrt(q), 0.0, 0.0, float(p))
        got = f(float(p))
        worst = max(worst, *(abs(g - r) / abs(r) for g, r in zip(got, ref)))
    cubic_ok = True
    for _ in range(5):
        c = rng.integers(-3, 4, size=4)
        F = f"{c[0]}*p^3*t + {c[1]}*p^2*z + {c[2]}*p + {c[3]}*t*z"
        cubic_ok &= se.simplify(scalar_invariants(F)[1]).is_zero
    ok = q_exact and p_exact and worst <= 1e-6 and cubic_ok
    return Check("C6", "scalar invariants of z'' = sqrt(z')", ok,
                 f"Q1 exact:{q_exact} P1 exact:{p_exact} fd rel={_e(worst)} cubic Q1=0:{cubic_ok}")


def _random_poly(rng) -> str:
    mons = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
    terms = []
    for idx in rng.choice(len(mons), 4, replace=False):
        i, j = mons[idx]
        c = int(rng.integers(1, 4)) * int(rng.choice([-1, 1]))
        extra = ["1", "t", "z1", "z2"][int(rng.integers(0, 4))]
        terms.append(f"{c}*{extra}*p1^{i}*p2^{j}")
    return " + ".join(terms)


def check_tensor_identities(seed: int, samples: int) -> Check:
    rng = np.random.default_rng(seed)
    good = 0
    for _ in range(25):
        sys = SystemODE("t", ("z1", "z2"), ("p1", "p2"), (_random_poly(rng), _random_poly(rng)))
        T, C = fels_torsion(sys), fels_curvature(sys)
        tr = se.simplify(T.trace()).is_zero
        E = C.entries
        sym = all(se.simplify(E[i][j][k][l] - E[i][a][b][c]).is_zero
                  for i in range(2) for j in range(2) for k in range(2) for l in range(2)
                  for a, b, c in ((k, j, l), (l, k, j), (j, l, k)))
        ctr = all(se.simplify(C.trace(j, k)).is_zero for j in range(2) for k in range(2))
        good += tr and sym and ctr
    return Check("C7", "torsion and curvature identities", good == 25, f"{good}/25 systems")


def check_characterization(seed: int, samples: int) -> Check:
    rep = classify(cubic_lewy_system(), samples=samples, seed=seed)
    quad = all(p.distinct_real == 2 and not p.repeated for p in rep.quadric)
    ok = (not rep.torsion_zero and quad and rep.label == "Lewy-compatible"
          and rep.B_integrable == (True, True) and rep.K_solvable == (True, True) and rep.contact is True)
    rng = np.random.default_rng(seed)
    negatives = 0
    for k in range(10):
        c = float(rng.uniform(0.1, 1.0)) * float(rng.choice([-1, 1]))
        extra = ["q^2*z", "p*q", "t*q^2", "q^3", "z"][k % 5]
        sys = SystemODE("t", ("z", "b"), ("p", "q"), ("sqrt(p)", f"{CUBIC_LEWY_G} + {c!r}*{extra}"))
        r = classify(sys, samples=samples, seed=seed)
        frame_failed = any(v is False for v in (r.B_integrable or ()) + (r.K_solvable or ()) + (r.contact,))
        negatives += r.label == "excluded" or frame_failed
    flipped = classify(cubic_lewy_system(flipped=True), samples=samples, seed=seed).label
    ok = ok and negatives == 10
    return Check("C8", "characterization of the cubic Lewy pair", ok,
                 f"label={rep.label} B={rep.B_integrable} K={rep.K_solvable} contact={rep.contact} "
                 f"negatives excluded={negatives}/10 sign-flipped pair={flipped}")


def check_duality(seed: int, samples: int) -> Check:
    comp = (compatibility_check([["0", "0"], ["0", "0"]]) is True
            and compatibility_check([["z", "0"], ["0", "0"]]) is False
            and compatibility_check([["1", "2"], ["2", "3"]]) is True)
    rng = np.random.default_rng(seed)
    inv, inc = True, True
    for phi in (flat_phi(1), flat_phi(2), cubic_phi()):
        inv &= dualize(dualize(phi)) == phi
        d = dualize(phi)
        for _ in range(samples):
            x = rng.uniform(-2, 2, phi.n + 1)
            y = rng.uniform(-2, 2, phi.n + 1)
            inc &= phi(x, y) == d(y, x) and incidence(phi, x, y) == incidence(d, y, x)
    self_dual = True
    for n in (1, 2):
        phi = flat_phi(n)
        self_dual &= all(e.is_zero for side in ("x", "y") for row in graph_hessian(phi, side) for e in row)
        # t_i <-> a_i, z <-> -b carries Phi to itself
        swap = {t: se.sym(a) for t, a in zip(phi.x_chart[:-1], phi.y_chart[:-1])}
        swap.update({a: se.sym(t) for t, a in zip(phi.x_chart[:-1], phi.y_chart[:-1])})
        swap.update({phi.x_chart[-1]: -se.sym(phi.y_chart[-1]), phi.y_chart[-1]: -se.sym(phi.x_chart[-1])})
        self_dual &= se.simplify(se.replace(phi.phi, swap) - phi.phi).is_zero
    ok = comp and inv and inc and self_dual
    return Check("C9", "compatibility and duality", ok,
                 f"compatibility:{comp} involution:{inv} incidence:{inc} flat self-dual:{self_dual}")


CHECKS: list[Callable[[int, int], Check]] = [
    check_flat_triviality, check_flat_lewy_pair, check_chains, check_recipe, check_conservation,
    check_scalar, check_tensor_identities, check_characterization, check_duality,
]


def run_checks(seed: int = 0, samples: int = 20) -> list[Check]:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn(seed, samples))
        except Exception as err:  # a crash is a failed criterion, reported with context
            out.append(Check(fn.__name__, fn.__doc__ or fn.__name__, False, f"error: {type(err).__name__}: {err}"))
    return out


def report_json(checks: list[Check]) -> str:
    return json.dumps([asdict(c) for c in checks], indent=2, sort_keys=True)


def run_suite(seed: int = 0, samples: int = 20, determinism: bool = True) -> list[Check]:
    """All criteria; the last one reruns the others and compares the reports byte for byte."""
    checks = run_checks(seed, samples)
    if determinism:
        again = run_checks(seed, samples)
        same = report_json(checks) == report_json(again)
        checks.append(Check("C10", "determinism of the report", same,
                            "identical reports" if same else "reports differ between runs"))
    return checks


def format_table(checks: list[Check]) -> str:
    lines = []
    for c in checks:
        lines.append(f"{c.id:<4} {'PASS' if c.passed else 'FAIL'}  {c.title}: {c.detail}")
    return "\n".join(lines) + "\n"
