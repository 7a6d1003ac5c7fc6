import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathgeom import symexpr as se
from pathgeom.characterize import (LABELS, NOT_CHECKED, SplitFailure, check_B_integrability, check_contact,
                                   check_K_solvability, classify, conditioned_points, default_points,
                                   quartic_on_eigendirections, torsion_split)
from pathgeom.invariants import fels_torsion
from pathgeom.jetcalc import SystemODE
from pathgeom.lewy import chains_system, flat_lewy_system, inversion_to_PTM1
from pathgeom.paracr import CUBIC_LEWY_G, cubic_lewy_system

PAIR = ("t", ("z1", "z2"), ("p1", "p2"))


def pair(f1, f2):
    return SystemODE(*PAIR, (f1, f2))


def _direction(V, pt):
    v = np.array([se.evaluate(c, pt) for c in V.components])
    return v / np.linalg.norm(v)


# ------------------------------------------------------------------- splits

def test_split_of_diagonal_torsion():
    # T = diag(-1, 1): eigenvalue +1 on d/dp2, -1 on d/dp1
    sys = pair("z1", "-z2")
    s = torsion_split(sys)
    pt = s.points[0]
    assert se.evaluate(s.lam1, pt) == pytest.approx(1.0)
    assert se.evaluate(s.lam2, pt) == pytest.approx(-1.0)
    assert np.allclose(np.abs(_direction(s.V1, pt)), [0, 0, 0, 0, 1])
    assert np.allclose(np.abs(_direction(s.V2, pt)), [0, 0, 0, 1, 0])


def test_split_of_rotation_torsion_is_excluded():
    with pytest.raises(SplitFailure) as err:
        torsion_split(pair("z2", "-z1"))
    assert err.value.kind == "excluded"


def test_split_of_torsion_free_system():
    with pytest.raises(SplitFailure) as err:
        torsion_split(flat_lewy_system(1, "PTM1"))
    assert err.value.kind == "torsion-free"


def test_split_of_scalar_torsion_is_repeated():
    # T = 0 after removing the trace, but a nilpotent part leaves one eigenvalue twice
    with pytest.raises(SplitFailure) as err:
        torsion_split(pair("z2", "0"))
    assert err.value.kind == "excluded"


def test_split_follows_branches_across_a_crossing():
    # T = diag(h, -h) with h = (z1 - 1)/2: lam1 = h everywhere, not |h|
    s = torsion_split(pair("z1 + p1^2", "0"))
    sign = np.sign(s.points[0]["z1"] - 1)
    for pt in s.points:
        assert se.evaluate(s.lam1, pt) == pytest.approx(sign * (pt["z1"] - 1) / 2)
        assert np.allclose(np.abs(_direction(s.V1, pt)), [0, 0, 0, 1, 0] if sign > 0 else [0, 0, 0, 0, 1])


def test_split_requires_pairs():
    with pytest.raises(ValueError):
        torsion_split(SystemODE("t", ("z",), ("p",), ("0",)))


# ------------------------------------------------------------- B distributions

def test_B_decoupled_linear_pair_integrable():
    sys = pair("z1", "-z2")
    s = torsion_split(sys)
    assert check_B_integrability(sys, s, s.points[:10]) == (True, True)


def test_B_fails_on_one_side_with_time_dependent_coupling():
    # T = [[-1, 0], [1/2, 1]]: V1 = d/dp2 closes up, V2 = 4 d/dp1 - d/dp2 does not for t != 0
    sys = pair("z1", "-z2 + t*p1")
    s = torsion_split(sys)
    pt = s.points[0]
    assert se.evaluate(s.lam1, pt) == pytest.approx(1.0)
    v2 = _direction(s.V2, pt)
    assert v2[3] / v2[4] == pytest.approx(-4.0)
    assert check_B_integrability(sys, s, s.points[:10]) == (True, False)


def test_B_on_cubic_pair():
    sys = cubic_lewy_system()
    s = torsion_split(sys)
    pts = conditioned_points(sys, s, default_points(sys, 80), 20)
    assert check_B_integrability(sys, s, pts) == (True, True)


# ------------------------------------------------------- K and contact checks

def test_K_and_contact_on_cubic_pair():
    sys = cubic_lewy_system()
    s = torsion_split(sys)
    pts = conditioned_points(sys, s, default_points(sys, 80), 20)
    filt, worst = quartic_on_eigendirections(sys, s, pts)
    assert filt and worst <= 1e-6
    k = check_K_solvability(sys, s, pts)
    assert k.solvable == (True, True) and k.quartic_filter is True
    assert k.points_used >= 16
    assert check_K_solvability(sys, s, pts, use_filter=False).solvable == (True, True)
    assert check_contact(sys, s, pts) is True


def test_contact_fails_for_decoupled_pair():
    # V = d/dp2, d/dp1; W = -d/dz2, -d/dz1; e1 = e2 = 0 and [W1, W2] = 0
    sys = pair("z1", "-z2")
    s = torsion_split(sys)
    pts = list(s.points[:10])
    assert check_K_solvability(sys, s, pts).solvable == (True, True)
    assert check_contact(sys, s, pts) is False


def test_contact_stable_under_more_samples():
    sys = cubic_lewy_system()
    s = torsion_split(sys)
    cands = default_points(sys, 160)
    a = check_contact(sys, s, conditioned_points(sys, s, cands, 20))
    b = check_contact(sys, s, conditioned_points(sys, s, cands, 40))
    assert a is b is True


def test_K_report_json():
    sys = pair("z1", "-z2")
    s = torsion_split(sys)
    rep = check_K_solvability(sys, s, list(s.points[:5])).to_json()
    assert set(rep) == {"solvable", "algebraic_residual", "differential_residual", "quartic_filter",
                        "points_used", "points_skipped"}
    json.dumps(rep)


# ----------------------------------------------------------------- classify

def test_classify_flat_pair():
    rep = classify(flat_lewy_system(1, "PTM1"))
    assert rep.label == "flat-chains" and rep.torsion_zero
    assert all(p.signature == ((2, True), (2, True)) for p in rep.quartic)


def test_classify_free_particle():
    rep = classify(SystemODE("t", ("z", "b"), ("p", "q"), ("0", "0")))
    assert rep.label == "torsion-free"
    assert any("flat model" in n for n in rep.notes)


def test_classify_cubic_pair():
    rep = classify(cubic_lewy_system())
    assert rep.label == "Lewy-compatible"
    assert rep.B_integrable == (True, True) and rep.K_solvable == (True, True) and rep.contact is True
    assert all(p.distinct_real == 2 and not p.repeated for p in rep.quadric)


def test_classify_flipped_cubic_pair_is_excluded():
    assert classify(cubic_lewy_system(flipped=True)).label == "excluded"


@pytest.mark.parametrize("extra", ["q^2*z", "p*q", "q^3"])
def test_classify_perturbed_cubic_pair_is_excluded(extra):
    sys = SystemODE("t", ("z", "b"), ("p", "q"), ("sqrt(p)", f"{CUBIC_LEWY_G} + 0.5*{extra}"))
    assert classify(sys).label == "excluded"


def test_classify_decoupled_pair_excluded_by_roots():
    rep = classify(pair("z1", "-z2"))
    assert rep.label == "excluded" and rep.contact is False


def test_classify_rotation_excluded():
    rep = classify(pair("z2", "-z1"))
    assert rep.label == "excluded"
    assert any("complex" in n for n in rep.notes)


def test_chains_and_flat_pair_share_label():
    a = classify(inversion_to_PTM1(chains_system(1)))
    b = classify(flat_lewy_system(1, "PTM1"))
    assert a.label == b.label == "flat-chains"


def test_classify_is_deterministic():
    a = json.dumps(classify(cubic_lewy_system(), seed=3).to_json(), sort_keys=True)
    b = json.dumps(classify(cubic_lewy_system(), seed=3).to_json(), sort_keys=True)
    assert a == b


def test_classify_reports_unchecked_equivalence():
    rep = classify(cubic_lewy_system())
    assert NOT_CHECKED in rep.notes and "label: Lewy-compatible" in rep.summary()


# ---------------------------------------------------------------- properties

term = st.sampled_from(["z1", "z2", "t*p1", "t*p2", "p1*p2", "z1*p2", "p1^2"])
coef = st.integers(-2, 2)
linear_rhs = st.lists(st.tuples(coef, term), min_size=1, max_size=3).map(
    lambda ts: " + ".join(f"{c}*{m}" for c, m in ts))


@settings(max_examples=15, deadline=None)
@given(linear_rhs, linear_rhs)
def test_split_vectors_are_eigenvectors(f1, f2):
    sys = pair(f1, f2)
    try:
        s = torsion_split(sys)
    except SplitFailure:
        return
    T = fels_torsion(sys)
    for k, pt in enumerate(s.points):
        M = np.array([[se.evaluate(e, pt) for e in row] for row in T.entries])
        l1, l2 = se.evaluate(s.lam1, pt), se.evaluate(s.lam2, pt)
        if k == 0:
            assert l1 > l2
        for V, lam in ((s.V1, l1), (s.V2, l2)):
            v = np.array([se.evaluate(c, pt) for c in V.components[3:]])
            defect = np.linalg.norm(M @ v - lam * v) / (np.linalg.norm(M) * np.linalg.norm(v))
            assert defect <= 1e-6


@settings(max_examples=10, deadline=None)
@given(linear_rhs, linear_rhs)
def test_label_is_one_of_the_known_labels(f1, f2):
    assert classify(pair(f1, f2), samples=10).label in LABELS
