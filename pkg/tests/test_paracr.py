import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathgeom import symexpr as se
from pathgeom.paracr import (DefiningFunction, NoIntersection, catalog, compatibility_check, cubic_phi,
                             dualize, flat_phi, general_position, gradient_nonvanishing, graph_hessian,
                             incidence, newton, relabel, sample_sigma)


def test_flat_incidence_examples():
    phi = flat_phi(1)
    assert incidence(phi, (0, 0), (1, 0))
    assert not incidence(phi, (0, 0), (0, 1))
    assert phi((0, 0), (0, 1)) == -1


def test_cubic_incidence_at_origin():
    assert incidence(cubic_phi(), (0, 0), (0, 0))


def test_general_position_single_point():
    phi = flat_phi(2)
    assert general_position(phi, [(0.3, -0.2, 1.0)]) is True


def test_general_position_parallel_hyperplanes():
    # same slopes t, different offsets z: the hyperplanes in M2 are parallel translates
    phi = flat_phi(2)
    assert general_position(phi, [(0.5, 0.5, 0.0), (0.5, 0.5, 1.0)]) is False


def test_general_position_generic_pair():
    rng = np.random.default_rng(4)
    phi = flat_phi(2)
    pts = [tuple(rng.uniform(-1, 1, 3)) for _ in range(2)]
    J = np.array([[-p[0], -p[1], -1.0] for p in pts])  # d/d(a1, a2, b) of Phi(p, y)
    assert np.linalg.matrix_rank(J) == 2
    assert general_position(phi, pts) is True


def test_general_position_rejects_too_many_points():
    with pytest.raises(ValueError):
        general_position(flat_phi(1), [(0, 0), (1, 1), (2, 3)])


def test_compatibility_examples():
    assert compatibility_check([["0", "0"], ["0", "0"]]) is True
    # D_2 f_11 = p2 while D_1 f_12 = 0
    assert compatibility_check([["z", "0"], ["0", "0"]]) is False
    assert compatibility_check([["1", "2"], ["2", "-3"]]) is True


def test_compatibility_needs_n_at_least_two():
    with pytest.raises(ValueError):
        compatibility_check([["0"]])


def test_dualize_flat_swaps_roles():
    phi = flat_phi(1)
    d = dualize(phi)
    assert d.x_chart == phi.y_chart and d.y_chart == phi.x_chart and d.phi == phi.phi


def test_dualize_involution_and_incidence():
    rng = np.random.default_rng(0)
    for phi in (flat_phi(1), flat_phi(3), cubic_phi()):
        assert dualize(dualize(phi)) == phi
        for _ in range(10):
            x, y = rng.uniform(-2, 2, phi.n + 1), rng.uniform(-2, 2, phi.n + 1)
            assert incidence(phi, x, y) == incidence(dualize(phi), y, x)
            assert phi(x, y) == dualize(phi)(y, x)


def test_flat_self_duality():
    # z_{t t} = 0 and b_{a a} = 0: the flat model looks the same from both factors
    for n in (1, 2, 3):
        phi = flat_phi(n)
        for side in ("x", "y"):
            assert all(e.is_zero for row in graph_hessian(phi, side) for e in row)


def test_cubic_is_not_flat_on_either_side():
    phi = cubic_phi()
    assert not graph_hessian(phi, "x")[0][0].is_zero
    with pytest.raises(ValueError):
        graph_hessian(phi, "y")  # quadratic in b


def test_sample_sigma_flat():
    phi = flat_phi(1)
    s = sample_sigma(phi, 1, (0.0, 0.0))
    assert len(s.points) == 100 and s.skipped == 0
    for t, z, a, b in s.points:
        assert abs(z - a * t - b) <= 1e-10
        assert abs(-b) <= 1e-10  # Phi(x^, y) with x^ = (0, 0)
    assert max(s.residuals) <= 1e-10


def test_sample_sigma_cubic():
    phi = cubic_phi()
    s = sample_sigma(phi, 1, (0.0, 0.0))
    assert len(s.points) >= 90
    for w in s.points:
        assert abs(phi(w[:2], w[2:])) <= 1e-10
        assert abs(phi((0.0, 0.0), w[2:])) <= 1e-10


@pytest.mark.parametrize("phi", [flat_phi(1), cubic_phi()], ids=["flat", "cubic"])
def test_sigma_tangent_plane_contains_fiber_direction(phi):
    # Sigma^1 is swept by the curves y = const; along them dz - p dt = 0 with p = -Phi_t / Phi_z.
    grid, span = 11, 0.025
    s = sample_sigma(phi, 1, (0.3, -0.2), grid=grid, span=span, center=(0.1, 0.4, -0.5, 0.25))
    assert s.skipped == 0
    W = np.array(s.points).reshape(grid, grid, 4)
    worst = 0.0
    for i in range(1, grid - 1):
        for j in range(1, grid - 1):
            e1, e2 = W[i + 1, j] - W[i - 1, j], W[i, j + 1] - W[i, j - 1]
            basis = np.vstack([e1, e2])
            _, _, vt = np.linalg.svd(basis[:, 2:].T)
            v = vt[-1] @ basis  # tangent vector with dy = 0
            _, g = phi.value_and_gradient(W[i, j, :2], W[i, j, 2:])
            p = -g[0] / g[1]
            worst = max(worst, abs(v[1] - p * v[0]) / np.linalg.norm(v))
    assert worst <= 1e-4


def test_sample_sigma_rejects_n2():
    with pytest.raises(ValueError):
        sample_sigma(flat_phi(2), 1, (0, 0, 0))


def test_sigma_csv_header():
    text = sample_sigma(flat_phi(1), 2, (0.5, 0.5), grid=3).to_csv()
    assert text.splitlines()[0] == "t,z,a,b,residual"


def test_newton_converges_and_reports_divergence():
    res = newton(lambda x: np.array([x[0] ** 2 - 2]), lambda x: np.array([[2 * x[0]]]), [1.0])
    assert res.converged and abs(res.x[0] - np.sqrt(2)) < 1e-10
    bad = newton(lambda x: np.array([x[0] ** 2 + 1]), lambda x: np.array([[2 * x[0]]]), [1.0])
    assert not bad.converged


def test_defining_function_json_roundtrip():
    phi = cubic_phi()
    assert DefiningFunction.from_json(phi.to_json()) == phi


def test_defining_function_validation():
    with pytest.raises(ValueError):
        DefiningFunction(1, ("t", "z"), ("a", "b"), "z - w")
    with pytest.raises(ValueError):
        DefiningFunction(1, ("t", "z"), ("t", "b"), "z - b")


def test_relabel_renames_charts():
    phi = relabel(flat_phi(1), {"a": "c"})
    assert phi.y_chart == ("c", "b") and "c" in se.render(phi.phi)


@pytest.mark.parametrize("name", ["flat", "cubic"])
def test_catalog_gradient_nonvanishing(name):
    assert gradient_nonvanishing(catalog(1)[name].phi, count=50)


def test_catalog_has_user_slot():
    user = DefiningFunction(1, ("t", "z"), ("a", "b"), "z - a*t^2 - b")
    entries = catalog(1, user)
    assert set(entries) == {"flat", "cubic", "user"}
    assert gradient_nonvanishing(user)


def test_general_position_no_intersection():
    # (a + t/2)^2 + (b + z/2)^2 + 1 - (t^2 + z^2)/4 > 0 near the origin: the curves never meet
    phi = DefiningFunction(1, ("t", "z"), ("a", "b"), "a^2 + b^2 + 1 + t*a + z*b")
    with pytest.raises(NoIntersection):
        general_position(phi, [(0.1, 0.2), (0.3, 0.4)])


# ---------------------------------------------------------------- properties

entry = st.sampled_from(["0", "1", "z", "t", "p1", "p2", "p1*p2", "z*p1", "t^2", "p1^2 - p2"])


@settings(max_examples=25, deadline=None)
@given(entry, entry, entry)
def test_compatibility_invariant_under_index_swap(f11, f12, f22):
    a = compatibility_check([[f11, f12], [f12, f22]])
    swap = {"p1": "p2", "p2": "p1"}
    r = lambda s: se.render(se.replace(se.parse(s), {k: se.sym(v) for k, v in swap.items()}))
    b = compatibility_check([[r(f22), r(f12)], [r(f12), r(f11)]], samples=20)
    assert a == b
