import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamreeb.catalog import named_field, named_surface
from hamreeb.fields import (DECLARED, MAX, MIN, SADDLE, UNCLASSIFIED, DeclaredModel, ScalarField,
                            binary_form_is_square_free, check_axioms,
                            euler_characteristic_from_critical_points, find_critical_points,
                            homotopy_case, polynomial_field, ray_growth_exponent)


def _kinds(cps):
    return sorted(cp.kind for cp in cps)


def test_twowell_critical_points_by_hand(twowell, twowell_domain):
    cps = sorted(find_critical_points(twowell, twowell_domain), key=lambda c: c.position)
    # ((x+1)^2+y^2)((x-1)^2+y^2): minima at (+-1, 0) with value 0, saddle at 0 with value 1
    assert [c.kind for c in cps] == [MIN, SADDLE, MIN]
    assert np.allclose([c.position for c in cps], [(-1, 0), (0, 0), (1, 0)], atol=1e-10)
    assert np.allclose([c.value for c in cps], [0, 1, 0], atol=1e-12)


def test_polynomial_derivatives_by_hand():
    f = polynomial_field([(3, 0, 1.0), (1, 2, -3.0)])
    p = np.array([[0.5, -0.25]])
    x, y = p[0]
    assert f.value(p)[0] == pytest.approx(x**3 - 3 * x * y**2)
    assert np.allclose(f.grad(p)[0], [3 * x**2 - 3 * y**2, -6 * x * y])
    assert np.allclose(f.hess(p)[0], [[6 * x, -6 * y], [-6 * y, -6 * x]])


@pytest.mark.parametrize("name,surface", [("twowell", "twowell-domain"), ("torus-height", "torus"),
                                          ("sphere-height", "sphere")])
def test_fd_gradient_is_second_order(name, surface):
    f = named_field(name)
    xy, ch = named_surface(surface).sample_points(100, np.random.default_rng(0), margin=0.05)
    exact = f.grad(xy, ch)
    errs = [np.max(np.abs(ScalarField(name, f.values, fd_step=h).grad(xy, ch) - exact))
            for h in (1e-2, 5e-3)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@pytest.mark.parametrize("name,surface", [("r2", "disk"), ("twowell", "twowell-domain"),
                                          ("torus-height", "torus"), ("sphere-height", "sphere"),
                                          ("monkey", "disk")])
def test_critical_points_have_vanishing_gradient(name, surface):
    f = named_field(name)
    for cp in find_critical_points(f, named_surface(surface)):
        assert np.linalg.norm(f.grad(cp.xy[None], np.array([cp.chart]))) < 1e-8


@settings(max_examples=15, deadline=None)
@given(angle=st.floats(0.0, 2 * np.pi))
def test_classification_is_rotation_invariant(angle):
    disk = named_surface("disk")
    f = named_field("twowell")
    assert _kinds(find_critical_points(f.rotated(angle), disk)) == _kinds(find_critical_points(f, disk))


@pytest.mark.parametrize("name,surface,chi", [("sphere-height", "sphere", 2), ("torus-height", "torus", 0)])
def test_critical_point_count_gives_euler_characteristic(name, surface, chi):
    s = named_surface(surface)
    f = named_field(name)
    cps = find_critical_points(f, s)
    assert check_axioms(f, s, cps).in_class_Morse
    assert euler_characteristic_from_critical_points(cps) == chi


@pytest.mark.parametrize("surface,field,case", [
    ("disk", "r2", "Circle(B)"), ("sphere", "sphere-height", "Circle(A)"),
    ("annulus", "angular", "Circle(C)"), ("torus", "torus-angle", "Circle(D)"),
    ("twowell-domain", "twowell", "Contractible"), ("torus", "torus-height", "Contractible"),
])
def test_homotopy_case(surface, field, case):
    s = named_surface(surface)
    f = named_field(field)
    cps = find_critical_points(f, s)
    rep = check_axioms(f, s, cps)
    assert rep.in_class_F
    assert str(homotopy_case(f, s, rep, cps)) == case


def test_degenerate_point_needs_declaration(disk):
    f = named_field("r4")
    cps = find_critical_points(f, disk)
    assert [c.kind for c in cps] == [UNCLASSIFIED]
    rep = check_axioms(f, disk, cps)
    assert not rep.axiom_l_ok and not rep.in_class_F
    with pytest.raises(ValueError):
        homotopy_case(f, disk, rep, cps)


def test_declared_square_free_monkey_saddle(disk):
    f = named_field("monkey").with_declared(DeclaredModel((0.0, 0.0), 3, True))
    cps = find_critical_points(f, disk)
    assert [c.kind for c in cps] == [DECLARED]
    rep = check_axioms(f, disk, cps)
    assert rep.axiom_l_ok
    # x^3 - 3xy^2 is not constant on the unit circle
    assert not rep.axiom_b_ok and not rep.in_class_F


def test_false_square_free_attestation_is_caught(disk):
    # |z|^4 = (x^2 + y^2)^2 has a repeated factor
    f = named_field("r4").with_declared(DeclaredModel((0.0, 0.0), 4, True))
    rep = check_axioms(f, disk, find_critical_points(f, disk))
    assert not rep.in_class_F


def test_ray_growth_exponent():
    assert ray_growth_exponent(named_field("r4"), (0.0, 0.0)) == pytest.approx(4.0, rel=0.1)
    assert ray_growth_exponent(named_field("monkey"), (0.0, 0.0)) == pytest.approx(3.0, rel=0.1)


def test_square_free_binary_forms():
    # coefficients of x^k y^(d-k), k = 0..d
    assert binary_form_is_square_free([0.0, -3.0, 0.0, 1.0])        # x^3 - 3xy^2
    assert not binary_form_is_square_free([1.0, 0.0, 2.0, 0.0, 1.0])  # (x^2 + y^2)^2
    assert not binary_form_is_square_free([0.0, 0.0, 1.0])          # x^2


def test_circle_valued_field_wraps():
    f = named_field("torus-angle")
    assert f.wrap_delta(np.array([0.9, -0.9])) == pytest.approx([-0.1, 0.1])


def test_max_kind_on_sphere():
    cps = find_critical_points(named_field("sphere-height"), named_surface("sphere"))
    assert _kinds(cps) == sorted([MIN, MAX])
