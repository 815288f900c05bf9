import numpy as np
import pytest

from hamreeb.catalog import named_field, named_form, named_surface
from hamreeb.dynamics import hamiltonian_field
from hamreeb.fields import find_critical_points
from hamreeb.reeb import build_reeb_graph, mesh_for_field
from hamreeb.theta import ThetaNotFound, theta_constant, theta_function


def _theta(surface, field, h=0.05):
    s = named_surface(surface)
    f = named_field(field)
    crit = find_critical_points(f, s)
    g = build_reeb_graph(mesh_for_field(s, f, crit, h, 0), crit, f)
    return theta_function(f, hamiltonian_field(f, named_form(s, "standard")), g)


def test_disk_theta_is_pi():
    res = _theta("disk", "r2")
    assert res.passed
    assert theta_constant(res) == pytest.approx(np.pi, abs=1e-6)
    assert set(res.multiples.values()) == {1}
    names = [c.name for c in res.checks]
    assert names == ["theta_flow_is_identity", "shift_invariant_under_theta"]


@pytest.mark.parametrize("surface,field,expected", [("annulus", "angular", 1.0),
                                                     ("torus", "torus-angle", 1.0)])
def test_flat_cases_have_unit_period(surface, field, expected):
    res = _theta(surface, field)
    assert res.passed
    assert theta_constant(res) == pytest.approx(expected, abs=1e-6)


def test_sphere_theta_is_two_pi():
    res = _theta("sphere", "sphere-height", 0.1)
    assert res.passed
    assert theta_constant(res) == pytest.approx(2 * np.pi, abs=1e-6)


def test_no_theta_with_a_saddle():
    # periods blow up logarithmically at the figure-eight, so no multiple fits
    with pytest.raises(ThetaNotFound):
        _theta("twowell-domain", "twowell", 0.04)


def test_to_dict_is_json_ready():
    import json

    d = _theta("annulus", "angular").to_dict()
    json.dumps(d)
    assert d["multiples"] == {"0": 1}
