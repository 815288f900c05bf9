import numpy as np
import pytest
from scipy import ndimage

from hamreeb.catalog import named_field, named_form, named_surface
from hamreeb.fields import find_critical_points
from hamreeb.obstruction import (j0_obstruction, run_counterexample_disk, sublevel_components,
                                 tangent_map_at_origin)
from hamreeb.reeb import mesh_for_field
from hamreeb.surface import make_area_form


@pytest.fixture(scope="module")
def setup():
    s = named_surface("twowell-domain")
    f = named_field("twowell")
    crit = find_critical_points(f, s)
    return s, f, crit, mesh_for_field(s, f, crit, 0.02, 0)


def _grid_volumes(f, level, density, n=1201):
    """Flood-fill oracle: omega-volumes of the components of {f <= level} on a fine grid."""
    xs = np.linspace(-1.6, 1.6, n)
    ys = np.linspace(-1.0, 1.0, n)
    x, y = np.meshgrid(xs, ys)
    fv = f.value(np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)
    lab, k = ndimage.label(fv <= level)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    w = density(x, y) * cell
    vols = ndimage.sum(w, lab, index=np.arange(1, k + 1))
    # order by the x coordinate of each component's centroid
    cx = ndimage.mean(x, lab, index=np.arange(1, k + 1))
    return list(np.asarray(vols)[np.argsort(cx)])


@pytest.mark.parametrize("form,density", [
    ("standard", lambda x, y: np.ones_like(x)),
    ("tilted", lambda x, y: 1 + x / 2),
])
def test_component_volumes_match_flood_fill(setup, form, density):
    s, f, crit, mesh = setup
    comps = sublevel_components(f, mesh, named_form(s, form), 0.5, crit)
    got = sorted(comps.components, key=lambda c: c.seed[0])
    want = _grid_volumes(f, 0.5, density)
    assert len(got) == len(want) == 2
    for c, v in zip(got, want):
        assert c.volume == pytest.approx(v, rel=0.01)


def test_components_above_the_saddle(setup):
    s, f, crit, mesh = setup
    comps = sublevel_components(f, mesh, named_form(s, "standard"), 1.5, crit)
    assert len(comps.components) == 1
    assert len(comps.components[0].contains_critical) == 3


def test_critical_level_rejected(setup):
    s, f, crit, mesh = setup
    with pytest.raises(ValueError):
        sublevel_components(f, mesh, named_form(s, "standard"), 1.0, crit)


def test_disk_sublevel_volume():
    s = named_surface("disk")
    f = named_field("r2")
    crit = find_critical_points(f, s)
    mesh = mesh_for_field(s, f, crit, 0.02, 0)
    comps = sublevel_components(f, mesh, named_form(s, "standard"), 0.25, crit)
    assert comps.components[0].volume == pytest.approx(np.pi / 4, rel=0.01)


def test_equal_volumes_are_inconclusive(setup):
    s, f, crit, mesh = setup
    rep = j0_obstruction(f, mesh, named_form(s, "standard"), 0.5, crit_list=crit)
    assert not rep.obstructed
    assert rep.volume_mismatch < 0.01
    assert "inconclusive" in rep.conclusion


def test_tilted_form_obstructs_the_swap(setup):
    s, f, crit, mesh = setup
    rep = j0_obstruction(f, mesh, named_form(s, "tilted"), 0.5, crit_list=crit)
    assert rep.obstructed and rep.volume_mismatch > 0.05
    assert rep.pairing == {0: 1, 1: 0}
    assert rep.cited_pair == (0, 1)
    assert rep.obstructed == (rep.volume_mismatch > rep.tolerance)


def test_mirrored_form_gives_the_same_verdict(setup):
    s, f, crit, mesh = setup
    a = j0_obstruction(f, mesh, make_area_form(s, "tilted", slope=0.5), 0.5, crit_list=crit)
    b = j0_obstruction(f, mesh, make_area_form(s, "tilted", slope=-0.5), 0.5, crit_list=crit)
    assert a.obstructed == b.obstructed
    assert a.volume_mismatch == pytest.approx(b.volume_mismatch, abs=1e-3)
    assert a.volumes[0] == pytest.approx(b.volumes[1], rel=1e-3)


def test_identity_involution_never_obstructs(setup):
    s, f, crit, mesh = setup
    rep = j0_obstruction(f, mesh, named_form(s, "tilted"), 0.5, "identity", crit_list=crit)
    assert not rep.obstructed and rep.pairing == {0: 0, 1: 1}


def test_involution_must_preserve_f(setup):
    s, f, crit, mesh = setup
    with pytest.raises(ValueError):
        j0_obstruction(f, mesh, named_form(s, "standard"), 0.5, lambda xy: xy + [0.1, 0.0],
                       crit_list=crit)
    with pytest.raises(ValueError):
        j0_obstruction(f, mesh, named_form(s, "standard"), 0.5, "rotate", crit_list=crit)


def test_counterexample_scenario():
    res = run_counterexample_disk()
    assert res.passed
    by_name = {c.description: c for c in res.checks}
    rot = by_name["|T0 F_0.5 - I| (at least 0.5)"]
    # spectral distance of a rotation by 1 rad from the identity
    assert rot.value == pytest.approx(2 * np.sin(0.5), abs=1e-6)
    assert "not a shift" in res.conclusion


def test_tangent_map_of_rotation_flow():
    from hamreeb.dynamics import FlowIntegrator, hamiltonian_field

    s = named_surface("disk")
    F = hamiltonian_field(named_field("r2"), named_form(s, "standard"))
    T = tangent_map_at_origin(F, np.pi / 4, FlowIntegrator())
    assert np.allclose(T, [[0, -1], [1, 0]], atol=1e-8)
