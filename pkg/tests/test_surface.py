import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hamreeb.catalog import named_form, named_surface
from hamreeb.surface import (integrate_density, make_area_form, make_model_surface,
                             sphere_to_xyz, triangulate)


@pytest.fixture(scope="module")
def disk_mesh():
    return triangulate(named_surface("disk"), 0.05, seed=0)


def test_unknown_surface_kind_raises():
    with pytest.raises(ValueError):
        make_model_surface("klein-bottle")


def test_nonpositive_form_rejected():
    disk = named_surface("disk")
    with pytest.raises(ValueError):
        make_area_form(disk, "tilted", slope=2.0)


@pytest.mark.parametrize("name,chi,loops", [
    ("disk", 1, 1), ("annulus", 0, 2), ("torus", 0, 0), ("sphere", 2, 0), ("twowell-domain", 1, 1),
])
def test_mesh_topology_and_edge_length(name, chi, loops):
    m = triangulate(named_surface(name), 0.1, seed=3)
    assert m.euler_characteristic() == chi
    assert m.boundary_loops() == loops
    assert m.max_edge_length() <= 1.5 * 0.1


def test_triangulation_is_deterministic():
    s = named_surface("twowell-domain")
    a, b = triangulate(s, 0.08, seed=7), triangulate(s, 0.08, seed=7)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_disk_area_at_fine_resolution():
    m = triangulate(named_surface("disk"), 0.01, seed=0)
    area = integrate_density(m, named_form(m.surface, "standard"))
    assert abs(area - np.pi) / np.pi < 0.02


def test_sphere_area_and_chart_compatibility():
    s = named_surface("sphere")
    form = named_form(s, "standard")
    assert form.compatibility_residual(100, seed=0) < 1e-9
    m = triangulate(s, 0.1, seed=0)
    assert integrate_density(m, form) == pytest.approx(4 * np.pi, rel=0.02)


def test_sphere_samples_are_uniform_on_the_round_sphere():
    s = named_surface("sphere")
    xy, ch = s.sample_points(20000, np.random.default_rng(0))
    z = sphere_to_xyz(xy, ch)[:, 2]
    # Archimedes: z is uniform on [-1, 1]
    assert np.mean(z) == pytest.approx(0.0, abs=0.03)
    assert np.mean(z**2) == pytest.approx(1 / 3, abs=0.02)


def test_tilted_volume_matches_monte_carlo(disk_mesh):
    form = named_form(disk_mesh.surface, "tilted")
    x, y = disk_mesh.vertices.T
    got = integrate_density(disk_mesh, form, x + y - 0.2)
    # independent Monte Carlo estimate over the bounding square
    rng = np.random.default_rng(5)
    p = rng.uniform(-1, 1, size=(400_000, 2))
    inside = (np.hypot(p[:, 0], p[:, 1]) <= 1) & (p[:, 0] + p[:, 1] <= 0.2)
    mc = 4.0 * np.mean(inside * (1 + p[:, 0] / 2))
    assert got == pytest.approx(mc, rel=0.01)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(-1, 1), c=st.floats(-0.5, 0.5))
def test_integration_is_additive(disk_mesh, a, b, c):
    assume(np.hypot(a, b) > 0.05)  # phi == 0 makes the two regions overlap
    form = named_form(disk_mesh.surface, "quadratic")
    x, y = disk_mesh.vertices.T
    phi = a * x + b * y - c
    whole = integrate_density(disk_mesh, form)
    parts = integrate_density(disk_mesh, form, phi) + integrate_density(disk_mesh, form, -phi)
    assert abs(parts - whole) <= 1e-12 * whole


@settings(max_examples=15, deadline=None)
@given(cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5), r=st.floats(0.1, 0.4))
def test_point_reflection_preserves_volume(disk_mesh, cx, cy, r):
    form = named_form(disk_mesh.surface, "standard")
    x, y = disk_mesh.vertices.T
    a = integrate_density(disk_mesh, form, (x - cx) ** 2 + (y - cy) ** 2 - r * r)
    b = integrate_density(disk_mesh, form, (x + cx) ** 2 + (y + cy) ** 2 - r * r)
    assert abs(a - b) <= 0.01 * max(a, b)


def test_torus_wrapping():
    t = named_surface("torus")
    d = t.periodic_delta(np.array([[0.95, 0.02]]), np.array([[0.05, 0.98]]))
    assert np.allclose(d, [[-0.1, 0.04]])


def test_locate_returns_barycentric_weights(disk_mesh):
    pts = np.array([[0.1, 0.2], [-0.3, 0.4]])
    tri, bary = disk_mesh.locate(pts)
    corners = disk_mesh.tri_coords[tri]
    assert np.allclose(np.einsum("nk,nkd->nd", bary, corners), pts)
