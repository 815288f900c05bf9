import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from hamreeb.catalog import named_field, named_form, named_surface
from hamreeb.centralizer import (centralizer_check, composition_residual, identity_shift_search,
                                 symplectomorphism_from_graph_function)
from hamreeb.dynamics import flow_points, hamiltonian_field
from hamreeb.fields import find_critical_points
from hamreeb.reeb import (NODE_BOUNDARY, NODE_CUT, NODE_MIN, NODE_SADDLE,
                          DiscontinuousGraphFunction, GraphFunction, NotConstant, ReebError,
                          build_reeb_graph, default_params, lift_graph_function, mesh_for_field,
                          project_to_graph_function)


def graph_for(surface_name, field_name, h=0.04, seed=0):
    s = named_surface(surface_name)
    f = named_field(field_name)
    crit = find_critical_points(f, s)
    return build_reeb_graph(mesh_for_field(s, f, crit, h, seed), crit, f)


@pytest.fixture(scope="module")
def torus_graph():
    return graph_for("torus", "torus-height")


def test_disk_graph(disk_graph):
    assert (disk_graph.n_nodes, disk_graph.n_edges) == (2, 1)
    assert sorted(n.kind for n in disk_graph.nodes) == sorted([NODE_MIN, NODE_BOUNDARY])


def test_twowell_graph_is_a_y(twowell_graph):
    g = twowell_graph
    assert (g.n_nodes, g.n_edges, g.betti1()) == (4, 3, 0)
    kinds = {n.kind: [] for n in g.nodes}
    for n in g.nodes:
        kinds[n.kind].append(n.value)
    assert kinds[NODE_MIN] == pytest.approx([0.0, 0.0], abs=1e-12)
    assert kinds[NODE_SADDLE] == pytest.approx([1.0])
    assert kinds[NODE_BOUNDARY] == pytest.approx([2.0])
    saddle = next(n.id for n in g.nodes if n.kind == NODE_SADDLE)
    assert g.degree(saddle) == 3


def test_torus_graph_has_one_cycle(torus_graph):
    assert (torus_graph.n_nodes, torus_graph.n_edges, torus_graph.betti1()) == (4, 4, 1)


def test_sphere_and_annulus_graphs():
    assert graph_for("sphere", "sphere-height", 0.1).signature() == graph_for("sphere", "sphere-height", 0.05).signature()
    s = graph_for("sphere", "sphere-height", 0.1)
    assert (s.n_nodes, s.n_edges) == (2, 1)
    a = graph_for("annulus", "angular", 0.05)
    assert (a.n_nodes, a.n_edges) == (2, 1)


def test_circle_valued_graph_is_a_loop():
    g = graph_for("torus", "torus-angle", 0.1)
    assert (g.n_nodes, g.n_edges, g.betti1()) == (1, 1, 1)
    assert g.nodes[0].kind == NODE_CUT


@pytest.mark.parametrize("surface,field", [("disk", "r2"), ("twowell-domain", "twowell"),
                                           ("torus", "torus-height")])
def test_refinement_keeps_graph_type(surface, field):
    assert graph_for(surface, field, 0.04).signature() == graph_for(surface, field, 0.02).signature()


def _level_components(values, level, band, periodic=False):
    """Flood-fill count of the connected pieces of a thin band around a level."""
    mask = np.abs(values - level) < band
    lab, n = ndimage.label(mask)
    if not periodic or n == 0:
        return n
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(np.concatenate([lab[0], lab[:, 0]]), np.concatenate([lab[-1], lab[:, -1]])):
        if a and b:
            parent[find(a)] = find(b)
    return len({find(k) for k in range(1, n + 1)})


def _edges_at(g, level):
    return sum(1 for e in g.edges if e.f_range[0] < level < e.f_range[1])


@settings(max_examples=12, deadline=None)
@given(level=st.floats(0.05, 1.95).filter(lambda c: abs(c - 1.0) > 0.08))
def test_twowell_edges_count_level_components(twowell_graph, level):
    x, y = np.meshgrid(np.linspace(-1.6, 1.6, 641), np.linspace(-1.0, 1.0, 401))
    f = named_field("twowell").value(np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)
    f[f > 2.0] = np.inf
    assert _edges_at(twowell_graph, level) == _level_components(f, level, 0.03)


@settings(max_examples=12, deadline=None)
@given(level=st.floats(-2.9, 2.9).filter(lambda c: min(abs(c - 1), abs(c + 1)) > 0.1))
def test_torus_edges_count_level_components(torus_graph, level):
    x, y = np.meshgrid(np.linspace(0, 1, 400, endpoint=False), np.linspace(0, 1, 400, endpoint=False))
    f = np.cos(2 * np.pi * x) + 2 * np.cos(2 * np.pi * y)
    assert _edges_at(torus_graph, level) == _level_components(f, level, 0.05, periodic=True)


def test_quotient_examples(disk_graph, twowell_graph):
    p = disk_graph.quotient_point((0.5, 0.0))
    assert not p.is_node and p.param == pytest.approx(0.25)
    left = twowell_graph.quotient_point((-0.3, 0.0))
    right = twowell_graph.quotient_point((0.3, 0.0))
    assert left.edge != right.edge
    assert twowell_graph.quotient_point((0.0, 0.0)).is_node


def test_quotient_agrees_with_field(twowell_graph, twowell, twowell_domain):
    xy, ch = twowell_domain.sample_points(300, np.random.default_rng(0))
    edge, param, node = twowell_graph.quotient(xy, ch)
    lo = np.array([twowell_graph.edges[e].f_range[0] for e in edge])
    hi = np.array([twowell_graph.edges[e].f_range[1] for e in edge])
    assert np.all(node < 0)
    assert np.allclose(lo + param * (hi - lo), twowell.value(xy, ch), atol=1e-12)


def test_quotient_is_orbit_constant(twowell_graph, twowell, twowell_domain):
    H = hamiltonian_field(twowell, named_form(twowell_domain, "standard"))
    xy, ch = twowell_domain.sample_points(50, np.random.default_rng(1), margin=0.02)
    e0, _, _ = twowell_graph.quotient(xy, ch)
    e1, _, _ = twowell_graph.quotient(flow_points(H, xy, 0.7, charts=ch), ch)
    assert np.array_equal(e0, e1)


def test_contour_points_lie_on_the_level(twowell_graph, twowell):
    for e in twowell_graph.edges:
        pts, ch = twowell_graph.contour_points(e.id, 0.5)
        level = e.f_range[0] + 0.5 * (e.f_range[1] - e.f_range[0])
        assert np.allclose(twowell.value(pts, ch), level, atol=1e-10)


def test_json_and_dot_export(twowell_graph):
    d = json.loads(twowell_graph.to_json())
    assert len(d["nodes"]) == 4 and len(d["edges"]) == 3
    assert {"id", "from", "to"} <= set(d["edges"][0])
    dot = twowell_graph.to_dot()
    assert dot.startswith("graph reeb {") and dot.count("--") == 3


def test_strict_build_rejects_mismatched_critical_list():
    s = named_surface("twowell-domain")
    f = named_field("twowell")
    crit = find_critical_points(f, s)
    mesh = mesh_for_field(s, f, crit, 0.05, 0)
    with pytest.raises(ReebError):
        build_reeb_graph(mesh, crit[:1], f, strict=True)


def test_graph_function_must_be_continuous(twowell_graph):
    with pytest.raises(DiscontinuousGraphFunction):
        GraphFunction.from_edge_constants(twowell_graph, {0: 1.0, 1: 2.0, 2: 1.0})
    gf = GraphFunction.from_edge_constants(twowell_graph, {0: 1.5, 1: 1.5, 2: 1.5})
    assert gf.evaluate(twowell_graph.quotient_point((0.7, 0.3))) == 1.5


def test_graph_function_serialization(twowell_graph):
    gf = GraphFunction.from_node_values(twowell_graph, {0: 0.1, 1: -0.2, 2: 0.3, 3: 0.4})
    back = GraphFunction.from_dict(json.loads(gf.to_json()))
    s = default_params()
    for e in twowell_graph.edges:
        assert np.allclose(back.edge_value(e.id, s), gf.edge_value(e.id, s))
    with pytest.raises(ValueError):
        GraphFunction.from_dict({"nodes": {"0": "a"}})


@settings(max_examples=10, deadline=None)
@given(vals=st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_lift_then_project_is_identity(twowell_graph, vals):
    gf = GraphFunction.from_node_values(twowell_graph, dict(enumerate(vals)))
    back = project_to_graph_function(lift_graph_function(twowell_graph, gf, collar=0.02),
                                     twowell_graph)
    s = default_params()
    assert back
    for e in twowell_graph.edges:
        assert np.max(np.abs(back.edge_value(e.id, s) - gf.edge_value(e.id, s))) < 1e-8


def test_non_orbit_constant_function_is_rejected(disk_graph):
    res = project_to_graph_function(named_field("xy"), disk_graph)
    assert isinstance(res, NotConstant) and not res
    assert res.spread > 0.1


def test_lift_agrees_with_graph_function_outside_collars(twowell_graph, twowell, twowell_domain):
    gf = GraphFunction.from_node_values(twowell_graph, {0: 1.0, 1: -1.0, 2: 0.5, 3: 2.0})
    alpha = lift_graph_function(twowell_graph, gf)
    delta = alpha.spec["collar"]
    xy, ch = twowell_domain.sample_points(400, np.random.default_rng(2))
    fv = twowell.value(xy, ch)
    far = np.min(np.abs(fv[:, None] - np.array([0.0, 1.0, 2.0])[None, :]), axis=1) > delta
    got = alpha.value(xy[far], ch[far])
    want = [gf.evaluate(p) for p in map(twowell_graph.quotient_point, xy[far])]
    assert np.allclose(got, want, atol=1e-12)


def test_lift_is_in_the_centralizer(twowell_graph, twowell, twowell_domain):
    gf = GraphFunction.from_node_values(twowell_graph, {0: 1.0, 1: -1.0, 2: 0.5, 3: 2.0})
    alpha = lift_graph_function(twowell_graph, gf)
    H = hamiltonian_field(twowell, named_form(twowell_domain, "tilted"))
    assert centralizer_check(alpha, H, 300).passed
    assert not centralizer_check(named_field("xy"), H, 300).passed


def test_shift_maps_of_lifts_preserve_f_and_area(twowell_graph, twowell, twowell_domain):
    gf = GraphFunction.from_node_values(twowell_graph, {0: 0.8, 1: -0.6, 2: 0.2, 3: 1.0})
    form = named_form(twowell_domain, "tilted")
    _, checks = symplectomorphism_from_graph_function(gf, twowell_graph, twowell, form, n=100,
                                                      strict=True)
    assert [c.name for c in checks] == ["preserves_f", "preserves_area"]
    assert all(c.passed for c in checks)


def test_shifts_of_lifts_compose_additively(twowell_graph, twowell, twowell_domain):
    a = lift_graph_function(twowell_graph, GraphFunction.from_node_values(
        twowell_graph, {0: 0.5, 1: -0.5, 2: 1.0, 3: 0.0}))
    b = lift_graph_function(twowell_graph, GraphFunction.from_node_values(
        twowell_graph, {0: -0.3, 1: 0.9, 2: 0.4, 3: 0.7}))
    H = hamiltonian_field(twowell, named_form(twowell_domain, "standard"))
    xy, ch = twowell_domain.sample_points(100, np.random.default_rng(3), margin=1e-3)
    assert composition_residual(a, b, H, xy, ch) < 1e-6


def test_identity_search_separates_the_two_cases(disk_graph, twowell_graph, r2, twowell, disk,
                                                  twowell_domain):
    # on the disk every orbit has period pi, so the constant pi shifts to the identity
    F = hamiltonian_field(r2, named_form(disk, "standard"))
    found = identity_shift_search(disk_graph, F, [0.0, np.pi])
    assert found["nonzero_identity"] == [3]
    H = hamiltonian_field(twowell, named_form(twowell_domain, "standard"))
    none = identity_shift_search(twowell_graph, H, np.linspace(-2, 2, 6))
    assert none["nonzero_identity"] == []
