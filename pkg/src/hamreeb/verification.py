"""The full invariant suite behind ``hamreeb verify-all``.

Each invariant is a function of a shared :class:`SuiteContext` returning a
list of :class:`~hamreeb.report.Check`; names are prefixed with the
module they exercise.  Everything is seeded, so repeated runs produce the
same report.
"""

from __future__ import annotations

import time
from functools import cached_property

import numpy as np

from .catalog import named_field, named_form, named_surface
from .centralizer import (centralizer_check, composition_residual, identity_shift_search,
                          shift_verification)
from .dynamics import (DEFAULT_INTEGRATOR, ShiftMap, constant_function, flow_points,
                       hamiltonian_field, jacobian_det, poisson_bracket, pullback_density_ratio)
from .fields import (MIN, SADDLE, ScalarField, check_axioms,
                     euler_characteristic_from_critical_points, find_critical_points)
from .reeb import (GraphFunction, build_reeb_graph, default_params, lift_graph_function,
                   mesh_for_field, project_to_graph_function)
from .report import Check
from .surface import integrate_density, triangulate
from .theta import theta_function


class SuiteContext:
    """Lazily built shared objects (surfaces, meshes, graphs) for one seed."""

    def __init__(self, seed: int = 0, resolution: float = 0.04):
        self.seed = seed
        self.resolution = resolution
        self.rng = np.random.default_rng(seed)

    def sub_rng(self, k: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, k])

    @cached_property
    def disk(self):
        return named_surface("disk")

    @cached_property
    def twowell_surface(self):
        return named_surface("twowell-domain")

    @cached_property
    def r2(self):
        return named_field("r2")

    @cached_property
    def twowell(self):
        return named_field("twowell")

    @cached_property
    def disk_crit(self):
        return find_critical_points(self.r2, self.disk)

    @cached_property
    def twowell_crit(self):
        return find_critical_points(self.twowell, self.twowell_surface)

    @cached_property
    def disk_reeb(self):
        mesh = mesh_for_field(self.disk, self.r2, self.disk_crit, self.resolution, self.seed)
        return build_reeb_graph(mesh, self.disk_crit, self.r2)

    @cached_property
    def twowell_reeb(self):
        mesh = mesh_for_field(self.twowell_surface, self.twowell, self.twowell_crit,
                              self.resolution, self.seed)
        return build_reeb_graph(mesh, self.twowell_crit, self.twowell)

    def random_graph_function(self, reeb, rng, scale=1.0):
        nv = {n.id: float(rng.uniform(-scale, scale)) for n in reeb.nodes}
        return GraphFunction.from_node_values(reeb, nv)


def _rename(prefix, checks):
    for c in checks:
        c.name = f"{prefix}.{c.name}"
    return checks


# -- surfaces ---------------------------------------------------------------

def surface_density_compatibility(ctx):
    sphere = named_surface("sphere")
    out = []
    for name in ("standard",):
        res = named_form(sphere, name).compatibility_residual(100, ctx.seed)
        out.append(Check.below(f"density_compatibility[sphere,{name}]", res, 1e-9, 100))
    return out


def surface_triangulation_determinism(ctx):
    out = []
    for name, h in (("disk", 0.1), ("twowell-domain", 0.1), ("torus", 0.1), ("sphere", 0.2)):
        s = named_surface(name)
        a = triangulate(s, h, ctx.seed)
        b = triangulate(s, h, ctx.seed)
        same = (np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)
                and np.array_equal(a.vertex_chart, b.vertex_chart))
        out.append(Check.flag(f"triangulation_deterministic[{name}]", same, a.n_vertices))
    return out


def surface_mesh_quality(ctx):
    out = []
    for name, chi in (("disk", 1), ("annulus", 0), ("torus", 0), ("sphere", 2), ("twowell-domain", 1)):
        h = 0.1
        m = triangulate(named_surface(name), h, ctx.seed)
        out.append(Check.below(f"max_edge[{name}]", m.max_edge_length(), 1.5 * h, len(m.triangles)))
        out.append(Check.below(f"euler_characteristic[{name}]", abs(m.euler_characteristic() - chi),
                               0, 1, observed=m.euler_characteristic()))
    m = triangulate(ctx.disk, 0.01, ctx.seed)
    area = integrate_density(m, named_form(ctx.disk, "standard"))
    out.append(Check.below("disk_area[h=0.01]", abs(area - np.pi) / np.pi, 0.02, len(m.triangles)))
    return out


def surface_additivity(ctx):
    m = triangulate(ctx.twowell_surface, 0.05, ctx.seed)
    form = named_form(ctx.twowell_surface, "tilted")
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    cut = x + 0.3 * y - 0.1
    whole = integrate_density(m, form)
    left = integrate_density(m, form, cut)
    right = integrate_density(m, form, -cut)
    res = abs(left + right - whole) / max(abs(left), abs(right))
    return [Check.below("additivity", res, 1e-12, len(m.triangles))]


def surface_involution_volume(ctx):
    m = triangulate(ctx.disk, 0.05, ctx.seed)
    form = named_form(ctx.disk, "standard")
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    out = []
    for k, (phi, image) in enumerate([
        (x + 0.5 * y - 0.3, -x - 0.5 * y - 0.3),
        ((x - 0.4) ** 2 + y**2 - 0.1, (x + 0.4) ** 2 + y**2 - 0.1),
    ]):
        a = integrate_density(m, form, phi)
        b = integrate_density(m, form, image)
        out.append(Check.below(f"involution_volume[{k}]", abs(a - b) / max(a, b), 0.01, len(m.triangles)))
    return out


# -- scalar fields ----------------------------------------------------------

def fields_fd_gradient_rate(ctx):
    rng = ctx.sub_rng(21)
    out = []
    for name, surf in (("twowell", ctx.twowell_surface), ("monkey", ctx.disk)):
        f = named_field(name)
        xy, ch = surf.sample_points(100, rng, margin=0.05)
        exact = f.grad(xy, ch)
        errs = []
        for h in (1e-2, 5e-3):
            fd = ScalarField(f.name, f.values, codomain=f.codomain, fd_step=h)
            errs.append(np.max(np.abs(fd.grad(xy, ch) - exact)))
        ratio = errs[0] / errs[1]
        ok = 3.5 <= ratio <= 4.5
        out.append(Check(f"fd_gradient_rate[{name}]", float(abs(ratio - 4.0)), 0.5, ok, 100,
                         {"ratio": float(ratio)}))
    return out


def fields_critical_gradient(ctx):
    out = []
    for name, surf in (("r2", "disk"), ("twowell", "twowell-domain"), ("torus-height", "torus"),
                       ("sphere-height", "sphere"), ("monkey", "disk")):
        f = named_field(name)
        s = named_surface(surf)
        cps = find_critical_points(f, s)
        g = max((float(np.linalg.norm(f.grad(cp.xy[None], np.array([cp.chart]))))
                 for cp in cps), default=0.0)
        out.append(Check.below(f"critical_gradient[{name}]", g, 1e-8, len(cps)))
    return out


def fields_rotation_invariance(ctx):
    out = []
    base = sorted(cp.kind for cp in ctx.twowell_crit)
    disk = ctx.disk
    for name in ("twowell", "monkey"):
        f = named_field(name)
        ref = sorted(cp.kind for cp in find_critical_points(f, disk))
        for angle in (0.3, 1.1, 2.5):
            got = sorted(cp.kind for cp in find_critical_points(f.rotated(angle), disk))
            out.append(Check.flag(f"rotation_invariance[{name},{angle}]", got == ref, len(got),
                                  kinds=got))
    out.append(Check.flag("twowell_kinds", base == sorted([MIN, MIN, SADDLE]), len(base), kinds=base))
    return out


def fields_euler_characteristic(ctx):
    out = []
    for name, surf, chi in (("sphere-height", "sphere", 2), ("torus-height", "torus", 0)):
        s = named_surface(surf)
        f = named_field(name)
        cps = find_critical_points(f, s)
        rep = check_axioms(f, s, cps)
        got = euler_characteristic_from_critical_points(cps)
        out.append(Check.flag(f"euler_characteristic[{name}]", rep.in_class_Morse and got == chi,
                              len(cps), observed=got, expected=chi))
    return out


# -- dynamics ---------------------------------------------------------------

def dynamics_f_invariance(ctx):
    f = ctx.twowell
    H = hamiltonian_field(f, named_form(ctx.twowell_surface, "tilted"))
    rng = ctx.sub_rng(31)
    xy, ch = ctx.twowell_surface.sample_points(20, rng, margin=0.05)
    f0 = f.value(xy, ch)
    worst = 0.0
    for t in (-1.0, 0.5, 1.5, 3.0):
        img = flow_points(H, xy, np.full(len(xy), t), DEFAULT_INTEGRATOR, ch)
        worst = max(worst, float(np.max(np.abs(f.value(img, ch) - f0))))
    tol = DEFAULT_INTEGRATOR.reprojection_tolerance
    return [Check.below("f_invariance", worst, tol, 20)]


def dynamics_liouville(ctx):
    form = named_form(ctx.disk, "quadratic")
    H = hamiltonian_field(ctx.r2, form)
    rng = ctx.sub_rng(32)
    worst = 0.0
    times = rng.uniform(-2.0, 2.0, size=10)
    for t in times:
        xy, ch = ctx.disk.sample_points(10, rng, margin=0.01)
        sm = ShiftMap(constant_function(float(t)), H, DEFAULT_INTEGRATOR)
        rep = pullback_density_ratio(sm, form, xy, 1e-5, ch)
        worst = max(worst, float(np.max(np.abs(rep.ratio - 1.0))))
    return [Check.below("liouville", worst, 1e-5, 100)]


def _rate_check(name, e1, e2, samples):
    ratio = e1 / e2 if e2 > 0 else float("inf")
    ok = 3.0 <= ratio <= 5.0
    return Check(name, float(abs(ratio - 4.0)), 1.0, ok, samples,
                 {"ratio": float(ratio), "error_coarse": float(e1), "error_fine": float(e2)})


def dynamics_jacobian_rate(ctx):
    H = hamiltonian_field(ctx.r2, named_form(ctx.disk, "standard"))
    sm = ShiftMap(named_field("xy"), H, DEFAULT_INTEGRATOR)
    xy, ch = ctx.disk.sample_points(20, ctx.sub_rng(33), margin=0.05)
    errs = []
    for h in (1e-4, 5e-5):
        rep = jacobian_det(sm, xy, h, ch)
        exact = 1 + 2 * (xy[:, 0] ** 2 - xy[:, 1] ** 2)
        errs.append(float(np.max(np.abs(rep.det - exact))))
    return [_rate_check("jacobian_rate", errs[0], errs[1], 20)]


PULLBACK_PAIRS = (("xy", "standard"), ("xy", "quadratic"), ("x", "tilted"),
                  ("monkey", "radial-bump"), ("y", "const:2"))


def dynamics_pullback_law(ctx):
    out = []
    xy, ch = ctx.disk.sample_points(10, ctx.sub_rng(34), margin=0.05)
    for a, g in PULLBACK_PAIRS:
        form = named_form(ctx.disk, g)
        sm = ShiftMap(named_field(a), hamiltonian_field(ctx.r2, form), DEFAULT_INTEGRATOR)
        errs = []
        for h in (1e-4, 5e-5):
            rep = pullback_density_ratio(sm, form, xy, h, ch)
            errs.append(float(np.max(np.abs(rep.ratio - rep.predicted))))
        out.append(Check.below(f"pullback_law[{a},{g}]", errs[1], 1e-4, 10))
        out.append(_rate_check(f"pullback_rate[{a},{g}]", errs[0], errs[1], 10))
    return out


def dynamics_bracket_identities(ctx):
    form = named_form(ctx.disk, "quadratic")
    f = ctx.twowell
    g = named_field("xy")
    h = named_field("monkey")
    gh = _product(g, h)
    xy, ch = ctx.disk.sample_points(100, ctx.sub_rng(35))
    fg = poisson_bracket(f, g, form).value(xy, ch)
    gf = poisson_bracket(g, f, form).value(xy, ch)
    fh = poisson_bracket(f, h, form).value(xy, ch)
    lhs = poisson_bracket(f, gh, form).value(xy, ch)
    rhs = g.value(xy, ch) * fh + h.value(xy, ch) * fg
    return [Check.below("bracket_antisymmetry", float(np.max(np.abs(fg + gf))), 1e-8, 100),
            Check.below("bracket_leibniz", float(np.max(np.abs(lhs - rhs))), 1e-8, 100)]


def _product(g: ScalarField, h: ScalarField) -> ScalarField:
    def val(x, y):
        return g.values[0](x, y) * h.values[0](x, y)

    def grad(x, y):
        gv, hv = g.values[0](x, y), h.values[0](x, y)
        return g.grads[0](x, y) * hv[..., None] + h.grads[0](x, y) * gv[..., None]

    return ScalarField(f"{g.name}*{h.name}", {0: val}, {0: grad})


def _lifted_samples(ctx, count=3):
    rng = ctx.sub_rng(36)
    cases = []
    for reeb, f, surf in ((ctx.disk_reeb, ctx.r2, ctx.disk),
                          (ctx.twowell_reeb, ctx.twowell, ctx.twowell_surface)):
        for _ in range(count):
            cases.append((reeb, f, surf, ctx.random_graph_function(reeb, rng)))
    return cases


def dynamics_centralizer_symplectic(ctx):
    out = []
    for k, (reeb, f, surf, gf) in enumerate(_lifted_samples(ctx)):
        form = named_form(surf, "tilted")
        alpha = lift_graph_function(reeb, gf)
        sm = ShiftMap(alpha, hamiltonian_field(f, form), DEFAULT_INTEGRATOR)
        out.extend(_rename(f"centralizer_symplectic[{f.name},{k}]",
                           shift_verification(sm, f, form, 200, ctx.seed + k)))
    return out


def dynamics_group_law(ctx):
    out = []
    rng = ctx.sub_rng(37)
    for reeb, f, surf in ((ctx.disk_reeb, ctx.r2, ctx.disk),
                          (ctx.twowell_reeb, ctx.twowell, ctx.twowell_surface)):
        a = lift_graph_function(reeb, ctx.random_graph_function(reeb, rng))
        b = lift_graph_function(reeb, ctx.random_graph_function(reeb, rng))
        H = hamiltonian_field(f, named_form(surf, "standard"))
        xy, ch = surf.sample_points(100, rng, margin=1e-3)
        res = composition_residual(a, b, H, xy, ch)
        out.append(Check.below(f"group_law[{f.name}]", res, 1e-6, 100))
    return out


def dynamics_theta_covering(ctx):
    H = hamiltonian_field(ctx.r2, named_form(ctx.disk, "standard"))
    res = theta_function(ctx.r2, H, ctx.disk_reeb, seed=ctx.seed)
    out = _rename("theta[r2]", list(res.checks))
    theta = np.concatenate([v for _, v in res.graph_function.edge_profiles.values()])
    out.append(Check.below("theta[r2].value", float(np.max(np.abs(theta - np.pi))), 1e-6, len(theta)))
    Hw = hamiltonian_field(ctx.twowell, named_form(ctx.twowell_surface, "standard"))
    search = identity_shift_search(ctx.twowell_reeb, Hw, np.linspace(-2.0, 2.0, 20),
                                   n_samples=20, seed=ctx.seed)
    out.append(Check.flag("identity_shift_search[twowell]", not search["nonzero_identity"],
                          search["candidates"], **search))
    return out


# -- Reeb graphs and centralizer -------------------------------------------

REEB_CASES = (
    ("r2", "disk", 2, 1, 0),
    ("twowell", "twowell-domain", 4, 3, 0),
    ("torus-height", "torus", 4, 4, 1),
)


def reeb_sweep(ctx):
    out = []
    for name, surf_name, n_nodes, n_edges, b1 in REEB_CASES:
        surf = named_surface(surf_name)
        f = named_field(name)
        cps = find_critical_points(f, surf)
        sigs = []
        for h in (ctx.resolution, ctx.resolution / 2):
            g = build_reeb_graph(mesh_for_field(surf, f, cps, h, ctx.seed), cps, f)
            sigs.append(g.signature())
            ok = g.n_nodes == n_nodes and g.n_edges == n_edges and g.betti1() == b1 and g.is_connected()
            out.append(Check.flag(f"reeb_shape[{name},h={h:g}]", ok, len(g.mesh.triangles),
                                  nodes=g.n_nodes, edges=g.n_edges, betti1=g.betti1()))
        out.append(Check.flag(f"reeb_refinement_stable[{name}]", sigs[0] == sigs[1], 2))
    return out


def reeb_quotient_compatibility(ctx):
    out = []
    for reeb, f, surf in ((ctx.disk_reeb, ctx.r2, ctx.disk),
                          (ctx.twowell_reeb, ctx.twowell, ctx.twowell_surface)):
        xy, ch = surf.sample_points(200, ctx.sub_rng(41))
        edge, param, node = reeb.quotient(xy, ch)
        rec = np.empty(len(xy))
        for i in range(len(xy)):
            if node[i] >= 0:
                rec[i] = reeb.nodes[node[i]].value
            else:
                lo, hi = reeb.edges[edge[i]].f_range
                rec[i] = lo + param[i] * (hi - lo)
        err = float(np.max(np.abs(rec - f.value(xy, ch))))
        gmax = float(np.max(np.linalg.norm(f.grad(reeb.mesh.vertices, reeb.mesh.vertex_chart), axis=1)))
        out.append(Check.below(f"quotient_compatibility[{f.name}]", err,
                               2 * reeb.mesh.resolution * gmax, 200))
    return out


def reeb_round_trip(ctx):
    out = []
    rng = ctx.sub_rng(42)
    params = default_params()
    for reeb, f in ((ctx.disk_reeb, ctx.r2), (ctx.twowell_reeb, ctx.twowell)):
        worst = 0.0
        for _ in range(10):
            gf = ctx.random_graph_function(reeb, rng, scale=2.0)
            alpha = lift_graph_function(reeb, gf, collar=0.02)
            back = project_to_graph_function(alpha, reeb, params=params)
            if not back:
                worst = float("inf")
                break
            for e in reeb.edges:
                worst = max(worst, float(np.max(np.abs(back.edge_value(e.id, params)
                                                       - gf.edge_value(e.id, params)))))
        out.append(Check.below(f"round_trip[{f.name}]", worst, 1e-8, 10))
    xy_rejected = not project_to_graph_function(named_field("xy"), ctx.disk_reeb)
    out.append(Check.flag("round_trip.rejects_xy", xy_rejected))
    return out


def reeb_orbit_constancy(ctx):
    out = []
    for reeb, f, surf in ((ctx.disk_reeb, ctx.r2, ctx.disk),
                          (ctx.twowell_reeb, ctx.twowell, ctx.twowell_surface)):
        rng = ctx.sub_rng(43)
        alpha = lift_graph_function(reeb, ctx.random_graph_function(reeb, rng))
        H = hamiltonian_field(f, named_form(surf, "standard"))
        xy, ch = surf.sample_points(20, rng, margin=1e-3)
        spread = np.zeros(len(xy))
        a0 = alpha.value(xy, ch)
        for t in np.linspace(0.25, 2.0, 8):
            img = flow_points(H, xy, np.full(len(xy), t), DEFAULT_INTEGRATOR, ch)
            spread = np.maximum(spread, np.abs(alpha.value(img, ch) - a0))
        out.append(Check.below(f"orbit_constancy[{f.name}]", float(spread.max()), 1e-6, 20))
        out.append(centralizer_check(alpha, H, xy, ch, tol=1e-8))
        out[-1].name = f"centralizer[{f.name}]"
    return out


def reeb_parametrization_witness(ctx):
    from .centralizer import symplectomorphism_from_graph_function

    out = []
    for k, (reeb, f, surf, gf) in enumerate(_lifted_samples(ctx, count=2)):
        form = named_form(surf, "quadratic")
        _, checks = symplectomorphism_from_graph_function(gf, reeb, f, form, n=200, seed=ctx.seed + k)
        out.extend(_rename(f"parametrization[{f.name},{k}]", checks))
    # the reverse direction: a non-orbit-constant function distorts the area
    form = named_form(ctx.disk, "standard")
    sm = ShiftMap(named_field("xy"), hamiltonian_field(ctx.r2, form), DEFAULT_INTEGRATOR)
    probe = np.array([[0.7, 0.0], [0.0, 0.7], [0.5, 0.5]])
    rep = pullback_density_ratio(sm, form, probe)
    dev = float(np.max(np.abs(rep.ratio - 1.0)))
    out.append(Check("parametrization.non_centralizer_detected", dev, 0.1, dev > 0.1, len(probe),
                     {"comparison": "residual > tolerance"}))
    return out


SUITE = (
    ("surface", surface_density_compatibility),
    ("surface", surface_triangulation_determinism),
    ("surface", surface_mesh_quality),
    ("surface", surface_additivity),
    ("surface", surface_involution_volume),
    ("fields", fields_fd_gradient_rate),
    ("fields", fields_critical_gradient),
    ("fields", fields_rotation_invariance),
    ("fields", fields_euler_characteristic),
    ("dynamics", dynamics_f_invariance),
    ("dynamics", dynamics_liouville),
    ("dynamics", dynamics_jacobian_rate),
    ("dynamics", dynamics_pullback_law),
    ("dynamics", dynamics_bracket_identities),
    ("dynamics", dynamics_centralizer_symplectic),
    ("dynamics", dynamics_group_law),
    ("dynamics", dynamics_theta_covering),
    ("reeb", reeb_sweep),
    ("reeb", reeb_quotient_compatibility),
    ("reeb", reeb_round_trip),
    ("reeb", reeb_orbit_constancy),
    ("reeb", reeb_parametrization_witness),
)


def run_suite(seed: int = 0, only=None, timings: dict | None = None) -> list:
    """Run every invariant (or those whose module is in ``only``) in a fixed order."""
    ctx = SuiteContext(seed)
    checks = []
    for module, fn in SUITE:
        if only and module not in only:
            continue
        t0 = time.perf_counter()
        try:
            got = fn(ctx)
        except Exception as exc:  # a crash is a failed invariant, not an abort
            got = [Check(fn.__name__, float("nan"), 0.0, False, 0, {"error": repr(exc)})]
        if timings is not None:
            timings[fn.__name__] = time.perf_counter() - t0
        checks.extend(_rename(module, got))
    return checks
