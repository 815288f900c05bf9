"""Sublevel-set volumes, the swap obstruction, and the flat-disk counterexample."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import (FlowIntegrator, ShiftMap, flow_points, hamiltonian_field, shift_apply)
from .fields import ScalarField, binary_form_is_square_free, fitted_binary_form, polynomial_field
from .reeb import _tri_components, pl_critical_vertices
from .surface import AreaForm, TriMesh, integrate_density, make_area_form, make_model_surface


@dataclass
class SublevelComponent:
    id: int
    seed: tuple
    seed_chart: int
    volume: float
    contains_critical: list = field(default_factory=list)
    triangles: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"id": self.id, "seed": list(self.seed), "volume": self.volume,
                "contains_critical": list(self.contains_critical)}


@dataclass
class SublevelComponentSet:
    level: float
    components: list
    labels: np.ndarray = field(repr=False, default=None)

    @property
    def volumes(self) -> list:
        return [c.volume for c in self.components]

    def to_dict(self) -> dict:
        return {"level": self.level, "components": [c.to_dict() for c in self.components]}


def critical_value_tolerance(mesh: TriMesh) -> float:
    """How close a level may come to a PL critical value and still count as regular."""
    return mesh.resolution**2


def sublevel_components(f: ScalarField, mesh: TriMesh, form: AreaForm, a: float,
                        crit_list=()) -> SublevelComponentSet:
    """Connected components of ``{f <= a}`` with their omega-volumes.

    Raises ``ValueError`` when ``a`` is within the PL tolerance of a
    critical value.
    """
    if mesh.values is None:
        mesh = mesh.sample_field(f)
    vals = mesh.values
    crit_vals = [vals[v] for v in pl_critical_vertices(mesh)] + [cp.value for cp in crit_list]
    tol = critical_value_tolerance(mesh)
    for cv in crit_vals:
        if abs(a - cv) <= tol:
            raise ValueError(f"level {a} is a critical value (within {tol:g} of {cv:g})")
    tris = mesh.triangles
    tmin = vals[tris].min(axis=1)
    uniq, edge_tris = mesh.edges()
    emin = vals[uniq].min(axis=1)
    labels, n = _tri_components(len(tris), tmin <= a, edge_tris, emin <= a)
    phi = vals - a
    comps = []
    for k in range(n):
        ids = np.flatnonzero(labels == k)
        vs = np.unique(tris[ids])
        seed_v = int(vs[np.argmin(vals[vs])])
        vol = integrate_density(mesh, form, phi=phi, tri_mask=ids)
        comps.append(SublevelComponent(k, tuple(float(x) for x in mesh.vertices[seed_v]),
                                       int(mesh.vertex_chart[seed_v]), vol, [], ids))
    for i, cp in enumerate(crit_list):
        if cp.value <= a:
            t, _ = mesh.locate(np.asarray(cp.position, dtype=float)[None, :], cp.chart)
            if labels[t[0]] >= 0:
                comps[labels[t[0]]].contains_critical.append(i)
    # deterministic order: by seed position
    order = sorted(range(n), key=lambda k: comps[k].seed)
    remap = np.full(n, -1)
    for new, old in enumerate(order):
        remap[old] = new
        comps[old].id = new
    labels = np.where(labels >= 0, remap[np.maximum(labels, 0)], -1)
    return SublevelComponentSet(float(a), [comps[k] for k in order], labels)


INVOLUTIONS = {
    "negate": lambda xy: -np.asarray(xy, dtype=float),
    "identity": lambda xy: np.asarray(xy, dtype=float).copy(),
}


@dataclass
class ObstructionReport:
    involution: str
    pairing: dict
    volumes: list
    volume_mismatch: float
    tolerance: float
    obstructed: bool
    cited_pair: Optional[tuple]
    conclusion: str

    def to_dict(self) -> dict:
        return {"involution": self.involution,
                "pairing": {str(k): v for k, v in self.pairing.items()},
                "volumes": self.volumes, "volume_mismatch": self.volume_mismatch,
                "tolerance": self.tolerance, "obstructed": self.obstructed,
                "cited_pair": list(self.cited_pair) if self.cited_pair else None,
                "conclusion": self.conclusion}


def j0_obstruction(f: ScalarField, mesh: TriMesh, form: AreaForm, a: float,
                   involution="negate", tol: float = 1e-3, n_check: int = 500,
                   seed: int = 0, crit_list=()) -> ObstructionReport:
    """Test whether an f-preserving involution can be isotopic to an omega-preserving map.

    Unequal omega-volumes of two sublevel components that the involution
    swaps rule that out; equal volumes are inconclusive.
    """
    if isinstance(involution, str):
        name = involution
        try:
            d: Callable = INVOLUTIONS[involution]
        except KeyError:
            raise ValueError(f"unknown involution {involution!r}") from None
    else:
        name, d = getattr(involution, "__name__", "custom"), involution
    surf = mesh.surface
    xy, ch = surf.sample_points(n_check, np.random.default_rng(seed))
    moved = d(xy)
    if not np.all(surf.contains(moved, ch)):
        raise ValueError("involution does not map the surface to itself")
    resid = float(np.max(np.abs(f.value(moved, ch) - f.value(xy, ch))))
    if resid > 1e-8:
        raise ValueError(f"involution does not preserve f (residual {resid:.3g})")
    comps = sublevel_components(f, mesh, form, a, crit_list)
    pairing = {}
    for c in comps.components:
        img = d(np.asarray(c.seed)[None, :])
        t, _ = mesh.locate(img, c.seed_chart)
        j = int(comps.labels[t[0]])
        if j < 0:
            raise ValueError("involution does not permute the sublevel components")
        pairing[c.id] = j
    if sorted(pairing.values()) != sorted(pairing):
        raise ValueError("involution does not permute the sublevel components")
    vols = comps.volumes
    mismatch, cited = 0.0, None
    for i, j in sorted(pairing.items()):
        if i == j:
            continue
        rel = abs(vols[i] - vols[j]) / max(vols[i], vols[j])
        if rel > mismatch:
            mismatch, cited = rel, (min(i, j), max(i, j))
    bound = tol + critical_value_tolerance(mesh)
    obstructed = mismatch > bound
    if obstructed:
        text = (f"components {cited[0]} and {cited[1]} are swapped but have different "
                "volumes; the class of the involution has no volume-preserving representative")
    else:
        text = "no swapped pair with different volumes: not obstructed (inconclusive)"
    return ObstructionReport(name, pairing, vols, mismatch, bound, obstructed, cited, text)


# ---------------------------------------------------------------------------
# flat-disk counterexample


@dataclass
class ScenarioCheck:
    description: str
    value: float
    expected: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {"description": self.description, "value": self.value, "expected": self.expected,
                "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class ScenarioResult:
    name: str
    checks: list
    artifacts: list = field(default_factory=list)
    conclusion: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"name": self.name, "checks": [c.to_dict() for c in self.checks],
                "artifacts": list(self.artifacts), "conclusion": self.conclusion,
                "passed": self.passed}


def tangent_map_at_origin(V, t, integrator: FlowIntegrator, fd_step: float = 1e-4,
                          alpha: Optional[ScalarField] = None) -> np.ndarray:
    """Central-difference derivative at 0 of the time-``t`` flow (or of a shift map)."""
    e = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * fd_step
    if alpha is None:
        img = flow_points(V, e, t, integrator)
    else:
        img = shift_apply(ShiftMap(alpha, V, integrator), e)
    return np.column_stack([(img[0] - img[1]), (img[2] - img[3])]) / (2 * fd_step)


def run_counterexample_disk(resolution: float = 0.05, step: float = 1e-3, n_samples: int = 100,
                            seed: int = 0) -> ScenarioResult:
    """Flows of ``|z|^2`` and ``|z|^4`` on the unit disk.

    The time-``t`` map of the first rotates the tangent plane at 0 by
    ``2t``; every shift map of the second is tangent to the identity at 0,
    so ``F_0.5`` is not a shift of the second flow.  ``resolution`` is the
    spacing used for the degree-4 local-model fit.
    """
    disk = make_model_surface("disk", radius=1.0)
    form = make_area_form(disk, "standard")
    f = polynomial_field([(2, 0, 1.0), (0, 2, 1.0)], "r2")
    g = polynomial_field([(4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0)], "r4")
    F = hamiltonian_field(f, form)
    G = hamiltonian_field(g, form)
    integ = FlowIntegrator(step=step)
    # the stencil around the degenerate zero of G moves at speed ~1e-12; do not freeze it
    integ_fd = FlowIntegrator(step=step, equilibrium_speed=0.0)
    rng = np.random.default_rng(seed)
    checks = []

    # (a) closed-form flow of F
    z, _ = disk.sample_points(n_samples - 1, rng)
    z = np.vstack([[1.0, 0.0], z])
    t = np.concatenate([[np.pi / 4], rng.uniform(-np.pi, np.pi, n_samples - 1)])
    out = flow_points(F, z, t, integ)
    exact = (z[:, 0] + 1j * z[:, 1]) * np.exp(2j * t)
    err = float(np.max(np.abs(out[:, 0] + 1j * out[:, 1] - exact)))
    checks.append(ScenarioCheck("F flow equals exp(2it) z", err, 0.0, 1e-6, err <= 1e-6))

    # (b) tangent map of G_t at the origin is the identity
    for tt in (0.5, 1.0, 2.0):
        d = float(np.linalg.norm(tangent_map_at_origin(G, tt, integ_fd) - np.eye(2), 2))
        checks.append(ScenarioCheck(f"|T0 G_{tt:g} - I|", d, 0.0, 1e-5, d < 1e-5))

    # (c) tangent map of F_0.5 is rotation by 1 rad
    T = tangent_map_at_origin(F, 0.5, integ)
    d = float(np.linalg.norm(T - np.eye(2), 2))
    expected = 2 * np.sin(0.5)
    checks.append(ScenarioCheck("|T0 F_0.5 - I| (at least 0.5)", d, expected, 1e-6, d >= 0.5))
    rot = np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
    dr = float(np.max(np.abs(T - rot)))
    checks.append(ScenarioCheck("T0 F_0.5 equals rotation by 1 rad", dr, 0.0, 1e-6, dr <= 1e-6))

    # (d) shift maps of G are tangent to the identity at 0, whatever the shift function
    alpha = polynomial_field([(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)], "1+x+xy")
    d_shift = float(np.linalg.norm(tangent_map_at_origin(G, None, integ_fd, alpha=alpha) - np.eye(2), 2))
    checks.append(ScenarioCheck("|T0 (shift of G by 1+x+xy) - I|", d_shift, 0.0, 1e-5, d_shift < 1e-5))

    # the degree-4 local model of |z|^4 has a repeated factor
    coef = fitted_binary_form(g, (0.0, 0.0), 4, eps=max(resolution, 1e-3))
    sq_free = binary_form_is_square_free(coef)
    checks.append(ScenarioCheck("local model of |z|^4 is square-free (expected no)",
                                float(sq_free), 0.0, 0.0, not sq_free))

    ok = all(c.passed for c in checks)
    conclusion = (
        "every shift map of the |z|^4 flow has identity tangent map at the origin, while the "
        "time-0.5 map of the |z|^2 flow rotates it by 1 rad; that map is f- and "
        "omega-preserving but is not a shift of the |z|^4 flow, so shifts along that flow "
        "do not exhaust the maps preserving |z|^4" if ok else
        "scenario checks failed; no conclusion")
    return ScenarioResult("counterexample-disk", checks, [], conclusion)
