"""Orbit-period functions on the Reeb graph for fields with only extrema."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (DEFAULT_INTEGRATOR, FlowIntegrator, PlanarVectorField, flow_points,
                       orbit_periods)
from .fields import ScalarField
from .reeb import GraphFunction, ReebError, ReebGraph, lift_graph_function
from .report import Check


class ThetaNotFound(RuntimeError):
    pass


@dataclass
class ThetaResult:
    graph_function: GraphFunction
    lift: ScalarField
    multiples: dict
    periods: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "multiples": {str(k): int(v) for k, v in self.multiples.items()},
            "periods": {str(k): {"params": [float(x) for x in p], "values": [float(x) for x in v]}
                        for k, (p, v) in self.periods.items()},
            "graph_function": self.graph_function.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
        }


def edge_periods(V: PlanarVectorField, reeb: ReebGraph, params,
                 integrator: FlowIntegrator = DEFAULT_INTEGRATOR, tol: float = 1e-6) -> dict:
    """Orbit period at each parameter of each edge: ``{edge: values}``."""
    pts, chs, owner = [], [], []
    for e in reeb.edges:
        for s in params:
            p, c = reeb.edge_point(e.id, float(s))
            pts.append(p)
            chs.append(c)
            owner.append(e.id)
    T = orbit_periods(V, np.array(pts), integrator, np.array(chs), tol)
    owner = np.array(owner)
    return {e.id: T[owner == e.id] for e in reeb.edges}


def _end_value(params, values, at_end: bool) -> float:
    # linear extrapolation from the two samples nearest the node
    if len(params) == 1:
        return float(values[0])
    if at_end:
        s0, s1, v0, v1 = params[-2], params[-1], values[-2], values[-1]
        return float(v1 + (1.0 - s1) * (v1 - v0) / (s1 - s0))
    s0, s1, v0, v1 = params[0], params[1], values[0], values[1]
    return float(v0 - s0 * (v1 - v0) / (s1 - s0))


def theta_function(f: ScalarField, V: PlanarVectorField, reeb: ReebGraph,
                   integrator: FlowIntegrator = DEFAULT_INTEGRATOR, n_params: int = 9,
                   k_max: int = 8, continuity_tol: float = 1e-6, n_check: int = 200,
                   test_alpha: float = np.pi / 3, seed: int = 0, collar=None) -> ThetaResult:
    """Smallest positive integer multiple of the orbit period that is continuous on the graph.

    Raises :class:`ThetaNotFound` if some orbit is not periodic or no
    multiple up to ``k_max`` per edge fits together at the nodes.
    """
    params = np.linspace(0.0, 1.0, n_params + 2)[1:-1]
    per = edge_periods(V, reeb, params, integrator)
    for eid, T in per.items():
        if np.any(np.isnan(T)):
            raise ThetaNotFound(f"edge {eid} has non-periodic orbits")
    ends = {e.id: (_end_value(params, per[e.id], False), _end_value(params, per[e.id], True))
            for e in reeb.edges}
    eids = [e.id for e in reeb.edges]
    if len(eids) > 6:
        raise ThetaNotFound("multiple search is limited to graphs with at most 6 edges")

    def fits(ks):
        at_node = {}
        for e, k in zip(reeb.edges, ks):
            at_node.setdefault(e.lower, []).append(k * ends[e.id][0])
            at_node.setdefault(e.upper, []).append(k * ends[e.id][1])
        for vals in at_node.values():
            if max(vals) - min(vals) > continuity_tol * max(1.0, abs(max(vals))):
                return None
        return {n: float(np.mean(v)) for n, v in at_node.items()}

    best = None
    for ks in sorted(itertools.product(range(1, k_max + 1), repeat=len(eids)), key=lambda t: (sum(t), t)):
        nv = fits(ks)
        if nv is not None:
            best = (ks, nv)
            break
    if best is None:
        raise ThetaNotFound(f"no integer multiples up to {k_max} are continuous on the graph")
    ks, node_values = best
    multiples = dict(zip(eids, ks))
    profiles = {}
    for eid, k in multiples.items():
        e = reeb.edges[eid]
        ps = np.concatenate([[0.0], params, [1.0]])
        vs = np.concatenate([[node_values[e.lower]], k * per[eid], [node_values[e.upper]]])
        profiles[eid] = (ps, vs)
    gf = GraphFunction(node_values, profiles).validate(reeb, tol=continuity_tol * 10)
    theta = lift_graph_function(reeb, gf, collar=collar, name="theta")

    # verification
    surf = reeb.mesh.surface
    rng = np.random.default_rng(seed)
    xy, ch = surf.sample_points(n_check, rng)
    tv = theta.value(xy, ch)
    img = flow_points(V, xy, tv, integrator, ch)
    err_id = float(np.max(np.linalg.norm(surf.periodic_delta(img, xy), axis=1)))
    xy2, ch2 = xy[:100], ch[:100]
    a = np.full(len(xy2), test_alpha)
    both = flow_points(V, np.concatenate([xy2, xy2]),
                       np.concatenate([a + theta.value(xy2, ch2), a]), integrator,
                       np.concatenate([ch2, ch2]))
    err_shift = float(np.max(np.linalg.norm(
        surf.periodic_delta(both[:len(xy2)], both[len(xy2):]), axis=1)))
    checks = [
        Check.below("theta_flow_is_identity", err_id, 1e-6, len(xy)),
        Check.below("shift_invariant_under_theta", err_shift, 1e-6, len(xy2), alpha=test_alpha),
    ]
    return ThetaResult(gf, theta, multiples, {k: (params, v) for k, v in per.items()}, checks)


def theta_constant(result: ThetaResult) -> float:
    """The common value when the graph function is constant, else ``nan``."""
    vals = np.concatenate([v for _, v in result.graph_function.edge_profiles.values()])
    return float(vals[0]) if np.ptp(vals) < 1e-6 else float("nan")


__all__ = ["ThetaResult", "ThetaNotFound", "edge_periods", "theta_function", "theta_constant",
           "ReebError"]
