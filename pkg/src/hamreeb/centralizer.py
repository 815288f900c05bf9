"""Orbit-constant functions and the area-preserving shift maps they generate."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dynamics import (DEFAULT_INTEGRATOR, FlowIntegrator, PlanarVectorField, ShiftMap,
                       d_alpha_h, hamiltonian_field, pullback_density_ratio, shift_apply,
                       sum_functions)
from .fields import ScalarField
from .reeb import GraphFunction, ReebGraph, lift_graph_function
from .report import Check
from .surface import AreaForm, _as_charts, _as_points


class VerificationError(RuntimeError):
    def __init__(self, checks):
        self.checks = checks
        broken = ", ".join(c.name for c in checks if not c.passed)
        super().__init__(f"verification failed: {broken}")


def centralizer_check(alpha: ScalarField, H: PlanarVectorField, samples, charts=None,
                      tol: float = 1e-8) -> Check:
    """``max |d alpha(H)|`` over the samples against ``tol``.

    ``samples`` is an array of points or an integer count drawn from the
    field's surface.
    """
    if np.isscalar(samples):
        xy, charts = H.surface.sample_points(int(samples), np.random.default_rng(0))
    else:
        xy = _as_points(samples)
        charts = _as_charts(charts, len(xy))
    vals = np.abs(d_alpha_h(alpha, H, xy, charts))
    k = int(np.argmax(vals))
    return Check.below("centralizer", float(vals[k]), tol, len(xy),
                       argmax=[float(v) for v in xy[k]])


def _interior_samples(surface, n, seed, margin=1e-3):
    return surface.sample_points(n, np.random.default_rng(seed), margin=margin)


def shift_verification(sm: ShiftMap, f: ScalarField, form: AreaForm, n: int = 200, seed: int = 0,
                       fd_step: float = 1e-5, f_tol: float = 1e-6, ratio_tol: float = 1e-5) -> list:
    """f-invariance and density-ratio checks for a shift map at ``n`` samples.

    The Jacobian uses the fourth-order stencil: lifted functions change
    steeply inside their collars and the 3-point stencil error there can
    exceed ``ratio_tol``. Where the shift twists fast (large
    ``|grad alpha| |H|``) the step is shrunk in proportion.
    """
    surf = form.surface
    xy, ch = _interior_samples(surf, n, seed)
    img = shift_apply(sm, xy, ch)
    df = np.abs(f.wrap_delta(f.value(img, ch) - f.value(xy, ch)))
    twist = (np.linalg.norm(sm.alpha.grad(xy, ch), axis=1)
             * np.linalg.norm(sm.field(xy, ch), axis=1))
    steps = fd_step / np.maximum(1.0, twist / 10.0)
    rep = pullback_density_ratio(sm, form, xy, steps, ch, order=4)
    return [
        Check.below("preserves_f", float(np.max(df)), f_tol, n),
        Check.below("preserves_area", float(np.max(np.abs(rep.ratio - 1.0))), ratio_tol, n),
    ]


def symplectomorphism_from_graph_function(gf: GraphFunction, reeb: ReebGraph, f: ScalarField,
                                          form: AreaForm,
                                          integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
                                          n: int = 200, seed: int = 0, collar: Optional[float] = None,
                                          strict: bool = False):
    """Shift map of the lift of ``gf`` along the Hamiltonian flow, with its verification.

    Returns ``(shift_map, checks)``; with ``strict`` a failed check raises
    :class:`VerificationError`.
    """
    alpha = lift_graph_function(reeb, gf, collar=collar)
    H = hamiltonian_field(f, form)
    sm = ShiftMap(alpha, H, integrator)
    checks = shift_verification(sm, f, form, n, seed)
    if strict and not all(c.passed for c in checks):
        raise VerificationError(checks)
    return sm, checks


def composition_residual(alpha: ScalarField, beta: ScalarField, V: PlanarVectorField, xy,
                         charts=None, integrator: FlowIntegrator = DEFAULT_INTEGRATOR) -> float:
    """``max |shift_alpha(shift_beta(x)) - shift_{alpha+beta}(x)|``."""
    xy = _as_points(xy)
    charts = _as_charts(charts, len(xy))
    inner = shift_apply(ShiftMap(beta, V, integrator), xy, charts)
    left = shift_apply(ShiftMap(alpha, V, integrator), inner, charts)
    right = shift_apply(ShiftMap(sum_functions(alpha, beta), V, integrator), xy, charts)
    surf = V.surface
    d = surf.periodic_delta(left, right) if surf is not None else left - right
    return float(np.max(np.linalg.norm(d, axis=1)))


def identity_shift_search(reeb: ReebGraph, V: PlanarVectorField, values, n_samples: int = 20,
                          seed: int = 0, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
                          id_tol: float = 1e-6, collar: Optional[float] = None) -> dict:
    """Look for non-zero orbit-constant shifts equal to the identity map.

    Candidates take the value ``a`` at minima and maxima and ``b`` at the
    other nodes, linear on edges, for ``(a, b)`` in ``values x values``.
    A candidate whose shift map fixes all samples within ``id_tol`` must
    be essentially zero; the result lists any that are not.
    """
    surf = reeb.mesh.surface
    xy, ch = _interior_samples(surf, n_samples, seed, margin=1e-2)
    extreme = {n.id for n in reeb.nodes if n.kind in ("Min", "Max")}
    pts, chs, times, owner, alphas = [], [], [], [], []
    k = 0
    for a in values:
        for b in values:
            nv = {n.id: (a if n.id in extreme else b) for n in reeb.nodes}
            alpha = lift_graph_function(reeb, GraphFunction.from_node_values(reeb, nv), collar=collar)
            av = alpha.value(xy, ch)
            pts.append(xy)
            chs.append(ch)
            times.append(av)
            owner.append(np.full(len(xy), k))
            alphas.append(float(np.max(np.abs(av))))
            k += 1
    P = np.concatenate(pts)
    C = np.concatenate(chs)
    T = np.concatenate(times)
    O = np.concatenate(owner)
    from .dynamics import flow_points

    img = flow_points(V, P, T, integrator, C)
    disp = np.linalg.norm(surf.periodic_delta(img, P), axis=1)
    worst = np.zeros(k)
    np.maximum.at(worst, O, disp)
    identity = np.flatnonzero(worst < id_tol)
    bad = [int(i) for i in identity if alphas[i] >= 1e-4]
    return {"candidates": k, "identity_candidates": [int(i) for i in identity],
            "nonzero_identity": bad, "min_displacement": float(np.min(worst))}
