"""Hamiltonian vector fields, their flows, and shift maps along orbits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import DECLARED, MAX, MIN, SADDLE, ScalarField
from .surface import AreaForm, SurfaceModel, _as_charts, _as_points, _single_chart

log = logging.getLogger(__name__)

HAMILTONIAN = "hamiltonian"
HAMILTONIAN_LIKE = "hamiltonian_like"
GENERIC = "generic"

EQUILIBRIUM_SPEED = 1e-10


class FlowError(RuntimeError):
    """Raised when a trajectory leaves the atlas or runs past ``max_time``."""


@dataclass(frozen=True, eq=False)
class PlanarVectorField:
    """A vector field given by chart components ``(a(x, y), b(x, y))``.

    ``field`` is the function whose level sets the field preserves, when
    known; flows of such fields are reprojected onto the starting level.
    """

    components: dict
    provenance: str = GENERIC
    field: Optional[ScalarField] = None
    form: Optional[AreaForm] = None
    surface: Optional[SurfaceModel] = None
    name: str = "V"

    def __call__(self, xy, charts=None) -> np.ndarray:
        xy = _as_points(xy)
        one = _single_chart(charts)
        if one is not None:
            return self.components[one](xy[:, 0], xy[:, 1])
        charts = _as_charts(charts, len(xy))
        out = np.empty((len(xy), 2))
        for c in np.unique(charts):
            m = charts == c
            out[m] = self.components[int(c)](xy[m, 0], xy[m, 1])
        return out

    @property
    def preserves_level(self) -> bool:
        return self.field is not None and self.provenance != GENERIC

    def scaled(self, factor: ScalarField, provenance: str = HAMILTONIAN_LIKE,
               name: Optional[str] = None) -> "PlanarVectorField":
        """Pointwise product with a scalar function (keeps the level sets)."""
        comps = {}
        for c, comp in self.components.items():
            def scaled_comp(x, y, comp=comp, c=c):
                xy = np.column_stack([np.ravel(x), np.ravel(y)])
                return factor.value(xy, c)[:, None] * comp(x, y)
            comps[c] = scaled_comp
        return PlanarVectorField(comps, provenance, self.field, None, self.surface,
                                 name or f"{factor.name}*{self.name}")


def vector_field(fn, provenance: str = GENERIC, field: Optional[ScalarField] = None,
                 surface: Optional[SurfaceModel] = None, name: str = "V") -> PlanarVectorField:
    """Wrap a single-chart callable ``fn(x, y) -> (N, 2)``."""
    comps = fn if isinstance(fn, dict) else {0: fn}
    return PlanarVectorField(comps, provenance, field, None, surface, name)


def hamiltonian_field(f: ScalarField, form: Optional[AreaForm] = None,
                      surface: Optional[SurfaceModel] = None) -> PlanarVectorField:
    """The field ``H`` with ``df(u) = omega(u, H)``: ``(-f_y, f_x) / gamma`` per chart."""
    if surface is None and form is not None:
        surface = form.surface
    comps = {}
    for c in f.values:
        def comp(x, y, c=c):
            if f.grads is not None:
                g = f.grads[c](x, y)
            else:
                g = f.grad(np.column_stack([x, y]), c)
            out = np.column_stack([-g[:, 1], g[:, 0]])
            if form is not None:
                out /= form.densities[c](x, y)[:, None]
            return out
        comps[c] = comp
    return PlanarVectorField(comps, HAMILTONIAN, f, form, surface, f"H[{f.name}]")


def vector_overlap_residual(V: PlanarVectorField, n: int = 100, seed: int = 0) -> float:
    """Max of ``|V_j(T p) - DT(p) V_i(p)|`` over sampled chart overlaps."""
    surf = V.surface
    if surf is None or not surf.transitions:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for (i, j), tr in surf.transitions.items():
        r = rng.uniform(0.85, 1.15, n)
        a = rng.uniform(0, 2 * np.pi, n)
        p = np.column_stack([r * np.cos(a), r * np.sin(a)])
        pushed = np.einsum("nij,nj->ni", tr.jacobian(p), V(p, np.full(n, i)))
        direct = V(tr.map(p), np.full(n, j))
        worst = max(worst, float(np.max(np.abs(pushed - direct))))
    return worst


def poisson_bracket(f: ScalarField, g: ScalarField, form: Optional[AreaForm] = None) -> ScalarField:
    """``{f, g} = omega(H_f, H_g) = dg(H_f)``."""
    values = {}
    for c in f.values:
        def val(x, y, c=c):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            gf = f.grad(xy, c)
            gg = g.grad(xy, c)
            out = gf[:, 0] * gg[:, 1] - gf[:, 1] * gg[:, 0]
            if form is not None:
                out = out / form.density(xy, c)
            return out
        values[c] = val
    return ScalarField(f"{{{f.name},{g.name}}}", values)


# -- Hamiltonian-like fields -------------------------------------------------

@dataclass
class HamiltonianLikeReport:
    annihilates: str
    zeros_match: str
    local_form: str
    max_df_v: float
    min_regular_speed: float
    max_critical_speed: float
    local_mismatch: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.annihilates == self.zeros_match == self.local_form == "pass"

    def to_dict(self) -> dict:
        return {
            "annihilates": self.annihilates,
            "zeros_match": self.zeros_match,
            "local_form": self.local_form,
            "max_df_v": self.max_df_v,
            "min_regular_speed": self.min_regular_speed,
            "max_critical_speed": self.max_critical_speed,
            "local_mismatch": self.local_mismatch,
        }


def _sample_surface(surface, n, seed, margin=0.0):
    if surface is None:
        raise ValueError("a surface is needed to draw samples")
    return surface.sample_points(n, np.random.default_rng(seed), margin=margin)


def is_hamiltonian_like(V: PlanarVectorField, f: ScalarField, crit_list, tol: float = 1e-8,
                        n_samples: int = 400, seed: int = 0,
                        surface: Optional[SurfaceModel] = None,
                        radii=(0.1, 0.05)) -> HamiltonianLikeReport:
    """Check that ``V`` kills ``f``, vanishes exactly at ``crit_list`` and near each
    critical point equals ``(-f_y, f_x)`` of the chart representative.

    Nondegenerate points use ``f`` itself as the representative; a point
    that is neither nondegenerate nor declared makes the local check
    ``"unverifiable"``.
    """
    surface = surface or V.surface
    xy, ch = _sample_surface(surface, n_samples, seed)
    dfv = np.abs(np.sum(f.grad(xy, ch) * V(xy, ch), axis=1))
    max_dfv = float(np.max(dfv))

    crit_list = list(crit_list)
    far = np.ones(len(xy), dtype=bool)
    crit_speed = 0.0
    for cp in crit_list:
        p = np.asarray(cp.position, dtype=float)[None, :]
        q = surface.to_chart(xy, ch, cp.chart) if surface.transitions else xy
        far &= np.linalg.norm(surface.periodic_delta(q, p), axis=1) > 1e-3
        crit_speed = max(crit_speed, float(np.linalg.norm(V(p, cp.chart)[0])))
    speeds = np.linalg.norm(V(xy[far], ch[far]), axis=1)
    min_speed = float(np.min(speeds)) if len(speeds) else math.inf
    zeros_ok = crit_speed < tol and min_speed > tol

    local = "pass"
    mismatches = []
    ang = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    for cp in crit_list:
        if cp.kind not in (MIN, MAX, SADDLE, DECLARED):
            local = "unverifiable"
            mismatches.append({"position": list(cp.position), "status": "unverifiable"})
            continue
        worst = 0.0
        for r in radii:
            ring = np.asarray(cp.position)[None, :] + r * np.column_stack([np.cos(ang), np.sin(ang)])
            charts = np.full(len(ring), cp.chart)
            if surface.kind in ("disk", "sublevel"):
                keep = surface.contains(ring)
                ring, charts = ring[keep], charts[keep]
            if not len(ring):
                continue
            g = f.grad(ring, charts)
            model = np.column_stack([-g[:, 1], g[:, 0]])
            worst = max(worst, float(np.max(np.abs(V(ring, charts) - model))))
        mismatches.append({"position": list(cp.position), "mismatch": worst})
        if worst >= tol and local == "pass":
            local = "fail"
    return HamiltonianLikeReport(
        "pass" if max_dfv < tol else "fail",
        "pass" if zeros_ok else "fail",
        local, max_dfv, min_speed, crit_speed, mismatches)


def lambda_ratio(H: PlanarVectorField, F_like: PlanarVectorField, crit_list=(),
                 tol: float = 1e-8, n_check: int = 200, seed: int = 0) -> ScalarField:
    """The function ``lam`` with ``H = lam * F_like``.

    Uses the component where ``|F_like|`` is largest; at zeros of
    ``F_like`` the value is ``1 / gamma``.  Raises ``ValueError`` when the
    fields are not parallel at the check samples.
    """
    def make(c):
        def val(x, y):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            h = H(xy, c)
            fl = F_like(xy, c)
            k = np.argmax(np.abs(fl), axis=1)
            rows = np.arange(len(xy))
            denom = fl[rows, k]
            small = np.abs(denom) < 1e-12
            lam = np.empty(len(xy))
            lam[~small] = h[rows, k][~small] / denom[~small]
            if np.any(small):
                lam[small] = 1.0 / H.form.density(xy[small], c) if H.form is not None else 1.0
            return lam
        return val

    lam = ScalarField(f"lambda[{H.name}/{F_like.name}]", {c: make(c) for c in H.components})
    surface = H.surface or F_like.surface
    if surface is not None and n_check:
        xy, ch = _sample_surface(surface, n_check, seed)
        resid = np.max(np.abs(H(xy, ch) - lam.value(xy, ch)[:, None] * F_like(xy, ch)))
        if resid > tol:
            raise ValueError(f"fields are not parallel: residual {resid:.3g} > {tol:g}")
        if np.min(np.abs(lam.value(xy, ch))) == 0:
            raise ValueError("ratio vanishes")
    return lam


def mu_ratio(F1: PlanarVectorField, F2: PlanarVectorField, H: PlanarVectorField,
             crit_list=(), tol: float = 1e-8) -> ScalarField:
    """``mu = lam_2 / lam_1`` so that ``F1 = mu * F2``."""
    lam1 = lambda_ratio(H, F1, crit_list, tol)
    lam2 = lambda_ratio(H, F2, crit_list, tol)
    values = {}
    for c in H.components:
        def val(x, y, c=c):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            return lam2.value(xy, c) / lam1.value(xy, c)
        values[c] = val
    return ScalarField(f"mu[{F1.name},{F2.name}]", values)


# -- flows -------------------------------------------------------------------

@dataclass(frozen=True)
class FlowIntegrator:
    """Classical RK4 with one Newton reprojection onto the start level per step."""

    step: float = 1e-3
    reproject: bool = True
    reprojection_tolerance: float = 1e-10
    max_time: float = 200.0
    # points where the field is slower than this are treated as equilibria
    equilibrium_speed: float = EQUILIBRIUM_SPEED

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")


DEFAULT_INTEGRATOR = FlowIntegrator()


def _rk4(V, y, c, dt):
    d = dt[:, None]
    k1 = V(y, c)
    k2 = V(y + 0.5 * d * k1, c)
    k3 = V(y + 0.5 * d * k2, c)
    k4 = V(y + d * k3, c)
    return y + d * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def _reproject(f: ScalarField, y, c, level):
    resid = f.wrap_delta(f.value(y, c) - level)
    g = f.grad(y, c)
    n2 = np.sum(g * g, axis=1)
    ok = n2 > 1e-24
    y = y.copy()
    y[ok] -= (resid[ok] / n2[ok])[:, None] * g[ok]
    return y


class _Stepper:
    """Shared single-step machinery for flows, period search and sigma."""

    def __init__(self, V: PlanarVectorField, integrator: FlowIntegrator):
        self.V = V
        self.integ = integrator
        self.surface = V.surface
        self.f = V.field if (integrator.reproject and V.preserves_level) else None
        self.multi = self.surface is None or bool(self.surface.transitions)

    def level(self, y, c):
        return self.f.value(y, c) if self.f is not None else None

    def step(self, y, c, dt, level):
        # single-chart surfaces skip the per-point chart bookkeeping
        ck = c if self.multi else 0
        y = _rk4(self.V, y, ck, dt)
        if self.f is not None:
            y = _reproject(self.f, y, ck, level)
        if self.surface is not None:
            if self.V.provenance == GENERIC and not np.all(self.surface.contains(y, c)):
                raise FlowError("trajectory exits the atlas")
            y, c = self.surface.normalize(y, c)
        return y, c


def _flow(V, xy, t, integrator, charts):
    xy = _as_points(xy).astype(float)
    charts = _as_charts(charts, len(xy)).copy()
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(xy),)).copy()
    if not np.all(np.isfinite(t)):
        raise ValueError("flow times must be finite")
    tmax = float(np.max(np.abs(t))) if len(t) else 0.0
    if tmax > integrator.max_time:
        raise FlowError(f"time {tmax:g} exceeds max_time {integrator.max_time:g}")
    if tmax == 0.0:
        return xy, charts
    speed = np.linalg.norm(V(xy, charts), axis=1)
    moving = (speed > 0) & (speed >= integrator.equilibrium_speed)
    n = max(1, int(math.ceil(tmax / integrator.step - 1e-9)))
    stepper = _Stepper(V, integrator)
    y, c = xy[moving], charts[moving]
    dt = t[moving] / n
    level = stepper.level(y, c)
    for _ in range(n):
        y, c = stepper.step(y, c, dt, level)
    out, out_c = xy.copy(), charts.copy()
    out[moving], out_c[moving] = y, c
    return out, out_c


def flow_points(V: PlanarVectorField, xy, t, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
                charts=None, return_charts: bool = False):
    """Flow each point of ``xy`` for its time ``t`` (scalar or per point).

    All points share one step count ``ceil(max|t| / step)`` so the result
    is a smooth function of the inputs.  Results are expressed in the
    input charts unless ``return_charts`` is set.
    """
    xy = _as_points(xy)
    charts_in = _as_charts(charts, len(xy))
    out, out_c = _flow(V, xy, t, integrator, charts_in)
    if return_charts:
        return out, out_c
    surf = V.surface
    if surf is not None and surf.transitions and np.any(out_c != charts_in):
        res = out.copy()
        for c in np.unique(charts_in):
            m = charts_in == c
            res[m] = surf.to_chart(out[m], out_c[m], int(c))
        return res
    return out


def flow_point(V: PlanarVectorField, x, t: float, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
               chart: int = 0) -> np.ndarray:
    return flow_points(V, np.asarray(x, dtype=float)[None, :], t, integrator, chart)[0]


def trajectory(V: PlanarVectorField, x, t: float, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
               chart: int = 0, every: int = 1) -> list:
    """Rows ``(t, chart, x, y, f)`` along one trajectory, every ``every`` steps."""
    if abs(t) > integrator.max_time:
        raise FlowError(f"time {abs(t):g} exceeds max_time {integrator.max_time:g}")
    y = np.asarray(x, dtype=float)[None, :]
    c = np.array([chart])
    f = V.field
    stepper = _Stepper(V, integrator)
    n = max(1, int(math.ceil(abs(t) / integrator.step - 1e-9)))
    dt = np.array([t / n])
    level = stepper.level(y, c)
    frozen = np.linalg.norm(V(y, c)[0]) < max(integrator.equilibrium_speed, 1e-300)

    def row(k):
        fv = float(f.value(y, c)[0]) if f is not None else float("nan")
        return (k * dt[0], int(c[0]), float(y[0, 0]), float(y[0, 1]), fv)

    rows = [row(0)]
    for k in range(1, n + 1):
        if not frozen:
            y, c = stepper.step(y, c, dt, level)
        if k % every == 0 or k == n:
            rows.append(row(k))
    return rows


def orbit_periods(V: PlanarVectorField, xy, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
                  charts=None, tol: float = 1e-6, max_time: Optional[float] = None,
                  slow_factor: float = 1e-4) -> np.ndarray:
    """Minimal return times of the orbits through ``xy``; ``nan`` if non-periodic.

    A return is detected when the displacement along the initial velocity
    changes sign from negative to non-negative close to the start point,
    then refined by bisection on the last step to 1e-10.
    """
    xy = _as_points(xy).astype(float)
    c0 = _as_charts(charts, len(xy)).copy()
    max_time = integrator.max_time if max_time is None else max_time
    surf = V.surface
    v0 = V(xy, c0)
    speed0 = np.linalg.norm(v0, axis=1)
    if np.any(speed0 < EQUILIBRIUM_SPEED):
        raise ValueError("orbit_period needs regular points; got an equilibrium")
    vhat = v0 / speed0[:, None]
    stepper = _Stepper(V, integrator)
    h = integrator.step

    def disp(y, c, idx):
        q = y
        if surf is not None and surf.transitions:
            q = np.empty_like(y)
            for cc in np.unique(c0[idx]):
                m = c0[idx] == cc
                q[m] = surf.to_chart(y[m], c[m], int(cc))
        d = surf.periodic_delta(q, xy[idx]) if surf is not None else q - xy[idx]
        return d

    result = np.full(len(xy), np.nan)
    active = np.arange(len(xy))
    y, c = xy.copy(), c0.copy()
    level = stepper.level(y, c)
    s_prev = np.zeros(len(xy))
    reach = np.zeros(len(xy))
    t = 0.0
    n_max = int(math.ceil(max_time / h))
    for _ in range(n_max):
        if not len(active):
            break
        lv = level[active] if level is not None else None
        y_old, c_old = y[active], c[active]
        y_new, c_new = stepper.step(y_old, c_old, np.full(len(active), h), lv)
        t += h
        d = disp(y_new, c_new, active)
        s_new = np.sum(d * vhat[active], axis=1)
        dist = np.linalg.norm(d, axis=1)
        reach[active] = np.maximum(reach[active], dist)
        cross = (s_prev[active] < 0) & (s_new >= 0) & (dist < 0.1 * reach[active])
        done = np.zeros(len(active), dtype=bool)
        if np.any(cross):
            ci = np.nonzero(cross)[0]
            idx = active[ci]
            lo = np.zeros(len(ci))
            hi = np.full(len(ci), h)
            lvc = lv[ci] if lv is not None else None
            for _ in range(34):
                mid = 0.5 * (lo + hi)
                ym, cm = stepper.step(y_old[ci], c_old[ci], mid, lvc)
                sm = np.sum(disp(ym, cm, idx) * vhat[idx], axis=1)
                neg = sm < 0
                lo = np.where(neg, mid, lo)
                hi = np.where(neg, hi, mid)
            tau = 0.5 * (lo + hi)
            ym, cm = stepper.step(y_old[ci], c_old[ci], tau, lvc)
            close = np.linalg.norm(disp(ym, cm, idx), axis=1) < tol
            result[idx[close]] = t - h + tau[close]
            done[ci[close]] = True
        slow = np.linalg.norm(V(y_new, c_new), axis=1) < slow_factor * speed0[active]
        done |= slow
        y[active], c[active] = y_new, c_new
        s_prev[active] = s_new
        active = active[~done]
    return result


def orbit_period(V: PlanarVectorField, x, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
                 tol: float = 1e-6, chart: int = 0) -> Optional[float]:
    """Minimal period of the orbit through ``x``, or ``None`` if it does not close."""
    T = orbit_periods(V, np.asarray(x, dtype=float)[None, :], integrator, chart, tol)[0]
    return None if np.isnan(T) else float(T)


# -- shift maps ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShiftMap:
    """``x -> Phi(x, alpha(x))`` for the flow ``Phi`` of ``field``."""

    alpha: ScalarField
    field: PlanarVectorField
    integrator: FlowIntegrator = DEFAULT_INTEGRATOR


def constant_function(value: float, charts=(0,), name: Optional[str] = None) -> ScalarField:
    def val(x, y):
        return np.full(np.shape(x), float(value))

    def grad(x, y):
        return np.zeros(np.shape(x) + (2,))

    def hess(x, y):
        return np.zeros(np.shape(x) + (2, 2))

    return ScalarField(name or f"const{value:g}", {c: val for c in charts},
                       {c: grad for c in charts}, {c: hess for c in charts})


def sum_functions(a: ScalarField, b: ScalarField) -> ScalarField:
    values = {c: (lambda x, y, c=c: a.values[c](x, y) + b.values[c](x, y)) for c in a.values}
    grads = None
    if a.grads is not None and b.grads is not None:
        grads = {c: (lambda x, y, c=c: a.grads[c](x, y) + b.grads[c](x, y)) for c in a.grads}
    return ScalarField(f"{a.name}+{b.name}", values, grads)


def shift_apply(sm: ShiftMap, xy, charts=None) -> np.ndarray:
    """``Phi(x, alpha(x))`` for each row of ``xy`` (in the input charts)."""
    xy = _as_points(xy)
    return flow_points(sm.field, xy, sm.alpha.value(xy, charts), sm.integrator, charts)


def shift_as_map(sm: ShiftMap, grid, charts=None):
    """Sample the shift map on ``grid``; returns ``(grid, images)``."""
    grid = _as_points(grid)
    return grid, shift_apply(sm, grid, charts)


def d_alpha_h(alpha: ScalarField, V: PlanarVectorField, xy, charts=None) -> np.ndarray:
    return np.sum(alpha.grad(xy, charts) * V(xy, charts), axis=1)


@dataclass
class JacobianReport:
    det: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    tolerance: float
    singular: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.tolerance))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def _fd_jacobian(sm: ShiftMap, xy, charts, fd_step, order: int = 2):
    """Central-difference Jacobian of the shift map plus the images of ``xy``.

    ``order`` 2 uses the 3-point stencil, 4 the 5-point one; the latter
    helps where the shift function is steep. ``fd_step`` may be a scalar or
    one step per point.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    n = len(xy)
    fd_step = np.broadcast_to(np.asarray(fd_step, dtype=float), (n,))[:, None]
    units = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    scales = (1.0,) if order == 2 else (1.0, 2.0)
    offsets = [u * fd_step * k for k in scales for u in units]
    stencil = np.concatenate([xy] + [xy + o for o in offsets])
    sch = np.tile(charts, len(offsets) + 1)
    img = shift_apply(sm, stencil, sch).reshape(len(offsets) + 1, n, 2)
    surf = sm.field.surface

    def diff(a, b):
        return surf.periodic_delta(a, b) if surf is not None else a - b

    cols = []
    for axis in (0, 1):
        near = diff(img[1 + 2 * axis], img[2 + 2 * axis])
        if order == 2:
            cols.append(near / (2 * fd_step))
        else:
            far = diff(img[5 + 2 * axis], img[6 + 2 * axis])
            cols.append((8 * near - far) / (12 * fd_step))
    return np.stack(cols, axis=-1), img[0]


def jacobian_det(sm: ShiftMap, xy, fd_step: float = 1e-5, charts=None,
                 order: int = 2) -> JacobianReport:
    """Finite-difference ``det D(shift map)`` against ``(1 + d alpha(H)) gamma(x) / gamma(image)``.

    The density quotient accounts for the area form of the base field and
    is 1 when the field carries no form.
    """
    xy = _as_points(xy).astype(float)
    charts = _as_charts(charts, len(xy))
    jac, image = _fd_jacobian(sm, xy, charts, fd_step, order)
    det = np.linalg.det(jac)
    factor = 1.0 + d_alpha_h(sm.alpha, sm.field, xy, charts)
    form = sm.field.form
    predicted = factor.copy()
    if form is not None:
        predicted *= form.density(xy, charts) / form.density(image, charts)
    tol = max(1e-4, 10 * float(np.max(fd_step)) ** 2)
    return JacobianReport(det, predicted, np.abs(det - predicted), tol, np.abs(factor) <= tol)


@dataclass
class DensityReport:
    ratio: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.tolerance))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def pullback_density_ratio(sm: ShiftMap, form: AreaForm, xy, fd_step: float = 1e-5,
                           charts=None, order: int = 2) -> DensityReport:
    """``gamma(image) det D(shift map) / gamma(x)`` against ``1 + d alpha(H)``."""
    xy = _as_points(xy).astype(float)
    charts = _as_charts(charts, len(xy))
    jac, image = _fd_jacobian(sm, xy, charts, fd_step, order)
    ratio = form.density(image, charts) * np.linalg.det(jac) / form.density(xy, charts)
    predicted = 1.0 + d_alpha_h(sm.alpha, sm.field, xy, charts)
    return DensityReport(ratio, predicted, np.abs(ratio - predicted), max(1e-4, 10 * float(np.max(fd_step)) ** 2))


@dataclass
class GammaCertificate:
    min_value: float
    sample_count: int
    passed: bool
    argmin: tuple = ()
    crosscheck_residual: float = 0.0
    crosscheck_consistent: bool = True

    def to_dict(self) -> dict:
        return {"min_value": self.min_value, "sample_count": self.sample_count,
                "passed": self.passed, "argmin": list(self.argmin),
                "crosscheck_residual": self.crosscheck_residual,
                "crosscheck_consistent": self.crosscheck_consistent}


def gamma_membership(alpha: ScalarField, V: PlanarVectorField, sample_grid, charts=None,
                     integrator: FlowIntegrator = DEFAULT_INTEGRATOR, n_crosscheck: int = 10,
                     seed: int = 0, fd_step: float = 1e-5) -> GammaCertificate:
    """Minimum of ``1 + d alpha(V)`` over ``sample_grid``; positive means the shift
    map is a local diffeomorphism there.  Ten random grid points are
    cross-checked against the finite-difference Jacobian."""
    xy = _as_points(sample_grid).astype(float)
    charts = _as_charts(charts, len(xy))
    vals = 1.0 + d_alpha_h(alpha, V, xy, charts)
    k = int(np.argmin(vals))
    mn = float(vals[k])
    resid, consistent = 0.0, True
    if n_crosscheck:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(xy), size=min(n_crosscheck, len(xy)), replace=False)
        rep = jacobian_det(ShiftMap(alpha, V, integrator), xy[pick], fd_step, charts[pick])
        resid = rep.max_residual
        consistent = rep.passed and bool(np.all((rep.det > 0) == (rep.predicted > 0)) or mn <= 0)
    return GammaCertificate(mn, len(xy), mn > 0, tuple(float(v) for v in xy[k]), resid, consistent)


# -- time reparametrization ------------------------------------------------------

def sigma(lam: ScalarField, V: PlanarVectorField, xy, s, integrator: FlowIntegrator = DEFAULT_INTEGRATOR,
          charts=None):
    """Integrate ``lam`` along the flow of ``lam * V`` for time ``s``.

    Returns ``(sigma_values, end_points)`` with end points in output charts
    ``(xy, charts)``.  Then ``Phi_{lam V}(x, s) = Phi_V(x, sigma(x, s))``.
    """
    xy = _as_points(xy).astype(float)
    c = _as_charts(charts, len(xy)).copy()
    s = np.broadcast_to(np.asarray(s, dtype=float), (len(xy),)).copy()
    smax = float(np.max(np.abs(s))) if len(s) else 0.0
    if smax > integrator.max_time:
        raise FlowError(f"time {smax:g} exceeds max_time {integrator.max_time:g}")
    W = V.scaled(lam)
    stepper = _Stepper(W, integrator)
    n = max(1, int(math.ceil(smax / integrator.step - 1e-9)))
    dt = (s / n)[:, None]
    y = xy.copy()
    acc = np.zeros(len(xy))
    level = stepper.level(y, c)

    def rhs(p):
        lv = lam.value(p, c)
        if np.any(np.abs(lv) < 1e-14):
            raise FlowError("reparametrizing function vanishes on a trajectory")
        return lv[:, None] * V(p, c), lv

    for _ in range(n):
        k1, l1 = rhs(y)
        k2, l2 = rhs(y + 0.5 * dt * k1)
        k3, l3 = rhs(y + 0.5 * dt * k2)
        k4, l4 = rhs(y + dt * k3)
        y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        acc = acc + dt[:, 0] * (l1 + 2 * l2 + 2 * l3 + l4) / 6.0
        if stepper.f is not None:
            y = _reproject(stepper.f, y, c, level)
        if V.surface is not None:
            y, c = V.surface.normalize(y, c)
    return acc, (y, c)


def sigma_identity_residual(lam: ScalarField, V: PlanarVectorField, xy, s,
                            integrator: FlowIntegrator = DEFAULT_INTEGRATOR, charts=None) -> float:
    """``max |Phi_{lam V}(x, s) - Phi_V(x, sigma(x, s))|`` over the points."""
    xy = _as_points(xy)
    charts = _as_charts(charts, len(xy))
    sig, (end, end_c) = sigma(lam, V, xy, s, integrator, charts)
    direct = flow_points(V, xy, sig, integrator, charts, return_charts=True)
    a = direct[0]
    surf = V.surface
    if surf is not None and surf.transitions:
        a = surf.to_chart(direct[0], direct[1], 0)
        end = surf.to_chart(end, end_c, 0)
    d = surf.periodic_delta(a, end) if surf is not None else a - end
    return float(np.max(np.linalg.norm(d, axis=1)))


def gamma_of_alpha(lam: ScalarField, V: PlanarVectorField, alpha: ScalarField,
                   integrator: FlowIntegrator = DEFAULT_INTEGRATOR) -> ScalarField:
    """The function ``x -> sigma(x, alpha(x))``."""
    values = {}
    for c in alpha.values:
        def val(x, y, c=c):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            return sigma(lam, V, xy, alpha.value(xy, c), integrator, c)[0]
        values[c] = val
    return ScalarField(f"sigma[{alpha.name}]", values)
