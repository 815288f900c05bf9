"""Scalar fields on model surfaces, critical points, axioms, homotopy cases."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .surface import SPHERE, SurfaceModel, _as_charts, _as_points, _single_chart

logger = logging.getLogger(__name__)

LINE = "line"
CIRCLE = "circle"

MIN = "NondegMin"
MAX = "NondegMax"
SADDLE = "NondegSaddle"
DECLARED = "DeclaredHomogeneous"
UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class DeclaredModel:
    """User-declared local model of a degenerate critical point.

    ``square_free`` is the caller's attestation that the homogeneous model
    has no multiple factors; it is cross-checked numerically.
    """

    position: tuple
    degree: int
    square_free: bool
    chart: int = 0


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A smooth map M -> P given per chart.

    ``values``, ``grads`` and ``hessians`` map chart ids to callables of
    ``(x, y)`` arrays.  Missing derivatives fall back to central
    differences with step ``fd_step``.
    """

    name: str
    values: dict
    grads: Optional[dict] = None
    hessians: Optional[dict] = None
    codomain: str = LINE
    period: Optional[float] = None
    fd_step: float = 1e-5
    declared: tuple = ()
    spec: Optional[dict] = None

    def __post_init__(self):
        if self.codomain == CIRCLE and not (self.period and self.period > 0):
            raise ValueError("circle-valued fields need a positive period")

    @property
    def analytic(self) -> bool:
        return self.grads is not None

    def _dispatch(self, table, xy, charts, shape):
        xy = _as_points(xy)
        one = _single_chart(charts)
        if one is not None:
            return table[one](xy[:, 0], xy[:, 1])
        charts = _as_charts(charts, len(xy))
        out = np.empty((len(xy),) + shape)
        for c in np.unique(charts):
            m = charts == c
            out[m] = table[int(c)](xy[m, 0], xy[m, 1])
        return out

    def value(self, xy, charts=None) -> np.ndarray:
        return self._dispatch(self.values, xy, charts, ())

    def grad(self, xy, charts=None) -> np.ndarray:
        if self.grads is not None:
            return self._dispatch(self.grads, xy, charts, (2,))
        xy = _as_points(xy)
        h = self.fd_step
        out = np.empty((len(xy), 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            diff = self.value(xy + e, charts) - self.value(xy - e, charts)
            out[:, k] = self.wrap_delta(diff) / (2 * h)
        return out

    def hess(self, xy, charts=None) -> np.ndarray:
        if self.hessians is not None:
            return self._dispatch(self.hessians, xy, charts, (2, 2))
        xy = _as_points(xy)
        h = self.fd_step if self.grads is not None else self.fd_step * 10
        out = np.empty((len(xy), 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, :, k] = (self.grad(xy + e, charts) - self.grad(xy - e, charts)) / (2 * h)
        return 0.5 * (out + np.transpose(out, (0, 2, 1)))

    def wrap_delta(self, d):
        """Reduce value differences modulo the circle period."""
        if self.codomain == CIRCLE:
            return d - self.period * np.round(np.asarray(d) / self.period)
        return d

    def derivative_along(self, xy, vec, charts=None) -> np.ndarray:
        return np.sum(self.grad(xy, charts) * _as_points(vec), axis=1)

    def with_declared(self, *models: DeclaredModel) -> "ScalarField":
        return ScalarField(self.name, self.values, self.grads, self.hessians, self.codomain,
                           self.period, self.fd_step, tuple(self.declared) + tuple(models),
                           self.spec)

    def rotated(self, angle: float) -> "ScalarField":
        """The field ``x -> f(R x)`` in a rotated chart (single-chart fields)."""
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        v0 = self.values[0]

        def val(x, y):
            return v0(c * x - s * y, s * x + c * y)

        grads = hess = None
        if self.grads is not None:
            g0 = self.grads[0]

            def grads0(x, y):
                return g0(c * x - s * y, s * x + c * y) @ rot

            grads = {0: grads0}
        if self.hessians is not None:
            h0 = self.hessians[0]

            def hess0(x, y):
                return rot.T @ h0(c * x - s * y, s * x + c * y) @ rot

            hess = {0: hess0}
        return ScalarField(f"{self.name}@rot{angle:.3g}", {0: val}, grads, hess, self.codomain,
                           self.period, self.fd_step)


def polynomial_field(terms, name: str = "poly", codomain: str = LINE,
                     period: Optional[float] = None) -> ScalarField:
    """Bivariate polynomial ``sum c x^i y^j`` with analytic derivatives.

    ``terms`` is a list of ``(i, j, c)`` triples.
    """
    terms = [(int(i), int(j), float(c)) for i, j, c in terms]
    if any(i < 0 or j < 0 for i, j, _ in terms):
        raise ValueError("polynomial exponents must be non-negative")

    def _derived(ts, dx, dy):
        out = []
        for i, j, c in ts:
            k = c
            for m in range(dx):
                k *= i - m
            for m in range(dy):
                k *= j - m
            if k:
                out.append((i - dx, j - dy, k))
        return out

    tables = {key: _derived(terms, *key) for key in
              [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}
    deg = max([max(i, j) for i, j, _ in terms], default=0)

    def _eval(x, y, keys):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        one = np.ones(np.broadcast(x, y).shape)
        xp, yp = [one], [one]
        for _ in range(deg):
            xp.append(xp[-1] * x)
            yp.append(yp[-1] * y)
        outs = []
        for key in keys:
            acc = np.zeros_like(one)
            for i, j, c in tables[key]:
                acc += c * xp[i] * yp[j]
            outs.append(acc)
        return outs

    def val(x, y):
        return _eval(x, y, [(0, 0)])[0]

    def grad(x, y):
        return np.stack(_eval(x, y, [(1, 0), (0, 1)]), axis=-1)

    def hess(x, y):
        hxx, hxy, hyy = _eval(x, y, [(2, 0), (1, 1), (0, 2)])
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    spec = {"poly": [[i, j, c] for i, j, c in terms], "codomain": codomain}
    if period is not None:
        spec["period"] = period
    return ScalarField(name, {0: val}, {0: grad}, {0: hess}, codomain, period, spec=spec)


def field_from_spec(spec: dict) -> ScalarField:
    """Build a field from ``{name}`` (built-in) or ``{poly: [[i, j, c], ...]}``."""
    if "poly" in spec:
        return polynomial_field(spec["poly"], spec.get("name", "poly"),
                                spec.get("codomain", LINE), spec.get("period"))
    if "name" in spec:
        from .catalog import named_field

        return named_field(spec["name"])
    raise ValueError("field spec needs 'name' or 'poly'")


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    position: tuple
    chart: int
    value: float
    kind: str
    hessian_eigs: tuple
    degree: Optional[int] = None
    on_boundary: bool = False

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position, dtype=float)

    @property
    def is_extreme(self) -> bool:
        return self.kind in (MIN, MAX)


def field_scale(f: ScalarField, surface: SurfaceModel, n: int = 2000, seed: int = 0) -> float:
    """Value range of ``f`` over random samples (at least 1e-12)."""
    xy, ch = surface.sample_points(n, np.random.default_rng(seed))
    v = f.value(xy, ch)
    if f.codomain == CIRCLE:
        return float(f.period)
    return max(float(np.ptp(v)), 1e-12)


def _seed_grid(surface: SurfaceModel, chart, h: float) -> np.ndarray:
    x0, x1, y0, y1 = chart.bounding_box()
    xs = np.arange(x0 + 0.5 * h, x1, h)
    ys = np.arange(y0 + 0.5 * h, y1, h)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    ch = np.full(len(pts), chart.id)
    return pts[surface.in_core(pts, ch)]


def _newton(f: ScalarField, pts: np.ndarray, charts: np.ndarray, max_iter: int = 50):
    x = pts.copy()
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            break
        g = f.grad(x[active], charts[active])
        H = f.hess(x[active], charts[active])
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        safe = np.abs(det) > 1e-300
        step = np.zeros_like(g)
        inv_det = np.where(safe, 1.0 / np.where(safe, det, 1.0), 0.0)
        step[:, 0] = (H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1]) * inv_det
        step[:, 1] = (-H[:, 1, 0] * g[:, 0] + H[:, 0, 0] * g[:, 1]) * inv_det
        idx = np.flatnonzero(active)
        x[idx] -= step
        done = np.linalg.norm(step, axis=1) < 1e-12
        bad = ~np.all(np.isfinite(x[idx]), axis=1)
        active[idx[done | bad]] = False
    return x


def find_critical_points(f: ScalarField, surface: SurfaceModel, grid_resolution: float = 0.05,
                         tol: float = 1e-8) -> list:
    """Locate and classify interior critical points of ``f``.

    Seeds on a regular grid per chart are refined by Newton's method
    (at most 50 steps, stop at ``|step| < 1e-12``); converged points with
    ``|grad f| < tol`` are merged within ``10 * tol`` and classified by the
    Hessian eigenvalues.  Seeds that diverge or leave the surface are
    skipped and counted in the debug log.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    scale = field_scale(f, surface)
    found = []
    for chart in surface.charts:
        seeds = _seed_grid(surface, chart, grid_resolution)
        if len(seeds) == 0:
            continue
        charts = np.full(len(seeds), chart.id)
        x = _newton(f, seeds, charts)
        finite = np.all(np.isfinite(x), axis=1)
        x, charts = x[finite], charts[finite]
        x = surface.wrap(x)
        inside = surface.in_core(x, charts)
        x, charts = x[inside], charts[inside]
        gnorm = np.linalg.norm(f.grad(x, charts), axis=1)
        ok = gnorm < tol
        skipped = len(seeds) - int(ok.sum())
        if skipped:
            logger.debug("chart %d: %d of %d seeds diverged or left the surface",
                         chart.id, skipped, len(seeds))
        for p, c, gn in zip(x[ok], charts[ok], gnorm[ok]):
            found.append((p, int(c), gn))

    found.sort(key=lambda t: (t[1], t[0][0], t[0][1]))
    merged = []
    radius = 10 * tol
    for p, c, gn in found:
        for k, (q, cq, gq) in enumerate(merged):
            if cq == c and np.linalg.norm(surface.periodic_delta(p, q)) < max(radius, 1e-7):
                if gn < gq:
                    merged[k] = (p, c, gn)
                break
        else:
            merged.append((p, c, gn))

    out = []
    for p, c, _ in merged:
        eigs = np.linalg.eigvalsh(f.hess(p, [c])[0])
        kind = _classify(eigs, scale)
        degree = 2 if kind != UNCLASSIFIED else None
        model = _declared_at(f, p, c, tol)
        if kind == UNCLASSIFIED and model is not None:
            kind = DECLARED
            degree = model.degree
        val = float(f.value(p, [c])[0])
        if f.codomain == CIRCLE:
            val = float(np.mod(val, f.period))
        on_bd = bool(surface.boundary_distance(p)[0] < max(tol, 1e-9))
        out.append(CriticalPoint((float(p[0]), float(p[1])), c, val, kind,
                                 (float(eigs[0]), float(eigs[1])), degree, on_bd))
    return out


def _classify(eigs, scale: float) -> str:
    thresh = 1e-6 * scale
    if np.any(np.abs(eigs) <= thresh):
        return UNCLASSIFIED
    if np.all(eigs > 0):
        return MIN
    if np.all(eigs < 0):
        return MAX
    return SADDLE


def _declared_at(f: ScalarField, p, chart: int, tol: float) -> Optional[DeclaredModel]:
    for m in f.declared:
        if m.chart == chart and np.linalg.norm(np.asarray(m.position) - p) < max(1e-6, 100 * tol):
            return m
    return None


# ---------------------------------------------------------------------------
# declared homogeneous models


def ray_growth_exponent(f: ScalarField, p, chart: int = 0, n_rays: int = 16) -> float:
    """Median log-log slope of ``|f(p + r u) - f(p)|`` for r in [1e-3, 1e-2]."""
    p = np.asarray(p, dtype=float)
    f0 = f.value(p, [chart])[0]
    slopes = []
    radii = np.array([1e-3, 1e-2])
    for a in np.linspace(0, 2 * np.pi, n_rays, endpoint=False) + 0.1:
        u = np.array([np.cos(a), np.sin(a)])
        d = np.abs(f.value(p + radii[:, None] * u, [chart, chart]) - f0)
        if np.all(d > 1e-300):
            slopes.append(np.diff(np.log(d))[0] / np.diff(np.log(radii))[0])
    if not slopes:
        return float("nan")
    return float(np.median(slopes))


def fitted_binary_form(f: ScalarField, p, degree: int, chart: int = 0, eps: float = 1e-2):
    """Least-squares coefficients ``a_k`` of ``sum a_k x^(d-k) y^k`` near ``p``."""
    p = np.asarray(p, dtype=float)
    f0 = f.value(p, [chart])[0]
    ang = np.linspace(0, 2 * np.pi, 4 * degree + 4, endpoint=False) + 0.05
    u = np.column_stack([np.cos(ang), np.sin(ang)])
    rhs = (f.value(p + eps * u, np.full(len(u), chart)) - f0) / eps**degree
    A = np.column_stack([u[:, 0] ** (degree - k) * u[:, 1] ** k for k in range(degree + 1)])
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return coef


def binary_form_is_square_free(coef, rel_tol: float = 1e-3) -> bool:
    """Distinct linear factors over C (including the factor ``y`` at infinity)."""
    coef = np.asarray(coef, dtype=float)
    d = len(coef) - 1
    scale = np.max(np.abs(coef))
    if scale == 0:
        return False
    c = coef / scale
    # F(t, 1) = sum c_k t^(d-k); a vanishing leading coefficient means y divides F
    lead = 0
    while lead <= d and abs(c[lead]) < rel_tol:
        lead += 1
    if lead > 1:
        return False
    roots = np.roots(c[lead:]) if d - lead > 0 else np.array([])
    if len(roots) < 2:
        return True
    diff = np.abs(roots[:, None] - roots[None, :])
    np.fill_diagonal(diff, np.inf)
    return bool(np.min(diff) > np.sqrt(rel_tol) * max(1.0, np.max(np.abs(roots))))


def verify_declared_model(f: ScalarField, model: DeclaredModel) -> dict:
    """Growth exponent within 10% of the degree plus a square-free check."""
    expo = ray_growth_exponent(f, model.position, model.chart)
    coef = fitted_binary_form(f, model.position, model.degree, model.chart)
    numeric_sf = binary_form_is_square_free(coef)
    growth_ok = bool(np.isfinite(expo) and abs(expo - model.degree) <= 0.1 * model.degree)
    return {
        "growth_exponent": expo,
        "growth_ok": growth_ok,
        "attested_square_free": bool(model.square_free),
        "numeric_square_free": numeric_sf,
        "ok": bool(growth_ok and model.square_free and numeric_sf),
    }


# ---------------------------------------------------------------------------
# axioms and homotopy case


@dataclass(frozen=True)
class AxiomReport:
    axiom_b_ok: bool
    boundary_residuals: tuple
    boundary_min_grad: tuple
    axiom_l_ok: bool
    point_checks: tuple
    in_class_F: bool
    in_class_Morse: bool

    def to_dict(self) -> dict:
        return {
            "axiom_b_ok": self.axiom_b_ok,
            "boundary_residuals": list(self.boundary_residuals),
            "boundary_min_grad": list(self.boundary_min_grad),
            "axiom_l_ok": self.axiom_l_ok,
            "points": list(self.point_checks),
            "in_class_F": self.in_class_F,
            "in_class_Morse": self.in_class_Morse,
        }


def check_axioms(f: ScalarField, surface: SurfaceModel, crit_list, n_boundary: int = 256,
                 const_tol: float = 1e-8, grad_tol: float = 1e-8) -> AxiomReport:
    """Boundary constancy/regularity (B) and admissible critical points (L)."""
    residuals = []
    min_grads = []
    b_ok = True
    for xy, ch in surface.boundary_samples(n_boundary):
        v = f.value(xy, ch)
        dv = f.wrap_delta(v - v[0])
        res = float(np.max(np.abs(dv - dv.mean())))
        gmin = float(np.min(np.linalg.norm(f.grad(xy, ch), axis=1)))
        residuals.append(res)
        min_grads.append(gmin)
        b_ok &= res <= const_tol * max(1.0, field_scale(f, surface)) and gmin > grad_tol
    if any(cp.on_boundary for cp in crit_list):
        b_ok = False

    checks = []
    l_ok = True
    all_nondeg = True
    for cp in crit_list:
        entry = {"position": list(cp.position), "kind": cp.kind}
        if cp.kind in (MIN, MAX, SADDLE):
            entry["ok"] = True
        else:
            all_nondeg = False
            model = _declared_at(f, cp.xy, cp.chart, 1e-8)
            if model is None:
                entry["ok"] = False
                entry["reason"] = "degenerate critical point without a declared model"
            else:
                entry.update(verify_declared_model(f, model))
        l_ok &= entry["ok"]
        checks.append(entry)
    in_f = bool(b_ok and l_ok)
    return AxiomReport(bool(b_ok), tuple(residuals), tuple(min_grads), bool(l_ok), tuple(checks),
                       in_f, bool(in_f and all_nondeg))


@dataclass(frozen=True)
class Case:
    """Predicted homotopy type of the identity component of S(f, omega)."""

    kind: str  # "circle" or "contractible"
    type: Optional[str] = None

    def __str__(self) -> str:
        return f"Circle({self.type})" if self.kind == "circle" else "Contractible"


def homotopy_case(f: ScalarField, surface: SurfaceModel, report: AxiomReport, crit_list) -> Case:
    if not report.in_class_F:
        raise ValueError("homotopy case is only defined for fields in class F")
    if not all(cp.is_extreme for cp in crit_list):
        return Case("contractible")
    kinds = sorted(cp.kind for cp in crit_list)
    topo = surface.topology
    if topo == "sphere" and kinds == sorted([MIN, MAX]):
        return Case("circle", "A")
    if topo == "disk" and len(crit_list) == 1:
        return Case("circle", "B")
    if topo == "cylinder" and not crit_list:
        return Case("circle", "C")
    if topo == "torus" and not crit_list and f.codomain == CIRCLE:
        return Case("circle", "D")
    return Case("contractible")


def euler_characteristic_from_critical_points(crit_list) -> int:
    return sum(1 if cp.kind in (MIN, MAX) else -1 if cp.kind == SADDLE else 0 for cp in crit_list)


def sphere_field(fn3: Callable, name: str, fd_step: float = 1e-6) -> ScalarField:
    """Field on the sphere from a function of ambient (X, Y, Z); FD derivatives."""
    from .surface import sphere_to_xyz

    def chart_fn(c):
        def val(x, y):
            xyz = sphere_to_xyz(np.column_stack([np.ravel(x), np.ravel(y)]), c)
            return fn3(xyz[:, 0], xyz[:, 1], xyz[:, 2]).reshape(np.shape(x))
        return val

    return ScalarField(name, {0: chart_fn(0), 1: chart_fn(1)}, fd_step=fd_step)


__all__ = [
    "ScalarField", "DeclaredModel", "CriticalPoint", "AxiomReport", "Case",
    "polynomial_field", "field_from_spec", "find_critical_points", "check_axioms",
    "homotopy_case", "verify_declared_model", "ray_growth_exponent",
    "fitted_binary_form", "binary_form_is_square_free", "sphere_field",
    "euler_characteristic_from_critical_points", "SPHERE",
]
