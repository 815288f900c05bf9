"""Model surfaces as intrinsic chart atlases, area forms, and triangle meshes.

Every surface is described by one or two planar charts.  Periodic charts
model the cylinder and the flat torus; the sphere uses the two
stereographic charts related by ``w = 1/z``.  Meshes carry per-triangle
chart coordinates so that triangles straddling a periodic seam or living
in different sphere charts can be treated uniformly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, cKDTree

DISK = "disk"
ANNULUS = "annulus"
TORUS = "torus"
SPHERE = "sphere"
SUBLEVEL = "sublevel"

_KIND_ALIASES = {
    "disk": DISK,
    "annulus": ANNULUS,
    "cylinder": ANNULUS,
    "torus": TORUS,
    "flattorus": TORUS,
    "flat_torus": TORUS,
    "sphere": SPHERE,
    "sublevel": SUBLEVEL,
    "planarsublevel": SUBLEVEL,
    "planar_sublevel": SUBLEVEL,
}

# sphere chart radius; the two chart disks overlap on 1/R < |p| < R
SPHERE_CHART_RADIUS = 1.5
# hysteresis threshold for switching sphere charts during integration
SPHERE_SWITCH_RADIUS = 1.2


def _as_points(xy) -> np.ndarray:
    pts = np.asarray(xy, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    return pts


def _single_chart(charts):
    """The common chart id when all points share one chart, else ``None``."""
    if charts is None:
        return 0
    c = np.asarray(charts)
    if c.ndim == 0:
        return int(c)
    if len(c) and c.min() == c.max():
        return int(c[0])
    return None


def _as_charts(charts, n: int) -> np.ndarray:
    if charts is None:
        return np.zeros(n, dtype=int)
    c = np.asarray(charts, dtype=int)
    if c.ndim == 0:
        return np.full(n, int(c), dtype=int)
    return c


@dataclass(frozen=True)
class Chart:
    """A planar coordinate domain, optionally periodic in x and/or y.

    ``shape`` is ``"rect"`` with ``bounds = (x0, x1, y0, y1)`` or ``"disk"``
    with ``bounds = (cx, cy, radius)``.
    """

    id: int
    shape: str
    bounds: tuple
    periods: tuple = (None, None)

    def __post_init__(self):
        for p in self.periods:
            if p is not None and not p > 0:
                raise ValueError(f"chart {self.id}: period must be positive, got {p}")
        if self.shape == "rect":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"chart {self.id}: empty rectangle {self.bounds}")
        elif self.shape == "disk":
            if not self.bounds[2] > 0:
                raise ValueError(f"chart {self.id}: disk radius must be positive")
        else:
            raise ValueError(f"unknown chart shape {self.shape!r}")

    def bounding_box(self) -> tuple:
        if self.shape == "rect":
            return tuple(self.bounds)
        cx, cy, r = self.bounds
        return (cx - r, cx + r, cy - r, cy + r)

    def to_dict(self) -> dict:
        return {"id": self.id, "shape": self.shape, "bounds": list(self.bounds),
                "periods": list(self.periods)}


@dataclass(frozen=True)
class Transition:
    """Coordinate change from chart ``source`` to chart ``target``."""

    source: int
    target: int
    map: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    formula: str = ""


@dataclass(frozen=True)
class BoundaryComponent:
    """A closed boundary curve ``t -> curve(t)``, ``t`` in [0, 1)."""

    id: int
    chart: int
    curve: Callable[[np.ndarray], np.ndarray]
    length_hint: float


def _inversion(xy):
    xy = _as_points(xy)
    s = np.sum(xy**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.column_stack([xy[:, 0] / s, -xy[:, 1] / s])


def _inversion_jacobian(xy):
    # w = 1/z is holomorphic: D = [[a, -b], [b, a]] with a + ib = -1/z^2
    xy = _as_points(xy)
    z = xy[:, 0] + 1j * xy[:, 1]
    d = -1.0 / z**2
    a, b = d.real, d.imag
    jac = np.empty((len(xy), 2, 2))
    jac[:, 0, 0] = a
    jac[:, 0, 1] = -b
    jac[:, 1, 0] = b
    jac[:, 1, 1] = a
    return jac


def sphere_to_xyz(xy, charts) -> np.ndarray:
    """Inverse stereographic projection of chart points onto the unit sphere."""
    xy = _as_points(xy)
    charts = _as_charts(charts, len(xy))
    u, v = xy[:, 0], xy[:, 1]
    s = u * u + v * v
    out = np.empty((len(xy), 3))
    out[:, 0] = 2 * u / (1 + s)
    sign = np.where(charts == 0, 1.0, -1.0)
    out[:, 1] = sign * 2 * v / (1 + s)
    out[:, 2] = sign * (s - 1) / (1 + s)
    return out


def xyz_to_sphere(p: np.ndarray, charts=None):
    """Stereographic chart coordinates; chart 0 for Z <= 0 unless forced."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    if charts is None:
        charts = np.where(p[:, 2] <= 0, 0, 1)
    charts = _as_charts(charts, len(p))
    out = np.empty((len(p), 2))
    m0 = charts == 0
    out[m0, 0] = p[m0, 0] / (1 - p[m0, 2])
    out[m0, 1] = p[m0, 1] / (1 - p[m0, 2])
    m1 = ~m0
    out[m1, 0] = p[m1, 0] / (1 + p[m1, 2])
    out[m1, 1] = -p[m1, 1] / (1 + p[m1, 2])
    return out, charts


@dataclass(frozen=True, eq=False)
class SurfaceModel:
    """A compact oriented surface given by a small chart atlas.

    For ``kind == "sublevel"`` the surface is ``{g <= c}`` in the plane, with
    ``g`` any object exposing ``value(xy)`` and ``grad(xy)`` and the region
    star-shaped about ``center``.
    """

    kind: str
    params: dict
    charts: tuple
    transitions: dict
    boundary: tuple
    topology: str
    g: object = None
    c: Optional[float] = None
    center: tuple = (0.0, 0.0)

    # -- coordinates -----------------------------------------------------
    def chart(self, cid: int) -> Chart:
        return self.charts[cid]

    @property
    def periods(self) -> tuple:
        return self.charts[0].periods

    def wrap(self, xy, charts=None) -> np.ndarray:
        """Reduce periodic coordinates into the fundamental rectangle."""
        xy = _as_points(xy).copy()
        ch = self.charts[0]
        if ch.shape == "rect":
            x0, _, y0, _ = ch.bounds
            px, py = ch.periods
            if px is not None:
                xy[:, 0] = x0 + np.mod(xy[:, 0] - x0, px)
            if py is not None:
                xy[:, 1] = y0 + np.mod(xy[:, 1] - y0, py)
        return xy

    def periodic_delta(self, a, b) -> np.ndarray:
        """Minimal-image difference ``a - b``."""
        d = _as_points(a) - _as_points(b)
        for k, p in enumerate(self.periods):
            if p is not None:
                d[:, k] -= p * np.round(d[:, k] / p)
        return d

    def to_chart(self, xy, charts, target: int) -> np.ndarray:
        xy = _as_points(xy)
        charts = _as_charts(charts, len(xy))
        out = xy.copy()
        move = charts != target
        if np.any(move):
            for src in np.unique(charts[move]):
                m = move & (charts == src)
                out[m] = self.transitions[(int(src), int(target))].map(xy[m])
        return out

    def normalize(self, xy, charts=None):
        """Wrap periodic coordinates and switch sphere charts far from the core."""
        xy = _as_points(xy)
        charts = _as_charts(charts, len(xy)).copy()
        if self.kind == SPHERE:
            xy = xy.copy()
            far = np.sum(xy**2, axis=1) > SPHERE_SWITCH_RADIUS**2
            if np.any(far):
                xy[far] = _inversion(xy[far])
                charts[far] = 1 - charts[far]
            return xy, charts
        return self.wrap(xy), charts

    # -- membership --------------------------------------------------------
    def contains(self, xy, charts=None) -> np.ndarray:
        xy = _as_points(xy)
        if self.kind == DISK:
            cx, cy, r = self.charts[0].bounds
            return (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2 <= r * r
        if self.kind == SUBLEVEL:
            return self.g.value(xy) <= self.c
        if self.kind == ANNULUS:
            _, _, y0, y1 = self.charts[0].bounds
            return (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
        if self.kind == TORUS:
            return np.ones(len(xy), dtype=bool)
        if self.kind == SPHERE:
            return np.sum(xy**2, axis=1) <= SPHERE_CHART_RADIUS**2
        raise ValueError(self.kind)

    def in_core(self, xy, charts=None) -> np.ndarray:
        """Each surface point lies in the core of exactly one chart."""
        xy = _as_points(xy)
        charts = _as_charts(charts, len(xy))
        if self.kind == SPHERE:
            s = np.sum(xy**2, axis=1)
            return np.where(charts == 0, s <= 1.0, s < 1.0)
        inside = self.contains(xy, charts)
        if self.kind in (ANNULUS, TORUS):
            x0, x1, y0, y1 = self.charts[0].bounds
            px, py = self.periods
            inside &= (xy[:, 0] >= x0) & (xy[:, 0] < x0 + (px or np.inf))
            if py is not None:
                inside &= (xy[:, 1] >= y0) & (xy[:, 1] < y0 + py)
        return inside

    def boundary_distance(self, xy) -> np.ndarray:
        """Euclidean chart distance to the boundary (inf for closed surfaces)."""
        xy = _as_points(xy)
        if not self.boundary:
            return np.full(len(xy), np.inf)
        if self.kind == DISK:
            cx, cy, r = self.charts[0].bounds
            return np.abs(r - np.hypot(xy[:, 0] - cx, xy[:, 1] - cy))
        if self.kind == ANNULUS:
            _, _, y0, y1 = self.charts[0].bounds
            return np.minimum(np.abs(xy[:, 1] - y0), np.abs(xy[:, 1] - y1))
        dense = np.vstack([b.curve(np.linspace(0, 1, 4096, endpoint=False)) for b in self.boundary])
        d, _ = cKDTree(dense).query(xy)
        return d

    # -- sampling ----------------------------------------------------------
    def sample_points(self, n: int, rng: np.random.Generator, margin: float = 0.0):
        """Uniform (in chart area, or round area for the sphere) random points.

        Returns ``(xy, charts)``; points closer than ``margin`` to the
        boundary are rejected.
        """
        if self.kind == SPHERE:
            p = rng.normal(size=(n, 3))
            p /= np.linalg.norm(p, axis=1, keepdims=True)
            return xyz_to_sphere(p)
        x0, x1, y0, y1 = self.charts[0].bounding_box()
        out = []
        count = 0
        while count < n:
            cand = np.column_stack([rng.uniform(x0, x1, 4 * n), rng.uniform(y0, y1, 4 * n)])
            keep = self.contains(cand)
            if margin > 0:
                keep &= self.boundary_distance(cand) > margin
            cand = cand[keep]
            out.append(cand)
            count += len(cand)
        xy = np.vstack(out)[:n]
        return xy, np.zeros(n, dtype=int)

    def boundary_samples(self, n: int = 256) -> list:
        t = np.arange(n) / n
        return [(b.curve(t), np.full(n, b.chart)) for b in self.boundary]

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if k == "g":
                params[k] = getattr(v, "spec", None) or getattr(v, "name", repr(v))
            elif isinstance(v, tuple):
                params[k] = list(v)
            else:
                params[k] = v
        return {
            "kind": self.kind,
            "params": params,
            "charts": [c.to_dict() for c in self.charts],
            "transitions": [
                {"from": t.source, "to": t.target, "formula": t.formula}
                for t in self.transitions.values()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _star_radius(g, c: float, center, angles: np.ndarray, rmax: float) -> np.ndarray:
    """Radius of {g = c} along rays from ``center`` (vectorized bisection)."""
    u = np.column_stack([np.cos(angles), np.sin(angles)])
    lo = np.zeros(len(angles))
    hi = np.full(len(angles), rmax)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = g.value(np.asarray(center) + mid[:, None] * u) <= c
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def make_model_surface(kind: str, **params) -> SurfaceModel:
    """Build one of the model surfaces.

    Parameters
    ----------
    kind : str
        ``disk`` (radius, center), ``annulus`` (period, height),
        ``torus`` (periods), ``sphere``, or ``sublevel`` (g, c, center, rmax).
    """
    key = _KIND_ALIASES.get(str(kind).lower().replace("-", "_").replace(" ", ""))
    if key is None:
        raise ValueError(f"unknown surface kind {kind!r}")

    if key == DISK:
        r = float(params.get("radius", 1.0))
        cx, cy = params.get("center", (0.0, 0.0))
        if not r > 0:
            raise ValueError("disk radius must be positive")
        chart = Chart(0, "disk", (cx, cy, r))

        def circle(t, cx=cx, cy=cy, r=r):
            a = 2 * np.pi * np.asarray(t)
            return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])

        return SurfaceModel(DISK, {"radius": r, "center": (cx, cy)}, (chart,), {},
                            (BoundaryComponent(0, 0, circle, 2 * np.pi * r),), "disk",
                            center=(cx, cy))

    if key == ANNULUS:
        p = float(params.get("period", 1.0))
        h = float(params.get("height", 1.0))
        if not (p > 0 and h > 0):
            raise ValueError("annulus period and height must be positive")
        chart = Chart(0, "rect", (0.0, p, 0.0, h), (p, None))

        def bottom(t, p=p):
            t = np.asarray(t)
            return np.column_stack([p * t, np.zeros_like(t)])

        def top(t, p=p, h=h):
            t = np.asarray(t)
            return np.column_stack([p * t, np.full_like(t, h)])

        return SurfaceModel(ANNULUS, {"period": p, "height": h}, (chart,), {},
                            (BoundaryComponent(0, 0, bottom, p), BoundaryComponent(1, 0, top, p)),
                            "cylinder")

    if key == TORUS:
        px, py = params.get("periods", (1.0, 1.0))
        if not (px > 0 and py > 0):
            raise ValueError("torus periods must be positive")
        chart = Chart(0, "rect", (0.0, px, 0.0, py), (px, py))
        return SurfaceModel(TORUS, {"periods": (px, py)}, (chart,), {}, (), "torus")

    if key == SPHERE:
        charts = (Chart(0, "disk", (0.0, 0.0, SPHERE_CHART_RADIUS)),
                  Chart(1, "disk", (0.0, 0.0, SPHERE_CHART_RADIUS)))
        transitions = {
            (0, 1): Transition(0, 1, _inversion, _inversion_jacobian, "w = 1/z"),
            (1, 0): Transition(1, 0, _inversion, _inversion_jacobian, "z = 1/w"),
        }
        return SurfaceModel(SPHERE, {}, charts, transitions, (), "sphere")

    # planar sublevel {g <= c}
    g = params.get("g")
    if g is None or "c" not in params:
        raise ValueError("sublevel surface needs a field g and a level c")
    c = float(params["c"])
    center = tuple(params.get("center", (0.0, 0.0)))
    rmax = float(params.get("rmax", 10.0))
    if not g.value(np.array([center]))[0] < c:
        raise ValueError("sublevel center must satisfy g(center) < c")
    angles = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    radii = np.linspace(0, rmax, 400)[1:]
    u = np.column_stack([np.cos(angles), np.sin(angles)])
    pts = np.asarray(center) + radii[None, :, None] * u[:, None, :]
    vals = g.value(pts.reshape(-1, 2)).reshape(len(angles), len(radii)) - c
    if np.any(vals[:, -1] <= 0):
        raise ValueError("sublevel region is not bounded within rmax")
    sign_changes = np.sum(np.diff(np.sign(vals), axis=1) != 0, axis=1)
    if np.any(sign_changes != 1):
        raise ValueError("sublevel region is not star-shaped about its center")

    def level_curve(t, g=g, c=c, center=center, rmax=rmax):
        a = 2 * np.pi * np.asarray(t, dtype=float)
        r = _star_radius(g, c, center, a, rmax)
        return np.asarray(center) + r[:, None] * np.column_stack([np.cos(a), np.sin(a)])

    ring = level_curve(np.linspace(0, 1, 256, endpoint=False))
    grad_norm = np.linalg.norm(g.grad(ring), axis=1)
    if np.min(grad_norm) < 1e-8:
        raise ValueError(f"level c={c} is a critical value of g: boundary would be singular")
    length = float(np.sum(np.linalg.norm(np.diff(np.vstack([ring, ring[:1]]), axis=0), axis=1)))
    r_box = float(np.max(np.linalg.norm(ring - np.asarray(center), axis=1))) * 1.05
    chart = Chart(0, "disk", (center[0], center[1], r_box))
    return SurfaceModel(SUBLEVEL, {"g": g, "c": c, "center": center, "rmax": rmax}, (chart,), {},
                        (BoundaryComponent(0, 0, level_curve, length),), "disk",
                        g=g, c=c, center=center)


# ---------------------------------------------------------------------------
# area forms


@dataclass(frozen=True, eq=False)
class AreaForm:
    """An area form ``gamma(x, y) dx ^ dy`` given per chart."""

    surface: SurfaceModel
    name: str
    densities: dict
    params: dict = field(default_factory=dict)

    def density(self, xy, charts=None) -> np.ndarray:
        xy = _as_points(xy)
        one = _single_chart(charts)
        if one is not None:
            return np.broadcast_to(self.densities[one](xy[:, 0], xy[:, 1]), (len(xy),))
        charts = _as_charts(charts, len(xy))
        out = np.empty(len(xy))
        for c in np.unique(charts):
            m = charts == c
            out[m] = self.densities[int(c)](xy[m, 0], xy[m, 1])
        return out

    def compatibility_residual(self, n: int = 100, seed: int = 0) -> float:
        """Max of ``|gamma_2(T p) |det DT(p)| - gamma_1(p)|`` over overlap samples."""
        if not self.surface.transitions:
            return 0.0
        rng = np.random.default_rng(seed)
        worst = 0.0
        for (i, j), tr in self.surface.transitions.items():
            r = rng.uniform(1 / SPHERE_SWITCH_RADIUS, SPHERE_SWITCH_RADIUS, n)
            a = rng.uniform(0, 2 * np.pi, n)
            p = np.column_stack([r * np.cos(a), r * np.sin(a)])
            q = tr.map(p)
            det = np.linalg.det(tr.jacobian(p))
            if np.any(det <= 0):
                raise ValueError("transition is not orientation preserving")
            lhs = self.density(q, np.full(n, j)) * det
            worst = max(worst, float(np.max(np.abs(lhs - self.density(p, np.full(n, i))))))
        return worst


def make_area_form(surface: SurfaceModel, name: str = "standard", **params) -> AreaForm:
    """Named area forms: standard, const, tilted, quadratic, radial-bump."""
    name = name.lower()
    if surface.kind == SPHERE:
        if name != "standard":
            raise ValueError("only the standard round form is provided on the sphere")

        def round_density(x, y):
            return 4.0 / (1.0 + x * x + y * y) ** 2

        form = AreaForm(surface, name, {0: round_density, 1: round_density}, params)
        return form

    if name == "standard":
        fn = lambda x, y: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    elif name == "const":
        k = float(params.get("value", 1.0))
        fn = lambda x, y, k=k: np.full_like(np.asarray(x, dtype=float), k)  # noqa: E731
    elif name == "tilted":
        s = float(params.get("slope", 0.5))
        fn = lambda x, y, s=s: 1.0 + s * np.asarray(x, dtype=float)  # noqa: E731
    elif name == "quadratic":
        k = float(params.get("coef", 0.5))
        fn = lambda x, y, k=k: 1.0 + k * np.asarray(x, dtype=float) ** 2  # noqa: E731
    elif name == "radial-bump":
        a = float(params.get("amplitude", 0.5))
        w = float(params.get("width", 0.1))
        fn = lambda x, y, a=a, w=w: 1.0 + a * np.exp(-(np.asarray(x) ** 2 + np.asarray(y) ** 2) / w)  # noqa: E731
    else:
        raise ValueError(f"unknown area form {name!r}")
    form = AreaForm(surface, name, {c.id: fn for c in surface.charts}, params)
    xy, ch = surface.sample_points(2000, np.random.default_rng(0))
    if surface.boundary:
        xy = np.vstack([xy] + [b for b, _ in surface.boundary_samples(256)])
        ch = np.zeros(len(xy), dtype=int)
    if np.min(form.density(xy, ch)) <= 0:
        raise ValueError(f"area form {name!r} is not positive on the surface")
    return form


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh in chart coordinates.

    ``tri_coords[t]`` holds the three corners of triangle ``t`` drawn
    contiguously in chart ``tri_chart[t]``; for periodic charts they may
    leave the fundamental rectangle, and on the sphere they may be the
    transition image of the stored vertex coordinates.
    """

    surface: SurfaceModel
    vertices: np.ndarray
    vertex_chart: np.ndarray
    triangles: np.ndarray
    tri_chart: np.ndarray
    tri_coords: np.ndarray
    boundary_ids: np.ndarray
    resolution: float
    seed: int = 0
    values: Optional[np.ndarray] = None
    grid: Optional[dict] = None

    def __post_init__(self):
        for arr in (self.vertices, self.vertex_chart, self.triangles, self.tri_chart,
                    self.tri_coords, self.boundary_ids, self.values):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def boundary_flags(self) -> np.ndarray:
        return self.boundary_ids >= 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def with_values(self, values) -> "TriMesh":
        values = np.array(values, dtype=float)
        if values.shape != (self.n_vertices,):
            raise ValueError("one value per vertex required")
        return TriMesh(self.surface, self.vertices, self.vertex_chart, self.triangles,
                       self.tri_chart, self.tri_coords, self.boundary_ids, self.resolution,
                       self.seed, values, self.grid)

    def sample_field(self, f) -> "TriMesh":
        return self.with_values(f.value(self.vertices, self.vertex_chart))

    def ranks(self) -> np.ndarray:
        """Simulation of simplicity: order by value, ties broken by index."""
        if self.values is None:
            raise ValueError("mesh has no vertex values")
        order = np.lexsort((np.arange(self.n_vertices), self.values))
        ranks = np.empty(self.n_vertices, dtype=np.int64)
        ranks[order] = np.arange(self.n_vertices)
        return ranks

    # -- combinatorics -----------------------------------------------------
    def edges(self):
        """Unique edges ``(E, 2)`` and the triangle incidence ``(E, 2)`` (-1 padded)."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        tri_idx = np.tile(np.arange(len(t)), 3)
        e_sorted = np.sort(e, axis=1)
        uniq, inv, counts = np.unique(e_sorted, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: an edge is shared by more than two triangles")
        inc = np.full((len(uniq), 2), -1, dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        inv_s = inv[order]
        first = np.ones(len(inv_s), dtype=bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        inc[inv_s[first], 0] = tri_idx[order][first]
        inc[inv_s[~first], 1] = tri_idx[order][~first]
        return uniq, inc

    def euler_characteristic(self) -> int:
        e, _ = self.edges()
        used = np.unique(self.triangles)
        return int(len(used) - len(e) + len(self.triangles))

    def boundary_loops(self) -> int:
        """Number of closed loops formed by edges with a single incident triangle."""
        e, inc = self.edges()
        be = e[inc[:, 1] < 0]
        if len(be) == 0:
            return 0
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        nodes, idx = np.unique(be, return_inverse=True)
        idx = idx.reshape(-1, 2)
        adj = coo_matrix((np.ones(len(idx)), (idx[:, 0], idx[:, 1])), shape=(len(nodes),) * 2)
        n, _ = connected_components(adj, directed=False)
        return int(n)

    def max_edge_length(self) -> float:
        c = self.tri_coords
        lengths = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
        return float(lengths.max())

    def triangle_areas(self) -> np.ndarray:
        c = self.tri_coords
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def tri_adjacency(self):
        """Sparse triangle-triangle adjacency through shared edges."""
        from scipy.sparse import coo_matrix

        _, inc = self.edges()
        inner = inc[inc[:, 1] >= 0]
        n = len(self.triangles)
        return coo_matrix((np.ones(len(inner)), (inner[:, 0], inner[:, 1])), shape=(n, n)).tocsr()

    # -- point location ----------------------------------------------------
    def _trees(self):
        cache = self.__dict__.get("_tree_cache")
        if cache is None:
            cache = {}
            cent = self.tri_coords.mean(axis=1)
            for c in np.unique(self.tri_chart):
                ids = np.flatnonzero(self.tri_chart == c)
                cache[int(c)] = (cKDTree(cent[ids]), ids)
            object.__setattr__(self, "_tree_cache", cache)
        return cache

    def locate(self, xy, charts=None, strict: bool = False):
        """Triangle containing each point and its barycentric coordinates.

        Points outside the mesh (e.g. on a curved boundary, just outside the
        inscribed polygon) are assigned the nearest triangle unless
        ``strict``, in which case their index is -1.
        """
        xy = _as_points(xy)
        charts = _as_charts(charts, len(xy))
        n = len(xy)
        tri = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        if self.grid is not None:
            return self._locate_grid(xy)
        best_err = np.full(n, np.inf)
        for c, (tree, ids) in self._trees().items():
            q = xy if self.surface.kind != SPHERE else self.surface.to_chart(xy, charts, c)
            if self.surface.kind == SPHERE:
                ok = np.sum(q**2, axis=1) < SPHERE_CHART_RADIUS**2 * 1.2
            else:
                ok = np.ones(n, dtype=bool)
            if not np.any(ok):
                continue
            k = min(16, len(ids))
            _, cand = tree.query(q[ok], k=k)
            cand = ids[cand.reshape(len(cand), -1)]
            corners = self.tri_coords[cand]  # (m, k, 3, 2)
            b = _barycentric(corners, q[ok][:, None, :])
            err = np.maximum(-b.min(axis=2), 0.0)
            pick = np.argmin(err, axis=1)
            rows = np.arange(len(pick))
            e = err[rows, pick]
            idx_ok = np.flatnonzero(ok)
            better = e < best_err[idx_ok]
            sel = idx_ok[better]
            tri[sel] = cand[rows[better], pick[better]]
            bary[sel] = b[rows[better], pick[better]]
            best_err[sel] = e[better]
        if strict:
            tri[best_err > 1e-9] = -1
        return tri, bary

    def _locate_grid(self, xy):
        g = self.grid
        x0, y0, dx, dy, nx, ny = g["x0"], g["y0"], g["dx"], g["dy"], g["nx"], g["ny"]
        px, py = self.surface.periods
        p = self.surface.wrap(xy)
        fx = (p[:, 0] - x0) / dx
        fy = (p[:, 1] - y0) / dy
        i = np.floor(fx).astype(np.int64)
        j = np.floor(fy).astype(np.int64)
        i = np.mod(i, nx) if px is not None else np.clip(i, 0, nx - 1)
        j = np.mod(j, ny) if py is not None else np.clip(j, 0, ny - 1)
        u = fx - np.floor(fx) if px is not None else fx - i
        v = fy - np.floor(fy) if py is not None else fy - j
        upper = v > u
        tri = 2 * (j * nx + i) + upper.astype(np.int64)
        corners = self.tri_coords[tri]
        # shift query into the triangle's unwrapped frame
        q = np.column_stack([x0 + (i + u) * dx, y0 + (j + v) * dy])
        b = _barycentric(corners[:, None], q[:, None, :])[:, 0]
        return tri, b

    def interpolate(self, xy, charts=None) -> np.ndarray:
        """Piecewise-linear interpolation of vertex values."""
        tri, b = self.locate(xy, charts)
        return np.sum(self.values[self.triangles[tri]] * b, axis=1)

    # -- serialization -----------------------------------------------------
    def to_text(self) -> str:
        lines = ["hamreeb-mesh 1", f"kind {self.surface.kind}", f"resolution {self.resolution:.17g}",
                 f"vertices {self.n_vertices}"]
        for (x, y), c, b in zip(self.vertices, self.vertex_chart, self.boundary_ids):
            lines.append(f"{c} {x:.17g} {y:.17g} {b}")
        lines.append(f"triangles {len(self.triangles)}")
        for t in self.triangles:
            lines.append(f"{t[0]} {t[1]} {t[2]}")
        if self.values is not None:
            lines.append(f"values {self.n_vertices}")
            lines.extend(f"{v:.17g}" for v in self.values)
        return "\n".join(lines) + "\n"


def read_mesh_arrays(text: str) -> dict:
    """Parse :meth:`TriMesh.to_text` output into plain arrays."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("hamreeb-mesh"):
        raise ValueError("not a hamreeb mesh file")
    pos = 1
    out = {}
    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if head[0] in ("kind", "resolution"):
            out[head[0]] = head[1]
        elif head[0] == "vertices":
            n = int(head[1])
            rows = [lines[pos + k].split() for k in range(n)]
            pos += n
            out["vertex_chart"] = np.array([int(r[0]) for r in rows])
            out["vertices"] = np.array([[float(r[1]), float(r[2])] for r in rows])
            out["boundary_ids"] = np.array([int(r[3]) for r in rows])
        elif head[0] == "triangles":
            n = int(head[1])
            out["triangles"] = np.array([[int(v) for v in lines[pos + k].split()] for k in range(n)])
            pos += n
        elif head[0] == "values":
            n = int(head[1])
            out["values"] = np.array([float(lines[pos + k]) for k in range(n)])
            pos += n
    return out


def _barycentric(corners: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Barycentric coordinates; ``corners`` (..., 3, 2), ``q`` (..., 2)."""
    a, b, c = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    v0 = b - a
    v1 = c - a
    v2 = q - a
    det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
    l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
    l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=-1)


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = poly[:, 0][None, :], poly[:, 1][None, :]
    x2, y2 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return np.sum(cond & (x < xint), axis=1) % 2 == 1


def _resample_closed(curve, length_hint: float, h: float) -> np.ndarray:
    dense = curve(np.linspace(0, 1, max(2048, int(20 * length_hint / h)), endpoint=False))
    seg = np.linalg.norm(np.diff(np.vstack([dense, dense[:1]]), axis=0), axis=1)
    s = np.concatenate([[0], np.cumsum(seg)])
    total = s[-1]
    n = max(8, int(math.ceil(total / h)))
    target = np.linspace(0, total, n, endpoint=False)
    tt = np.interp(target, s, np.linspace(0, 1, len(s)))
    return curve(tt)


def _check_separation(points, h: float):
    pts = [np.asarray(p, dtype=float) for p in points]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < 3 * h:
                raise ValueError(
                    f"resolution {h} too coarse to separate critical points {pts[i]} and {pts[j]}"
                )


def triangulate(surface: SurfaceModel, resolution: float, seed: int = 0,
                pinned=None) -> TriMesh:
    """Triangulate a model surface with target edge length ``resolution``.

    ``pinned`` is an optional list of ``(xy, chart)`` points (typically
    critical points) inserted as mesh vertices.
    """
    h = float(resolution)
    if not h > 0:
        raise ValueError("resolution must be positive")
    pinned = list(pinned or [])
    if surface.kind == SPHERE:
        xyz = [sphere_to_xyz(np.asarray(p), [c])[0] for p, c in pinned]
        _check_separation(xyz, h)
        return _triangulate_sphere(surface, h, seed, xyz)
    _check_separation([p for p, _ in pinned], h)
    if surface.kind in (ANNULUS, TORUS):
        return _triangulate_periodic(surface, h, seed, [np.asarray(p, float) for p, _ in pinned])
    return _triangulate_planar(surface, h, seed, [np.asarray(p, float) for p, _ in pinned])


def _triangulate_planar(surface, h, seed, pinned) -> TriMesh:
    rng = np.random.default_rng(seed)
    b = surface.boundary[0]
    # nominal spacing below h keeps boundary-band edges under 1.5 h
    h_req = h
    h = 0.9 * h
    bpts = _resample_closed(b.curve, b.length_hint, h)
    x0, x1, y0, y1 = surface.charts[0].bounding_box()
    dy = h * np.sqrt(3) / 2
    rows = np.arange(y0, y1 + dy, dy)
    lattice = []
    for k, y in enumerate(rows):
        xs = np.arange(x0 + (0.5 * h if k % 2 else 0.0), x1 + h, h)
        lattice.append(np.column_stack([xs, np.full_like(xs, y)]))
    lattice = np.vstack(lattice)
    lattice += rng.uniform(-0.02 * h, 0.02 * h, lattice.shape)
    inside = _points_in_polygon(lattice, bpts)
    lattice = lattice[inside]
    dense = b.curve(np.linspace(0, 1, max(4096, int(40 * b.length_hint / h)), endpoint=False))
    dist, _ = cKDTree(dense).query(lattice)
    lattice = lattice[dist > 0.35 * h]
    if pinned:
        pp = np.array(pinned)
        dpin, _ = cKDTree(pp).query(lattice)
        lattice = lattice[dpin > 0.5 * h]
        interior = np.vstack([pp, lattice])
    else:
        interior = lattice
    verts = np.vstack([interior, bpts])
    bids = np.concatenate([np.full(len(interior), -1), np.zeros(len(bpts), dtype=int)])
    tri = Delaunay(verts).simplices
    cent = verts[tri].mean(axis=1)
    tri = tri[_points_in_polygon(cent, bpts)]
    tri = _orient(verts, tri)
    tri = tri[_signed_area(verts[tri]) > 1e-14 * h * h]
    return TriMesh(surface, verts, np.zeros(len(verts), dtype=int), tri,
                   np.zeros(len(tri), dtype=int), verts[tri], bids, h_req, seed)


def _signed_area(c):
    d1 = c[:, 1] - c[:, 0]
    d2 = c[:, 2] - c[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _orient(verts, tri):
    tri = tri.copy()
    neg = _signed_area(verts[tri]) < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def _triangulate_periodic(surface, h, seed, pinned) -> TriMesh:
    x0, x1, y0, y1 = surface.charts[0].bounds
    px, py = surface.periods
    lx, ly = x1 - x0, y1 - y0
    nx = max(3, int(math.ceil(lx / h)))
    if nx % 2:
        nx += 1
    ny = max(3, int(math.ceil(ly / h)))
    if ny % 2:
        ny += 1
    dx, dy = lx / nx, ly / ny
    nrow = ny if py is not None else ny + 1
    ii, jj = np.meshgrid(np.arange(nx), np.arange(nrow))
    ii, jj = ii.ravel(), jj.ravel()
    verts = np.column_stack([x0 + ii * dx, y0 + jj * dy])
    for p in pinned:
        q = surface.wrap(p)[0]
        k = int(np.argmin(np.sum(surface.periodic_delta(verts, q) ** 2, axis=1)))
        if np.linalg.norm(surface.periodic_delta(verts[k], q)) > 0.35 * max(dx, dy):
            raise ValueError("pinned point could not be snapped onto the periodic grid")
        verts[k] = q

    def vid(i, j):
        return (j % nrow) * nx + (i % nx)

    tris = []
    coords = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            base = np.array([x0 + i * dx, y0 + j * dy])
            ca = base
            cb = base + [dx, 0]
            cc = base + [dx, dy]
            cd = base + [0, dy]
            tris.append((a, b, c))
            coords.append((ca, cb, cc))
            tris.append((a, c, d))
            coords.append((ca, cc, cd))
    tris = np.array(tris, dtype=np.int64)
    coords = np.array(coords)
    # pinned vertices moved slightly; keep triangle corners consistent with them
    moved = verts[tris]
    shift = surface.periodic_delta(moved.reshape(-1, 2), coords.reshape(-1, 2)).reshape(coords.shape)
    coords = coords + shift
    bids = np.full(len(verts), -1)
    if py is None:
        bids[jj == 0] = 0
        bids[jj == ny] = 1
    grid = {"x0": x0, "y0": y0, "dx": dx, "dy": dy, "nx": nx, "ny": ny}
    return TriMesh(surface, verts, np.zeros(len(verts), dtype=int), tris,
                   np.zeros(len(tris), dtype=int), coords, bids, h, seed, grid=grid)


def _triangulate_sphere(surface, h, seed, pinned_xyz) -> TriMesh:
    n = max(20, int(math.ceil(4 * np.pi / (0.5 * np.sqrt(3) * h * h))))
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (3 - np.sqrt(5)) * k + 2 * np.pi * np.random.default_rng(seed).uniform()
    r = np.sqrt(1 - z * z)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    if pinned_xyz:
        pp = np.array(pinned_xyz)
        d, _ = cKDTree(pp).query(pts)
        pts = np.vstack([pp, pts[d > 0.5 * h]])
    hull = ConvexHull(pts)
    tri = hull.simplices.copy()
    cent3 = pts[tri].mean(axis=1)
    normal = np.cross(pts[tri[:, 1]] - pts[tri[:, 0]], pts[tri[:, 2]] - pts[tri[:, 0]])
    flip = np.sum(normal * cent3, axis=1) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    verts, vchart = xyz_to_sphere(pts)
    tchart = np.where(cent3[:, 2] <= 0, 0, 1)
    coords = np.empty((len(tri), 3, 2))
    for c in (0, 1):
        m = tchart == c
        flat = tri[m].ravel()
        coords[m] = surface.to_chart(verts[flat], vchart[flat], c).reshape(-1, 3, 2)
    area = _signed_area(coords)
    # stereographic orientation relative to the outward normal is the same in both charts
    if np.median(area) < 0:
        tri = tri[:, [0, 2, 1]]
        coords = coords[:, [0, 2, 1]]
    return TriMesh(surface, verts, vchart, tri, tchart, coords,
                   np.full(len(verts), -1), h, seed)


# ---------------------------------------------------------------------------
# quadrature


def _clip_polygons(coords: np.ndarray, phi: np.ndarray):
    """Clip triangles to ``phi <= 0`` (phi linear).  Returns list of sub-triangles
    as (M, 3, 2) coords with the owning triangle index (M,)."""
    neg = phi <= 0
    cnt = neg.sum(axis=1)
    out_c = []
    out_t = []
    full = np.flatnonzero(cnt == 3)
    out_c.append(coords[full])
    out_t.append(full)

    def cut(p, q, fp, fq):
        t = fp / (fp - fq)
        return p + t[:, None] * (q - p)

    # one vertex inside: a triangle
    one = np.flatnonzero(cnt == 1)
    if len(one):
        k = np.argmax(neg[one], axis=1)
        a = coords[one, k]
        b = coords[one, (k + 1) % 3]
        c = coords[one, (k + 2) % 3]
        fa = phi[one, k]
        fb = phi[one, (k + 1) % 3]
        fc = phi[one, (k + 2) % 3]
        ab = cut(a, b, fa, fb)
        ac = cut(a, c, fa, fc)
        out_c.append(np.stack([a, ab, ac], axis=1))
        out_t.append(one)
    # two vertices inside: a quadrilateral, split into two triangles
    two = np.flatnonzero(cnt == 2)
    if len(two):
        k = np.argmin(neg[two], axis=1)  # the outside vertex
        a = coords[two, k]
        b = coords[two, (k + 1) % 3]
        c = coords[two, (k + 2) % 3]
        fa = phi[two, k]
        fb = phi[two, (k + 1) % 3]
        fc = phi[two, (k + 2) % 3]
        ab = cut(b, a, fb, fa)
        ac = cut(c, a, fc, fa)
        out_c.append(np.stack([ab, b, c], axis=1))
        out_t.append(two)
        out_c.append(np.stack([ab, c, ac], axis=1))
        out_t.append(two)
    return np.concatenate(out_c, axis=0), np.concatenate(out_t)


def integrate_density(mesh: TriMesh, form: AreaForm, phi=None, tri_mask=None) -> float:
    """omega-area of ``{phi <= 0}`` (phi given per vertex, linearly interpolated).

    ``phi=None`` integrates over the whole mesh; ``tri_mask`` restricts to a
    subset of triangles.  The density is replaced by its linear
    interpolant on each triangle and clipped along with the corners, so
    the result is exactly additive over complementary regions.
    """
    if len(mesh.triangles) == 0:
        raise ValueError("empty mesh")
    coords = mesh.tri_coords
    charts = mesh.tri_chart
    if tri_mask is not None:
        tri_mask = np.asarray(tri_mask)
        tri_ids = np.arange(len(mesh.triangles))[tri_mask] if tri_mask.dtype == bool else tri_mask
        coords = coords[tri_ids]
        charts = charts[tri_ids]
    else:
        tri_ids = slice(None)
    if len(coords) == 0:
        return 0.0
    gam = form.density(coords.reshape(-1, 2), np.repeat(charts, 3)).reshape(-1, 3, 1)
    lifted = np.concatenate([coords, gam], axis=2)
    if phi is not None:
        phi = np.asarray(phi, dtype=float)[mesh.triangles[tri_ids]]
        lifted, _ = _clip_polygons(lifted, phi)
        if len(lifted) == 0:
            return 0.0
    area = _signed_area(lifted[..., :2])
    return float(np.sum(area * lifted[..., 2].mean(axis=1)))
