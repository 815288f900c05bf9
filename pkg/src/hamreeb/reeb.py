"""Kronrod-Reeb graphs of fields on triangulated surfaces and functions on them.

The graph is built in rank space (vertex order after symbolic
perturbation).  Every critical value and every boundary value defines a
band of ranks; the open rank intervals between consecutive bands are
slabs.  Connected pieces of each slab are cylinders of regular level
components, and pieces on either side of a regular component of a band
are glued into one graph edge.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .fields import CIRCLE, DECLARED, MAX, MIN, SADDLE, CriticalPoint, ScalarField
from .surface import SurfaceModel, TriMesh, _as_charts, _as_points, triangulate

log = logging.getLogger(__name__)

NODE_MIN = "Min"
NODE_MAX = "Max"
NODE_SADDLE = "Saddle"
NODE_BOUNDARY = "BoundaryLevel"
NODE_DEGENERATE = "DegenerateDeclared"
NODE_CUT = "Cut"

_KIND_OF = {MIN: NODE_MIN, MAX: NODE_MAX, SADDLE: NODE_SADDLE, DECLARED: NODE_DEGENERATE}


class ReebError(ValueError):
    """The mesh does not resolve the critical structure given to it."""


class DiscontinuousGraphFunction(ValueError):
    pass


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class ReebNode:
    id: int
    kind: str
    value: float
    critical: list = field(default_factory=list)
    boundary: list = field(default_factory=list)


@dataclass
class ReebEdge:
    id: int
    lower: int
    upper: int
    f_range: tuple


@dataclass(frozen=True)
class GraphPoint:
    edge: int = -1
    param: float = float("nan")
    node: int = -1

    @property
    def is_node(self) -> bool:
        return self.node >= 0


def mesh_for_field(surface: SurfaceModel, f: ScalarField, crit_list, resolution: float,
                   seed: int = 0) -> TriMesh:
    """Triangulate with the critical points pinned as vertices, then sample ``f``."""
    pinned = [(np.asarray(cp.position, dtype=float), cp.chart) for cp in crit_list]
    return triangulate(surface, resolution, seed, pinned).sample_field(f)


def _tri_components(n_tri, tri_mask, edge_tris, edge_mask):
    """Connected components of masked triangles glued across masked edges."""
    ids = np.flatnonzero(tri_mask)
    local = np.full(n_tri, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    a, b = edge_tris[:, 0], edge_tris[:, 1]
    use = edge_mask & (b >= 0)
    use &= tri_mask[a] & tri_mask[np.where(b >= 0, b, 0)]
    ia, ib = local[a[use]], local[b[use]]
    g = coo_matrix((np.ones(len(ia)), (ia, ib)), shape=(len(ids), len(ids)))
    n, lab = connected_components(g, directed=False)
    labels = np.full(n_tri, -1, dtype=np.int64)
    labels[ids] = lab
    return labels, n


def _bfs_fill(labels, adjacency):
    """Extend a partial triangle labelling to all triangles by nearest labelled triangle."""
    if np.all(labels >= 0):
        return labels
    src = np.flatnonzero(labels >= 0)
    if not len(src):
        return labels
    _, _, sources = dijkstra(adjacency, directed=False, indices=src, unweighted=True,
                             min_only=True, return_predecessors=True)
    out = labels.copy()
    ok = sources >= 0
    out[ok] = labels[sources[ok]]
    return out


def pl_critical_vertices(mesh: TriMesh) -> dict:
    """Interior PL critical vertices by link analysis: ``{index: kind}``."""
    ranks = mesh.ranks()
    t = mesh.triangles
    n = mesh.n_vertices
    changes = np.zeros(n, dtype=np.int64)
    upper = np.zeros(n, dtype=np.int64)
    lower = np.zeros(n, dtype=np.int64)
    for k in range(3):
        v = t[:, k]
        a = t[:, (k + 1) % 3]
        b = t[:, (k + 2) % 3]
        ua = ranks[a] > ranks[v]
        ub = ranks[b] > ranks[v]
        np.add.at(changes, v, (ua != ub).astype(np.int64))
        np.add.at(upper, v, (ua | ub).astype(np.int64))
        np.add.at(lower, v, (~ua | ~ub).astype(np.int64))
    out = {}
    interior = ~mesh.boundary_flags
    for i in np.flatnonzero(interior):
        if lower[i] == 0:
            out[int(i)] = NODE_MIN
        elif upper[i] == 0:
            out[int(i)] = NODE_MAX
        elif changes[i] >= 4:
            out[int(i)] = NODE_SADDLE
    return out


def _key_vertex(mesh: TriMesh, cp: CriticalPoint, nbrs) -> int:
    tri, bary = mesh.locate(np.asarray(cp.position, dtype=float)[None, :], cp.chart)
    v = int(mesh.triangles[tri[0], int(np.argmax(bary[0]))])
    # walk to the PL extremum for minima and maxima
    if cp.kind in (MIN, MAX):
        sign = 1.0 if cp.kind == MIN else -1.0
        vals = mesh.values
        for _ in range(50):
            cand = nbrs[v]
            best = cand[np.argmin(sign * vals[cand])] if len(cand) else v
            if sign * vals[best] < sign * vals[v]:
                v = int(best)
            else:
                break
    return v


class ReebGraph:
    """Kronrod-Reeb graph of a field sampled on a mesh.

    Use :func:`build_reeb_graph` to construct one.
    """

    def __init__(self, mesh, f, nodes, edges, circle_cut=None, critical=()):
        self.mesh = mesh
        self.critical = list(critical)
        self.field = f
        self.nodes = nodes
        self.edges = edges
        self.circle_cut = circle_cut
        self.diagnostics: dict = {}
        # filled by the builder for real-valued fields
        self._band_values = np.zeros(0)
        self._slab_edge = []
        self._band_label = []
        self._band_node = []
        self._edge_tris = {}

    # -- summaries ------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, node_id: int) -> int:
        return sum((e.lower == node_id) + (e.upper == node_id) for e in self.edges)

    def is_connected(self) -> bool:
        uf = _UnionFind(self.n_nodes)
        for e in self.edges:
            uf.union(e.lower, e.upper)
        return len({uf.find(i) for i in range(self.n_nodes)}) <= 1

    def betti1(self) -> int:
        uf = _UnionFind(self.n_nodes)
        for e in self.edges:
            uf.union(e.lower, e.upper)
        comps = len({uf.find(i) for i in range(self.n_nodes)})
        return self.n_edges - self.n_nodes + comps

    def kinds(self) -> list:
        return [n.kind for n in self.nodes]

    def signature(self) -> tuple:
        """Isomorphism-invariant summary: sorted node kinds with degrees, and Betti number."""
        return (tuple(sorted((n.kind, round(n.value, 9), self.degree(n.id)) for n in self.nodes)),
                self.n_edges, self.betti1())

    # -- export ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "kind": n.kind, "value": float(n.value)} for n in self.nodes],
            "edges": [{"id": e.id, "from": e.lower, "to": e.upper} for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_dot(self) -> str:
        lines = ["graph reeb {"]
        for n in self.nodes:
            lines.append(f'  n{n.id} [label="{n.kind} {n.value:.6g}"];')
        for e in self.edges:
            lines.append(f'  n{e.lower} -- n{e.upper} [label="e{e.id}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # -- quotient map -----------------------------------------------------
    def _edge_param(self, eid: int, fv):
        e = self.edges[eid]
        lo, hi = e.f_range
        if self.circle_cut is not None:
            per = self.field.period
            return np.mod(np.asarray(fv) - self.circle_cut, per) / per
        return (np.asarray(fv) - lo) / (hi - lo)

    def quotient(self, xy, charts=None):
        """Vectorised quotient map: arrays ``(edge, param, node)``.

        ``node`` is -1 for edge points and ``edge`` is -1 for node points.
        """
        xy = _as_points(xy)
        charts = _as_charts(charts, len(xy))
        surf = self.mesh.surface
        if surf.kind in ("disk", "sublevel", "annulus"):
            slack = 2 * self.mesh.resolution
            inside = surf.contains(xy) | (surf.boundary_distance(xy) < slack)
            if not np.all(inside):
                raise ValueError("point outside the mesh")
        fv = self.field.value(xy, charts)
        n = len(xy)
        edge = np.full(n, -1, dtype=np.int64)
        node = np.full(n, -1, dtype=np.int64)
        if self.circle_cut is not None:
            d = self.field.wrap_delta(fv - self.circle_cut)
            at = np.abs(d) <= self._node_tol
            node[at] = 0
            edge[~at] = 0
            param = np.where(at, np.nan, self._edge_param(0, fv))
            return edge, param, node
        tri, _ = self.mesh.locate(xy, charts)
        bands = self._band_values
        near = np.abs(fv[:, None] - bands[None, :]) <= self._node_tol
        for k in range(len(bands)):
            m = near[:, k] & (node < 0)
            if np.any(m):
                lab = self._band_node[k][tri[m]]
                node[np.flatnonzero(m)[lab >= 0]] = lab[lab >= 0]
        slab = np.searchsorted(bands, fv, side="right") - 1
        slab = np.clip(slab, 0, len(bands) - 2)
        todo = node < 0
        for k in np.unique(slab[todo]):
            m = todo & (slab == k)
            edge[m] = self._slab_edge[k][tri[m]]
        param = np.full(n, np.nan)
        for eid in np.unique(edge[edge >= 0]):
            m = edge == eid
            param[m] = np.clip(self._edge_param(int(eid), fv[m]), 0.0, 1.0)
        return edge, param, node

    def quotient_point(self, x, chart: int = 0) -> GraphPoint:
        e, s, nd = self.quotient(np.asarray(x, dtype=float)[None, :], chart)
        if nd[0] >= 0:
            return GraphPoint(node=int(nd[0]))
        return GraphPoint(edge=int(e[0]), param=float(s[0]))

    # -- level components --------------------------------------------------
    def contour_points(self, eid: int, s: float, newton: bool = True):
        """Points ``(xy, charts)`` on the level component of edge ``eid`` at parameter ``s``."""
        e = self.edges[eid]
        lo, hi = e.f_range
        v = lo + s * (hi - lo)
        mesh = self.mesh
        vals = mesh.values[mesh.triangles]
        d = vals - v
        if self.circle_cut is not None:
            d = self.field.wrap_delta(d)
            ok = (np.ptp(d, axis=1) < 0.5 * self.field.period)
            cand = np.flatnonzero(ok & (d.min(1) <= 0) & (d.max(1) >= 0))
        else:
            cand = np.flatnonzero((d.min(1) <= 0) & (d.max(1) >= 0))
            cand = cand[np.isin(cand, self._edge_tris[eid])]
        if not len(cand):
            raise ReebError(f"no triangles cross parameter {s} on edge {eid}")
        pts, chs = [], []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            da, db = d[cand, a], d[cand, b]
            cross = (da <= 0) != (db <= 0)
            if not np.any(cross):
                continue
            w = da[cross] / (da[cross] - db[cross])
            pa = mesh.tri_coords[cand[cross], a]
            pb = mesh.tri_coords[cand[cross], b]
            pts.append(pa + w[:, None] * (pb - pa))
            chs.append(mesh.tri_chart[cand[cross]])
        xy = np.concatenate(pts)
        ch = np.concatenate(chs)
        if newton:
            xy = _newton_to_level(self.field, xy, ch, v)
        xy, ch = mesh.surface.normalize(xy, ch)
        return xy, ch

    def edge_point(self, eid: int, s: float):
        """One surface point ``(xy, chart)`` on edge ``eid`` at parameter ``s``."""
        xy, ch = self.contour_points(eid, s)
        return xy[0], int(ch[0])


def _newton_to_level(f: ScalarField, xy, charts, level, iters: int = 8):
    xy = xy.copy()
    for _ in range(iters):
        r = f.wrap_delta(f.value(xy, charts) - level)
        g = f.grad(xy, charts)
        n2 = np.sum(g * g, axis=1)
        ok = n2 > 1e-24
        xy[ok] -= (r[ok] / n2[ok])[:, None] * g[ok]
        if np.max(np.abs(r)) < 1e-15:
            break
    return xy


def build_reeb_graph(mesh: TriMesh, crit_list, f: ScalarField, strict: bool = False) -> ReebGraph:
    """Kronrod-Reeb graph of ``f`` (sampled as ``mesh.values``) given its critical points.

    Raises :class:`ReebError` when the mesh shows extrema or junctions not
    accounted for by ``crit_list`` (resolution too coarse).  Spurious PL
    saddles that do not change the graph are recorded in
    ``diagnostics`` and only raise when ``strict``.
    """
    if mesh.values is None:
        mesh = mesh.sample_field(f)
    crit_list = list(crit_list)
    if f.codomain == CIRCLE:
        return _circle_graph(mesh, crit_list, f)
    values = mesh.values
    ranks = mesh.ranks()
    tris = mesh.triangles
    n_tri = len(tris)
    uniq_edges, edge_tris = mesh.edges()
    tr = ranks[tris]
    tmin, tmax = tr.min(1), tr.max(1)
    er = ranks[uniq_edges]
    emin, emax = er.min(1), er.max(1)
    scale = max(float(np.ptp(values)), 1e-300)
    eps = 1e-9 * max(scale, 1.0)

    nbrs = [[] for _ in range(mesh.n_vertices)]
    for a, b in uniq_edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    nbrs = [np.asarray(x, dtype=np.int64) for x in nbrs]
    vtri = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vtri[tris.ravel()] = np.repeat(np.arange(n_tri), 3)

    # candidate bands: (lo value, hi value, key vertices, crit ids, boundary ids)
    cands = []
    for i, cp in enumerate(crit_list):
        v = _key_vertex(mesh, cp, nbrs)
        cands.append([values[v] - eps, values[v] + eps, [v], [i], []])
    for bid in np.unique(mesh.boundary_ids[mesh.boundary_ids >= 0]):
        vs = np.flatnonzero(mesh.boundary_ids == bid)
        bv = values[vs]
        if np.ptp(bv) > 1e-6 * max(scale, 1.0):
            raise ReebError(f"field is not constant on boundary component {bid}")
        cands.append([bv.min() - eps, bv.max() + eps, list(vs), [], [int(bid)]])
    if not cands:
        raise ReebError("no critical points or boundary levels")
    cands.sort(key=lambda c: c[0])
    bands = [cands[0]]
    for c in cands[1:]:
        if c[0] <= bands[-1][1]:
            b = bands[-1]
            b[1] = max(b[1], c[1])
            b[2] += c[2]
            b[3] += c[3]
            b[4] += c[4]
        else:
            bands.append(c)

    order = np.argsort(ranks)
    sorted_vals = values[order]
    band_rank = []
    for lo_v, hi_v, keys, _, _ in bands:
        lo = int(np.searchsorted(sorted_vals, lo_v, side="left"))
        hi = int(np.searchsorted(sorted_vals, hi_v, side="right")) - 1
        kr = ranks[keys]
        lo, hi = min(lo, int(kr.min())), max(hi, int(kr.max()))
        band_rank.append((lo, hi))
    if band_rank[0][0] > 0 or band_rank[-1][1] < mesh.n_vertices - 1:
        raise ReebError("mesh extremum not covered by the critical points "
                        "(missing critical point or resolution too coarse)")

    # level components of each band, and which are nodes
    nodes: list = []
    band_labels, band_nodes, node_comp = [], [], []
    for k, ((lo, hi), band) in enumerate(zip(band_rank, bands)):
        tmask = (tmax >= lo) & (tmin <= hi)
        emask = (emax >= lo) & (emin <= hi)
        lab, ncomp = _tri_components(n_tri, tmask, edge_tris, emask)
        comp_node = np.full(ncomp, -1, dtype=np.int64)
        keys, crit_ids, bids = band[2], band[3], band[4]
        members = {}
        for i in crit_ids:
            v = _key_vertex(mesh, crit_list[i], nbrs)
            members.setdefault(int(lab[vtri[v]]), ([], []))[0].append(i)
        for bid in bids:
            vs = np.flatnonzero(mesh.boundary_ids == bid)
            for comp in np.unique(lab[vtri[vs]]):
                members.setdefault(int(comp), ([], []))[1].append(bid)
        for comp in sorted(members):
            cids, bl = members[comp]
            kinds = {_KIND_OF.get(crit_list[i].kind, NODE_DEGENERATE) for i in cids}
            if bl:
                kind = NODE_BOUNDARY
            elif len(kinds) == 1:
                kind = kinds.pop()
            elif NODE_SADDLE in kinds:
                kind = NODE_SADDLE
            else:
                kind = NODE_DEGENERATE
            value = float(np.mean([crit_list[i].value for i in cids])) if cids else \
                float(np.mean(values[np.isin(mesh.boundary_ids, bl)]))
            comp_node[comp] = len(nodes)
            nodes.append(ReebNode(len(nodes), kind, value, sorted(cids), sorted(set(bl))))
        band_labels.append(lab)
        band_nodes.append(comp_node)
        node_comp.append(comp_node)

    # slab pieces
    slab_labels, slab_offsets = [], []
    total = 0
    for k in range(len(bands) - 1):
        a, b = band_rank[k][1], band_rank[k + 1][0]
        tmask = (tmax > a) & (tmin < b)
        emask = (emax > a) & (emin < b)
        lab, ncomp = _tri_components(n_tri, tmask, edge_tris, emask)
        slab_labels.append(lab)
        slab_offsets.append(total)
        total += ncomp

    uf = _UnionFind(total)
    contacts = {}  # slab piece -> set of (band, level comp)
    for k, lab in enumerate(slab_labels):
        for band in (k, k + 1):
            both = (lab >= 0) & (band_labels[band] >= 0)
            pairs = np.unique(np.column_stack([lab[both], band_labels[band][both]]), axis=0)
            for piece, comp in pairs:
                contacts.setdefault(int(piece) + slab_offsets[k], set()).add((band, int(comp)))
    by_regular = {}
    for piece, cs in contacts.items():
        for band, comp in cs:
            if node_comp[band][comp] < 0:
                by_regular.setdefault((band, comp), []).append(piece)
    for pieces in by_regular.values():
        for p in pieces[1:]:
            uf.union(pieces[0], p)

    classes = {}
    for piece in range(total):
        classes.setdefault(uf.find(piece), []).append(piece)
    edges = []
    class_edge = {}
    for root in sorted(classes):
        ends = set()
        for piece in classes[root]:
            for band, comp in contacts.get(piece, ()):
                nid = node_comp[band][comp]
                if nid >= 0:
                    ends.add((band, int(nid)))
        if len(ends) != 2 or len({b for b, _ in ends}) != 2:
            raise ReebError(
                "a cylinder of regular levels meets "
                f"{len(ends)} singular components; the mesh does not resolve the critical "
                "structure (missing critical point or resolution too coarse)")
        (b0, n0), (b1, n1) = sorted(ends)
        class_edge[root] = (n0, n1)
    # deterministic edge ids
    ordered = sorted(class_edge.items(), key=lambda kv: (kv[1], kv[0]))
    edge_of_root = {}
    for eid, (root, (n0, n1)) in enumerate(ordered):
        edges.append(ReebEdge(eid, n0, n1, (nodes[n0].value, nodes[n1].value)))
        edge_of_root[root] = eid

    g = ReebGraph(mesh, f, nodes, edges, critical=crit_list)
    g._node_tol = 1e-12 * max(scale, 1.0)
    g._band_values = np.array([np.mean([nodes[n].value for n in set(bn[bn >= 0])])
                               if np.any(bn >= 0) else 0.5 * (b[0] + b[1])
                               for bn, b in zip(band_nodes, bands)])
    adj = mesh.tri_adjacency()
    piece_edge = np.empty(total, dtype=np.int64)
    for piece in range(total):
        piece_edge[piece] = edge_of_root[uf.find(piece)]
    g._slab_edge = []
    edge_tris_map = {e.id: [] for e in edges}
    for k, lab in enumerate(slab_labels):
        filled = _bfs_fill(lab, adj)
        emap = np.where(filled >= 0, piece_edge[np.maximum(filled, 0) + slab_offsets[k]], -1)
        g._slab_edge.append(emap)
        for eid in np.unique(emap[lab >= 0]):
            edge_tris_map[int(eid)].append(np.flatnonzero((lab >= 0) & (emap == eid)))
    g._edge_tris = {k: np.unique(np.concatenate(v)) if v else np.zeros(0, np.int64)
                    for k, v in edge_tris_map.items()}
    g._band_node = []
    for lab, comp_node in zip(band_labels, band_nodes):
        lab_node = np.where(lab >= 0, comp_node[np.maximum(lab, 0)], -1)
        g._band_node.append(lab_node)

    # cross-check PL critical vertices against the supplied list
    pl = pl_critical_vertices(mesh)
    keys = {_key_vertex(mesh, cp, nbrs) for cp in crit_list}
    spurious = {v: k for v, k in pl.items() if v not in keys}
    g.diagnostics = {"pl_critical": len(pl), "spurious_pl_critical": len(spurious),
                     "bands": len(bands), "slab_pieces": total}
    if spurious:
        log.info("%d PL critical vertices not in the critical list", len(spurious))
        if strict:
            raise ReebError(f"{len(spurious)} spurious PL critical vertices")
    return g


def _circle_graph(mesh, crit_list, f) -> ReebGraph:
    if crit_list:
        raise ReebError("circle-valued fields are supported only without critical points")
    if np.any(mesh.boundary_flags):
        raise ReebError("circle-valued fields are supported only on closed surfaces")
    cut = 0.0
    nodes = [ReebNode(0, NODE_CUT, cut)]
    edges = [ReebEdge(0, 0, 0, (cut, cut + f.period))]
    g = ReebGraph(mesh, f, nodes, edges, circle_cut=cut)
    g._node_tol = 1e-12 * f.period
    g.diagnostics = {"pl_critical": 0, "spurious_pl_critical": 0, "bands": 1, "slab_pieces": 1}
    return g


# ---------------------------------------------------------------------------
# functions on the graph


@dataclass
class GraphFunction:
    """A continuous function on a Reeb graph.

    ``edge_profiles[e] = (params, values)`` is piecewise linear in the
    edge parameter with ``params[0] == 0`` and ``params[-1] == 1``.
    """

    node_values: dict
    edge_profiles: dict

    def validate(self, reeb: ReebGraph, tol: float = 1e-9) -> "GraphFunction":
        for e in reeb.edges:
            if e.id not in self.edge_profiles:
                raise ValueError(f"missing profile for edge {e.id}")
            s, v = self.edge_profiles[e.id]
            s = np.asarray(s, dtype=float)
            v = np.asarray(v, dtype=float)
            if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
                raise ValueError(f"edge {e.id}: parameters must increase from 0 to 1")
            if abs(v[0] - self.node_values[e.lower]) > tol or abs(v[-1] - self.node_values[e.upper]) > tol:
                raise DiscontinuousGraphFunction(
                    f"edge {e.id} profile does not meet its end-node values")
        return self

    def edge_value(self, eid: int, s):
        ps, vs = self.edge_profiles[eid]
        return np.interp(s, ps, vs)

    def edge_slope(self, eid: int, s):
        """Derivative of the profile in the edge parameter (right-continuous)."""
        ps, vs = (np.asarray(a, dtype=float) for a in self.edge_profiles[eid])
        slopes = np.diff(vs) / np.diff(ps)
        k = np.clip(np.searchsorted(ps, s, side="right") - 1, 0, len(slopes) - 1)
        return slopes[k]

    def evaluate(self, point: GraphPoint) -> float:
        if point.is_node:
            return float(self.node_values[point.node])
        return float(self.edge_value(point.edge, point.param))

    @classmethod
    def constant(cls, reeb: ReebGraph, c: float) -> "GraphFunction":
        return cls({n.id: float(c) for n in reeb.nodes},
                   {e.id: (np.array([0.0, 1.0]), np.array([c, c], dtype=float)) for e in reeb.edges})

    @classmethod
    def from_node_values(cls, reeb: ReebGraph, node_values: dict, interior=None) -> "GraphFunction":
        """Linear on each edge between node values, plus optional interior breakpoints
        ``interior[e] = (params, values)``."""
        profiles = {}
        for e in reeb.edges:
            ps = [0.0]
            vs = [node_values[e.lower]]
            if interior and e.id in interior:
                ps += list(interior[e.id][0])
                vs += list(interior[e.id][1])
            ps.append(1.0)
            vs.append(node_values[e.upper])
            profiles[e.id] = (np.array(ps, dtype=float), np.array(vs, dtype=float))
        return cls(dict(node_values), profiles)

    @classmethod
    def from_edge_constants(cls, reeb: ReebGraph, constants: dict) -> "GraphFunction":
        """Constant on each edge; node values taken from the incident edges."""
        node_values = {}
        for e in reeb.edges:
            for nid in (e.lower, e.upper):
                c = float(constants[e.id])
                if nid in node_values and node_values[nid] != c:
                    raise DiscontinuousGraphFunction(
                        f"edges meeting at node {nid} carry different constants")
                node_values[nid] = c
        profiles = {e.id: (np.array([0.0, 1.0]), np.full(2, float(constants[e.id])))
                    for e in reeb.edges}
        return cls(node_values, profiles)

    def to_dict(self) -> dict:
        return {
            "nodes": {str(k): float(v) for k, v in sorted(self.node_values.items())},
            "edges": {str(k): {"params": [float(x) for x in p], "values": [float(x) for x in v]}
                      for k, (p, v) in sorted(self.edge_profiles.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "GraphFunction":
        try:
            nodes = {int(k): float(v) for k, v in d["nodes"].items()}
            edges = {int(k): (np.array(v["params"], dtype=float), np.array(v["values"], dtype=float))
                     for k, v in d["edges"].items()}
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise ValueError(f"malformed graph function: {exc}") from None
        return cls(nodes, edges)


def default_collar(reeb: ReebGraph, max_grad: Optional[float] = None) -> float:
    """Width in f of the smoothing collar around nodes."""
    if max_grad is None:
        mesh = reeb.mesh
        g = reeb.field.grad(mesh.vertices, mesh.vertex_chart)
        max_grad = float(np.max(np.linalg.norm(g, axis=1)))
    shortest = min(e.f_range[1] - e.f_range[0] for e in reeb.edges)
    return min(3.0 * reeb.mesh.resolution * max_grad, 0.25 * shortest)


def _smoothstep(u):
    # quintic: C2 at both ends, so finite-difference Jacobians stay O(h^2) across collar edges
    return u ** 3 * (10 - 15 * u + 6 * u * u), 30 * u * u * (1 - u) ** 2


def _lift_values(reeb: ReebGraph, gf: GraphFunction, delta: float, xy, charts):
    """Values of the lift and their derivative with respect to f."""
    edge, param, node = reeb.quotient(xy, charts)
    fv = reeb.field.value(xy, charts)
    out = np.empty(len(xy))
    dq = np.zeros(len(xy))
    at_node = node >= 0
    for nid in np.unique(node[at_node]):
        out[node == nid] = gf.node_values[int(nid)]
    for eid in np.unique(edge[~at_node]):
        m = edge == eid
        e = reeb.edges[int(eid)]
        lo, hi = e.f_range
        s = param[m]
        length = hi - lo
        pf = gf.edge_value(int(eid), s)
        slope = gf.edge_slope(int(eid), s) / length
        val = pf.copy()
        der = slope.copy()
        ft = lo + s * length
        n0, n1 = gf.node_values[e.lower], gf.node_values[e.upper]
        u0 = (ft - lo) / delta
        c0 = u0 < 1
        if np.any(c0):
            w, dw = _smoothstep(u0[c0])
            val[c0] = n0 + w * (pf[c0] - n0)
            der[c0] = dw / delta * (pf[c0] - n0) + w * slope[c0]
        u1 = (hi - ft) / delta
        c1 = u1 < 1
        if np.any(c1):
            w, dw = _smoothstep(u1[c1])
            val[c1] = n1 + w * (pf[c1] - n1)
            der[c1] = -dw / delta * (pf[c1] - n1) + w * slope[c1]
        out[m] = val
        dq[m] = der
    return out, dq


def lift_graph_function(reeb: ReebGraph, gf: GraphFunction, collar: Optional[float] = None,
                        name: str = "lift") -> ScalarField:
    """The function ``x -> gf(p(x))`` on the surface, C2-blended to node values
    over an f-collar of width ``collar`` around every node."""
    gf.validate(reeb)
    delta = default_collar(reeb) if collar is None else float(collar)
    shortest = min(e.f_range[1] - e.f_range[0] for e in reeb.edges)
    delta = min(delta, 0.25 * shortest)
    if not delta > 0:
        raise ValueError("collar width must be positive")
    f = reeb.field
    values, grads = {}, {}
    for c in f.values:
        def val(x, y, c=c):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            return _lift_values(reeb, gf, delta, xy, c)[0]

        def grad(x, y, c=c):
            xy = np.column_stack([np.ravel(x), np.ravel(y)])
            dq = _lift_values(reeb, gf, delta, xy, c)[1]
            return dq[:, None] * f.grad(xy, c)

        values[c], grads[c] = val, grad
    out = ScalarField(name, values, grads)
    object.__setattr__(out, "spec", {"collar": delta})
    return out


@dataclass
class NotConstant:
    """Result of projecting a function that varies along a level component."""

    edge: int
    param: float
    spread: float

    def __bool__(self):
        return False


def default_params(n: int = 9) -> np.ndarray:
    return np.linspace(0.0, 1.0, n + 2)[1:-1]


def project_to_graph_function(alpha: ScalarField, reeb: ReebGraph, tol: float = 1e-8,
                              params=None):
    """Read a function constant on level components as a graph function.

    Samples ``alpha`` on whole level components at ``params`` on every
    edge; a spread above ``tol`` returns :class:`NotConstant`.
    """
    params = default_params() if params is None else np.asarray(params, dtype=float)
    node_values = {}
    for n in reeb.nodes:
        pts, chs = _node_points(reeb, n)
        a = alpha.value(pts, chs)
        if np.ptp(a) > tol:
            return NotConstant(-1, float("nan"), float(np.ptp(a)))
        node_values[n.id] = float(np.mean(a))
    profiles = {}
    for e in reeb.edges:
        vals = []
        for s in params:
            pts, chs = reeb.contour_points(e.id, float(s))
            a = alpha.value(pts, chs)
            spread = float(np.ptp(a))
            if spread > tol:
                return NotConstant(e.id, float(s), spread)
            vals.append(float(np.mean(a)))
        profiles[e.id] = (np.concatenate([[0.0], params, [1.0]]),
                          np.concatenate([[node_values[e.lower]], vals, [node_values[e.upper]]]))
    return GraphFunction(node_values, profiles)


def _node_points(reeb: ReebGraph, node: ReebNode):
    mesh = reeb.mesh
    if node.kind == NODE_CUT:
        xy, ch = reeb.contour_points(0, 0.0)
        return xy, ch
    if node.boundary:
        m = np.isin(mesh.boundary_ids, node.boundary)
        return mesh.vertices[m], mesh.vertex_chart[m]
    if not node.critical:
        raise ReebError(f"node {node.id} has no sample points")
    cps = [reeb.critical[i] for i in node.critical]
    return (np.array([cp.position for cp in cps], dtype=float),
            np.array([cp.chart for cp in cps], dtype=np.int64))
