"""Reeb graphs of piecewise-linear Morse functions on closed oriented surfaces.

The surface is a triangulated mesh carrying per-triangle area weights (the
symplectic area).  A scalar vertex field is made Morse by the standard
simulation of simplicity: vertices are totally ordered by ``(value, id)``,
so equal values never create degenerate combinatorics.  The Reeb graph is
built by a single sweep over that order, maintaining the connected
components of the level curve as sets of crossed mesh edges; components
join or divide only at PL-critical vertices, which become graph nodes.

Each graph edge carries the pushforward of the area measure as an exact
piecewise-linear density in the field parameter: a triangle crossed by the
level contributes a linear density on each interval between its own vertex
values, so recording the totals at every traversed vertex level makes
downstream quadrature exact for PL data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateSaddleError, InvariantError, ValidationError)

LEVEL_CONSTANCY_TOL = 1e-6   # importer rejects fields that vary along a level component
NODE_CONSISTENCY_TOL = 1e-9  # incident-edge limits of a graph Hamiltonian must agree
AREA_NORMALIZATION_RTOL = 1e-8


# --------------------------------------------------------------------------
# surface meshes
# --------------------------------------------------------------------------

class SurfaceMesh:
    """A closed, oriented, connected triangulated surface with area weights.

    Parameters
    ----------
    vertices : (V, 3) float array
        Point positions (used for crossing-point geometry and default areas).
    triangles : (F, 3) int array
        Consistently oriented triangles (each directed edge appears once).
    area_weights : (F,) float array, optional
        Positive symplectic area per triangle; Euclidean area by default.
    """

    def __init__(self, vertices, triangles, area_weights=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=int)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValidationError("triangles must be (F, 3)")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValidationError("triangle index out of range")
        if area_weights is None:
            p = self.vertices
            t = self.triangles
            cross = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
            area_weights = 0.5 * np.linalg.norm(cross, axis=1)
        self.area_weights = np.asarray(area_weights, dtype=float)
        if self.area_weights.shape != (len(self.triangles),):
            raise ValidationError("area_weights must have one entry per triangle")
        if np.any(self.area_weights <= 0):
            raise ValidationError("area weights must be positive")
        self._validate_topology()

    def _validate_topology(self):
        directed = {}
        undirected = {}
        for ti, (a, b, c) in enumerate(self.triangles):
            if len({a, b, c}) != 3:
                raise ValidationError(f"triangle {ti} is degenerate")
            for u, v in ((a, b), (b, c), (c, a)):
                if (u, v) in directed:
                    raise ValidationError(
                        f"directed edge ({u},{v}) repeated: mesh is non-manifold or inconsistently oriented")
                directed[(u, v)] = ti
                undirected.setdefault((min(u, v), max(u, v)), []).append(ti)
        for e, tris in undirected.items():
            if len(tris) != 2:
                raise ValidationError(f"edge {e} lies in {len(tris)} triangles; surface must be closed")
        # connectivity
        parent = list(range(len(self.vertices)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c)):
                parent[find(u)] = find(v)
        roots = {find(v) for v in range(len(self.vertices))}
        if len(roots) != 1:
            raise ValidationError("mesh is not connected")
        self._edge_tris = {e: tuple(t) for e, t in undirected.items()}
        chi = len(self.vertices) - len(undirected) + len(self.triangles)
        if chi % 2:
            raise ValidationError(f"Euler characteristic {chi} is odd")
        genus = (2 - chi) // 2
        if genus < 0:
            raise ValidationError(f"Euler characteristic {chi} exceeds 2")
        self.genus = genus

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def total_area(self) -> float:
        return float(self.area_weights.sum())

    def edge_triangles(self, u: int, v: int) -> tuple[int, ...]:
        return self._edge_tris[(min(u, v), max(u, v))]

    def vertex_rings(self) -> list[list[int]]:
        """The link of each vertex as an oriented cycle of neighbours."""
        succ: list[dict[int, int]] = [dict() for _ in range(self.n_vertices)]
        for a, b, c in self.triangles:
            succ[a][b] = c
            succ[b][c] = a
            succ[c][a] = b
        rings = []
        for v, nxt in enumerate(succ):
            if not nxt:
                raise ValidationError(f"vertex {v} is isolated")
            start = next(iter(nxt))
            ring = [start]
            cur = nxt[start]
            while cur != start:
                ring.append(cur)
                cur = nxt[cur]
                if len(ring) > len(nxt):
                    raise ValidationError(f"link of vertex {v} is not a single cycle")
            if len(ring) != len(nxt):
                raise ValidationError(f"link of vertex {v} is not a single cycle")
            rings.append(ring)
        return rings

    def normalized(self, target: float | None = None) -> "SurfaceMesh":
        """Rescale area weights to a given total (default 2g-2, genus >= 2)."""
        if target is None:
            if self.genus < 2:
                raise ValidationError("default normalization 2g-2 requires genus >= 2")
            target = 2.0 * self.genus - 2.0
        if target <= 0:
            raise ValidationError("normalization target must be positive")
        return SurfaceMesh(self.vertices, self.triangles,
                           self.area_weights * (target / self.total_area))


def read_off(text: str) -> SurfaceMesh:
    """Parse an ASCII OFF file (triangles only)."""
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValidationError("not an OFF file")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        tris = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise ValidationError("only triangle faces are supported")
            tris.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
            pos += 4
    except (IndexError, ValueError) as exc:
        raise ValidationError(f"malformed OFF file: {exc}") from exc
    return SurfaceMesh(verts, np.array(tris, dtype=int))


def write_off(mesh: SurfaceMesh) -> str:
    out = io.StringIO()
    out.write("OFF\n")
    out.write(f"{mesh.n_vertices} {len(mesh.triangles)} 0\n")
    for p in mesh.vertices:
        out.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    for t in mesh.triangles:
        out.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# Morse fields
# --------------------------------------------------------------------------

KIND_MIN = "min"
KIND_MAX = "max"
KIND_SADDLE = "saddle"
KIND_REGULAR = "regular"


@dataclass(frozen=True)
class MorseField:
    """Per-vertex scalar values, made Morse by the (value, id) tie-break."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValidationError("field values must be a 1-d array")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def below(self, u: int, v: int) -> bool:
        """Tie-broken comparison: u strictly below v."""
        return (self.values[u], u) < (self.values[v], v)


def _lower_arc_groups(ring: list[int], is_low) -> list[list[int]]:
    """Maximal cyclic runs of the ring where ``is_low`` holds."""
    k = len(ring)
    flags = [is_low(u) for u in ring]
    if all(flags) or not any(flags):
        return [ring[:]] if flags[0] else []
    # rotate so the ring starts at a high vertex
    start = flags.index(False)
    groups, cur = [], []
    for i in range(k):
        u = ring[(start + i) % k]
        if is_low(u):
            cur.append(u)
        elif cur:
            groups.append(cur)
            cur = []
    if cur:
        groups.append(cur)
    return groups


def classify_vertices(mesh: SurfaceMesh, f: MorseField) -> list[str]:
    """PL classification of every vertex (min / max / saddle / regular).

    Raises :class:`DegenerateSaddleError` when a lower link has three or
    more components (a monkey saddle survives the tie-break).
    """
    if len(f.values) != mesh.n_vertices:
        raise ValidationError("field length does not match the mesh")
    kinds = []
    for v, ring in enumerate(mesh.vertex_rings()):
        lower = _lower_arc_groups(ring, lambda u: f.below(u, v))
        n_low = len(lower)
        total_low = sum(len(g) for g in lower)
        if total_low == 0:
            kinds.append(KIND_MIN)
        elif total_low == len(ring):
            kinds.append(KIND_MAX)
        elif n_low == 1:
            kinds.append(KIND_REGULAR)
        elif n_low == 2:
            kinds.append(KIND_SADDLE)
        else:
            raise DegenerateSaddleError(v)
    return kinds


def random_morse_field(mesh: SurfaceMesh, rng: np.random.Generator,
                       max_tries: int = 60, waves: int = 4) -> MorseField:
    """A random smooth field sampled at the vertices, redrawn until PL-Morse.

    Low-frequency random plane waves keep the variation across a triangle
    small, so degenerate (monkey) saddles are rare and rejection sampling
    terminates quickly; white vertex noise would instead make them almost
    certain at high-degree vertices.
    """
    pts = mesh.vertices
    scale = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)) or 1.0
    for _ in range(max_tries):
        vals = np.zeros(mesh.n_vertices)
        for _ in range(waves):
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            freq = rng.uniform(0.5, 2.5) * 2.0 * np.pi / scale
            phase = rng.uniform(0.0, 2.0 * np.pi)
            vals += rng.standard_normal() * np.cos(freq * pts @ direction + phase)
        f = MorseField(vals)
        try:
            classify_vertices(mesh, f)
        except DegenerateSaddleError:
            continue
        return f
    raise ValidationError(f"no PL-Morse field found in {max_tries} draws")


def read_morse_csv(text: str, n_vertices: int) -> MorseField:
    """Parse 'vertex_id,value' rows (optional header) into a MorseField."""
    values = np.full(n_vertices, np.nan)
    reader = csv.reader(io.StringIO(text))
    for row in reader:
        if not row or row[0].strip().lower() in ("vertex_id", "vertex", "id"):
            continue
        try:
            idx, val = int(row[0]), float(row[1])
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"malformed Morse CSV row {row!r}") from exc
        if not 0 <= idx < n_vertices:
            raise ValidationError(f"vertex id {idx} out of range")
        values[idx] = val
    if np.any(np.isnan(values)):
        raise ValidationError("Morse CSV does not cover every vertex")
    return MorseField(values)


# --------------------------------------------------------------------------
# Reeb graphs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReebNode:
    id: int
    f: float
    kind: str
    vertex: int | None = None


@dataclass(frozen=True)
class ReebEdge:
    """An edge of the Reeb graph, oriented lo -> hi by increasing field value.

    ``breakpoints`` is the exact PL density (area per unit field value) of
    the pushforward measure on the edge's cylinder; ``h_breakpoints`` is
    optionally filled by the field-sampling importer.
    """

    id: int
    lo: int
    hi: int
    f_lo: float
    f_hi: float
    breakpoints: tuple  # ((c, density), ...) with strictly increasing c
    source_edges: tuple = ()
    h_breakpoints: tuple | None = None

    @property
    def measure(self) -> float:
        cs = np.array([c for c, _ in self.breakpoints])
        ds = np.array([d for _, d in self.breakpoints])
        return float(np.trapezoid(ds, cs)) if cs.size > 1 else 0.0


@dataclass(frozen=True)
class ReebGraph:
    nodes: dict[int, ReebNode]
    edges: dict[int, ReebEdge]
    genus: int

    def degree(self, node_id: int) -> int:
        return sum((e.lo == node_id) + (e.hi == node_id) for e in self.edges.values())

    def degrees(self) -> dict[int, int]:
        deg = {nid: 0 for nid in self.nodes}
        for e in self.edges.values():
            deg[e.lo] += 1
            deg[e.hi] += 1
        return deg

    def euler_deficiency(self) -> int:
        """Sum over nodes of (2 - degree); equals 2 - 2g for a valid graph."""
        deg = self.degrees()
        return sum(2 - d for d in deg.values())

    def total_measure(self) -> float:
        return sum(e.measure for e in self.edges.values())

    def incident_edges(self, node_id: int) -> list[ReebEdge]:
        return [e for e in self.edges.values() if e.lo == node_id or e.hi == node_id]


def _tri_coeffs(lams: tuple[float, float, float], area: float, regime: int) -> tuple[float, float]:
    """Density contribution (a, b) with density(c) = a + b*c for one regime.

    Zero-width regimes (tied values) contribute nothing: they are only ever
    evaluated on value intervals of zero length.
    """
    l1, l2, l3 = lams
    if regime == 1:
        den = (l2 - l1) * (l3 - l1)
        if den == 0.0:
            return 0.0, 0.0
        return -2.0 * area * l1 / den, 2.0 * area / den
    den = (l3 - l2) * (l3 - l1)
    if den == 0.0:
        return 0.0, 0.0
    return 2.0 * area * l3 / den, -2.0 * area / den


class _Comp:
    """A live level-curve component during the sweep."""

    __slots__ = ("edges", "a", "b", "redge")

    def __init__(self, edges: set, a: float, b: float, redge: int):
        self.edges = edges
        self.a = a
        self.b = b
        self.redge = redge

    def density_at(self, c: float) -> float:
        return self.a + self.b * c


def build_reeb(mesh: SurfaceMesh, f: MorseField, sample_field=None,
               field_tol: float = LEVEL_CONSTANCY_TOL) -> ReebGraph:
    """Reeb graph of a PL Morse field by a sorted sweep over vertex levels.

    ``sample_field(point) -> float``, when given, is sampled along every
    recorded level component; the samples must be constant on components
    within ``field_tol`` (the field must commute with f), and the edge-wise
    values are stored on ``h_breakpoints`` for later use as a graph
    Hamiltonian.
    """
    kinds = classify_vertices(mesh, f)
    vals = f.values
    n_v = mesh.n_vertices
    order = sorted(range(n_v), key=lambda v: (vals[v], v))
    pos = np.empty(n_v, dtype=int)
    for rank, v in enumerate(order):
        pos[v] = rank
    rings = mesh.vertex_rings()

    # triangles sorted by the sweep order, with their true values
    tris = mesh.triangles
    tri_sorted = []
    for ti, tri in enumerate(tris):
        svs = sorted(tri, key=lambda u: pos[u])
        tri_sorted.append((svs[0], svs[1], svs[2]))
    tri_lams = [(vals[a], vals[b], vals[c]) for a, b, c in tri_sorted]
    vertex_tris: list[list[int]] = [[] for _ in range(n_v)]
    for ti, tri in enumerate(tris):
        for u in tri:
            vertex_tris[u].append(ti)

    def ek(u, v):
        return (u, v) if u < v else (v, u)

    def tri_state(ti: int, k: int) -> int:
        """0: not crossed at position k, 1/2: crossed in that regime."""
        a, b, c = tri_sorted[ti]
        if pos[a] <= k < pos[c]:
            return 1 if k < pos[b] else 2
        return 0

    def tri_crossed_edges(ti: int, k: int) -> list[tuple[int, int]]:
        a, b, c = (int(x) for x in tris[ti])
        out = []
        for u, v in ((a, b), (b, c), (c, a)):
            lo, hi = (u, v) if pos[u] < pos[v] else (v, u)
            if pos[lo] <= k < pos[hi]:
                out.append(ek(u, v))
        return out

    comps: dict[int, _Comp] = {}
    edge_comp: dict[tuple[int, int], int] = {}
    next_comp = 0
    nodes: dict[int, ReebNode] = {}
    next_node = 0
    redges: dict[int, dict] = {}
    next_redge = 0

    def new_comp(edges: set, a: float, b: float, redge: int) -> int:
        nonlocal next_comp
        cid = next_comp
        next_comp += 1
        comps[cid] = _Comp(edges, a, b, redge)
        for e in edges:
            edge_comp[e] = cid
        return cid

    def new_node(v: int, kind: str) -> int:
        nonlocal next_node
        nid = next_node
        next_node += 1
        nodes[nid] = ReebNode(id=nid, f=float(vals[v]), kind=kind, vertex=v)
        return nid

    def open_redge(lo_node: int, c: float, density: float, src: tuple) -> int:
        nonlocal next_redge
        rid = next_redge
        next_redge += 1
        redges[rid] = {"lo": lo_node, "hi": None, "f_lo": c, "f_hi": None,
                       "bps": [(c, density)], "src": src, "h_bps": []}
        return rid

    def record_bp(comp: _Comp, c: float):
        redges[comp.redge]["bps"].append((c, comp.density_at(c)))
        if sample_field is not None:
            _sample_level(comp, c)

    def _sample_level(comp: _Comp, c: float):
        samples = []
        for (u, w) in comp.edges:
            fu, fw = vals[u], vals[w]
            if fu == fw:
                pt = 0.5 * (mesh.vertices[u] + mesh.vertices[w])
            else:
                t = np.clip((c - fu) / (fw - fu), 0.0, 1.0)
                pt = (1 - t) * mesh.vertices[u] + t * mesh.vertices[w]
            samples.append(float(sample_field(pt)))
        if not samples:
            return
        spread = max(samples) - min(samples)
        if spread > field_tol:
            raise ValidationError(
                f"sampled field varies by {spread:.3e} on a level component: it does not commute with f")
        redges[comp.redge]["h_bps"].append((c, float(np.mean(samples))))

    def close_redge(comp: _Comp, node: int, c: float):
        record_bp(comp, c)
        redges[comp.redge]["hi"] = node
        redges[comp.redge]["f_hi"] = c

    def star_delta(v: int, k: int) -> list[tuple[int, tuple[float, float], tuple[float, float]]]:
        """Per incident triangle: (ti, old (a,b), new (a,b)) across position k."""
        out = []
        for ti in vertex_tris[v]:
            before = tri_state(ti, k - 1) if k > 0 else 0
            after = tri_state(ti, k)
            old = _tri_coeffs(tri_lams[ti], mesh.area_weights[ti], before) if before else (0.0, 0.0)
            new = _tri_coeffs(tri_lams[ti], mesh.area_weights[ti], after) if after else (0.0, 0.0)
            out.append((ti, old, new))
        return out

    for k, v in enumerate(order):
        lam = float(vals[v])
        kind = kinds[v]
        ring = rings[v]
        down_edges = [ek(u, v) for u in ring if pos[u] < k]
        up_edges = [ek(u, v) for u in ring if pos[u] > k]
        deltas = star_delta(v, k)

        if kind == KIND_MIN:
            node = new_node(v, KIND_MIN)
            a = sum(d[2][0] - d[1][0] for d in deltas)
            b = sum(d[2][1] - d[1][1] for d in deltas)
            rid = open_redge(node, lam, a + b * lam, tuple(sorted(up_edges)))
            cid = new_comp(set(up_edges), a, b, rid)
            if sample_field is not None:
                nodes[node] = ReebNode(id=node, f=lam, kind=KIND_MIN, vertex=v)
                _sample_level(comps[cid], lam)

        elif kind == KIND_MAX:
            cid = edge_comp[down_edges[0]]
            comp = comps[cid]
            if comp.edges != set(down_edges):
                raise InvariantError("component at a maximum is larger than the vertex star")
            node = new_node(v, KIND_MAX)
            close_redge(comp, node, lam)
            for e in down_edges:
                edge_comp.pop(e, None)
            del comps[cid]

        elif kind == KIND_REGULAR:
            cid = edge_comp[down_edges[0]]
            comp = comps[cid]
            record_bp(comp, lam)
            for _, old, new in deltas:
                comp.a += new[0] - old[0]
                comp.b += new[1] - old[1]
            for e in down_edges:
                comp.edges.discard(e)
                edge_comp.pop(e, None)
            for e in up_edges:
                comp.edges.add(e)
                edge_comp[e] = cid
            record_bp(comp, lam)

        else:  # saddle
            groups = _lower_arc_groups(ring, lambda u: pos[u] < k)
            if len(groups) != 2:
                raise DegenerateSaddleError(v)
            c1 = edge_comp[ek(groups[0][0], v)]
            c2 = edge_comp[ek(groups[1][0], v)]
            node = new_node(v, KIND_SADDLE)
            if c1 != c2:
                # two circles merge into one
                close_redge(comps[c1], node, lam)
                close_redge(comps[c2], node, lam)
                merged = (comps[c1].edges | comps[c2].edges)
                a = comps[c1].a + comps[c2].a
                b = comps[c1].b + comps[c2].b
                for _, old, new in deltas:
                    a += new[0] - old[0]
                    b += new[1] - old[1]
                for e in down_edges:
                    merged.discard(e)
                    edge_comp.pop(e, None)
                merged.update(up_edges)
                del comps[c1], comps[c2]
                rid = open_redge(node, lam, a + b * lam, tuple(sorted(up_edges)))
                cid = new_comp(merged, a, b, rid)
                if sample_field is not None:
                    _sample_level(comps[cid], lam)
            else:
                # one circle splits into two
                comp = comps[c1]
                close_redge(comp, node, lam)
                pool = set(comp.edges)
                for e in down_edges:
                    pool.discard(e)
                pool.update(up_edges)
                parent = {e: e for e in pool}

                def find(e):
                    while parent[e] != e:
                        parent[e] = parent[parent[e]]
                        e = parent[e]
                    return e

                seen_tris = set()
                for e in pool:
                    for ti in mesh.edge_triangles(*e):
                        if ti in seen_tris or tri_state(ti, k) == 0:
                            continue
                        seen_tris.add(ti)
                        ce = tri_crossed_edges(ti, k)
                        for other in ce[1:]:
                            ra, rb = find(ce[0]), find(other)
                            if ra != rb:
                                parent[ra] = rb
                groups_by_root: dict = {}
                for e in pool:
                    groups_by_root.setdefault(find(e), set()).add(e)
                parts = sorted(groups_by_root.values(), key=lambda s: min(s))
                if len(parts) != 2:
                    raise InvariantError(
                        f"saddle at vertex {v} produced {len(parts)} components; expected 2 on an orientable surface")
                for e in down_edges:
                    edge_comp.pop(e, None)
                del comps[c1]
                for part in parts:
                    tset = set()
                    for e in part:
                        for ti in mesh.edge_triangles(*e):
                            if tri_state(ti, k):
                                tset.add(ti)
                    a = b = 0.0
                    for ti in tset:
                        ca, cb = _tri_coeffs(tri_lams[ti], mesh.area_weights[ti], tri_state(ti, k))
                        a += ca
                        b += cb
                    rid = open_redge(node, lam, a + b * lam,
                                     tuple(sorted(e for e in part if v in e)))
                    cid = new_comp(part, a, b, rid)
                    if sample_field is not None:
                        _sample_level(comps[cid], lam)

    if comps:
        raise InvariantError("sweep finished with open level components")

    node_h = None
    if sample_field is not None:
        node_h = {nid: float(sample_field(mesh.vertices[node.vertex]))
                  for nid, node in nodes.items()}

    edges: dict[int, ReebEdge] = {}
    for rid, rec in redges.items():
        bps = _dedupe_breakpoints(rec["bps"])
        h_bps = None
        if sample_field is not None:
            raw = list(rec["h_bps"])
            raw.insert(0, (rec["f_lo"], node_h[rec["lo"]]))
            raw.append((rec["f_hi"], node_h[rec["hi"]]))
            h_bps = _collapse_breakpoints(raw)
        edges[rid] = ReebEdge(id=rid, lo=rec["lo"], hi=rec["hi"],
                              f_lo=rec["f_lo"], f_hi=rec["f_hi"],
                              breakpoints=bps, source_edges=rec["src"],
                              h_breakpoints=h_bps)

    graph = ReebGraph(nodes=nodes, edges=edges, genus=mesh.genus)
    if graph.euler_deficiency() != 2 - 2 * mesh.genus:
        raise InvariantError(
            f"graph deficiency {graph.euler_deficiency()} != {2 - 2 * mesh.genus}")
    total = graph.total_measure()
    if abs(total - mesh.total_area) > 1e-8 * max(1.0, mesh.total_area):
        raise InvariantError(f"pushforward measure {total} != mesh area {mesh.total_area}")
    return graph


def _dedupe_breakpoints(bps: list[tuple[float, float]]) -> tuple:
    """Drop exact consecutive duplicates; keep genuine jumps as repeated c.

    Densities of PL pushforwards are discontinuous at tied vertex values
    (e.g. a triangle with a level bottom edge), so a repeated parameter
    with two values is meaningful: it encodes a jump.  Zero-width segments
    are integration-neutral.
    """
    out: list[tuple[float, float]] = []
    for c, d in bps:
        if out and out[-1] == (c, d):
            continue
        if out and c < out[-1][0]:
            raise InvariantError("breakpoints recorded out of order")
        out.append((c, d))
    return tuple(out)


def _collapse_breakpoints(bps: list[tuple[float, float]]) -> tuple:
    """Sort and collapse repeated parameter values (continuous data only)."""
    bps = sorted(bps, key=lambda p: p[0])
    out: list[tuple[float, float]] = []
    for c, d in bps:
        if out and out[-1][0] == c:
            out[-1] = (c, d)
        else:
            out.append((c, d))
    return tuple(out)


# --------------------------------------------------------------------------
# pruning
# --------------------------------------------------------------------------

def prune_step(graph: ReebGraph, choose=min) -> ReebGraph | None:
    """Remove one degree-1 node and its edge; None when no leaf remains.

    ``choose`` selects among leaf candidates (lowest id by default; tests
    may inject another order to check order independence of the result).
    """
    deg = graph.degrees()
    leaves = [nid for nid, d in deg.items() if d == 1]
    if not leaves:
        return None
    victim = choose(leaves)
    edges = {eid: e for eid, e in graph.edges.items()
             if e.lo != victim and e.hi != victim}
    if len(edges) != len(graph.edges) - 1:
        raise InvariantError("leaf node did not have exactly one incident edge")
    nodes = {nid: n for nid, n in graph.nodes.items() if nid != victim}
    return ReebGraph(nodes=nodes, edges=edges, genus=graph.genus)


def prune(graph: ReebGraph, choose=min) -> ReebGraph:
    """Iterated leaf removal until only degree-2/3 nodes remain.

    For genus <= 1 the result may degenerate (isolated nodes are dropped;
    the sphere prunes to the empty graph).  For genus >= 2 an empty result
    signals a construction bug and raises.
    """
    g = graph
    while True:
        nxt = prune_step(g, choose=choose)
        if nxt is None:
            break
        g = nxt
    deg = g.degrees()
    keep = {nid for nid, d in deg.items() if d > 0}
    if len(keep) != len(g.nodes):
        g = ReebGraph(nodes={nid: n for nid, n in g.nodes.items() if nid in keep},
                      edges=g.edges, genus=g.genus)
    if graph.genus >= 2 and not g.nodes:
        raise InvariantError("pruning emptied a genus >= 2 graph")
    bad = [d for d in g.degrees().values() if d not in (2, 3)]
    if bad:
        raise InvariantError(f"pruned graph has degrees {sorted(set(bad))}")
    return g


def trivalent_vertices(pruned: ReebGraph) -> set[int]:
    """The degree-3 node set of a pruned graph; its size must be 2g-2."""
    if pruned.genus == 0:
        raise ValidationError("the trivalent set is defined for genus >= 1")
    tri = {nid for nid, d in pruned.degrees().items() if d == 3}
    expected = 2 * pruned.genus - 2
    if len(tri) != expected:
        raise InvariantError(f"found {len(tri)} trivalent nodes, expected {expected}")
    return tri


# --------------------------------------------------------------------------
# graph Hamiltonians and the closed formula
# --------------------------------------------------------------------------

class GraphHamiltonian:
    """A piecewise-linear function of the field parameter on every graph edge.

    Values of incident edges must agree at shared nodes (the function
    descends from a genuine function on the graph).
    """

    def __init__(self, graph: ReebGraph, edge_breakpoints: dict[int, list[tuple[float, float]]]):
        self.graph = graph
        self._data: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for eid, edge in graph.edges.items():
            if eid not in edge_breakpoints:
                raise ValidationError(f"graph Hamiltonian missing edge {eid}")
            bps = _collapse_breakpoints(list(edge_breakpoints[eid]))
            cs = np.array([c for c, _ in bps])
            hs = np.array([h for _, h in bps])
            span = max(1.0, abs(edge.f_hi - edge.f_lo))
            if cs.size < 2 or cs[0] > edge.f_lo + 1e-12 * span or cs[-1] < edge.f_hi - 1e-12 * span:
                raise ValidationError(f"breakpoints do not cover edge {eid}")
            self._data[eid] = (cs, hs)
        extra = set(edge_breakpoints) - set(graph.edges)
        if extra:
            raise ValidationError(f"Hamiltonian defined on unknown edges {sorted(extra)}")
        for nid, node in graph.nodes.items():
            vals = [self.value(e.id, node.f) for e in graph.incident_edges(nid)]
            if vals and max(vals) - min(vals) > NODE_CONSISTENCY_TOL * max(1.0, max(abs(v) for v in vals)):
                raise ValidationError(f"edge limits disagree at node {nid}: {vals}")

    def value(self, edge_id: int, c: float) -> float:
        cs, hs = self._data[edge_id]
        return float(np.interp(c, cs, hs))

    def node_value(self, node_id: int) -> float:
        node = self.graph.nodes[node_id]
        incident = self.graph.incident_edges(node_id)
        if not incident:
            raise ValidationError(f"node {node_id} has no incident edge")
        return self.value(incident[0].id, node.f)

    def breakpoints(self, edge_id: int) -> tuple[np.ndarray, np.ndarray]:
        return self._data[edge_id]

    @classmethod
    def constant(cls, graph: ReebGraph, value: float) -> "GraphHamiltonian":
        return cls(graph, {eid: [(e.f_lo, value), (e.f_hi, value)]
                           for eid, e in graph.edges.items()})

    @classmethod
    def from_function(cls, graph: ReebGraph, fn) -> "GraphHamiltonian":
        """Apply a scalar function of the field value, sampled at density breakpoints."""
        data = {}
        for eid, e in graph.edges.items():
            cs = sorted({e.f_lo, e.f_hi, *(c for c, _ in e.breakpoints)})
            data[eid] = [(c, float(fn(c))) for c in cs]
        return cls(graph, data)

    @classmethod
    def from_sampling(cls, graph: ReebGraph) -> "GraphHamiltonian":
        """Use the h-values recorded by ``build_reeb(..., sample_field=...)``."""
        data = {}
        for eid, e in graph.edges.items():
            if e.h_breakpoints is None:
                raise ValidationError("graph was built without field sampling")
            data[eid] = list(e.h_breakpoints)
        return cls(graph, data)

    def to_json(self) -> dict:
        return {"edges": [{"id": eid,
                           "breakpoints": [[float(c), float(h)] for c, h in zip(*self._data[eid])]}
                          for eid in sorted(self._data)]}

    @classmethod
    def from_json(cls, graph: ReebGraph, data: dict) -> "GraphHamiltonian":
        try:
            table = {int(rec["id"]): [(float(c), float(h)) for c, h in rec["breakpoints"]]
                     for rec in data["edges"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed GraphHamiltonian JSON: {exc}") from exc
        return cls(graph, table)


def _integrate_density_product(bps, hcs, hhs) -> float:
    """Exact integral of (possibly jumpy) PL density times a continuous PL h.

    Walks the density segments (repeated parameters encode jumps and span
    zero width), splitting each at h's breakpoints; on every piece both
    factors are linear, so Simpson is exact.
    """
    total = 0.0
    for (c0, d0), (c1, d1) in zip(bps, bps[1:]):
        if c1 <= c0:
            continue
        cuts = [c0] + [c for c in hcs if c0 < c < c1] + [c1]
        for a, b in zip(cuts, cuts[1:]):
            da = d0 + (d1 - d0) * (a - c0) / (c1 - c0)
            db = d0 + (d1 - d0) * (b - c0) / (c1 - c0)
            ha = float(np.interp(a, hcs, hhs))
            hb = float(np.interp(b, hcs, hhs))
            mid = 0.25 * (da + db) * (ha + hb)
            total += (b - a) / 6.0 * (da * ha + 4.0 * mid + db * hb)
    return total


def graph_integral(graph: ReebGraph, h: GraphHamiltonian) -> float:
    """Integral of h against the pushforward measure: equals the surface integral."""
    if h.graph is not graph and set(h.graph.edges) != set(graph.edges):
        raise ValidationError("Hamiltonian was built on a different graph")
    total = 0.0
    for eid, e in graph.edges.items():
        hcs, hhs = h.breakpoints(eid)
        total += _integrate_density_product(e.breakpoints, hcs, hhs)
    return total


def theorem2_value(graph: ReebGraph, h: GraphHamiltonian) -> float:
    """The closed formula: integral of h minus its values at the trivalent set.

    Requires genus >= 2 and total measure 2g-2 (the pinned normalization);
    other totals are rejected rather than rescaled.
    """
    if graph.genus < 2:
        raise ValidationError("the closed formula requires genus >= 2")
    target = 2.0 * graph.genus - 2.0
    total = graph.total_measure()
    if abs(total - target) > AREA_NORMALIZATION_RTOL * target:
        raise ValidationError(
            f"total measure {total:.12g} != {target} (normalize the mesh first)")
    pruned = prune(graph)
    vset = trivalent_vertices(pruned)
    return graph_integral(graph, h) - sum(h.node_value(nid) for nid in vset)


def graph_to_json(graph: ReebGraph) -> dict:
    deg = graph.degrees()
    return {
        "genus": graph.genus,
        "total_measure": graph.total_measure(),
        "nodes": [{"id": n.id, "f": n.f, "kind": n.kind, "degree": deg[n.id],
                   "vertex": n.vertex}
                  for n in sorted(graph.nodes.values(), key=lambda n: n.id)],
        "edges": [{"id": e.id, "lo": e.lo, "hi": e.hi,
                   "f_lo": e.f_lo, "f_hi": e.f_hi,
                   "measure": e.measure,
                   "breakpoints": [[float(c), float(d)] for c, d in e.breakpoints]}
                  for e in sorted(graph.edges.values(), key=lambda e: e.id)],
    }
