"""Poisson sampling, Delaunay triangulation, Voronoi dual and point location.

The triangulation is produced in two stages.  Qhull (through
:class:`scipy.spatial.Delaunay`) supplies an initial triangulation; every
interior edge is then checked with the exact, symbolically perturbed
in-circle predicate of :mod:`fpplab.predicates` and illegal edges are
flipped until none remain (Lawson's algorithm).  The result is the unique
Delaunay triangulation of the perturbed point set, so the empty-circumcircle
property holds exactly.

Arrays are indexed as follows.  ``Triangulation.edges[k]`` is the sorted
point-index pair of Delaunay edge ``k``; Voronoi edge ``k`` is its dual, so the
duality map is the identity on indices.  Voronoi vertex ``t`` is the
circumcenter of triangle ``t``.
"""

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay as _QhullDelaunay
from scipy.spatial import QhullError, cKDTree

from .errors import (DegenerateInputError, EmptyDomainError,
                     InvalidParameterError, OutOfWindowError)
from .predicates import incircle_perturbed, incircle_perturbed_many, orient2d, orient2d_exact

#: Distance (plane units) kept between any region of interest and the window edge.
SAFE_MARGIN = 5.0


@dataclass(frozen=True)
class Window:
    """Closed axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``.

    Also used for the boxes of the renormalization scheme.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameterError(f"non-finite window {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidParameterError(f"degenerate window {vals}")

    @classmethod
    def square(cls, center, half_width):
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width)

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def corners(self):
        return np.array([[self.xmin, self.ymin], [self.xmax, self.ymin],
                         [self.xmax, self.ymax], [self.xmin, self.ymax]])

    def expand(self, d):
        return Window(self.xmin - d, self.xmax + d, self.ymin - d, self.ymax + d)

    def contains(self, xy):
        """Closed-box membership for one point or an ``(m, 2)`` array."""
        xy = np.asarray(xy, float)
        return ((xy[..., 0] >= self.xmin) & (xy[..., 0] <= self.xmax)
                & (xy[..., 1] >= self.ymin) & (xy[..., 1] <= self.ymax))

    def contains_open(self, xy):
        xy = np.asarray(xy, float)
        return ((xy[..., 0] > self.xmin) & (xy[..., 0] < self.xmax)
                & (xy[..., 1] > self.ymin) & (xy[..., 1] < self.ymax))

    def contains_box(self, other, margin=0.0):
        return (other.xmin >= self.xmin + margin and other.xmax <= self.xmax - margin
                and other.ymin >= self.ymin + margin and other.ymax <= self.ymax - margin)

    def intersects(self, other):
        return not (other.xmin > self.xmax or other.xmax < self.xmin
                    or other.ymin > self.ymax or other.ymax < self.ymin)

    def as_tuple(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)


Box = Window


def require_safe(window, box, margin=SAFE_MARGIN, what="region"):
    """Raise :class:`OutOfWindowError` unless ``box`` sits ``margin`` inside ``window``."""
    if not window.contains_box(box, margin):
        raise OutOfWindowError(
            f"{what} {box.as_tuple()} is not {margin} inside window {window.as_tuple()}")


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite Poisson realization in a window.

    ``points`` is an ``(n, 2)`` read-only array in generation order.
    """

    points: np.ndarray
    window: Window
    intensity: float
    seed: int

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 2)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points, window=None, intensity=float("nan"), seed=0):
        """Wrap hand-placed coordinates (window defaults to the padded bounding box)."""
        pts = np.asarray(points, float).reshape(-1, 2)
        if window is None:
            if len(pts):
                lo, hi = pts.min(axis=0), pts.max(axis=0)
            else:
                lo, hi = np.zeros(2), np.ones(2)
            pad = max(1.0, float(np.max(hi - lo)) * 0.05)
            window = Window(lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
        if len(pts) and not window.contains(pts).all():
            raise InvalidParameterError("points outside window")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise InvalidParameterError("coincident points")
        return cls(pts, window, intensity, seed)

    def __len__(self):
        return len(self.points)

    @cached_property
    def kdtree(self):
        return cKDTree(self.points)

    @cached_property
    def lex_rank(self):
        """Rank of each point in lexicographic ``(x, y)`` order."""
        order = np.lexsort((self.points[:, 1], self.points[:, 0]))
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        return rank


def sample_poisson(intensity, window, seed):
    """Homogeneous Poisson process of the given intensity in ``window``.

    The count is drawn first, then i.i.d. uniform positions, all from one
    ``numpy`` generator seeded with ``seed``.
    """
    if not (math.isfinite(intensity) and intensity >= 0):
        raise InvalidParameterError(f"intensity must be finite and >= 0, got {intensity}")
    rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
    n = rng.poisson(intensity * window.area)
    xy = np.empty((n, 2))
    xy[:, 0] = window.xmin + window.width * rng.random(n)
    xy[:, 1] = window.ymin + window.height * rng.random(n)
    if n > 1:
        _, first = np.unique(xy, axis=0, return_index=True)
        if len(first) < n:
            xy = xy[np.sort(first)]
    return PointSet(xy, window, float(intensity), int(seed))


def locate(pts, x):
    """Index of the site nearest to ``x``; ties go to the lowest index.

    ``x`` may be a single point or an ``(m, 2)`` array of query points.
    """
    if len(pts) == 0:
        raise EmptyDomainError("cannot locate in an empty point set")
    q = np.asarray(x, float)
    single = q.ndim == 1
    q = q.reshape(-1, 2)
    k = min(8, len(pts))
    _, idx = pts.kdtree.query(q, k=k)
    idx = np.asarray(idx).reshape(len(q), k)
    diff = pts.points[idx] - q[:, None, :]
    d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    best = d2.min(axis=1)
    out = np.where(d2 == best[:, None], idx, np.iinfo(np.int64).max).min(axis=1)
    # every candidate tied: more ties may hide beyond the k nearest
    for r in np.nonzero((d2 == best[:, None]).all(axis=1) & (k < len(pts)))[0]:
        dd = ((pts.points - q[r]) ** 2).sum(axis=1)
        out[r] = np.nonzero(dd == dd.min())[0][0]
    return int(out[0]) if single else out


class Triangulation:
    """Delaunay triangulation of a :class:`PointSet`.

    Attributes
    ----------
    pts : PointSet
    triangles : (t, 3) int array
        Counter-clockwise vertex triples, canonically ordered.
    edges : (e, 2) int array
        Sorted vertex pairs, rows in lexicographic order.
    edge_triangles : (e, 2) int array
        Triangles on each side of an edge; ``-1`` marks the outer face.
    triangle_edges : (t, 3) int array
        Edge opposite each vertex of each triangle.
    circumcenters : (t, 2) float array
    circumradii : (t,) float array
    """

    def __init__(self, pts, triangles, structure=None):
        self.pts = pts
        self.points = pts.points
        self.triangles = triangles
        if structure is None:
            structure = _edge_structure(triangles, len(pts))
        self.edges, self.edge_triangles, self.triangle_edges = structure
        self.circumcenters, self.circumradii = _circumcircles(self.points, triangles)
        for a in (self.triangles, self.edges, self.edge_triangles, self.triangle_edges,
                  self.circumcenters, self.circumradii):
            a.flags.writeable = False

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def euler_characteristic(self):
        """``V - E + F`` with the outer face counted."""
        return self.n_vertices - self.n_edges + self.n_triangles + 1

    @cached_property
    def _edge_keys(self):
        return self.edges[:, 0].astype(np.int64) * self.n_vertices + self.edges[:, 1]

    def edge_index(self, i, j):
        """Index of edge ``{i, j}`` or ``-1`` if absent (vectorized)."""
        i, j = np.minimum(i, j), np.maximum(i, j)
        key = np.asarray(i, np.int64) * self.n_vertices + j
        pos = np.searchsorted(self._edge_keys, key)
        pos = np.clip(pos, 0, len(self._edge_keys) - 1)
        return np.where(self._edge_keys[pos] == key, pos, -1)

    @cached_property
    def adjacency(self):
        """CSR adjacency ``(indptr, neighbor, edge_id)`` sorted by vertex."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.concatenate([np.arange(self.n_edges)] * 2)
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n_vertices), out=indptr[1:])
        return indptr, dst[order], eid[order]

    def neighbors(self, v):
        indptr, nbr, _ = self.adjacency
        return nbr[indptr[v]:indptr[v + 1]]

    def incident_edges(self, v):
        indptr, _, eid = self.adjacency
        return eid[indptr[v]:indptr[v + 1]]

    @cached_property
    def edge_bbox(self):
        """Per-edge ``(xmin, xmax, ymin, ymax)``."""
        p, q = self.points[self.edges[:, 0]], self.points[self.edges[:, 1]]
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        return np.column_stack([lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1]])

    @cached_property
    def hull_edge_mask(self):
        return self.edge_triangles[:, 1] < 0

    @cached_property
    def hull_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.hull_edge_mask].ravel()] = True
        return mask

    @cached_property
    def stable_triangle_mask(self):
        """Triangles whose closed circumdisk lies inside the window.

        Such triangles are unaffected by any change of the point process
        outside the window.
        """
        w = self.pts.window
        c, r = self.circumcenters, self.circumradii
        return ((c[:, 0] - r >= w.xmin) & (c[:, 0] + r <= w.xmax)
                & (c[:, 1] - r >= w.ymin) & (c[:, 1] + r <= w.ymax))

    @cached_property
    def boundary_flag(self):
        """Sites whose Voronoi cell may differ from the infinite-plane cell.

        A site is flagged if it lies on the convex hull or if any incident
        triangle has a circumdisk leaving the window.
        """
        bad = np.zeros(self.n_vertices, dtype=bool)
        bad[self.triangles[~self.stable_triangle_mask].ravel()] = True
        return bad | self.hull_vertex_mask

    @cached_property
    def voronoi(self):
        return voronoi_dual(self)


def _edge_structure(triangles, n):
    t = triangles.shape[0]
    e = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]])
    e.sort(axis=1)
    key = e[:, 0].astype(np.int64) * n + e[:, 1]
    uniq, inv = np.unique(key, return_inverse=True)
    inv = inv.ravel()
    edges = np.column_stack([uniq // n, uniq % n]).astype(np.int64)
    owner = np.tile(np.arange(t), 3)
    order = np.argsort(inv, kind="stable")
    counts = np.bincount(inv, minlength=len(uniq))
    if counts.max(initial=0) > 2:
        raise DegenerateInputError("non-manifold triangulation")
    start = np.zeros(len(uniq), dtype=np.int64)
    np.cumsum(counts[:-1], out=start[1:])
    et = np.full((len(uniq), 2), -1, dtype=np.int64)
    et[:, 0] = owner[order[start]]
    two = counts == 2
    et[two, 1] = owner[order[start[two] + 1]]
    swap = two & (et[:, 1] < et[:, 0])
    et[swap] = et[swap][:, ::-1]
    tri_edges = inv.reshape(3, t).T.copy()
    return edges, et, tri_edges


def _circumcircles(points, triangles):
    a = points[triangles[:, 0]]
    b = points[triangles[:, 1]] - a
    c = points[triangles[:, 2]] - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    b2 = (b ** 2).sum(axis=1)
    c2 = (c ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
        uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    return a + np.column_stack([ux, uy]), np.hypot(ux, uy)


def delaunay(pts):
    """Delaunay triangulation with exact predicates and perturbation tie-break.

    Raises
    ------
    DegenerateInputError
        Fewer than three points, or all points collinear.
    """
    P = pts.points
    n = len(P)
    if n < 3:
        raise DegenerateInputError(f"need at least 3 points, got {n}")
    far = int(np.argmax(((P - P[0]) ** 2).sum(axis=1)))
    if not orient2d(P[0], P[far], P).any():
        raise DegenerateInputError("all points are collinear")
    try:
        qh = _QhullDelaunay(P)
    except QhullError as exc:
        raise DegenerateInputError(str(exc)) from exc
    if len(qh.coplanar):
        raise DegenerateInputError("qhull dropped input points")
    tris = qh.simplices.astype(np.int64)
    o = orient2d(P[tris[:, 0]], P[tris[:, 1]], P[tris[:, 2]])
    tris[o < 0] = tris[o < 0][:, [0, 2, 1]]
    if (o == 0).any():
        tris = _drop_hull_slivers(tris, o == 0, n)
    tris = _canonical(tris)
    structure = _edge_structure(tris, n)
    flipped = _legalize(P, tris, structure, pts.lex_rank)
    if flipped is not None:
        tris = _canonical(flipped)
        structure = _edge_structure(tris, n)
    tri = Triangulation(pts, tris, structure)
    used = np.zeros(n, dtype=bool)
    used[tri.triangles.ravel()] = True
    if not used.all() or tri.euler_characteristic() != 2:
        raise DegenerateInputError("triangulation does not cover every input point")
    return tri


def _drop_hull_slivers(tris, flat, n):
    # zero-area triangles are only tolerated on the hull, where removing them
    # leaves a valid triangulation of the convex hull
    keep = np.ones(len(tris), dtype=bool)
    flat = flat.copy()
    while flat.any():
        idx = np.nonzero(keep)[0]
        _, et, tri_edges = _edge_structure(tris[idx], n)
        on_hull = (et[tri_edges, 1] < 0).any(axis=1)
        drop = idx[flat[idx] & on_hull]
        if len(drop) == 0:
            raise DegenerateInputError("collinear interior triangle in qhull output")
        keep[drop] = False
        flat[drop] = False
    return tris[keep]


def _canonical(tris):
    shift = np.argmin(tris, axis=1)
    rows = np.arange(len(tris))[:, None]
    cols = (shift[:, None] + np.arange(3)[None, :]) % 3
    t = tris[rows, cols]
    order = np.lexsort((t[:, 2], t[:, 1], t[:, 0]))
    return np.ascontiguousarray(t[order])


def _legalize(P, tris, structure, rank):
    """Lawson flips until every interior edge passes the perturbed in-circle test.

    Returns the flipped triangle array, or None when the input is already legal.
    """
    edges, et, tri_edges = structure
    interior = np.nonzero(et[:, 1] >= 0)[0]
    t1, t2 = et[interior, 0], et[interior, 1]
    # vertex of t2 opposite the shared edge
    pos = np.argmax(tri_edges[t2] == interior[:, None], axis=1)
    d = tris[t2, pos]
    a, b, c = tris[t1, 0], tris[t1, 1], tris[t1, 2]
    s = incircle_perturbed_many(P[a], P[b], P[c], P[d], rank[a], rank[b], rank[c], rank[d])
    bad = interior[s > 0]
    if len(bad) == 0:
        return None

    tri_list = [list(map(int, t)) for t in tris]
    edge_map = {}
    for ti, t in enumerate(tri_list):
        for k in range(3):
            u, v = t[k], t[(k + 1) % 3]
            edge_map.setdefault((min(u, v), max(u, v)), []).append(ti)
    stack = [tuple(map(int, edges[k])) for k in bad]

    def pt(v):
        return P[v]

    while stack:
        key = stack.pop()
        owners = edge_map.get(key)
        if owners is None or len(owners) != 2:
            continue
        ta, tb = owners
        ra = tri_list[ta]
        # rotate ta to (p, q, x) with {p, q} = key
        k = next(i for i in range(3) if ra[(i + 2) % 3] not in key)
        p, q, x = ra[k], ra[(k + 1) % 3], ra[(k + 2) % 3]
        y = next(v for v in tri_list[tb] if v not in key)
        ranks = (rank[p], rank[q], rank[x], rank[y])
        if incircle_perturbed(pt(p), pt(q), pt(x), pt(y), ranks) <= 0:
            continue
        if orient2d_exact(pt(p), pt(y), pt(x)) <= 0 or orient2d_exact(pt(y), pt(q), pt(x)) <= 0:
            continue
        tri_list[ta] = [p, y, x]
        tri_list[tb] = [y, q, x]
        del edge_map[key]
        edge_map[(min(x, y), max(x, y))] = [ta, tb]
        qx = (min(q, x), max(q, x))
        edge_map[qx] = [tb if o == ta else o for o in edge_map[qx]]
        py = (min(p, y), max(p, y))
        edge_map[py] = [ta if o == tb else o for o in edge_map[py]]
        stack.extend([py, (min(y, q), max(y, q)), qx, (min(x, p), max(x, p))])
    return np.array(tri_list, dtype=np.int64)


class VoronoiDiagram:
    """Voronoi tessellation dual to a :class:`Triangulation`.

    Voronoi edge ``k`` is dual to Delaunay edge ``k``.  It is a segment
    between the circumcenters of the two triangles sharing that edge, or a
    ray (``bounded[k]`` false) starting at the circumcenter of the single
    hull triangle and pointing away from it.  Cells of hull sites are
    unbounded and flagged in ``unbounded_cell``.
    """

    def __init__(self, tri):
        self.tri = tri
        self.sites = tri.points
        self.vertices = tri.circumcenters
        self.edge_vertices = tri.edge_triangles
        self.bounded = tri.edge_triangles[:, 1] >= 0
        self.unbounded_cell = tri.hull_vertex_mask
        self.ray_direction = np.zeros((tri.n_edges, 2))
        hull = np.nonzero(~self.bounded)[0]
        if len(hull):
            u, v = tri.edges[hull, 0], tri.edges[hull, 1]
            t = tri.edge_triangles[hull, 0]
            w = tri.triangles[t].sum(axis=1) - u - v
            d = self.sites[v] - self.sites[u]
            nrm = np.column_stack([d[:, 1], -d[:, 0]])
            nrm /= np.hypot(nrm[:, 0], nrm[:, 1])[:, None]
            flip = ((self.sites[w] - self.sites[u]) * nrm).sum(axis=1) > 0
            nrm[flip] *= -1
            self.ray_direction[hull] = nrm

    def dual(self, k):
        """Delaunay edge dual to Voronoi edge ``k`` (and vice versa)."""
        return k

    def segment(self, k):
        """Endpoints of bounded Voronoi edge ``k``."""
        if not self.bounded[k]:
            raise ValueError(f"Voronoi edge {k} is a ray")
        ta, tb = self.edge_vertices[k]
        return self.vertices[ta], self.vertices[tb]

    @cached_property
    def _far(self):
        ext = self.tri.pts.window
        span = max(ext.width, ext.height, float(np.ptp(self.sites, axis=0).max()))
        return 16.0 * span + 1.0

    @cached_property
    def cell_radius(self):
        """Radius of a disk around each site containing its cell (inf if unbounded)."""
        rad = np.zeros(len(self.sites))
        np.maximum.at(rad, self.tri.triangles.ravel(), np.repeat(self.tri.circumradii, 3))
        rad[self.unbounded_cell] = np.inf
        return rad

    @cached_property
    def _cells(self):
        tri = self.tri
        site = tri.triangles.ravel()
        xy = self.vertices[np.repeat(np.arange(tri.n_triangles), 3)]
        hull = np.nonzero(~self.bounded)[0]
        if len(hull):
            start = self.vertices[tri.edge_triangles[hull, 0]]
            far = start + self._far * self.ray_direction[hull]
            site = np.concatenate([site, tri.edges[hull, 0], tri.edges[hull, 1]])
            xy = np.concatenate([xy, far, far])
        rel = xy - self.sites[site]
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        order = np.lexsort((ang, site))
        site, xy = site[order], xy[order]
        counts = np.bincount(site, minlength=len(self.sites))
        ptr = np.zeros(len(self.sites) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr, xy

    def cell(self, i):
        """Counter-clockwise polygon of cell ``i``.

        Unbounded cells are truncated far outside the window along their rays.
        """
        ptr, xy = self._cells
        return xy[ptr[i]:ptr[i + 1]]

    def cell_polygons(self, idx):
        """Padded ``(len(idx), K, 2)`` polygons (last vertex repeated)."""
        ptr, xy = self._cells
        idx = np.asarray(idx, dtype=np.int64)
        counts = ptr[idx + 1] - ptr[idx]
        K = int(counts.max(initial=1))
        j = np.minimum(np.arange(K)[None, :], counts[:, None] - 1)
        return xy[ptr[idx][:, None] + j]

    def cell_contains(self, i, x):
        """Whether point ``x`` lies in the closed cell ``i``."""
        poly = self.cell(i)
        e = np.roll(poly, -1, axis=0) - poly
        r = np.asarray(x, float) - poly
        return bool((e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0] >= 0).all())

    def cells_meeting_box(self, box, candidates=None):
        """Boolean mask of sites whose closed cell intersects the closed ``box``.

        A disk bound (site plus :attr:`cell_radius`) settles most sites; the
        rest are decided by a separating-axis test on the cell polygon.
        """
        s = self.sites
        out = np.zeros(len(s), dtype=bool)
        idx = np.arange(len(s)) if candidates is None else np.asarray(candidates)
        x, y = s[idx, 0], s[idx, 1]
        dx = np.maximum(np.maximum(box.xmin - x, x - box.xmax), 0.0)
        dy = np.maximum(np.maximum(box.ymin - y, y - box.ymax), 0.0)
        dist = np.hypot(dx, dy)
        inside = (dx == 0) & (dy == 0)
        out[idx[inside]] = True
        unsure = idx[~inside & (dist <= self.cell_radius[idx])]
        if len(unsure):
            out[unsure] = _polygons_meet_box(self.cell_polygons(unsure), box)
        return out

    @cached_property
    def cell_bbox(self):
        """Per-cell ``(xmin, xmax, ymin, ymax)`` of the (truncated) polygon."""
        ptr, xy = self._cells
        site = np.repeat(np.arange(len(self.sites)), np.diff(ptr))
        bb = np.empty((len(self.sites), 4))
        for col, fn, k in ((0, np.minimum, 0), (1, np.maximum, 0),
                           (2, np.minimum, 1), (3, np.maximum, 1)):
            init = np.inf if fn is np.minimum else -np.inf
            acc = np.full(len(self.sites), init)
            fn.at(acc, site, xy[:, k])
            bb[:, col] = acc
        return bb


def _polygons_meet_box(polys, box):
    lo = polys.min(axis=1)
    hi = polys.max(axis=1)
    sep = ((lo[:, 0] > box.xmax) | (hi[:, 0] < box.xmin)
           | (lo[:, 1] > box.ymax) | (hi[:, 1] < box.ymin))
    e = np.roll(polys, -1, axis=1) - polys
    nrm = np.stack([e[..., 1], -e[..., 0]], axis=-1)  # outward for ccw
    corners = box.corners()
    proj = np.einsum("mkd,mkcd->mkc", nrm, corners[None, None, :, :] - polys[:, :, None, :])
    sep |= (proj > 0).all(axis=2).any(axis=1)
    return ~sep


def voronoi_dual(tri):
    """Voronoi diagram dual to ``tri``."""
    return VoronoiDiagram(tri)


def segments_meet_box(p, q, box):
    """Whether closed segments ``[p, q]`` meet the closed box (vectorized)."""
    t0, t1 = _clip(p, q, box)
    return t0 <= t1


def segments_meet_box_boundary(p, q, box):
    """Whether closed segments meet the boundary of the closed box."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return segments_meet_box(p, q, box) & ~(box.contains_open(p) & box.contains_open(q))


def segments_meet_box_interior(p, q, box):
    """Whether closed segments meet the open interior of the box."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    t0, t1 = _clip(p, q, box)
    mid = p + (0.5 * (t0 + t1))[..., None] * (q - p)
    return (t0 <= t1) & box.contains_open(mid)


def _clip(p, q, box):
    # Liang-Barsky parameter interval of the segment inside the closed box
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    d = q - p
    t0 = np.zeros(p.shape[:-1])
    t1 = np.ones(p.shape[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, lo, hi in ((0, box.xmin, box.xmax), (1, box.ymin, box.ymax)):
            dk, pk = d[..., k], p[..., k]
            flat = dk == 0
            outside = flat & ((pk < lo) | (pk > hi))
            ta = (lo - pk) / dk
            tb = (hi - pk) / dk
            tmin = np.where(flat, -np.inf, np.minimum(ta, tb))
            tmax = np.where(flat, np.inf, np.maximum(ta, tb))
            t0 = np.maximum(t0, tmin)
            t1 = np.minimum(t1, tmax)
            t1 = np.where(outside, -1.0, t1)
    return t0, t1


def point_in_polygon_winding(poly, x):
    """Winding number of a closed polygon around ``x`` by angle summation."""
    r = np.asarray(poly, float) - np.asarray(x, float)
    r2 = np.roll(r, -1, axis=0)
    cross = r[:, 0] * r2[:, 1] - r[:, 1] * r2[:, 0]
    dot = (r * r2).sum(axis=1)
    return int(round(np.arctan2(cross, dot).sum() / (2 * np.pi)))


def write_points_csv(pts, path):
    """One point per line as ``index,x,y`` with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(pts.points):
            w.writerow([i, f"{x:.17g}", f"{y:.17g}"])


def write_edges_csv(tri, path):
    """One Delaunay edge per line as ``index,u,v,x_u,y_u,x_v,y_v``."""
    P = tri.points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "u", "v", "x_u", "y_u", "x_v", "y_v"])
        for k, (u, v) in enumerate(tri.edges):
            w.writerow([k, u, v] + [f"{c:.17g}" for c in (*P[u], *P[v])])
