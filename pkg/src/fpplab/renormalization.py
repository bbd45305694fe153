"""Block renormalization: full boxes, good boxes and disjoint good circuits.

Lattice site ``z`` at scale ``L`` owns the boxes ``B_z^{rL} = L z +
[-rL, rL]**2``.  A site is *good* when every box of its ring (the 16 sites
at sup-distance 2) is full and every Delaunay path crossing the annulus
``B_z^{3L/2} minus B_z^{L/2}`` has passage time at least 1.  Fields of good
sites are stored as ``(2m + 1, 2m + 1)`` arrays indexed by ``[x + m, y + m]``.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from ._parallel import pmap
from .errors import InvalidParameterError, OutOfWindowError, PreconditionViolated
from .fpp import PassageDistribution, assign_weights
from .geometry import (SAFE_MARGIN, PointSet, Window, delaunay, locate, point_in_polygon_winding,
                       require_safe, sample_poisson, segments_meet_box_boundary)
from .percolation import winding_cycle
from .rng import Lane, derive_seed

RADII = (Fraction(1, 2), Fraction(3, 2), Fraction(2), Fraction(5, 2))
RING_OFFSETS = tuple((dx, dy) for dx in range(-2, 3) for dy in range(-2, 3)
                     if max(abs(dx), abs(dy)) == 2)
ADJACENCY = {"circuit": 4, "dual_path": 8}


@dataclass(frozen=True)
class BoxSpec:
    """The box ``L z + [-rL, rL]**2`` with ``r`` in ``{1/2, 3/2, 2, 5/2}``."""

    z: tuple
    L: float
    r: Fraction

    def __post_init__(self):
        r = Fraction(self.r).limit_denominator(2)
        if r not in RADII or Fraction(self.r) != r:
            raise InvalidParameterError(f"r must be one of {[str(x) for x in RADII]}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise InvalidParameterError("L must be positive")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "z", (int(self.z[0]), int(self.z[1])))

    @property
    def center(self):
        return (self.L * self.z[0], self.L * self.z[1])

    @property
    def box(self):
        return Window.square(self.center, float(self.r) * self.L)


def ring_sites(z):
    """The 16 sites at sup-distance exactly 2 from ``z``."""
    return [(z[0] + dx, z[1] + dy) for dx, dy in RING_OFFSETS]


# -- full boxes and the H event ----------------------------------------------

def _subbox_hits(P, x0, y0, s, nx, ny):
    """Occupancy of the closed cells of an ``nx x ny`` grid of side ``s``.

    A point on a shared side belongs to both neighbouring cells.
    """
    occ = np.zeros((nx, ny), dtype=bool)
    if len(P) == 0:
        return occ
    fx = (P[:, 0] - x0) / s
    fy = (P[:, 1] - y0) / s
    ok = (fx >= 0) & (fx <= nx) & (fy >= 0) & (fy <= ny)
    fx, fy = fx[ok], fy[ok]
    for ix in (np.floor(fx), np.ceil(fx) - 1):
        for iy in (np.floor(fy), np.ceil(fy) - 1):
            i = np.clip(ix, 0, nx - 1).astype(np.int64)
            j = np.clip(iy, 0, ny - 1).astype(np.int64)
            occ[i, j] = True
    return occ


def is_full_box(pts, z, L):
    """Whether all 36 sub-boxes (a 6 x 6 grid) of ``B_z^{L/2}`` hold a point."""
    box = BoxSpec(z, L, Fraction(1, 2)).box
    if not pts.window.contains_box(box):
        raise OutOfWindowError(f"box {box.as_tuple()} leaves the window")
    return bool(_subbox_hits(pts.points, box.xmin, box.ymin, L / 6.0, 6, 6).all())


def h_event(pts, z, L):
    """All 16 ring boxes around ``z`` are full."""
    return all(is_full_box(pts, zp, L) for zp in ring_sites(z))


def full_box_grid(pts, L, extent):
    """``full[x + extent, y + extent]`` for all ``|z|_inf <= extent``."""
    k = 2 * extent + 1
    x0 = -L * extent - L / 2.0
    box = Window(x0, -x0, x0, -x0)
    if not pts.window.contains_box(box):
        raise OutOfWindowError(f"boxes up to {extent} leave the window")
    occ = _subbox_hits(pts.points, x0, x0, L / 6.0, 6 * k, 6 * k)
    return occ.reshape(k, 6, k, 6).all(axis=(1, 3))


def _ring_and(full, extent, m):
    """``H`` on ``|z|_inf <= m`` from a full-box grid of the given extent."""
    k = 2 * m + 1
    H = np.ones((k, k), dtype=bool)
    o = extent - m
    for dx, dy in RING_OFFSETS:
        H &= full[o + dx:o + dx + k, o + dy:o + dy + k]
    return H


def h_field(pts, L, m):
    """``H_z`` for all ``|z|_inf <= m``, indexed ``[x + m, y + m]``."""
    return _ring_and(full_box_grid(pts, L, m + 2), m + 2, m)


# -- the G event -------------------------------------------------------------

def _bbox_meets(bb, box):
    return ((bb[:, 0] <= box.xmax) & (bb[:, 1] >= box.xmin)
            & (bb[:, 2] <= box.ymax) & (bb[:, 3] >= box.ymin))


def annulus_min_passage(g, z, L):
    """Minimum of ``t(gamma)`` over paths crossing the annulus around ``z``.

    Paths ``v_1 .. v_h`` have a first edge meeting the boundary of
    ``B_z^{L/2}``, a last edge meeting the boundary of ``B_z^{3L/2}`` and
    intermediate sites whose closed cells meet ``B_z^{3L/2}``.  The minimum
    over such walks (computed by Dijkstra between two super-nodes) equals
    the minimum over self-avoiding ones because weights are nonnegative.
    """
    tri = g.tri
    P = tri.points
    B1 = BoxSpec(z, L, Fraction(1, 2)).box
    B3 = BoxSpec(z, L, Fraction(3, 2)).box
    vor = tri.voronoi
    cand = np.nonzero(_bbox_meets(vor.cell_bbox, B3))[0]
    elig = vor.cells_meeting_box(B3, candidates=cand)
    E = tri.edges
    near = np.nonzero(_bbox_meets(tri.edge_bbox, B3))[0]
    En, w = E[near], g.weights[near]
    a, b = P[En[:, 0]], P[En[:, 1]]
    m1 = segments_meet_box_boundary(a, b, B1)
    m3 = segments_meet_box_boundary(a, b, B3)
    n = tri.n_vertices
    S, T = n, n + 1
    u, v = En[:, 0], En[:, 1]
    rows, cols, ws = [], [], []

    def add(mask, r, c):
        rows.append(np.broadcast_to(r, mask.shape)[mask])
        cols.append(np.broadcast_to(c, mask.shape)[mask])
        ws.append(w[mask])

    add(elig[u] & elig[v], u, v)
    for end in (u, v):
        add(m1 & elig[end], S, end)
        add(m3 & elig[end], end, T)
    add(m1 & m3, S, T)
    r = np.concatenate(rows).astype(np.int64)
    c = np.concatenate(cols).astype(np.int64)
    ww = np.concatenate(ws)
    if len(r) == 0:
        return float("inf")
    lo, hi = np.minimum(r, c), np.maximum(r, c)
    order = np.lexsort((ww, hi, lo))
    lo, hi, ww = lo[order], hi[order], ww[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    lo, hi, ww = lo[first], hi[first], ww[first]
    # compact node numbering keeps the Dijkstra small
    nodes, inv = np.unique(np.concatenate([lo, hi, [S, T]]), return_inverse=True)
    k = len(lo)
    li, hi_ = inv[:k], inv[k:2 * k]
    s_i, t_i = inv[-2], inv[-1]
    N = len(nodes)
    mat = csr_matrix((np.concatenate([ww, ww]),
                      (np.concatenate([li, hi_]), np.concatenate([hi_, li]))), shape=(N, N))
    return float(dijkstra(mat, directed=True, indices=int(s_i))[t_i])


def g_event(g, z, L, margin=SAFE_MARGIN):
    """Every annulus-crossing path around ``z`` has passage time ``>= 1``."""
    require_safe(g.tri.pts.window, BoxSpec(z, L, Fraction(3, 2)).box, margin, "annulus")
    return annulus_min_passage(g, z, L) >= 1.0


def _light_components(g, threshold=1.0):
    """Bounding boxes of components of ``{tau < threshold}`` edges."""
    E = g.tri.edges
    light = g.weights < threshold
    if not light.any():
        return np.empty((0, 4)), np.empty(0)
    n = g.tri.n_vertices
    El = E[light]
    mat = csr_matrix((np.ones(len(El)), (El[:, 0], El[:, 1])), shape=(n, n))
    ncomp, lab = connected_components(mat, directed=False)
    used = np.zeros(n, dtype=bool)
    used[El.ravel()] = True
    P = g.tri.points
    lab_u = lab[used]
    bb = np.empty((ncomp, 4))
    bb[:, 0] = np.inf
    bb[:, 1] = -np.inf
    bb[:, 2] = np.inf
    bb[:, 3] = -np.inf
    np.minimum.at(bb[:, 0], lab_u, P[used, 0])
    np.maximum.at(bb[:, 1], lab_u, P[used, 0])
    np.minimum.at(bb[:, 2], lab_u, P[used, 1])
    np.maximum.at(bb[:, 3], lab_u, P[used, 1])
    keep = np.isfinite(bb[:, 0])
    bb = bb[keep]
    ext = np.maximum(bb[:, 1] - bb[:, 0], bb[:, 3] - bb[:, 2])
    return bb, ext


def g_values(g, L, sites, margin=SAFE_MARGIN):
    """``G_z`` for each site, skipping exact searches that cannot fail.

    A path of passage time below 1 uses only edges with ``tau < 1`` and
    joins the boundaries of ``B_z^{L/2}`` and ``B_z^{3L/2}``, so it lies in
    one such light component whose extent is at least ``L`` and whose
    bounding box meets ``B_z^{3L/2}``.  Sites without such a component are
    good for ``G`` without a search.
    """
    sites = [tuple(int(c) for c in z) for z in sites]
    for z in sites:
        require_safe(g.tri.pts.window, BoxSpec(z, L, Fraction(3, 2)).box, margin, "annulus")
    bb, ext = _light_components(g)
    big = bb[ext >= L]
    out = np.ones(len(sites), dtype=bool)
    for i, z in enumerate(sites):
        B3 = BoxSpec(z, L, Fraction(3, 2)).box
        hit = ((big[:, 0] <= B3.xmax) & (big[:, 1] >= B3.xmin)
               & (big[:, 2] <= B3.ymax) & (big[:, 3] >= B3.ymin))
        if hit.any():
            out[i] = annulus_min_passage(g, z, L) >= 1.0
    return out


# -- good-box fields ---------------------------------------------------------

@dataclass
class GoodBoxField:
    """Indicators ``Y = H and G`` on ``|z|_inf <= m``."""

    L: float
    m: int
    H: np.ndarray
    G: np.ndarray
    adjacency: dict = field(default_factory=lambda: dict(ADJACENCY))

    @property
    def Y(self):
        return self.H & self.G

    def __getitem__(self, z):
        return bool(self.Y[z[0] + self.m, z[1] + self.m])


def good_box_field(g, L, m, margin=SAFE_MARGIN, only_where_h=False):
    """Good-box field of a weighted scene for all ``|z|_inf <= m``.

    With ``only_where_h`` the annulus searches run only at sites where
    ``H`` holds, and ``G`` is recorded as False elsewhere.  ``Y`` is the
    same either way; only the ``G`` array loses information.
    """
    if m < 0:
        raise InvalidParameterError("extent must be >= 0")
    pts = g.tri.pts
    try:
        require_safe(pts.window, Window.square((0.0, 0.0), (m + 2.5) * L), 0.0, "ring boxes")
        require_safe(pts.window, Window.square((0.0, 0.0), (m + 1.5) * L), margin, "annuli")
    except OutOfWindowError as exc:
        raise OutOfWindowError(f"extent {m} too large for the window: {exc}") from None
    H = h_field(pts, L, m)
    sites = [(x, y) for x in range(-m, m + 1) for y in range(-m, m + 1)]
    G = np.zeros(len(sites), dtype=bool)
    want = H.ravel() if only_where_h else np.ones(len(sites), dtype=bool)
    if want.any():
        G[want] = g_values(g, L, [z for z, w in zip(sites, want) if w], margin)
    return GoodBoxField(float(L), int(m), H, G.reshape(2 * m + 1, 2 * m + 1))


def site_values(g, L, sites, margin=SAFE_MARGIN):
    """``(H, G)`` arrays for an arbitrary list of sites."""
    pts = g.tri.pts
    H = np.array([h_event(pts, z, L) for z in sites], dtype=bool)
    return H, g_values(g, L, sites, margin)


# -- disjoint good circuits --------------------------------------------------

_N8 = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
_N4 = [(1, 0), (-1, 0), (0, 1), (0, -1)]


@dataclass
class CircuitCount:
    """Maximum number of disjoint good circuits around the origin."""

    m: int
    M: int
    certificate: list
    oracle_checked: bool = False
    adjacency: dict = field(default_factory=lambda: dict(ADJACENCY))


def _as_grid(field_or_y):
    if isinstance(field_or_y, GoodBoxField):
        return field_or_y.Y, field_or_y.m
    Y = np.asarray(field_or_y, dtype=bool)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1] or Y.shape[0] % 2 == 0:
        raise InvalidParameterError("field must be a square array of odd side")
    return Y, Y.shape[0] // 2


def circuit_layers(Y, m, mf=None):
    """0-1 BFS distances: fewest good sites on an 8-path from the origin.

    The origin itself is never counted (a circuit around the origin cannot
    use it).  Returns the ``(2m+1, 2m+1)`` array of distances.
    """
    mf = m if mf is None else mf
    k = 2 * m + 1
    good = Y[mf - m:mf + m + 1, mf - m:mf + m + 1].copy()
    good[m, m] = False
    INF = np.iinfo(np.int64).max
    d = np.full((k, k), INF, dtype=np.int64)
    d[m, m] = 0
    dq = deque([(m, m)])
    while dq:
        x, y = dq.popleft()
        for dx, dy in _N8:
            a, b = x + dx, y + dy
            if 0 <= a < k and 0 <= b < k:
                nd = d[x, y] + int(good[a, b])
                if nd < d[a, b]:
                    d[a, b] = nd
                    if good[a, b]:
                        dq.append((a, b))
                    else:
                        dq.appendleft((a, b))
    return d, good


def _lattice_circuit(mask, m):
    """A 4-connected circuit of ``mask`` sites with winding +1 about the origin."""
    k = 2 * m + 1
    xs, ys = np.nonzero(mask)
    idx = -np.ones((k, k), dtype=np.int64)
    idx[xs, ys] = np.arange(len(xs))
    edges, volt = [], []
    for i, (x, y) in enumerate(zip(xs, ys)):
        for dx, dy in ((1, 0), (0, 1)):
            a, b = x + dx, y + dy
            if a < k and b < k and idx[a, b] >= 0:
                edges.append((i, idx[a, b]))
                # cut along the ray from the origin just above the positive x axis
                volt.append(1 if (dy == 1 and y - m == 0 and x - m > 0) else 0)
    if not edges:
        return None
    cyc = winding_cycle(np.array(edges), np.array(volt))
    if cyc is None:
        return None
    return [(int(xs[i]) - m, int(ys[i]) - m) for i in cyc]


def count_disjoint_good_circuits(field_or_y, m=None):
    """``M_m``: pairwise disjoint good 4-circuits around the origin in ``[-m, m]**2``.

    By planar duality ``M_m`` is the fewest good sites met by an 8-connected
    lattice path from the origin to the boundary of the box.  The
    certificate holds, for each ``k = 1 .. M``, a circuit among the good
    sites at 0-1 BFS distance ``k``; these layers are disjoint by
    construction.
    """
    Y, mf = _as_grid(field_or_y)
    m = mf if m is None else int(m)
    if m > mf or m < 0:
        raise InvalidParameterError(f"field extent {mf} smaller than m = {m}")
    if m == 0:
        return CircuitCount(0, 0, [])
    d, good = circuit_layers(Y, m, mf)
    k = 2 * m + 1
    ring = np.ones((k, k), dtype=bool)
    ring[1:-1, 1:-1] = False
    M = int(d[ring].min())
    cert = []
    for layer in range(1, M + 1):
        c = _lattice_circuit(good & (d == layer), m)
        if c is None:
            raise RuntimeError(f"no circuit found in layer {layer}; duality violated")
        cert.append(c)
    return CircuitCount(m, M, cert)


def circuit_surrounds_origin(circuit):
    """Winding number of a lattice circuit around the origin."""
    return point_in_polygon_winding(np.array(circuit, float), (0.0, 0.0))


# -- deterministic scene checks ----------------------------------------------

@dataclass
class PassageBoundReport:
    passed: bool
    M: int
    T: float
    m: int
    n: float
    L: float
    contaminated: bool


def check_passage_bound(g, fld, n, L):
    """Check ``M_{floor(n/L)} <= 6 T(0, n)`` on one coupled sample.

    ``T(0, n)`` is measured on the graph of unflagged sites (see
    :meth:`fpplab.fpp.WeightedGraph.windowed_distance`).
    """
    m = int(math.floor(n / L))
    cc = count_disjoint_good_circuits(fld, m)
    pts = g.tri.pts
    v0, vn = locate(pts, (0.0, 0.0)), locate(pts, (float(n), 0.0))
    T, bad = g.windowed_distance(v0, [vn])
    T = float(T[0])
    return PassageBoundReport(cc.M <= 6 * T, cc.M, T, m, float(n), float(L), bool(bad[0]))


def influence_set(tri, box):
    """Vertices whose cell meets ``box`` and edges between two such vertices.

    Returned as coordinate sets so that different scenes can be compared.
    """
    meet = tri.voronoi.cells_meeting_box(box)
    P = tri.points
    verts = {tuple(P[i]) for i in np.nonzero(meet)[0]}
    E = tri.edges
    both = meet[E[:, 0]] & meet[E[:, 1]]
    edges = {tuple(sorted((tuple(P[u]), tuple(P[v])))) for u, v in E[both]}
    return verts, edges


def resample_outside(pts, box, reseed):
    """Keep the points of the closed ``box`` and redraw the rest.

    With ``reseed == pts.seed`` the original configuration is reproduced.
    """
    fresh = sample_poisson(pts.intensity, pts.window, reseed).points
    keep = pts.points[pts.window.contains(pts.points) & box.contains(pts.points)]
    new = fresh[~box.contains(fresh)]
    return PointSet(np.concatenate([keep, new]), pts.window, pts.intensity, int(reseed))


def locality_check(pts, z, L, reseed, require_ring=True):
    """Resample outside ``B_z^{5L/2}`` and compare the influence sets of ``B_z^{3L/2}``.

    Raises :class:`PreconditionViolated` when the ring of full boxes is
    absent and ``require_ring`` is set.
    """
    B5 = BoxSpec(z, L, Fraction(5, 2)).box
    if not pts.window.contains_box(B5):
        raise OutOfWindowError("B^{5L/2} leaves the window")
    if require_ring and not h_event(pts, z, L):
        raise PreconditionViolated("ring of full boxes absent")
    other = resample_outside(pts, B5, reseed)
    B3 = BoxSpec(z, L, Fraction(3, 2)).box
    return influence_set(delaunay(pts), B3) == influence_set(delaunay(other), B3)


def empty_box(pts, box):
    """Remove every point of the closed ``box``."""
    keep = ~box.contains(pts.points)
    return PointSet(pts.points[keep], pts.window, pts.intensity, pts.seed)


# -- Monte Carlo ---------------------------------------------------------------

def h_failure_closed_form(L, intensity=1.0):
    """``P(H^c)`` for a Poisson process: 576 disjoint sub-boxes of area ``L**2/36``."""
    return -math.expm1(576 * math.log1p(-math.exp(-intensity * L * L / 36.0)))


def _curve_replicate(task):
    dist, L, intensity, point_seed, weight_seed = task
    half = 2.5 * L + SAFE_MARGIN + 1.0
    pts = sample_poisson(intensity, Window.square((0.0, 0.0), half), point_seed)
    H = h_event(pts, (0, 0), L)
    if len(pts) < 3:
        return H, False
    g = assign_weights(delaunay(pts), dist, weight_seed)
    return H, bool(g_values(g, L, [(0, 0)])[0])


@dataclass
class CurvePoint:
    L: float
    reps: int
    p_good: float
    p_good_hw: float
    p_h_fail: float
    p_h_fail_hw: float
    p_h_fail_exact: float
    p_g_fail: float
    p_g_fail_hw: float


def _band(k, n):
    ph = k / n
    return ph, 1.96 * math.sqrt(max(ph * (1 - ph), 1.0 / n) / n)


def good_box_probability_curve(dist, L_list, reps, master_seed=0, intensity=1.0, jobs=1):
    """Monte Carlo ``P(Y_0 = 1)`` per scale with the ``H``/``G`` split.

    Bands use the normal approximation with the variance floored at
    ``1/n`` so that estimates of exactly 0 or 1 keep a nonzero width.
    """
    out = []
    for i, L in enumerate(L_list):
        tasks = [(dist, float(L), intensity,
                  derive_seed(master_seed, Lane.POINTS, r, i),
                  derive_seed(master_seed, Lane.WEIGHTS, r, i)) for r in range(reps)]
        res = pmap(_curve_replicate, tasks, jobs)
        H = np.array([r[0] for r in res])
        G = np.array([r[1] for r in res])
        py, hy = _band(int((H & G).sum()), reps)
        ph, hh = _band(int((~H).sum()), reps)
        pg, hg = _band(int((~G).sum()), reps)
        out.append(CurvePoint(float(L), reps, py, hy, ph, hh,
                              h_failure_closed_form(L, intensity), pg, hg))
    return out


@dataclass
class DependenceResult:
    distance: int
    pair: tuple
    n: int
    corr: Optional[float]
    null_band: float


def dependence_scan(samples, pairs):
    """Sample correlations of good-box indicators across scenes.

    Parameters
    ----------
    samples : (N, k) bool array
        Indicator ``Y`` of ``k`` sites in each of ``N`` independent scenes.
    pairs : list of (i, j, distance)
        Columns to correlate and their lattice sup-distance.
    """
    X = np.asarray(samples, float)
    N = X.shape[0]
    res = []
    for i, j, dist in pairs:
        a, b = X[:, i], X[:, j]
        if a.std() == 0 or b.std() == 0:
            c = None
        else:
            c = float(np.corrcoef(a, b)[0, 1])
        res.append(DependenceResult(int(dist), (int(i), int(j)), N, c, 3.0 / math.sqrt(N)))
    return res


def _dependence_replicate(task):
    dist, L, sites, intensity, point_seed, weight_seed = task
    xs = [z[0] for z in sites]
    ys = [z[1] for z in sites]
    pad = 2.5 * L + SAFE_MARGIN + 1.0
    win = Window(L * min(xs) - pad, L * max(xs) + pad, L * min(ys) - pad, L * max(ys) + pad)
    pts = sample_poisson(intensity, win, point_seed)
    g = assign_weights(delaunay(pts), dist, weight_seed)
    H, G = site_values(g, L, sites)
    return (H & G).tolist()


def sample_site_indicators(dist, L, sites, reps, master_seed=0, intensity=1.0, jobs=1):
    """``Y_z`` at the given sites for ``reps`` independent scenes."""
    tasks = [(dist, float(L), [tuple(z) for z in sites], intensity,
              derive_seed(master_seed, Lane.POINTS, r, 7),
              derive_seed(master_seed, Lane.WEIGHTS, r, 7)) for r in range(reps)]
    return np.array(pmap(_dependence_replicate, tasks, jobs), dtype=bool)
