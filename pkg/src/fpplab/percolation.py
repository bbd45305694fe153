"""Bond percolation on the Voronoi tessellation and on the Delaunay graph.

Voronoi edge ``k`` is the dual of Delaunay edge ``k``, so one boolean array
over Delaunay edge indices labels either side.  On the Voronoi side the
graph vertices are triangle circumcenters and only bounded Voronoi edges
take part; on the Delaunay side the vertices are the sites themselves.

Every replicate draws one uniform ``U_e`` per edge; the edge is open at
level ``p`` iff ``U_e < p``.  Sharing the uniforms across ``p`` (common
random numbers) turns a crossing into a threshold event ``p > p_crit`` for
a per-scene critical value, which is what the estimators bisect on.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from ._parallel import pmap
from .errors import InvalidParameterError, OutOfWindowError
from .geometry import (SAFE_MARGIN, Window, delaunay, point_in_polygon_winding, require_safe,
                       sample_poisson, segments_meet_box, segments_meet_box_boundary,
                       segments_meet_box_interior)
from .predicates import orient2d, segments_intersect
from .rng import Lane, derive_seed, edge_uniforms

SIDES = ("voronoi", "delaunay")
PROXY = "3:1 long-way crossing frequency"


@dataclass(eq=False)
class PercolationConfig:
    """Open/closed labels on one side of a triangulation.

    ``open`` is indexed by Delaunay edge; on the Voronoi side rays are never
    part of the graph whatever their label.
    """

    tri: object
    side: str
    open: np.ndarray
    p: float
    seed: Optional[int] = None
    coupling: Optional[object] = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise InvalidParameterError(f"side must be one of {SIDES}")

    @property
    def positions(self):
        return self.tri.circumcenters if self.side == "voronoi" else self.tri.points

    @property
    def graph_edges(self):
        """``(m, 2)`` endpoints of every Delaunay-indexed edge on this side."""
        return self.tri.edge_triangles if self.side == "voronoi" else self.tri.edges

    @property
    def present(self):
        """Edges that exist on this side (all but Voronoi rays)."""
        if self.side == "voronoi":
            return self.tri.edge_triangles[:, 1] >= 0
        return np.ones(self.tri.n_edges, dtype=bool)

    @property
    def open_fraction(self):
        m = self.present
        return float(self.open[m].mean()) if m.any() else float("nan")


def open_edges(tri, p=None, seed=None, side="voronoi", coupling=None):
    """Label edges open independently with probability ``p``.

    With ``coupling`` (a :class:`~fpplab.fpp.WeightedGraph` carrying
    ``bernoulli(q)`` weights) the labels are ``open(e*) = (tau_e == 1)`` and
    ``p`` becomes ``1 - q``.
    """
    if coupling is not None:
        dist = coupling.dist
        if dist is None or dist.kind != "bernoulli":
            raise InvalidParameterError("coupling requires bernoulli weights")
        if coupling.tri is not tri:
            raise InvalidParameterError("coupled graph must share the triangulation")
        return PercolationConfig(tri, side, coupling.weights == 1.0, 1.0 - dist.params[0],
                                 coupling.seed, coupling)
    if p is None or not (0.0 <= p <= 1.0):
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    if seed is None:
        raise InvalidParameterError("seed required for uncoupled labels")
    u = edge_uniforms(tri.edges, seed)
    return PercolationConfig(tri, side, u < p, float(p), seed)


@dataclass(frozen=True)
class CrossingSpec:
    """A 3:1 rectangle and the direction in which it must be crossed.

    ``horizontal`` rectangles are three times wider than tall and are
    crossed from the left side to the right side; ``vertical`` ones are
    three times taller than wide and crossed from bottom to top.
    """

    rect: Window
    orientation: str

    def __post_init__(self):
        if self.orientation not in ("horizontal", "vertical"):
            raise InvalidParameterError("orientation must be horizontal or vertical")
        long_, short = ((self.rect.width, self.rect.height) if self.orientation == "horizontal"
                        else (self.rect.height, self.rect.width))
        if not math.isclose(long_, 3.0 * short, rel_tol=1e-12):
            raise InvalidParameterError("crossing rectangle must have aspect ratio 3:1")

    @classmethod
    def horizontal(cls, center, L):
        cx, cy = center
        return cls(Window(cx - 1.5 * L, cx + 1.5 * L, cy - 0.5 * L, cy + 0.5 * L), "horizontal")

    @classmethod
    def vertical(cls, center, L):
        cx, cy = center
        return cls(Window(cx - 0.5 * L, cx + 0.5 * L, cy - 1.5 * L, cy + 1.5 * L), "vertical")

    @property
    def L(self):
        return min(self.rect.width, self.rect.height)

    def sides(self):
        """Start side ``A`` and finish side ``B`` as segment endpoint pairs."""
        r = self.rect
        if self.orientation == "horizontal":
            return ((r.xmin, r.ymin), (r.xmin, r.ymax)), ((r.xmax, r.ymin), (r.xmax, r.ymax))
        return ((r.xmin, r.ymin), (r.xmax, r.ymin)), ((r.xmin, r.ymax), (r.xmax, r.ymax))


def annulus_rectangles(L, center=(0.0, 0.0)):
    """The four 3L x L rectangles tiling the annulus between the boxes of
    half-width ``L/2`` and ``3L/2`` (right, top, left, bottom), each to be
    crossed the long way."""
    cx, cy = center
    h, H = 0.5 * L, 1.5 * L
    return [
        CrossingSpec(Window(cx + h, cx + H, cy - H, cy + H), "vertical"),
        CrossingSpec(Window(cx - H, cx + H, cy + h, cy + H), "horizontal"),
        CrossingSpec(Window(cx - H, cx - h, cy - H, cy + H), "vertical"),
        CrossingSpec(Window(cx - H, cx + H, cy - H, cy - h), "horizontal"),
    ]


def _meets_segment(P, edges, seg):
    """Exact test of which edges meet the closed segment ``seg``."""
    a, b = np.asarray(seg[0], float), np.asarray(seg[1], float)
    p, q = P[edges[:, 0]], P[edges[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    cand = np.nonzero((np.minimum(p, q) <= hi).all(axis=1)
                      & (np.maximum(p, q) >= lo).all(axis=1))[0]
    out = np.zeros(len(edges), dtype=bool)
    if len(cand):
        out[cand] = segments_intersect(p[cand], q[cand], a, b)
    return out


def _crossing_structure(P, edges, spec):
    """Edges relevant to a crossing and the super-node edges they induce.

    Returns ``(e_idx, rows, cols)`` where node ``len(P)`` is the start side
    ``S`` and ``len(P) + 1`` the finish side ``T``.  Reading edge
    ``e_idx[k]`` as ``rows[k] -- cols[k]``:

    * inner edges join two vertices of the closed rectangle;
    * ``S -- b`` for an edge meeting side ``A`` with endpoint ``b`` inside;
    * ``b -- T`` likewise for side ``B``;
    * ``S -- T`` for a single edge meeting both sides.
    """
    n = len(P)
    S, T = n, n + 1
    sideA, sideB = spec.sides()
    inside = spec.rect.contains(P)
    mA = _meets_segment(P, edges, sideA)
    mB = _meets_segment(P, edges, sideB)
    u, v = edges[:, 0], edges[:, 1]
    parts = []
    inner = np.nonzero(inside[u] & inside[v])[0]
    parts.append((inner, u[inner], v[inner]))
    for mask, node in ((mA, S), (mB, T)):
        for end in (u, v):
            k = np.nonzero(mask & inside[end])[0]
            parts.append((k, np.full(len(k), node), end[k]))
    k = np.nonzero(mA & mB)[0]
    parts.append((k, np.full(len(k), S), np.full(len(k), T)))
    e_idx = np.concatenate([p[0] for p in parts]).astype(np.int64)
    rows = np.concatenate([p[1] for p in parts]).astype(np.int64)
    cols = np.concatenate([p[2] for p in parts]).astype(np.int64)
    return e_idx, rows, cols


def _side_arrays(cfg_or_tri, side):
    tri = cfg_or_tri
    if side == "voronoi":
        keep = np.nonzero(tri.edge_triangles[:, 1] >= 0)[0]
        return tri.circumcenters, tri.edge_triangles[keep], keep
    return tri.points, tri.edges, np.arange(tri.n_edges)


def _check_rect(tri, rect, margin):
    win = tri.pts.window
    if not win.contains_box(rect, margin):
        raise OutOfWindowError(f"rectangle {rect.as_tuple()} escapes the safe window")


def crossing_event(cfg, spec, margin=SAFE_MARGIN):
    """Whether an open path crosses ``spec`` in its long direction.

    A crossing is a self-avoiding open path ``v_1 .. v_h`` whose first edge
    meets side ``A``, whose last edge meets side ``B`` and whose vertices
    ``v_2 .. v_{h-1}`` lie in the closed rectangle; ``v_1`` and ``v_h`` may
    lie outside.  Taking a shortest such walk removes repeated vertices, so
    the test reduces to connectivity between the side super-nodes.
    """
    _check_rect(cfg.tri, spec.rect, margin)
    P, edges, keep = _side_arrays(cfg.tri, cfg.side)
    e_idx, rows, cols = _crossing_structure(P, edges, spec)
    sel = cfg.open[keep][e_idx]
    n = len(P) + 2
    g = coo_matrix((np.ones(int(sel.sum())), (rows[sel], cols[sel])), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    return bool(lab[n - 2] == lab[n - 1])


def crossing_critical_value(tri, side, uniforms, spec, margin=SAFE_MARGIN):
    """Smallest level above which the crossing of ``spec`` occurs.

    With labels ``open = U < p`` the crossing occurs iff ``p`` exceeds the
    minimax value of ``U`` over admissible paths, computed on a minimum
    spanning tree.  Returns ``inf`` when no crossing exists even at
    ``p = 1`` (which happens only for disconnected scenes).
    """
    _check_rect(tri, spec.rect, margin)
    P, edges, keep = _side_arrays(tri, side)
    e_idx, rows, cols = _crossing_structure(P, edges, spec)
    w = np.asarray(uniforms)[keep][e_idx]
    return _minimax(len(P) + 2, rows, cols, w, len(P), len(P) + 1)


def _minimax(n, rows, cols, w, s, t):
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    lo, hi, w = lo[first], hi[first], w[first]
    loop = lo != hi
    lo, hi, w = lo[loop], hi[loop], w[loop]
    g = csr_matrix((w, (lo, hi)), shape=(n, n))
    mst = minimum_spanning_tree(g)
    mst = mst + mst.T
    order, pred = breadth_first_order(mst, s, directed=False, return_predecessors=True)
    if pred[t] < 0 and t != s:
        return float("inf")
    best, v = 0.0, t
    while v != s:
        u = pred[v]
        best = max(best, mst[u, v])
        v = u
    return float(best)


# -- threshold estimation ----------------------------------------------------

def crossing_window(L, margin=SAFE_MARGIN + 1.0):
    return Window(-1.5 * L - margin, 1.5 * L + margin, -0.5 * L - margin, 0.5 * L + margin)


def _scene_critical(task):
    side, L, intensity, point_seed, label_seed = task
    pts = sample_poisson(intensity, crossing_window(L), point_seed)
    tri = delaunay(pts)
    u = edge_uniforms(tri.edges, label_seed)
    return crossing_critical_value(tri, side, u, CrossingSpec.horizontal((0.0, 0.0), L))


def scene_critical_values(side, L, reps, master_seed=0, stream=0, intensity=1.0, jobs=1):
    """Per-replicate critical levels of the horizontal ``3L x L`` crossing."""
    tasks = [(side, float(L), intensity,
              derive_seed(master_seed, Lane.POINTS, r, stream),
              derive_seed(master_seed, Lane.PERCOLATION, r, stream)) for r in range(reps)]
    return np.array(pmap(_scene_critical, tasks, jobs))


@dataclass
class EtaEstimate:
    p: float
    L: float
    reps: int
    crossings: int
    frequency: float
    half_width: float


def _wilson(k, n, z=1.96):
    if n == 0:
        return float("nan"), float("nan")
    ph = k / n
    den = 1 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return c - h, c + h


def estimate_eta(p, L, reps, master_seed=0, side="voronoi", intensity=1.0, jobs=1,
                 critical_values=None):
    """Crossing frequency of the ``3L x L`` rectangle at level ``p``.

    Scenes depend only on ``(master_seed, replicate)``, so calls with
    different ``p`` share their randomness and the frequency is
    nondecreasing in ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    crit = (scene_critical_values(side, L, reps, master_seed, 0, intensity, jobs)
            if critical_values is None else np.asarray(critical_values))
    k = int((p > crit).sum())
    lo, hi = _wilson(k, len(crit))
    return EtaEstimate(float(p), float(L), len(crit), k, k / len(crit), (hi - lo) / 2)


def bisect_frequency(freq, target=0.5, iterations=12, lo=0.0, hi=1.0):
    """Bisection on a nondecreasing frequency function.

    Returns ``(estimate, trace)``; ``trace`` rows are
    ``(iteration, lo, hi, p, frequency)``.
    """
    trace = []
    for it in range(iterations):
        mid = 0.5 * (lo + hi)
        f = freq(mid)
        trace.append({"iteration": it, "lo": lo, "hi": hi, "p": mid, "frequency": f})
        if f >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), trace


def quantile_band(values, target, level=0.95):
    """Distribution-free confidence interval for the ``target`` quantile."""
    x = np.sort(np.asarray(values, float))
    n = len(x)
    a = (1 - level) / 2
    i = int(stats.binom.ppf(a, n, target))
    j = int(stats.binom.ppf(1 - a, n, target))
    i = min(max(i - 1, 0), n - 1)
    j = min(j, n - 1)
    return float(x[i]), float(x[j])


@dataclass
class ThresholdEstimate:
    """Bisection-based threshold estimates for a list of scales."""

    side: str
    L_list: list
    reps: int
    tol: float
    estimate: list
    half_width: list
    stat_half_width: list
    estimate_90: list
    resolved: list
    traces: list
    probes: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    proxy: str = PROXY

    @property
    def p_hat(self):
        return self.estimate[-1]

    @property
    def p_hat_half_width(self):
        return self.half_width[-1]


def estimate_threshold(L_list, reps, tol=0.01, master_seed=0, side="voronoi", intensity=1.0,
                       jobs=1, iterations=12, critical_sampler: Optional[Callable] = None):
    """Bisect the crossing frequency to 1/2 (and to 0.9) for every ``L``.

    ``critical_sampler(L, stream, reps)`` may replace the scene generator; it
    must return per-replicate critical levels (a crossing occurs at ``p``
    iff ``p`` exceeds the level).  The confidence band of each estimate is
    the order-statistic interval of the corresponding quantile, widened to
    at least ``tol``; ``resolved`` records whether the statistical part
    alone fit inside ``tol``.
    """
    L_list = [float(L) for L in L_list]
    if not L_list or any(b <= a for a, b in zip(L_list, L_list[1:])) or L_list[0] <= 0:
        raise InvalidParameterError("L_list must be increasing and positive")
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    iterations = max(iterations, int(math.ceil(math.log2(1.0 / tol))) + 1)
    stream0 = 0 if side == "voronoi" else 1 << 10
    est, hw, shw, e90, res, traces, probes = [], [], [], [], [], [], []
    for i, L in enumerate(L_list):
        if critical_sampler is None:
            crit = scene_critical_values(side, L, reps, master_seed, stream0 + i, intensity, jobs)
        else:
            crit = np.asarray(critical_sampler(L, stream0 + i, reps), float)

        def freq(p):
            return float((p > crit).mean())

        p50, tr = bisect_frequency(freq, 0.5, iterations)
        p90, tr90 = bisect_frequency(freq, 0.9, iterations)
        lo, hi = quantile_band(crit, 0.5)
        s = max(p50 - lo, hi - p50, 0.0)
        est.append(p50)
        shw.append(s)
        hw.append(max(s, tol))
        res.append(s <= tol)
        e90.append(p90)
        traces.append({"L": L, "target_0.5": tr, "target_0.9": tr90})
        for row in tr + tr90:
            probes.append({"L": L, "p": row["p"], "reps": len(crit),
                           "crossings": int((row["p"] > crit).sum())})
    return ThresholdEstimate(side, L_list, reps, tol, est, hw, shw, e90, res, traces, probes,
                             {"master_seed": master_seed, "stream0": stream0})


def estimate_pc_star(L_list, reps, tol=0.01, master_seed=0, **kw):
    """Voronoi-side threshold estimate (dual critical probability)."""
    return estimate_threshold(L_list, reps, tol, master_seed, side="voronoi", **kw)


def estimate_pc_delaunay(L_list, reps, tol=0.01, master_seed=0, **kw):
    """Delaunay-side threshold estimate via the same crossing proxy."""
    return estimate_threshold(L_list, reps, tol, master_seed, side="delaunay", **kw)


# -- circuits in annuli ------------------------------------------------------

def _ray_voltage(P, a, b, c):
    """Signed crossings of edges ``a -> b`` with the ray ``{y = c_y, x > c_x}``."""
    pa, pb = P[a], P[b]
    up = (pa[:, 1] < c[1]) & (pb[:, 1] >= c[1])
    down = (pa[:, 1] >= c[1]) & (pb[:, 1] < c[1])
    out = np.zeros(len(a), dtype=np.int64)
    k = np.nonzero(up | down)[0]
    if len(k):
        o = orient2d(pa[k], pb[k], np.broadcast_to(c, (len(k), 2))).astype(np.int64)
        out[k] = np.where(up[k], (o > 0).astype(np.int64), -(o < 0).astype(np.int64))
    return out


def _separating_ok(tri, cfg_edges, P, inner, outer):
    """Voronoi edges that avoid every Delaunay segment meeting either box boundary."""
    S = tri.points
    E = tri.edges
    p, q = S[E[:, 0]], S[E[:, 1]]
    crit = np.nonzero(segments_meet_box_boundary(p, q, inner)
                      | segments_meet_box_boundary(p, q, outer))[0]
    ok = np.ones(len(cfg_edges), dtype=bool)
    if len(crit) == 0 or len(cfg_edges) == 0:
        return ok
    a, b = P[cfg_edges[:, 0]], P[cfg_edges[:, 1]]
    mid = 0.5 * (a + b)
    half = 0.5 * np.hypot(*(b - a).T)
    tree = cKDTree(mid)
    dm, dq = 0.5 * (p[crit] + q[crit]), 0.5 * np.hypot(*(q[crit] - p[crit]).T)
    hits = tree.query_ball_point(dm, dq + half.max() + 1e-9)
    ii = np.fromiter((i for i, h in enumerate(hits) for _ in h), dtype=np.int64)
    jj = np.fromiter((j for h in hits for j in h), dtype=np.int64)
    if len(ii):
        x = segments_intersect(p[crit[ii]], q[crit[ii]], a[jj], b[jj])
        ok[jj[x]] = False
    return ok


def circuit_in_annulus(cfg, inner, outer, separating=False, margin=SAFE_MARGIN):
    """Find an open circuit surrounding ``inner`` inside ``outer``.

    Eligible edges are open, have both endpoints in the closed ``outer``
    box and do not meet the open ``inner`` box.  With ``separating=True``
    they must also avoid the closed ``inner`` box, stay in the open
    ``outer`` box and cross no Delaunay segment that meets the boundary of
    either box; a circuit of such edges has every such segment strictly on
    one side, which is what the blocking argument for the good-box event
    needs.

    Detection lifts the eligible graph across the rightward ray from the
    center of ``inner``: each edge carries the signed number of times it
    crosses the ray, and a spanning forest assigns potentials.  A non-tree
    edge whose potentials disagree closes a fundamental cycle with nonzero
    winding number, and every surrounding circuit forces such an edge.

    Returns the circuit as a counter-clockwise list of vertex indices, or
    ``None``.
    """
    if not outer.contains_box(inner) or not (
            outer.xmin < inner.xmin and inner.xmax < outer.xmax
            and outer.ymin < inner.ymin and inner.ymax < outer.ymax):
        raise InvalidParameterError("inner box must lie strictly inside the outer box")
    require_safe(cfg.tri.pts.window, outer, margin, "annulus")
    P, edges, keep = _side_arrays(cfg.tri, cfg.side)
    E = edges[cfg.open[keep]]
    if len(E) == 0:
        return None
    a, b = P[E[:, 0]], P[E[:, 1]]
    if separating:
        ok = outer.contains_open(a) & outer.contains_open(b) & ~segments_meet_box(a, b, inner)
    else:
        ok = outer.contains(a) & outer.contains(b) & ~segments_meet_box_interior(a, b, inner)
    E = E[ok]
    if separating and len(E):
        E = E[_separating_ok(cfg.tri, E, P, inner, outer)]
    if len(E) == 0:
        return None
    c = np.array(inner.center, float)
    return winding_cycle(E, _ray_voltage(P, E[:, 0], E[:, 1], c))


def winding_cycle(edges, voltage):
    """A simple cycle of winding number +1 in a graph lifted across a cut.

    Parameters
    ----------
    edges : (m, 2) int array
        Undirected edges ``u -- v``.
    voltage : (m,) int array
        Signed number of cut crossings when traversing ``u -> v``.

    Returns
    -------
    list of int or None
        Vertices of the cycle in positive order, or ``None`` when every
        cycle of the graph has zero winding.

    Notes
    -----
    A breadth-first spanning forest assigns each vertex a potential equal
    to the voltage sum along its tree path.  Fundamental cycles generate the
    cycle space and winding is additive, so some fundamental cycle has
    nonzero winding iff some cycle does; a simple closed curve can only
    wind once.
    """
    nbrs = {}
    for k, (u, v) in enumerate(edges):
        nbrs.setdefault(int(u), []).append((int(v), int(voltage[k])))
        nbrs.setdefault(int(v), []).append((int(u), -int(voltage[k])))
    phi, parent, depth = {}, {}, {}
    for root in nbrs:
        if root in phi:
            continue
        phi[root], parent[root], depth[root] = 0, -1, 0
        dq = deque([root])
        while dq:
            u = dq.popleft()
            for v, s in nbrs[u]:
                if v not in phi:
                    phi[v], parent[v], depth[v] = phi[u] + s, u, depth[u] + 1
                    dq.append(v)
    for k, (u, v) in enumerate(edges):
        u, v = int(u), int(v)
        wind = phi[u] + int(voltage[k]) - phi[v]
        if wind == 0:
            continue
        # cycle: v .. lca .. u, then the edge u -> v
        pu, pv = [u], [v]
        while pu[-1] != pv[-1]:
            if depth[pu[-1]] >= depth[pv[-1]]:
                pu.append(parent[pu[-1]])
            else:
                pv.append(parent[pv[-1]])
        cyc = pv + pu[-2::-1]
        return cyc if wind > 0 else cyc[::-1]
    return None


def circuit_winding(cfg, circuit, x):
    """Winding number of a returned circuit around ``x`` by angle summation."""
    return point_in_polygon_winding(cfg.positions[np.asarray(circuit)], x)
