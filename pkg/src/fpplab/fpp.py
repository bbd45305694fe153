"""First-passage percolation on the Poisson-Delaunay triangulation.

Edge passage times are i.i.d. draws from a :class:`PassageDistribution`,
attached to edges by hashing the edge identity with a weight-lane seed (see
:func:`fpplab.rng.edge_uniforms`).  Passage times between sites are shortest
path lengths, computed with :func:`scipy.sparse.csgraph.dijkstra`.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from ._parallel import pmap
from .errors import InvalidParameterError, InvalidVertexError, OutOfWindowError
from .geometry import SAFE_MARGIN, Window, delaunay, locate, require_safe, sample_poisson
from .rng import Lane, derive_seed, edge_uniforms

_KINDS = ("bernoulli", "exponential", "uniform", "point_mass", "zero_mixture")


@dataclass(frozen=True)
class PassageDistribution:
    """Law of a single edge passage time.

    Build instances with the class methods; ``bernoulli(q)`` puts mass ``q``
    at 0 and ``1 - q`` at 1.
    """

    kind: str
    params: tuple
    base: Optional["PassageDistribution"] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameterError(f"unknown distribution kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if not all(math.isfinite(x) for x in p):
            raise InvalidParameterError(f"non-finite parameters {p}")
        ok = {
            "bernoulli": lambda: len(p) == 1 and 0 <= p[0] <= 1,
            "exponential": lambda: len(p) == 1 and p[0] > 0,
            "uniform": lambda: len(p) == 2 and 0 <= p[0] < p[1],
            "point_mass": lambda: len(p) == 1 and p[0] >= 0,
            "zero_mixture": lambda: len(p) == 1 and 0 <= p[0] <= 1 and self.base is not None,
        }[self.kind]()
        if not ok:
            raise InvalidParameterError(f"invalid parameters for {self.kind}: {p}")

    @classmethod
    def bernoulli(cls, q):
        return cls("bernoulli", (q,))

    @classmethod
    def exponential(cls, rate=1.0):
        return cls("exponential", (rate,))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (a, b))

    @classmethod
    def point_mass(cls, c):
        return cls("point_mass", (c,))

    @classmethod
    def zero_mixture(cls, q, base):
        return cls("zero_mixture", (q,), base)

    @property
    def F0(self):
        """``F(0) = P(tau = 0)``."""
        return float(self.cdf(0.0))

    def cdf(self, x):
        x = np.asarray(x, float)
        k, p = self.kind, self.params
        if k == "bernoulli":
            return np.where(x < 0, 0.0, np.where(x < 1, p[0], 1.0))
        if k == "exponential":
            return np.where(x < 0, 0.0, -np.expm1(-p[0] * np.maximum(x, 0)))
        if k == "uniform":
            return np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        if k == "point_mass":
            return np.where(x < p[0], 0.0, 1.0)
        q = p[0]
        return np.where(x < 0, 0.0, q + (1 - q) * self.base.cdf(x))

    def ppf(self, u):
        """Inverse-transform map from Uniform(0, 1) draws to passage times."""
        u = np.asarray(u, float)
        k, p = self.kind, self.params
        if k == "bernoulli":
            return (u >= p[0]).astype(float)
        if k == "exponential":
            return -np.log1p(-u) / p[0]
        if k == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if k == "point_mass":
            return np.full(u.shape, p[0])
        q = p[0]
        if q >= 1:
            return np.zeros(u.shape)
        return np.where(u < q, 0.0, self.base.ppf(np.clip((u - q) / (1 - q), 0.0, 1.0)))

    @property
    def moment_conditions(self):
        """Finiteness of ``E min(t1, t2, t3)`` and ``E min(t1, t2, t3)**2``.

        Every supported kind has finite moments of all orders, so both flags
        are true; they are kept as metadata for warnings.
        """
        return {"min3_mean_finite": True, "min3_second_moment_finite": True}

    def to_dict(self):
        names = {"bernoulli": ("q",), "exponential": ("rate",), "uniform": ("a", "b"),
                 "point_mass": ("c",), "zero_mixture": ("q",)}[self.kind]
        d = {"kind": self.kind, **dict(zip(names, self.params))}
        if self.base is not None:
            d["base"] = self.base.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        try:
            if kind == "zero_mixture":
                return cls.zero_mixture(d.pop("q"), cls.from_dict(d.pop("base")))
            args = {"bernoulli": ("q",), "exponential": ("rate",), "uniform": ("a", "b"),
                    "point_mass": ("c",)}[kind]
            params = tuple(d.pop(a) for a in args)
        except KeyError as exc:
            raise InvalidParameterError(f"missing distribution field {exc}") from None
        if d:
            raise InvalidParameterError(f"unknown distribution fields {sorted(d)}")
        return cls(kind, params)


class WeightedGraph:
    """Delaunay triangulation with one passage time per edge."""

    def __init__(self, tri, weights, dist, seed):
        weights = np.asarray(weights, float)
        if weights.shape != (tri.n_edges,):
            raise InvalidParameterError("one weight per edge required")
        if (weights < 0).any() or not np.isfinite(weights).all():
            raise InvalidParameterError("weights must be finite and nonnegative")
        weights.flags.writeable = False
        self.tri = tri
        self.weights = weights
        self.dist = dist
        self.seed = seed

    @cached_property
    def csr(self):
        e = self.tri.edges
        n = self.tri.n_vertices
        row = np.concatenate([e[:, 0], e[:, 1]])
        col = np.concatenate([e[:, 1], e[:, 0]])
        # explicit zeros are kept and treated as edges by csgraph
        return csr_matrix((np.concatenate([self.weights, self.weights]), (row, col)),
                          shape=(n, n))

    def _restricted_csr(self, bad):
        e = self.tri.edges
        keep = ~(bad[e[:, 0]] | bad[e[:, 1]])
        e, w = e[keep], self.weights[keep]
        n = self.tri.n_vertices
        return csr_matrix((np.concatenate([w, w]),
                           (np.concatenate([e[:, 0], e[:, 1]]),
                            np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))

    @cached_property
    def frontier_mask(self):
        """Boundary-flagged sites together with their Delaunay neighbours."""
        bad = self.tri.boundary_flag
        e = self.tri.edges
        out = bad.copy()
        out[e[bad[e[:, 1]], 0]] = True
        out[e[bad[e[:, 0]], 1]] = True
        return out

    @cached_property
    def clean_csr(self):
        """Adjacency restricted to sites that are not boundary-flagged.

        Every edge kept here is also an edge of the infinite-plane
        triangulation, so distances in this graph are free of the long
        hull edges that a finite window creates.
        """
        return self._restricted_csr(self.tri.boundary_flag)

    @cached_property
    def core_csr(self):
        return self._restricted_csr(self.frontier_mask)

    def windowed_distance(self, source, targets):
        """Passage time on :attr:`clean_csr` plus a contamination flag.

        Returns ``(T, contaminated)``.  The replicate counts as contaminated
        when ``source`` is near the boundary or when every geodesic of the
        clean graph passes through a site of :attr:`frontier_mask` (so that
        the value might depend on what lies beyond the window).
        """
        targets = np.atleast_1d(np.asarray(targets))
        if self.frontier_mask[source]:
            d = self.distances_from(source)
            return d[targets].astype(float), np.ones(len(targets), dtype=bool)
        d = dijkstra(self.clean_csr, directed=True, indices=int(source))[targets]
        core = dijkstra(self.core_csr, directed=True, indices=int(source))[targets]
        return d.astype(float), ~(core <= d)

    def _check(self, v):
        if not (isinstance(v, (int, np.integer)) and 0 <= v < self.tri.n_vertices):
            raise InvalidVertexError(f"{v!r} is not a vertex")
        return int(v)

    def distances_from(self, v, predecessors=False, limit=np.inf):
        """Single-source passage times from site ``v`` to every site."""
        v = self._check(v)
        return dijkstra(self.csr, directed=True, indices=v,
                        return_predecessors=predecessors, limit=limit)


def assign_weights(tri, dist, seed):
    """Attach i.i.d. passage times to the edges of ``tri``.

    The weight of edge ``{i, j}`` is ``dist.ppf(U)`` where ``U`` is the
    hashed uniform of ``(i, j)`` under ``seed``.
    """
    if not isinstance(dist, PassageDistribution):
        raise InvalidParameterError("dist must be a PassageDistribution")
    return WeightedGraph(tri, dist.ppf(edge_uniforms(tri.edges, seed)), dist, seed)


def passage_time(g, v, w):
    """First-passage time ``T(v, w)``.

    The search always starts from the smaller index so that ``T(v, w)`` and
    ``T(w, v)`` are the same floating-point number.
    """
    v, w = g._check(v), g._check(w)
    if v == w:
        return 0.0
    a, b = min(v, w), max(v, w)
    return float(g.distances_from(a)[b])


def passage_time_between_points(g, x, y):
    """``T(x, y) = T(v_x, v_y)`` for plane points ``x`` and ``y``."""
    pts = g.tri.pts
    return passage_time(g, locate(pts, x), locate(pts, y))


def passage_time_to_line(g, x, n, margin=SAFE_MARGIN):
    """Passage time from ``x`` to the half-plane ``{first coordinate >= n}``.

    Targets are the sites whose closed cell meets the half-plane.
    """
    win = g.tri.pts.window
    if not (win.xmin + margin <= n <= win.xmax - margin):
        raise OutOfWindowError(f"line x = {n} outside the safe part of {win.as_tuple()}")
    vx = locate(g.tri.pts, x)
    targets = g.tri.voronoi.cell_bbox[:, 1] >= n
    if targets[vx]:
        return 0.0
    d = g.distances_from(vx)
    return float(d[targets].min())


def box_boundary_targets(g, n, center=(0.0, 0.0)):
    """Sites whose closed cell meets the boundary of ``center + [-n, n]**2``."""
    box = Window.square(center, n)
    vor = g.tri.voronoi
    meets = vor.cells_meeting_box(box)
    bb = vor.cell_bbox
    inside = ((bb[:, 0] > box.xmin) & (bb[:, 1] < box.xmax)
              & (bb[:, 2] > box.ymin) & (bb[:, 3] < box.ymax))
    return meets & ~inside


def passage_time_to_box_boundary(g, n, center=(0.0, 0.0), margin=SAFE_MARGIN):
    """``T(center, boundary of center + [-n, n]**2)``."""
    if not n > 0:
        raise InvalidParameterError("n must be positive")
    require_safe(g.tri.pts.window, Window.square(center, n), margin, "box")
    v0 = locate(g.tri.pts, center)
    targets = box_boundary_targets(g, n, center)
    if targets[v0]:
        return 0.0
    return float(g.distances_from(v0)[targets].min())


@dataclass
class GrowthBall:
    """Sites reached from ``center`` within time ``t``.

    The region is the union of the closed Voronoi cells of ``reached``.
    """

    graph: WeightedGraph
    center: int
    t: float
    reached: np.ndarray
    truncated: bool

    @cached_property
    def _mask(self):
        m = np.zeros(self.graph.tri.n_vertices, dtype=bool)
        m[self.reached] = True
        return m

    def contains(self, x):
        return bool(self._mask[locate(self.graph.tri.pts, x)])

    def outer_radius(self, x):
        """Largest distance from ``x`` to a point of the region."""
        vor = self.graph.tri.voronoi
        polys = vor.cell_polygons(self.reached)
        return float(np.hypot(*(polys - np.asarray(x, float)).reshape(-1, 2).T).max())

    def inner_radius(self, x):
        """Largest ``r`` with the disk ``D(x, r)`` inside the region."""
        tri = self.graph.tri
        m = self._mask
        if not m[locate(tri.pts, x)]:
            return 0.0
        e = tri.edges
        cut = np.nonzero(m[e[:, 0]] != m[e[:, 1]])[0]
        vor = tri.voronoi
        if (~vor.bounded[cut]).any():
            return float("inf") if len(cut) == 0 else _seg_dist_min(vor, cut, x)
        return _seg_dist_min(vor, cut, x)


def _seg_dist_min(vor, ks, x):
    ks = ks[vor.bounded[ks]]
    if len(ks) == 0:
        return float("inf")
    a = vor.vertices[vor.edge_vertices[ks, 0]]
    b = vor.vertices[vor.edge_vertices[ks, 1]]
    x = np.asarray(x, float)
    d = b - a
    L2 = (d ** 2).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.clip(((x - a) * d).sum(axis=1) / L2, 0, 1)
    s = np.where(L2 > 0, s, 0.0)
    return float(np.hypot(*(a + s[:, None] * d - x).T).min())


def growth_ball(g, x, t):
    """The growth process ``B_x(t)``."""
    if not (t >= 0):
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    vx = locate(g.tri.pts, x)
    d = g.distances_from(vx, limit=t) if np.isfinite(t) else g.distances_from(vx)
    reached = np.nonzero(d <= t)[0]
    truncated = bool(g.tri.boundary_flag[reached].any())
    return GrowthBall(g, vx, float(t), reached, truncated)


def truncate_weights(g, eps):
    """Auxiliary indicator weights ``1{tau_e > eps}``."""
    if not (eps > 0 and math.isfinite(eps)):
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    w = (g.weights > eps).astype(float)
    q = float(np.clip(g.dist.cdf(eps), 0.0, 1.0)) if g.dist is not None else float("nan")
    dist = PassageDistribution.bernoulli(q) if math.isfinite(q) else None
    return WeightedGraph(g.tri, w, dist, g.seed)


# -- Monte Carlo estimators ---------------------------------------------------

def point_to_point_margin(n):
    return max(20.0, n / 2.0)


def point_to_point_window(n):
    """Window ``[-m, n + m] x [-m, m]`` used for ``T(0, n)``."""
    m = point_to_point_margin(n)
    return Window(-m, n + m, -m, m)


def path_to(pred, target):
    path = [int(target)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def build_scene(dist, window, intensity, point_seed, weight_seed):
    pts = sample_poisson(intensity, window, point_seed)
    tri = delaunay(pts)
    return assign_weights(tri, dist, weight_seed)


def _mu_replicate(task):
    dist, n, intensity, point_seed, weight_seed = task
    g = build_scene(dist, point_to_point_window(n), intensity, point_seed, weight_seed)
    pts = g.tri.pts
    v0, vn = locate(pts, (0.0, 0.0)), locate(pts, (float(n), 0.0))
    T, bad = g.windowed_distance(v0, [vn])
    return {"T": float(T[0]), "contaminated": bool(bad[0])}


@dataclass
class MuEstimate:
    """Time-constant estimate from ``T(0, n) / n`` over fresh scenes."""

    n_list: list
    mean: list
    var: list
    count: list
    q05: list
    estimate: float
    half_width: float
    largest_n_mean: float
    reps: int
    contaminated: int
    rows: list = field(default_factory=list, repr=False)
    moment_conditions: dict = field(default_factory=dict)


def estimate_mu(dist, n_list, reps, intensity=1.0, master_seed=0, jobs=1):
    """Estimate ``mu(F) = inf_n E T(0, n) / n``.

    For every ``n`` (``stream`` index ``i`` in :func:`derive_seed`) and
    replicate, a fresh scene is drawn on :func:`point_to_point_window`.
    Passage times are measured on the graph of unflagged sites and
    replicates flagged by :meth:`WeightedGraph.windowed_distance` are
    dropped and counted.  The point
    estimate is the minimum over ``n`` of the per-``n`` mean; the largest-``n``
    mean is reported alongside.
    """
    n_list = [float(n) for n in n_list]
    if not n_list or any(n <= 0 for n in n_list) or any(
            b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameterError("n_list must be increasing and positive")
    if reps < 1:
        raise InvalidParameterError("reps must be >= 1")
    tasks, meta = [], []
    for i, n in enumerate(n_list):
        for r in range(reps):
            ps = derive_seed(master_seed, Lane.POINTS, r, i)
            ws = derive_seed(master_seed, Lane.WEIGHTS, r, i)
            tasks.append((dist, n, intensity, ps, ws))
            meta.append((i, n, r, ps, ws))
    out = pmap(_mu_replicate, tasks, jobs)
    rows = [{"n": n, "replicate": r, "point_seed": ps, "weight_seed": ws, **o}
            for (i, n, r, ps, ws), o in zip(meta, out)]
    means, vars_, counts, q05 = [], [], [], []
    dropped = 0
    for n in n_list:
        vals = np.array([row["T"] / n for row in rows
                         if row["n"] == n and not row["contaminated"]])
        dropped += sum(1 for row in rows if row["n"] == n and row["contaminated"])
        counts.append(len(vals))
        means.append(float(vals.mean()) if len(vals) else float("nan"))
        vars_.append(float(vals.var(ddof=1)) if len(vals) > 1 else float("nan"))
        q05.append(float(np.quantile(vals, 0.05)) if len(vals) else float("nan"))
    k = int(np.nanargmin(means))
    hw = 1.96 * math.sqrt(vars_[k] / counts[k]) if counts[k] > 1 else float("inf")
    return MuEstimate(n_list, means, vars_, counts, q05, means[k],
                      0.0 if means[k] == 0 and vars_[k] == 0 else hw,
                      means[-1], reps, dropped, rows, dist.moment_conditions)


def unit_directions(k):
    ang = 2 * np.pi * np.arange(k) / k
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _shape_replicate(task):
    dist, n, dirs, intensity, point_seed, weight_seed = task
    m = point_to_point_margin(n)
    g = build_scene(dist, Window.square((0.0, 0.0), n + m), intensity, point_seed, weight_seed)
    pts = g.tri.pts
    v0 = locate(pts, (0.0, 0.0))
    T, bad = g.windowed_distance(v0, locate(pts, n * dirs))
    return T.tolist(), bad.tolist()


@dataclass
class ShapeReport:
    """Directional means of ``T(0, n u) / n``."""

    n: float
    directions: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    count: np.ndarray
    cv: Optional[float]
    antipodal: list
    contaminated: int
    rows: list = field(default_factory=list, repr=False)

    @property
    def antipodal_ok(self):
        return all(p["within_band"] for p in self.antipodal)


def shape_anisotropy(dist, n, directions=8, reps=100, master_seed=0, intensity=1.0,
                     jobs=1, alpha=0.05):
    """Compare ``T(0, n u) / n`` across directions ``u``.

    One square scene of half-width ``n + max(20, n/2)`` per replicate serves
    every direction.  The coefficient of variation of the directional means
    is ``None`` when the overall mean is zero.  Antipodal pairs are compared
    with a Bonferroni-adjusted joint band at level ``alpha``.
    """
    dirs = unit_directions(directions) if np.isscalar(directions) else np.asarray(directions, float)
    if len(dirs) < 4:
        raise InvalidParameterError("need at least 4 directions")
    if not n > 0:
        raise InvalidParameterError("n must be positive")
    tasks = [(dist, float(n), dirs, intensity,
              derive_seed(master_seed, Lane.POINTS, r),
              derive_seed(master_seed, Lane.WEIGHTS, r)) for r in range(reps)]
    out = pmap(_shape_replicate, tasks, jobs)
    T = np.array([o[0] for o in out]) / n
    bad = np.array([o[1] for o in out])
    vals = np.where(bad, np.nan, T)
    count = (~bad).sum(axis=0)
    mean = np.nanmean(vals, axis=0)
    sd = np.nanstd(vals, axis=0, ddof=1) if reps > 1 else np.zeros(len(dirs))
    grand = float(mean.mean())
    cv = float(np.std(mean, ddof=1) / grand) if grand > 0 else None
    pairs = []
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            if np.allclose(dirs[i], -dirs[j], atol=1e-12):
                pairs.append((i, j))
    z = stats.norm.ppf(1 - alpha / (2 * max(1, len(pairs))))
    antipodal = []
    for i, j in pairs:
        se = math.sqrt(sd[i] ** 2 / count[i] + sd[j] ** 2 / count[j]) if reps > 1 else 0.0
        diff = float(mean[i] - mean[j])
        antipodal.append({"i": i, "j": j, "diff": diff, "band": float(z * se),
                          "within_band": abs(diff) <= z * se})
    rows = [{"replicate": r, "direction": k, "T": float(T[r, k] * n),
             "contaminated": bool(bad[r, k])}
            for r in range(reps) for k in range(len(dirs))]
    return ShapeReport(float(n), dirs, mean, sd, count, cv, antipodal,
                       int(bad.sum()), rows)
