"""Per-sample deterministic checks and the ``verify`` suite.

Every ``check_*`` function draws one random sample from its own seed and
returns a :class:`CheckResult`.  A failing result is a bug in the library
(the underlying statements hold for every sample), not a statistical
fluctuation.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from . import fpp, percolation, renormalization
from ._parallel import pmap
from .errors import PreconditionViolated
from .fpp import PassageDistribution, assign_weights, passage_time
from .geometry import SAFE_MARGIN, PointSet, Window, delaunay, locate, sample_poisson
from .predicates import incircle_exact
from .renormalization import BoxSpec
from .rng import Lane, derive_seed

__all__ = ["CheckResult", "check_delaunay", "check_passage_oracle", "check_truncation",
           "check_passage_bound", "check_locality", "check_annulus", "check_circuit_certificate",
           "check_crossing_threshold", "run_suite", "SUITE"]


@dataclass
class CheckResult:
    passed: bool
    info: dict = field(default_factory=dict)
    skipped: bool = False


def _rng(seed):
    return np.random.default_rng(seed)


# -- geometry ----------------------------------------------------------------

def empty_circle_violations(tri):
    """Number of (triangle, site) pairs with the site strictly inside the circumcircle.

    Candidates come from a KD-tree query with a slightly inflated radius; the
    decision is the exact in-circle sign.
    """
    P = tri.points
    tree = cKDTree(P)
    bad = 0
    for t, (a, b, c) in enumerate(tri.triangles):
        r = tri.circumradii[t] * (1 + 1e-9) + 1e-12
        for d in tree.query_ball_point(tri.circumcenters[t], r):
            if d not in (a, b, c) and incircle_exact(P[a], P[b], P[c], P[d]) > 0:
                bad += 1
    return bad


def check_delaunay(seed, max_points=200, queries=1000):
    """Empty circumcircles, Euler's formula and point location on one scene."""
    rng = _rng(seed)
    half = rng.uniform(3.0, 7.0)
    lam = rng.uniform(0.5, 1.0) * max_points / (4 * half * half) * 0.7
    pts = sample_poisson(lam, Window.square((0.0, 0.0), half), seed)
    if len(pts) > max_points:
        pts = PointSet.from_points(pts.points[:max_points], pts.window, pts.intensity, seed)
    if len(pts) < 3:
        return CheckResult(True, {"points": len(pts)}, skipped=True)
    tri = delaunay(pts)
    viol = empty_circle_violations(tri)
    euler = tri.euler_characteristic()
    q = np.column_stack([rng.uniform(-half, half, queries), rng.uniform(-half, half, queries)])
    P = tri.points
    mism = 0
    for x in q:
        d2 = ((P - x) ** 2).sum(axis=1)
        if locate(pts, x) != int(np.flatnonzero(d2 == d2.min())[0]):
            mism += 1
    ok = viol == 0 and euler == 2 and mism == 0
    return CheckResult(ok, {"points": len(pts), "violations": viol, "euler": euler,
                            "location_mismatches": mism})


# -- passage times -----------------------------------------------------------

def exhaustive_passage_time(n, edges, weights, v, w):
    """Minimum over simple paths, enumerated by depth-first search.

    Sums are accumulated from ``min(v, w)`` so that the floating-point
    result is comparable bit for bit with a search from that end.
    """
    if v == w:
        return 0.0
    adj = [[] for _ in range(n)]
    for (a, b), t in zip(edges, weights):
        adj[a].append((b, t))
        adj[b].append((a, t))
    s, goal = min(v, w), max(v, w)
    best = math.inf
    stack = [(s, 0.0, 1 << s)]
    while stack:
        u, acc, seen = stack.pop()
        for x, t in adj[u]:
            if seen >> x & 1:
                continue
            val = acc + t
            if x == goal:
                best = min(best, val)
            else:
                stack.append((x, val, seen | 1 << x))
    return best


def _random_distribution(rng):
    k = rng.integers(5)
    if k == 0:
        return PassageDistribution.exponential(1.0)
    if k == 1:
        return PassageDistribution.bernoulli(float(rng.uniform(0.1, 0.9)))
    if k == 2:
        return PassageDistribution.uniform(0.0, 2.0)
    if k == 3:
        return PassageDistribution.zero_mixture(0.3, PassageDistribution.exponential(2.0))
    return PassageDistribution.point_mass(float(rng.choice([0.0, 0.5, 1.0])))


def check_passage_oracle(seed, max_vertices=8):
    """Dijkstra against exhaustive simple-path enumeration on a tiny graph."""
    rng = _rng(seed)
    n = int(rng.integers(3, max_vertices + 1))
    pts = PointSet.from_points(rng.random((n, 2)), Window(0.0, 1.0, 0.0, 1.0), seed=seed)
    tri = delaunay(pts)
    g = assign_weights(tri, _random_distribution(rng), derive_seed(seed, Lane.WEIGHTS, 0))
    bad = 0
    for v, w in itertools.product(range(tri.n_vertices), repeat=2):
        ref = exhaustive_passage_time(tri.n_vertices, tri.edges, g.weights, v, w)
        if passage_time(g, v, w) != ref:
            bad += 1
    return CheckResult(bad == 0, {"vertices": tri.n_vertices, "edges": tri.n_edges,
                                  "mismatches": bad})


def check_truncation(seed, half=20.0, eps_list=(0.1, 0.5, 1.0)):
    """``eps * T_eps <= T`` between random site pairs, with ``T_eps`` the
    passage time of the indicator weights ``1{tau > eps}``."""
    rng = _rng(seed)
    pts = sample_poisson(1.0, Window.square((0.0, 0.0), half), derive_seed(seed, Lane.POINTS, 0))
    g = assign_weights(delaunay(pts), _random_distribution(rng), derive_seed(seed, Lane.WEIGHTS, 0))
    src = int(rng.integers(len(pts)))
    T = g.distances_from(src)
    worst = math.inf
    ok = True
    for eps in eps_list:
        Te = fpp.truncate_weights(g, eps).distances_from(src)
        ok &= bool(np.all(eps * Te <= T))
        worst = min(worst, float(np.min(T - eps * Te)))
    return CheckResult(ok, {"points": len(pts), "min_slack": worst})


# -- renormalization ---------------------------------------------------------

def passage_bound_sample(dist, L, n, intensity, point_seed, weight_seed, skip_trivial=False):
    """Good-box field and ``M <= 6 T(0, n)`` for one coupled scene.

    With ``skip_trivial`` a scene whose ``H`` field already admits no
    circuit (so ``M = 0`` since ``Y <= H``) is decided without building the
    triangulation; ``T`` is then reported as None.
    """
    m = int(math.floor(n / L))
    half = max((m + 2.5) * L + SAFE_MARGIN + 2.0, n + fpp.point_to_point_margin(n))
    pts = sample_poisson(intensity, Window.square((0.0, 0.0), half), point_seed)
    if skip_trivial:
        H = renormalization.h_field(pts, L, m)
        if renormalization.count_disjoint_good_circuits(H, m).M == 0:
            return {"M": 0, "T": None, "passed": True, "contaminated": False,
                    "good_fraction": 0.0, "trivial": True}
    g = assign_weights(delaunay(pts), dist, weight_seed)
    fld = renormalization.good_box_field(g, L, m, only_where_h=True)
    rep = renormalization.check_passage_bound(g, fld, n, L)
    return {"M": rep.M, "T": rep.T, "passed": rep.passed, "contaminated": rep.contaminated,
            "good_fraction": float(fld.Y.mean()), "trivial": False}


def check_passage_bound(seed, L=8.0, n=160.0, q=0.1):
    """``M_{floor(n/L)} <= 6 T(0, n)`` on one coupled Bernoulli scene."""
    r = passage_bound_sample(PassageDistribution.bernoulli(q), L, n, 1.0,
                             derive_seed(seed, Lane.POINTS, 0), derive_seed(seed, Lane.WEIGHTS, 0))
    return CheckResult(r["passed"], r)


def ring_scene(seed, L, intensity=1.0, attempts=50):
    """A scene around ``B_0^{5L/2}`` on which the full-box ring holds.

    Scenes are drawn from consecutive streams of ``seed`` until ``H_0``
    holds; ``None`` if none of ``attempts`` draws qualifies.
    """
    win = Window.square((0.0, 0.0), 2.5 * L + 2.0)
    for s in range(attempts):
        pts = sample_poisson(intensity, win, derive_seed(seed, Lane.POINTS, 0, s))
        if renormalization.h_event(pts, (0, 0), L):
            return pts, s
    return None, attempts


def check_locality(seed, L=16.0):
    """Resampling outside ``B^{5L/2}`` leaves the influence set of ``B^{3L/2}`` unchanged."""
    pts, s = ring_scene(seed, L)
    if pts is None:
        return CheckResult(True, {"draws": s}, skipped=True)
    same = renormalization.locality_check(pts, (0, 0), L, derive_seed(seed, Lane.POINTS, 1, s))
    return CheckResult(bool(same), {"draws": s + 1, "points": len(pts)})


def annulus_sample(seed, L, q):
    """Crossings, circuits and ``G`` around the origin for one coupled scene.

    The Voronoi labels are coupled to ``bernoulli(q)`` weights (an edge is
    open iff its dual weight is 1).
    """
    pts = sample_poisson(1.0, Window.square((0.0, 0.0), 1.5 * L + SAFE_MARGIN + 1.0),
                         derive_seed(seed, Lane.POINTS, 0))
    tri = delaunay(pts)
    g = assign_weights(tri, PassageDistribution.bernoulli(q), derive_seed(seed, Lane.WEIGHTS, 0))
    cfg = percolation.open_edges(tri, side="voronoi", coupling=g)
    crossings = [percolation.crossing_event(cfg, spec)
                 for spec in percolation.annulus_rectangles(L)]
    inner = BoxSpec((0, 0), L, Fraction(1, 2)).box
    outer = BoxSpec((0, 0), L, Fraction(3, 2)).box
    literal = percolation.circuit_in_annulus(cfg, inner, outer)
    separating = percolation.circuit_in_annulus(cfg, inner, outer, separating=True)
    G = renormalization.g_event(g, (0, 0), L)
    return {"four_crossings": all(crossings), "literal": literal is not None,
            "separating": separating is not None, "G": bool(G),
            "min_passage": float(renormalization.annulus_min_passage(g, (0, 0), L))}


def check_annulus(seed, L=None, q=None):
    """Four crossings imply a circuit; a separating circuit implies ``G``.

    ``L`` and ``q`` default to per-sample draws from ``[6, 8]`` and
    ``[0.05, 0.45]``.  A literal circuit without ``G`` is reported in
    ``info`` but is not a failure (only separating circuits block every
    admissible path).
    """
    rng = _rng(seed)
    L = float(rng.uniform(6.0, 8.0)) if L is None else float(L)
    q = float(rng.uniform(0.05, 0.45)) if q is None else float(q)
    r = annulus_sample(seed, L, q)
    ok = ((not r["four_crossings"] or r["literal"])
          and (not r["separating"] or r["G"]))
    r.update(L=L, q=q, literal_without_G=r["literal"] and not r["G"])
    return CheckResult(ok, r)


def random_field(rng, k):
    """A random 0/1 field on a ``k x k`` grid: Bernoulli or planted rings."""
    m = k // 2
    if rng.random() < 0.5:
        return rng.random((k, k)) < rng.uniform(0.3, 0.95)
    Y = rng.random((k, k)) < rng.uniform(0.05, 0.3)
    for r in range(1, m + 1):
        if rng.random() < 0.6:
            ring = np.zeros((k, k), bool)
            ring[m - r:m + r + 1, m - r:m + r + 1] = True
            ring[m - r + 1:m + r, m - r + 1:m + r] = False
            Y |= ring & (rng.random((k, k)) > rng.uniform(0.0, 0.1))
    return Y


def certificate_problems(Y, cc):
    """Reasons why the certificate of ``cc`` is invalid for field ``Y`` (empty if valid)."""
    m = cc.m
    k = Y.shape[0] // 2
    used = set()
    problems = []
    if len(cc.certificate) != cc.M:
        problems.append("certificate size differs from M")
    for c in cc.certificate:
        sites = [tuple(s) for s in c]
        if len(set(sites)) != len(sites):
            problems.append("circuit repeats a site")
        if any(max(abs(x), abs(y)) > m or not Y[x + k, y + k] or (x, y) == (0, 0)
               for x, y in sites):
            problems.append("circuit leaves the good sites of the box")
        if any(abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1
               for a, b in zip(sites, sites[1:] + sites[:1])):
            problems.append("circuit is not 4-connected")
        if renormalization.circuit_surrounds_origin(c) == 0:
            problems.append("circuit does not surround the origin")
        if used & set(sites):
            problems.append("circuits overlap")
        used |= set(sites)
    return problems


def check_circuit_certificate(seed):
    """The certificate of ``count_disjoint_good_circuits`` is a valid packing."""
    rng = _rng(seed)
    k = int(rng.choice([3, 5, 7, 9, 11, 15, 21]))
    Y = random_field(rng, k)
    cc = renormalization.count_disjoint_good_circuits(Y)
    probs = certificate_problems(Y, cc)
    return CheckResult(not probs, {"k": k, "M": cc.M, "problems": probs})


def check_crossing_threshold(seed, L=8.0):
    """The crossing at level ``p`` happens iff ``p`` exceeds the scene's critical value."""
    rng = _rng(seed)
    side = percolation.SIDES[int(rng.integers(2))]
    pts = sample_poisson(1.0, percolation.crossing_window(L), derive_seed(seed, Lane.POINTS, 0))
    tri = delaunay(pts)
    lab = derive_seed(seed, Lane.PERCOLATION, 0)
    spec = percolation.CrossingSpec.horizontal((0.0, 0.0), L)
    crit = percolation.crossing_critical_value(
        tri, side, percolation.edge_uniforms(tri.edges, lab), spec)
    probes = [float(crit), float(np.nextafter(crit, 2.0))] + list(rng.random(4))
    bad = [p for p in probes if 0.0 <= p <= 1.0 and percolation.crossing_event(
        percolation.open_edges(tri, p, lab, side), spec) != (p > crit)]
    return CheckResult(not bad, {"side": side, "critical": float(crit), "bad_probes": bad})


# -- suite ---------------------------------------------------------------------

# name -> (function, samples per unit of ``reps``, minimum samples)
SUITE = {
    "delaunay_oracle": (check_delaunay, 1.0, 5),
    "passage_time_oracle": (check_passage_oracle, 1.0, 10),
    "truncation_inequality": (check_truncation, 0.5, 3),
    "passage_bound": (lambda s: check_passage_bound(s, L=4.0, n=40.0), 0.25, 2),
    "locality": (check_locality, 0.25, 2),
    "annulus_circuits": (check_annulus, 1.0, 5),
    "circuit_certificate": (check_circuit_certificate, 2.0, 10),
    "crossing_threshold": (check_crossing_threshold, 0.5, 3),
}


def _run_one(task):
    name, seed = task
    try:
        return SUITE[name][0](seed)
    except PreconditionViolated as exc:
        return CheckResult(True, {"precondition": str(exc)}, skipped=True)


def run_suite(master_seed=0, reps=20, jobs=1, names=None):
    """Run every check of :data:`SUITE` on independent seeds.

    Returns one summary dict per check with the sample count, failures and
    the seeds of failing samples.
    """
    out = []
    for idx, name in enumerate(names or SUITE):
        _, scale, floor = SUITE[name]
        count = max(floor, int(math.ceil(scale * reps)))
        seeds = [derive_seed(master_seed, Lane.POINTS, r, 1000 + idx) for r in range(count)]
        res = pmap(_run_one, [(name, s) for s in seeds], jobs)
        failing = [s for s, r in zip(seeds, res) if not r.passed]
        out.append({"check": name, "samples": count,
                    "skipped": sum(r.skipped for r in res), "failures": len(failing),
                    "failing_seeds": failing, "passed": not failing})
    return out
