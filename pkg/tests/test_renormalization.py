import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box as sbox

from circuit_oracle import TooManyCycles, exhaustive_count
from fpplab import verify
from fpplab.errors import InvalidParameterError, OutOfWindowError, PreconditionViolated
from fpplab.fpp import PassageDistribution, WeightedGraph, assign_weights
from fpplab.geometry import PointSet, Window, delaunay, sample_poisson
from fpplab.renormalization import (BoxSpec, GoodBoxField, annulus_min_passage,
                                    count_disjoint_good_circuits, dependence_scan, empty_box,
                                    full_box_grid, g_event, g_values, good_box_field,
                                    good_box_probability_curve, h_event,
                                    h_failure_closed_form, is_full_box, locality_check,
                                    ring_sites)


def weighted_scene(L, seed, dist, half=None):
    half = half if half is not None else 1.5 * L + 8.0
    pts = sample_poisson(1.0, Window.square((0.0, 0.0), half), seed)
    return assign_weights(delaunay(pts), dist, seed + 1)


# -- boxes ---------------------------------------------------------------------

def test_box_spec_radii():
    assert BoxSpec((1, -2), 4.0, Fraction(3, 2)).box.as_tuple() == (-2.0, 10.0, -14.0, -2.0)
    assert BoxSpec((0, 0), 4.0, 0.5).r == Fraction(1, 2)
    for r in (1, Fraction(3, 4), 0.3):
        with pytest.raises(InvalidParameterError):
            BoxSpec((0, 0), 4.0, r)
    with pytest.raises(InvalidParameterError):
        BoxSpec((0, 0), -1.0, Fraction(1, 2))


def test_ring_sites():
    ring = ring_sites((3, 4))
    assert len(ring) == len(set(ring)) == 16
    assert all(max(abs(x - 3), abs(y - 4)) == 2 for x, y in ring)


def lattice_points(xy, half=20.0):
    return PointSet.from_points(np.asarray(xy, float), Window.square((0, 0), half))


def test_full_box_closed_subboxes():
    # L = 6: sub-boxes are unit squares of [-3, 3]^2; a point at an even
    # lattice corner lies on four closed sub-boxes, so nine points suffice
    nine = [(x, y) for x in (-2, 0, 2) for y in (-2, 0, 2)]
    assert is_full_box(lattice_points(nine), (0, 0), 6.0)
    assert not is_full_box(lattice_points(nine[:-1]), (0, 0), 6.0)
    # the box corner only touches one sub-box
    assert not is_full_box(lattice_points([(-3, -3)]), (0, 0), 6.0)
    centres = [(x + 0.5, y + 0.5) for x in range(-3, 3) for y in range(-3, 3)]
    assert is_full_box(lattice_points(centres), (0, 0), 6.0)
    assert not is_full_box(lattice_points(centres[1:]), (0, 0), 6.0)


def test_full_box_out_of_window():
    with pytest.raises(OutOfWindowError):
        is_full_box(lattice_points([(0, 0)], half=2.0), (0, 0), 6.0)


def test_full_box_grid_matches_per_box():
    pts = sample_poisson(1.0, Window.square((0, 0), 30.0), 4)
    grid = full_box_grid(pts, 5.0, 3)
    for x in range(-3, 4):
        for y in range(-3, 4):
            assert grid[x + 3, y + 3] == is_full_box(pts, (x, y), 5.0)


def test_h_event_dense_and_voided():
    pts = sample_poisson(30.0, Window.square((0, 0), 14.0), 1)
    assert h_event(pts, (0, 0), 4.0)
    # emptying one ring box breaks H; emptying the centre box does not
    assert not h_event(empty_box(pts, BoxSpec((2, 1), 4.0, Fraction(1, 2)).box), (0, 0), 4.0)
    assert h_event(empty_box(pts, BoxSpec((0, 0), 4.0, Fraction(1, 2)).box), (0, 0), 4.0)


def test_full_ring_cells_are_small():
    # with every sub-box of side L/6 occupied, a point of a full box is within
    # sqrt(2) L / 6 of a site, so Voronoi cells there have radius below L / 2
    L = 6.0
    pts = sample_poisson(12.0, Window.square((0, 0), 18.0), 2)
    assert h_event(pts, (0, 0), L)
    tri = delaunay(pts)
    ring = [BoxSpec(z, L, Fraction(1, 2)).box for z in ring_sites((0, 0))]
    rng = np.random.default_rng(0)
    from fpplab.geometry import locate
    for b in ring:
        q = np.column_stack([rng.uniform(b.xmin, b.xmax, 200), rng.uniform(b.ymin, b.ymax, 200)])
        d = np.hypot(*(pts.points[locate(pts, q)] - q).T)
        assert (d <= math.sqrt(2) * L / 6 + 1e-12).all()
    assert math.sqrt(2) / 3 < 0.5
    assert tri.n_vertices == len(pts)


# -- the G event -------------------------------------------------------------------

def oracle_min_passage(g, L):
    """Annulus-crossing minimum built from shapely geometry and networkx."""
    tri = g.tri
    P = tri.points
    B1 = sbox(-L / 2, -L / 2, L / 2, L / 2).exterior
    B3full = sbox(-1.5 * L, -1.5 * L, 1.5 * L, 1.5 * L)
    B3 = B3full.exterior
    from shapely.geometry import Polygon
    elig = np.array([Polygon(tri.voronoi.cell(i)).intersects(B3full) for i in range(len(P))])
    G = nx.Graph()
    best = math.inf
    starts, ends = {}, {}
    for k, (u, v) in enumerate(tri.edges):
        seg = LineString([P[u], P[v]])
        w = float(g.weights[k])
        hit1, hit3 = seg.intersects(B1), seg.intersects(B3)
        if hit1 and hit3:
            best = min(best, w)
        if elig[u] and elig[v]:
            G.add_edge(int(u), int(v), weight=w)
        for a, b in ((u, v), (v, u)):
            if hit1 and elig[b]:
                starts[int(b)] = min(starts.get(int(b), math.inf), w)
            if hit3 and elig[a]:
                ends[int(a)] = min(ends.get(int(a), math.inf), w)
    for s, ws in starts.items():
        G.add_node(s)
        dist = nx.single_source_dijkstra_path_length(G, s)
        for t, wt in ends.items():
            if t in dist:
                best = min(best, ws + dist[t] + wt)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_annulus_min_passage_matches_oracle(seed):
    L = 3.0
    dist = [PassageDistribution.exponential(1.0), PassageDistribution.bernoulli(0.5),
            PassageDistribution.uniform(0.0, 0.3)][seed % 3]
    g = weighted_scene(L, seed, dist)
    assert annulus_min_passage(g, (0, 0), L) == pytest.approx(oracle_min_passage(g, L), abs=1e-12)


def test_g_event_extremes():
    L = 4.0
    g1 = weighted_scene(L, 3, PassageDistribution.point_mass(1.0))
    g0 = weighted_scene(L, 3, PassageDistribution.point_mass(0.0))
    # every crossing path has at least one edge
    assert g_event(g1, (0, 0), L)
    hops = annulus_min_passage(g1, (0, 0), L)
    assert hops >= 1.0 and hops == int(hops)
    assert not g_event(g0, (0, 0), L)


def test_g_event_planted_light_path():
    L = 4.0
    g = weighted_scene(L, 5, PassageDistribution.point_mass(1.0))
    # zero out a shortest hop path from the origin to a far site
    from scipy.sparse.csgraph import shortest_path
    from fpplab.geometry import locate
    src, dst = locate(g.tri.pts, (0.0, 0.0)), locate(g.tri.pts, (2.0 * L, 0.3))
    _, pred = shortest_path(g.csr, indices=src, unweighted=True, return_predecessors=True)
    w = g.weights.copy()
    v = dst
    while v != src:
        w[g.tri.edge_index(pred[v], v)] = 0.0
        v = pred[v]
    light = WeightedGraph(g.tri, w, g.dist, g.seed)
    assert not g_event(light, (0, 0), L)
    assert annulus_min_passage(light, (0, 0), L) == 0.0


def test_g_event_margin():
    g = weighted_scene(4.0, 1, PassageDistribution.point_mass(1.0), half=7.0)
    with pytest.raises(OutOfWindowError):
        g_event(g, (0, 0), 4.0)


@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
def test_g_values_fast_path_agrees(q):
    L = 4.0
    pts = sample_poisson(1.0, Window.square((0, 0), 3 * L + 7.0), 11)
    g = assign_weights(delaunay(pts), PassageDistribution.bernoulli(q), 12)
    sites = [(x, y) for x in (-1, 0, 1) for y in (-1, 0, 1)]
    fast = g_values(g, L, sites)
    slow = [annulus_min_passage(g, z, L) >= 1.0 for z in sites]
    assert fast.tolist() == slow


def test_good_box_field_extremes():
    L = 4.0
    pts = sample_poisson(30.0, Window.square((0, 0), 3.5 * L + 6.0), 8)
    tri = delaunay(pts)
    one = good_box_field(assign_weights(tri, PassageDistribution.point_mass(1.0), 1), L, 1)
    zero = good_box_field(assign_weights(tri, PassageDistribution.point_mass(0.0), 1), L, 1)
    assert one.Y.all() and one.H.all()
    assert not zero.Y.any() and zero.H.all()
    for x in (-1, 0, 1):
        for y in (-1, 0, 1):
            assert one.H[x + 1, y + 1] == h_event(pts, (x, y), L)
    with pytest.raises(OutOfWindowError):
        good_box_field(assign_weights(tri, PassageDistribution.point_mass(1.0), 1), L, 3)


# -- disjoint good circuits ------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 3, 6])
def test_count_all_good_and_none(m):
    k = 2 * m + 1
    assert count_disjoint_good_circuits(np.ones((k, k), bool)).M == m
    assert count_disjoint_good_circuits(np.zeros((k, k), bool)).M == 0


def test_count_single_ring_and_gap():
    Y = np.zeros((7, 7), bool)
    Y[1:6, 1:6] = True
    Y[2:5, 2:5] = False
    assert count_disjoint_good_circuits(Y).M == 1
    Y[1, 3] = False
    assert count_disjoint_good_circuits(Y).M == 0
    # a diagonal step is not a 4-circuit
    Y = np.zeros((3, 3), bool)
    Y[[0, 1, 2, 1], [1, 2, 1, 0]] = True
    assert count_disjoint_good_circuits(Y).M == 0


def test_count_rejects_bad_fields():
    with pytest.raises(InvalidParameterError):
        count_disjoint_good_circuits(np.ones((4, 4), bool))
    with pytest.raises(InvalidParameterError):
        count_disjoint_good_circuits(np.ones((5, 5), bool), m=3)


def test_count_subbox():
    Y = np.ones((9, 9), bool)
    assert count_disjoint_good_circuits(Y, 2).M == 2
    assert count_disjoint_good_circuits(GoodBoxField(4.0, 4, Y, Y)).M == 4


@settings(max_examples=150, deadline=None)
@given(st.sampled_from([3, 5, 7]), st.integers(0, 2**32 - 1))
def test_count_matches_exhaustive_packing(k, seed):
    rng = np.random.default_rng(seed)
    Y = verify.random_field(rng, k)
    try:
        want = exhaustive_count(Y, k // 2, limit=1500, seconds=2.0)
    except TooManyCycles:
        return
    cc = count_disjoint_good_circuits(Y)
    assert cc.M == want
    assert verify.certificate_problems(Y, cc) == []


def test_certificate_on_large_fields():
    rng = np.random.default_rng(3)
    for k in (15, 21, 31):
        for _ in range(10):
            Y = verify.random_field(rng, k)
            cc = count_disjoint_good_circuits(Y)
            assert verify.certificate_problems(Y, cc) == []


# -- scene checks ------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_passage_bound_samples(seed):
    r = verify.passage_bound_sample(PassageDistribution.bernoulli(0.1), 4.0, 40.0, 1.0,
                                    100 + seed, 200 + seed)
    assert r["passed"]
    assert r["M"] <= 6 * r["T"]


def test_locality_reseed_identity_and_fresh():
    pts, _ = verify.ring_scene(5, 16.0)
    assert pts is not None
    assert locality_check(pts, (0, 0), 16.0, pts.seed)
    assert locality_check(pts, (0, 0), 16.0, pts.seed + 1)


def test_locality_requires_ring():
    pts, _ = verify.ring_scene(5, 16.0)
    holed = empty_box(pts, BoxSpec((2, 0), 16.0, Fraction(1, 2)).box)
    with pytest.raises(PreconditionViolated):
        locality_check(holed, (0, 0), 16.0, 1)
    # without the precondition the comparison still runs
    assert isinstance(locality_check(holed, (0, 0), 16.0, 1, require_ring=False), bool)


def test_annulus_check_samples():
    for seed in range(4):
        assert verify.check_annulus(seed).passed


# -- Monte Carlo helpers ------------------------------------------------------------------

def test_h_failure_closed_form():
    from decimal import Decimal, getcontext
    getcontext().prec = 60
    for L in (2.0, 8.0, 16.0, 30.0):
        want = 1 - (1 - (-Decimal(L * L) / 36).exp()) ** 576
        assert h_failure_closed_form(L) == pytest.approx(float(want), rel=1e-12, abs=1e-300)
    assert h_failure_closed_form(4.0) > 0.999
    assert h_failure_closed_form(40.0) < 1e-15
    # doubling the intensity is the same as scaling L by sqrt(2)
    assert h_failure_closed_form(10.0, 2.0) == pytest.approx(h_failure_closed_form(10.0 * math.sqrt(2)))


def test_dependence_scan_basic():
    rng = np.random.default_rng(0)
    a = rng.random(500) < 0.5
    X = np.column_stack([a, a, ~a, np.ones(500, bool)])
    res = dependence_scan(X, [(0, 1, 0), (0, 2, 0), (0, 3, 9)])
    assert res[0].corr == pytest.approx(1.0)
    assert res[1].corr == pytest.approx(-1.0)
    assert res[2].corr is None
    assert res[0].null_band == pytest.approx(3 / math.sqrt(500))


def test_curve_with_unit_weights_never_fails_g():
    pts = good_box_probability_curve(PassageDistribution.bernoulli(0.0), [3.0, 12.0], 6)
    assert [c.p_g_fail for c in pts] == [0.0, 0.0]
    assert pts[0].p_h_fail == 1.0 and pts[0].p_good == 0.0
    assert pts[1].p_h_fail_exact < pts[0].p_h_fail_exact


def test_field_restricted_to_h_sites_has_same_y():
    L = 6.0
    pts = sample_poisson(6.0, Window.square((0, 0), 4.5 * L + 6.0), 13)
    g = assign_weights(delaunay(pts), PassageDistribution.bernoulli(0.6), 14)
    full = good_box_field(g, L, 2)
    lazy = good_box_field(g, L, 2, only_where_h=True)
    assert 0 < full.H.sum() < full.H.size
    assert np.array_equal(full.Y, lazy.Y)
    assert not lazy.G[~lazy.H].any()


@pytest.mark.parametrize("L,n,lam,trivial", [(4.0, 40.0, 1.0, True), (4.0, 8.0, 32.0, False)])
def test_trivial_shortcut_agrees_with_full_sample(L, n, lam, trivial):
    dist = PassageDistribution.bernoulli(0.1)
    fast = verify.passage_bound_sample(dist, L, n, lam, 3, 53, skip_trivial=True)
    full = verify.passage_bound_sample(dist, L, n, lam, 3, 53)
    assert fast["trivial"] is trivial
    assert fast["M"] == full["M"] and fast["passed"] == full["passed"]
    if not trivial:
        assert fast == full
