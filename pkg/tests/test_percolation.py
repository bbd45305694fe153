import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpplab.errors import InvalidParameterError, OutOfWindowError
from fpplab.fpp import PassageDistribution, assign_weights
from fpplab.geometry import PointSet, Window, delaunay, sample_poisson
from fpplab.percolation import (CrossingSpec, annulus_rectangles, bisect_frequency,
                                circuit_in_annulus, circuit_winding, crossing_critical_value,
                                crossing_event, estimate_eta, estimate_pc_delaunay,
                                estimate_pc_star, estimate_threshold, open_edges,
                                winding_cycle)
from fpplab.predicates import segments_intersect
from fpplab.rng import edge_uniforms


def crossing_window(L, pad=6.0):
    return Window(-1.5 * L - pad, 1.5 * L + pad, -0.5 * L - pad, 0.5 * L + pad)


def scene(L=4.0, seed=0, intensity=1.0, pad=6.0):
    return delaunay(sample_poisson(intensity, crossing_window(L, pad), seed))


def side_graph(tri, side):
    if side == "voronoi":
        keep = np.nonzero(tri.edge_triangles[:, 1] >= 0)[0]
        return tri.circumcenters, tri.edge_triangles[keep], keep
    return tri.points, tri.edges, np.arange(tri.n_edges)


def brute_force_crossing(tri, side, open_mask, spec):
    """Depth-first search over self-avoiding open paths, following the
    segment-intersection definition literally."""
    P, E, keep = side_graph(tri, side)
    E = E[open_mask[keep]]
    (a1, a2), (b1, b2) = spec.sides()

    def meets(u, v, s, t):
        return bool(segments_intersect(P[[u]], P[[v]], np.array([s]), np.array([t]))[0])

    inside = spec.rect.contains(P)
    adj = {}
    for u, v in E:
        adj.setdefault(int(u), []).append(int(v))
        adj.setdefault(int(v), []).append(int(u))
    for u, v in E:
        for x, y in ((u, v), (v, u)):
            if not meets(x, y, a1, a2):
                continue
            if meets(x, y, b1, b2):
                return True  # h = 2
            if not inside[y]:
                continue
            stack = [(y, {x, y})]
            while stack:
                w, seen = stack.pop()
                for z in adj.get(w, []):
                    if z in seen:
                        continue
                    if meets(w, z, b1, b2):
                        return True
                    if inside[z]:
                        stack.append((z, seen | {z}))
    return False


# -- labels -------------------------------------------------------------------------

def test_open_edges_extremes_and_validation():
    tri = scene()
    assert open_edges(tri, 1.0, 3).open.all()
    assert not open_edges(tri, 0.0, 3).open.any()
    for p in (-0.1, 1.1):
        with pytest.raises(InvalidParameterError):
            open_edges(tri, p, 3)


def test_coupled_open_fraction():
    tri = delaunay(sample_poisson(1.0, Window.square((0, 0), 95.0), 1))
    assert tri.n_edges > 100_000
    g = assign_weights(tri, PassageDistribution.bernoulli(0.35), 2)
    cfg = open_edges(tri, coupling=g)
    assert cfg.p == pytest.approx(0.65)
    n = tri.n_edges
    assert abs(cfg.open.mean() - 0.65) < 3 * np.sqrt(0.65 * 0.35 / n)
    assert np.array_equal(cfg.open, g.weights == 1.0)


def test_coupling_requires_bernoulli_weights():
    tri = scene()
    g = assign_weights(tri, PassageDistribution.exponential(1.0), 2)
    with pytest.raises(InvalidParameterError):
        open_edges(tri, coupling=g)


def test_crossing_spec_aspect_ratio():
    with pytest.raises(InvalidParameterError):
        CrossingSpec(Window(0, 2, 0, 1), "horizontal")
    with pytest.raises(InvalidParameterError):
        CrossingSpec(Window(0, 3, 0, 1), "diagonal")
    assert CrossingSpec.vertical((0, 0), 2.0).rect.height == 6.0


# -- crossings ------------------------------------------------------------------------

@pytest.mark.parametrize("side", ["voronoi", "delaunay"])
def test_crossing_extremes(side):
    tri = scene(L=6.0, seed=4)
    spec = CrossingSpec.horizontal((0, 0), 6.0)
    assert crossing_event(open_edges(tri, 1.0, 1, side), spec)
    assert not crossing_event(open_edges(tri, 0.0, 1, side), spec)


def test_crossing_out_of_window():
    tri = scene(L=4.0, pad=2.0)
    with pytest.raises(OutOfWindowError):
        crossing_event(open_edges(tri, 0.5, 1), CrossingSpec.horizontal((0, 0), 4.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 0.9), st.sampled_from(["voronoi", "delaunay"]),
       st.sampled_from(["horizontal", "vertical"]))
def test_crossing_matches_exhaustive_search(seed, p, side, orient):
    # about a dozen graph vertices inside the rectangle
    L = 1.3
    tri = delaunay(sample_poisson(1.2, Window.square((0, 0), 2.0 * L + 6.0), seed))
    spec = getattr(CrossingSpec, orient)((0.0, 0.0), L)
    cfg = open_edges(tri, p, seed + 1, side)
    assert crossing_event(cfg, spec) == brute_force_crossing(tri, side, cfg.open, spec)


@pytest.mark.parametrize("side", ["voronoi", "delaunay"])
def test_crossing_flips_at_critical_value(side):
    for seed in range(8):
        tri = scene(L=5.0, seed=seed)
        spec = CrossingSpec.horizontal((0, 0), 5.0)
        u = edge_uniforms(tri.edges, seed)
        crit = crossing_critical_value(tri, side, u, spec)
        for p in (crit, np.nextafter(crit, 1.0), crit / 2, (1 + crit) / 2):
            if 0 <= p <= 1:
                assert crossing_event(open_edges(tri, p, seed, side), spec) == (p > crit)


def test_crossing_monotone_in_p():
    tri = scene(L=5.0, seed=21)
    spec = CrossingSpec.horizontal((0, 0), 5.0)
    vals = [crossing_event(open_edges(tri, p, 7), spec) for p in np.linspace(0, 1, 41)]
    assert vals == sorted(vals)


# -- frequencies and thresholds -----------------------------------------------------------

def test_eta_extremes_and_monotone():
    assert estimate_eta(1.0, 4.0, 10).frequency == 1.0
    assert estimate_eta(0.0, 4.0, 10).frequency == 0.0
    f = [estimate_eta(p, 4.0, 15, master_seed=2).frequency for p in np.linspace(0.3, 0.9, 7)]
    assert f == sorted(f)
    with pytest.raises(InvalidParameterError):
        estimate_eta(1.5, 4.0, 2)


def test_bisection_on_step_function():
    est, trace = bisect_frequency(lambda p: float(p > 0.6), 0.5, 20)
    assert abs(est - 0.6) < 2 ** -19
    widths = [r["hi"] - r["lo"] for r in trace]
    assert all(b < a for a, b in zip(widths, widths[1:]))


@pytest.mark.parametrize("planted", [0.6, 0.25, 0.8123])
def test_planted_threshold_recovered(planted):
    est = estimate_threshold([8.0, 16.0], 200, tol=0.01,
                             critical_sampler=lambda L, s, r: np.full(r, planted))
    for e in est.estimate:
        assert abs(e - planted) <= 0.01
    assert est.resolved == [True, True]


def test_noisy_planted_threshold_band_covers():
    def sampler(L, stream, reps):
        rng = np.random.default_rng(stream)
        return 0.6 + rng.normal(0, 0.02, reps)
    est = estimate_threshold([8.0], 400, tol=0.01, critical_sampler=sampler)
    assert abs(est.estimate[0] - 0.6) <= est.half_width[0]
    assert est.half_width[0] >= 0.01
    for tr in est.traces:
        w = [r["hi"] - r["lo"] for r in tr["target_0.5"]]
        assert all(b <= a for a, b in zip(w, w[1:]))


def test_threshold_estimators_small_run():
    s = estimate_pc_star([4.0, 6.0], 12, tol=0.05, master_seed=3)
    d = estimate_pc_delaunay([4.0, 6.0], 12, tol=0.05, master_seed=3)
    assert 0 < s.p_hat < 1 and 0 < d.p_hat < 1
    assert s.side == "voronoi" and d.side == "delaunay"
    assert all(0 <= r["crossings"] <= r["reps"] for r in s.probes)
    with pytest.raises(InvalidParameterError):
        estimate_pc_star([6.0, 4.0], 2)


# -- circuits --------------------------------------------------------------------------------

def test_winding_cycle_on_square():
    # square 0-1-2-3 around the origin, cut ray along +x crosses edge 1-2 upward... 3 -> 0
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 0], [0, 2]])
    volt = np.array([0, 0, 0, 1, 0])
    cyc = winding_cycle(edges, volt)
    assert cyc is not None and set(cyc) <= {0, 1, 2, 3}
    assert winding_cycle(edges, np.zeros(5, int)) is None


def annulus_boxes(L):
    return Window.square((0, 0), 0.5 * L), Window.square((0, 0), 1.5 * L)


def test_circuit_extremes_and_winding():
    L = 6.0
    tri = delaunay(sample_poisson(1.0, Window.square((0, 0), 1.5 * L + 6.0), 5))
    inner, outer = annulus_boxes(L)
    assert circuit_in_annulus(open_edges(tri, 0.0, 1), inner, outer) is None
    for sep in (False, True):
        cyc = circuit_in_annulus(open_edges(tri, 1.0, 1), inner, outer, separating=sep)
        assert cyc is not None
        assert circuit_winding(open_edges(tri, 1.0, 1), cyc, (0.0, 0.0)) == 1
        assert len(set(cyc)) == len(cyc)


def test_circuit_malformed_annulus():
    tri = delaunay(sample_poisson(1.0, Window.square((0, 0), 20.0), 5))
    with pytest.raises(InvalidParameterError):
        circuit_in_annulus(open_edges(tri, 1.0, 1), Window.square((0, 0), 4.0),
                           Window.square((0, 0), 3.0))


def test_four_crossings_give_circuit_with_winding_one():
    L = 6.0
    inner, outer = annulus_boxes(L)
    found = 0
    for seed in range(25):
        tri = delaunay(sample_poisson(1.0, Window.square((0, 0), 1.5 * L + 6.0), seed))
        cfg = open_edges(tri, 0.75, seed + 100)
        four = all(crossing_event(cfg, s) for s in annulus_rectangles(L))
        cyc = circuit_in_annulus(cfg, inner, outer)
        if four:
            found += 1
            assert cyc is not None
        if cyc is not None:
            assert circuit_winding(cfg, cyc, (0.0, 0.0)) == 1
            P = cfg.positions[cyc]
            assert outer.contains(P).all()
    assert found > 0


def test_annulus_rectangles_tile_annulus():
    rects = annulus_rectangles(4.0)
    assert len(rects) == 4
    area = sum(r.rect.area for r in rects)
    # four 3L x L rectangles cover the (3L)^2 - L^2 annulus with corner overlaps
    assert area == pytest.approx(4 * 12.0 * 4.0)
    for r in rects:
        assert r.L == 4.0
