"""Passage times on a Poisson-Delaunay graph.

Samples one scene, dresses it with two weight laws on the same geometry and
compares T(0, n)/n, then looks at the growth ball B(t) around the origin.
Run from the repository root::

    python3 demos/01_passage_times.py
"""

from fpplab import fpp
from fpplab.fpp import PassageDistribution
from fpplab.geometry import Window, delaunay, locate, sample_poisson
from fpplab.rng import Lane, derive_seed

SEED = 7
n = 60.0
window = fpp.point_to_point_window(n)
pts = sample_poisson(1.0, window, derive_seed(SEED, Lane.POINTS, 0))
tri = delaunay(pts)
print(f"{len(pts)} points, {tri.n_edges} Delaunay edges, Euler characteristic "
      f"{tri.euler_characteristic()}")

# The weight lane is separate from the point lane, so both laws see the same graph.
v0, vn = locate(pts, (0.0, 0.0)), locate(pts, (n, 0.0))
for dist in (PassageDistribution.exponential(1.0), PassageDistribution.bernoulli(0.2),
             PassageDistribution.bernoulli(0.9)):
    g = fpp.assign_weights(tri, dist, derive_seed(SEED, Lane.WEIGHTS, 0))
    T, contaminated = g.windowed_distance(v0, [vn])
    flag = " (window-contaminated)" if contaminated[0] else ""
    print(f"{dist.kind:12s} F(0)={dist.F0:.2f}:  T(0,{n:g})/n = {T[0] / n:.3f}{flag}")

# Growth ball: with exponential weights B(t)/t should look roughly like a disc.
g = fpp.assign_weights(delaunay(sample_poisson(1.0, Window.square((0, 0), 40.0),
                                               derive_seed(SEED, Lane.POINTS, 1))),
                       PassageDistribution.exponential(1.0), derive_seed(SEED, Lane.WEIGHTS, 1))
# Once the ball touches the sampling window its radii are meaningless, so stop there.
for t in (2.0, 4.0, 6.0):
    ball = fpp.growth_ball(g, (0.0, 0.0), t)
    if ball.truncated:
        print(f"t={t:4.1f}: ball reached the window boundary")
        break
    r_in, r_out = ball.inner_radius((0, 0)), ball.outer_radius((0, 0))
    print(f"t={t:4.1f}: {len(ball.reached):5d} sites, radii {r_in:.2f} .. {r_out:.2f}, "
          f"ratios to t {r_in / t:.2f} .. {r_out / t:.2f}")
