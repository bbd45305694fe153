"""Exact predicates against rational-arithmetic oracles."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpplab.predicates import (incircle, incircle_exact, incircle_perturbed, orient2d,
                               orient2d_exact, segments_intersect)

coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord)


def sign(x):
    return (x > 0) - (x < 0)


def orient_oracle(a, b, c):
    a, b, c = [(Fraction(p[0]), Fraction(p[1])) for p in (a, b, c)]
    return sign((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0]))


def incircle_oracle(a, b, c, d):
    rows = []
    for p in (a, b, c):
        x, y = Fraction(p[0]) - Fraction(d[0]), Fraction(p[1]) - Fraction(d[1])
        rows.append((x, y, x * x + y * y))
    (a1, a2, a3), (b1, b2, b3), (c1, c2, c3) = rows
    return sign(a1 * (b2 * c3 - b3 * c2) - a2 * (b1 * c3 - b3 * c1) + a3 * (b1 * c2 - b2 * c1))


def segment_oracle(p1, p2, q1, q2):
    """Closed-segment intersection by solving the 2x2 system in rationals."""
    p1, p2, q1, q2 = [(Fraction(a), Fraction(b)) for a, b in (p1, p2, q1, q2)]
    if p1 == p2:
        p1, p2, q1, q2 = q1, q2, p1, p2
    if p1 == p2:
        return p1 == q1
    if q1 == q2:
        # point on segment: collinear and inside the bounding box
        cross = (p2[0] - p1[0]) * (q1[1] - p1[1]) - (p2[1] - p1[1]) * (q1[0] - p1[0])
        return cross == 0 and (min(p1[0], p2[0]) <= q1[0] <= max(p1[0], p2[0])
                               and min(p1[1], p2[1]) <= q1[1] <= max(p1[1], p2[1]))
    r = (p2[0] - p1[0], p2[1] - p1[1])
    s = (q2[0] - q1[0], q2[1] - q1[1])
    qp = (q1[0] - p1[0], q1[1] - p1[1])
    den = r[0] * s[1] - r[1] * s[0]
    if den != 0:
        t = (qp[0] * s[1] - qp[1] * s[0]) / den
        u = (qp[0] * r[1] - qp[1] * r[0]) / den
        return 0 <= t <= 1 and 0 <= u <= 1
    if qp[0] * r[1] - qp[1] * r[0] != 0:
        return False  # parallel, distinct lines

    # collinear: project on the dominant axis, degenerate segments included
    def key(p):
        return (p[0], p[1])
    a, b = sorted([p1, p2], key=key)
    c, d = sorted([q1, q2], key=key)
    return key(a) <= key(d) and key(c) <= key(b)


@settings(max_examples=300, deadline=None)
@given(point, point, point)
def test_orient2d_matches_rational_oracle(a, b, c):
    assert orient2d_exact(a, b, c) == orient_oracle(a, b, c)
    assert orient2d(a, b, c) == orient_oracle(a, b, c)


@settings(max_examples=300, deadline=None)
@given(point, point, point, point)
def test_incircle_matches_rational_oracle(a, b, c, d):
    assert incircle_exact(a, b, c, d) == incircle_oracle(a, b, c, d)
    assert incircle(a, b, c, d) == incircle_oracle(a, b, c, d)


def test_orient2d_nearly_collinear():
    # points on y = x shifted by one ulp: floating evaluation is unreliable here
    base = 0.5 + np.arange(200) * 1e-3
    a = np.column_stack([base, base])
    b = a + 12.0
    c = np.column_stack([base + 24.0, np.nextafter(base + 24.0, np.inf)])
    got = orient2d(a, b, c)
    want = [orient_oracle(a[i], b[i], c[i]) for i in range(len(a))]
    assert got.tolist() == want


def test_incircle_cocircular_is_zero_and_perturbation_decides():
    sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    assert incircle_exact(*sq) == 0
    s = incircle_perturbed(*sq)
    assert s in (-1, 1)
    # the lexicographically smallest point (0, 0) is lifted most and falls outside
    assert incircle_perturbed(sq[1], sq[2], sq[3], sq[0]) == -1


def test_incircle_perturbed_zero_only_for_collinear():
    assert incircle_perturbed((0, 0), (1, 1), (2, 2), (3, 3)) == 0


@settings(max_examples=300, deadline=None)
@given(point, point, point, point)
def test_segments_intersect_matches_oracle(p1, p2, q1, q2):
    got = bool(segments_intersect(np.array([p1]), np.array([p2]), np.array([q1]),
                                  np.array([q2]))[0])
    assert got == segment_oracle(p1, p2, q1, q2)


@pytest.mark.parametrize("q1,q2,want", [
    ((1.0, 0.0), (3.0, 0.0), True),    # collinear overlap
    ((2.0, 0.0), (3.0, 0.0), True),    # collinear, touching at an endpoint
    ((2.5, 0.0), (3.0, 0.0), False),   # collinear, disjoint
    ((1.0, -1.0), (1.0, 1.0), True),   # proper crossing
    ((1.0, 0.0), (1.0, 1.0), True),    # T-junction
])
def test_segments_intersect_degenerate_cases(q1, q2, want):
    p1, p2 = np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]])
    assert bool(segments_intersect(p1, p2, np.array([q1]), np.array([q2]))[0]) is want
