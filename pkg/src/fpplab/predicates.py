"""Orientation and in-circle predicates with exact fallback.

Each predicate first evaluates the determinant in double precision together
with Shewchuk's static error bound.  Signs that the bound cannot certify are
recomputed exactly in integer arithmetic: every double is a dyadic rational,
so scaling all coordinates of one query by a common power of two turns the
determinant into an integer expression with the same sign.

In-circle ties (four cocircular points) are broken by a lexicographic
symbolic perturbation: the lifted coordinate ``x**2 + y**2`` of the point of
lexicographic rank ``r`` (ordering by ``x`` then ``y``, smallest first) is
raised by ``eps**(r + 1)``.  The lexicographically smallest point is lifted
the most and therefore tends to fall *outside* the circle of the others.
For the unit square this selects the diagonal joining ``(1, 0)`` and
``(0, 1)``.
"""

import numpy as np

_EPS = 2.0**-53
CCW_ERRBOUND = (3.0 + 16.0 * _EPS) * _EPS
ICC_ERRBOUND = (10.0 + 96.0 * _EPS) * _EPS


def _as_ints(*vals):
    fracs = [float(v).as_integer_ratio() for v in vals]
    den = max(d for _, d in fracs)
    return [n * (den // d) for n, d in fracs]


def orient2d_exact(a, b, c):
    """Exact sign of the orientation determinant of ``a, b, c``.

    Returns +1 for a counter-clockwise turn, -1 for clockwise, 0 if collinear.
    """
    ax, ay, bx, by, cx, cy = _as_ints(a[0], a[1], b[0], b[1], c[0], c[1])
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return (det > 0) - (det < 0)


def incircle_exact(a, b, c, d):
    """Exact sign of the in-circle determinant.

    Positive iff ``d`` lies inside the circle through ``a, b, c`` when these
    are in counter-clockwise order.
    """
    ax, ay, bx, by, cx, cy, dx, dy = _as_ints(
        a[0], a[1], b[0], b[1], c[0], c[1], d[0], d[1])
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (alift * (bdx * cdy - cdx * bdy)
           + blift * (cdx * ady - adx * cdy)
           + clift * (adx * bdy - bdx * ady))
    return (det > 0) - (det < 0)


def _lex_less(p, q):
    return (p[0], p[1]) < (q[0], q[1])


def incircle_perturbed(a, b, c, d, ranks=None):
    """In-circle sign with the lexicographic perturbation tie-break.

    Parameters
    ----------
    a, b, c, d : sequence of two floats
    ranks : sequence of 4 ints, optional
        Lexicographic ranks of the four points; computed from the
        coordinates when omitted.

    Returns
    -------
    int
        +1 or -1; 0 only if all four points are collinear.
    """
    s = incircle_exact(a, b, c, d)
    if s:
        return s
    pts = (a, b, c, d)
    if ranks is None:
        order = sorted(range(4), key=lambda k: (pts[k][0], pts[k][1]))
    else:
        order = sorted(range(4), key=lambda k: ranks[k])
    for k in order:
        others = [pts[i] for i in range(4) if i != k]
        o = orient2d_exact(*others)
        if o:
            # derivative of the 4x4 lifted determinant w.r.t. row k's lift
            return o if k % 2 == 0 else -o
    return 0


def orient2d(a, b, c):
    """Vectorized exact orientation sign.

    Parameters
    ----------
    a, b, c : (..., 2) float arrays

    Returns
    -------
    int8 array of signs with the broadcast shape of the inputs.
    """
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(c, float))
    acx = a[..., 0] - c[..., 0]
    bcx = b[..., 0] - c[..., 0]
    acy = a[..., 1] - c[..., 1]
    bcy = b[..., 1] - c[..., 1]
    left = acx * bcy
    right = acy * bcx
    det = left - right
    bound = CCW_ERRBOUND * (np.abs(left) + np.abs(right))
    out = np.array(np.sign(det), dtype=np.int8)
    unsure = ~(np.abs(det) > bound)
    if unsure.any():
        for idx in map(tuple, np.argwhere(unsure)):
            out[idx] = orient2d_exact(a[idx], b[idx], c[idx])
    return out


def incircle(a, b, c, d):
    """Vectorized exact in-circle sign (no perturbation)."""
    a, b, c, d = np.broadcast_arrays(*(np.asarray(p, float) for p in (a, b, c, d)))
    det, perm = _incircle_float(a, b, c, d)
    out = np.array(np.sign(det), dtype=np.int8)
    unsure = ~(np.abs(det) > ICC_ERRBOUND * perm)
    if unsure.any():
        for idx in map(tuple, np.argwhere(unsure)):
            out[idx] = incircle_exact(a[idx], b[idx], c[idx], d[idx])
    return out


def _incircle_float(a, b, c, d):
    adx = a[..., 0] - d[..., 0]
    ady = a[..., 1] - d[..., 1]
    bdx = b[..., 0] - d[..., 0]
    bdy = b[..., 1] - d[..., 1]
    cdx = c[..., 0] - d[..., 0]
    cdy = c[..., 1] - d[..., 1]
    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    cdxady, adxcdy = cdx * ady, adx * cdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy)
           + clift * (adxbdy - bdxady))
    perm = ((np.abs(bdxcdy) + np.abs(cdxbdy)) * alift
            + (np.abs(cdxady) + np.abs(adxcdy)) * blift
            + (np.abs(adxbdy) + np.abs(bdxady)) * clift)
    return det, perm


def incircle_perturbed_many(a, b, c, d, ra, rb, rc, rd):
    """Vectorized :func:`incircle_perturbed` over ``(m, 2)`` arrays.

    ``ra .. rd`` are the lexicographic ranks of the corresponding points.
    """
    det, perm = _incircle_float(a, b, c, d)
    out = np.array(np.sign(det), dtype=np.int8)
    unsure = np.nonzero(~(np.abs(det) > ICC_ERRBOUND * perm))[0]
    for i in unsure:
        out[i] = incircle_perturbed(a[i], b[i], c[i], d[i],
                                    (ra[i], rb[i], rc[i], rd[i]))
    return out


def segments_intersect(p1, p2, q1, q2):
    """Exact test whether closed segments ``[p1, p2]`` and ``[q1, q2]`` meet.

    All arguments are ``(m, 2)`` arrays (or broadcastable); returns a bool array.
    """
    p1, p2, q1, q2 = np.broadcast_arrays(*(np.asarray(x, float) for x in (p1, p2, q1, q2)))
    o1 = orient2d(p1, p2, q1).astype(int)
    o2 = orient2d(p1, p2, q2).astype(int)
    o3 = orient2d(q1, q2, p1).astype(int)
    o4 = orient2d(q1, q2, p2).astype(int)
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    # a zero-length segment makes its own two orientations vanish trivially
    collinear = (o1 == 0) & (o2 == 0) & (o3 == 0) & (o4 == 0)
    if collinear.any():
        # all four points on one line: compare projections on both axes
        def overlap(k):
            lo1 = np.minimum(p1[..., k], p2[..., k])
            hi1 = np.maximum(p1[..., k], p2[..., k])
            lo2 = np.minimum(q1[..., k], q2[..., k])
            hi2 = np.maximum(q1[..., k], q2[..., k])
            return (lo1 <= hi2) & (lo2 <= hi1)
        hit = np.where(collinear, overlap(0) & overlap(1), hit)
    return hit
