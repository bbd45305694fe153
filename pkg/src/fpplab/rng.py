"""Seed derivation and counter-based uniforms.

All randomness in the package flows from a master seed through
:func:`derive_seed`.  Per-edge random numbers are obtained by hashing the
edge identity (its two point indices) together with a lane seed, so that the
value attached to an edge does not depend on the order in which edges are
enumerated.
"""

import enum

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


class Lane(enum.IntEnum):
    """Independent random streams used by one replicate."""

    POINTS = 1
    WEIGHTS = 2
    PERCOLATION = 3


def splitmix64(x):
    """SplitMix64 finalizer on a Python integer (bijection of 64-bit words)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(x):
    """Vectorized :func:`splitmix64` over a ``uint64`` array."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def derive_seed(master_seed, lane, replicate_index, stream=0):
    """Derive the 64-bit seed of one random stream.

    The tuple ``(lane, stream, replicate_index)`` is packed into a single
    64-bit word (4 bits of lane, 20 bits of stream, 40 bits of replicate
    index), xored with the mixed master seed and mixed again.  Since each
    step is a bijection, the map is injective over the tuple for a fixed
    master seed.

    Parameters
    ----------
    master_seed : int
        Any integer; reduced modulo 2**64.
    lane : Lane or str
        One of ``points``, ``weights``, ``percolation``.
    replicate_index : int
        Replicate counter, ``0 <= replicate_index < 2**40``.
    stream : int, optional
        Sub-stream (e.g. index into an ``n`` or ``L`` list), ``< 2**20``.

    Returns
    -------
    int
        Seed in ``[0, 2**64)``.
    """
    if isinstance(lane, str):
        lane = Lane[lane.upper()]
    lane = Lane(lane)
    if not 0 <= replicate_index < 1 << 40:
        raise ValueError("replicate_index out of range")
    if not 0 <= stream < 1 << 20:
        raise ValueError("stream out of range")
    key = (int(lane) << 60) | (stream << 40) | replicate_index
    return splitmix64(splitmix64(master_seed & MASK64) ^ key)


def edge_uniforms(edges, seed):
    """Uniform(0, 1) variate attached to each edge.

    Parameters
    ----------
    edges : (m, 2) int array
        Point-index pairs with ``edges[:, 0] < edges[:, 1]``.
    seed : int
        Lane seed.

    Returns
    -------
    (m,) float64 array with values in the open interval (0, 1).
    """
    edges = np.asarray(edges, dtype=np.uint64)
    if edges.size == 0:
        return np.empty(0)
    key = (edges[:, 0] << np.uint64(32)) | edges[:, 1]
    s = np.uint64(splitmix64(seed & MASK64))
    h = splitmix64_array(splitmix64_array(key ^ s))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
