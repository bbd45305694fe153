"""Exhaustive circuit packing on small lattice fields (test oracle).

Chordless cycles are enumerated with networkx, independently of the
package's layered search.  A cycle with a chord splits into two shorter
cycles, one of which still winds around the origin, so a maximum packing can
always be formed from chordless cycles.

Two disjoint circuits around the origin are nested (one lies in the bounded
face of the other), so a packing is a chain ``c_1 < c_2 < ...`` in which each
circuit lies inside the next.  The longest chain is found by dynamic
programming over all enumerated circuits.
"""

import time

import networkx as nx
import numpy as np
from scipy import ndimage


class TooManyCycles(Exception):
    """Raised when enumeration exceeds the caller's budget."""


def surrounding_circuits(Y, m, limit=None, seconds=None):
    """Chordless 4-connected cycles of good sites that wind around the origin.

    Returns ``(circuits, interiors)`` as boolean arrays of shape
    ``(count, (2m+1)**2)``: the circuit sites and the sites strictly inside.
    ``limit`` caps the number of enumerated cycles and ``seconds`` the
    enumeration time (the generator can stall between cycles).
    """
    start = time.perf_counter()
    k = 2 * m + 1
    good = np.asarray(Y, bool)[:k, :k].copy()
    good[m, m] = False
    G = nx.grid_2d_graph(k, k)
    G.remove_nodes_from([tuple(int(c) for c in s) for s in np.argwhere(~good)])
    G = nx.k_core(G, 2)
    circ, inner = [], []
    for n, cyc in enumerate(nx.chordless_cycles(G)):
        if limit is not None and n >= limit:
            raise TooManyCycles(n)
        if seconds is not None and time.perf_counter() - start > seconds:
            raise TooManyCycles(n)
        if len(cyc) < 4:
            continue
        on = np.zeros((k, k), bool)
        on[tuple(np.array(cyc).T)] = True
        ins = _interior(on)
        if not ins[m, m]:
            continue
        circ.append(on.ravel())
        inner.append(ins.ravel())
    shape = (0, k * k)
    return (np.array(circ).reshape(shape) if not circ else np.array(circ),
            np.array(inner).reshape(shape) if not inner else np.array(inner))


def _interior(on):
    """Sites off the circuit that no 4-path avoiding it joins to the outside.

    A unit lattice step can only cross a circuit edge at a shared lattice
    point, so 4-connectivity in the complement decides the two faces.
    """
    pad = np.pad(~on, 1, constant_values=True)
    lab, _ = ndimage.label(pad)
    return (lab != lab[0, 0])[1:-1, 1:-1] & ~on


def longest_nested_chain(circ, inner):
    """Length of the longest chain of circuits, each inside the next."""
    C = len(circ)
    if C == 0:
        return 0
    order = np.argsort(inner.sum(axis=1), kind="stable")
    circ, inner = circ[order], inner[order]
    # fits[i, j]: circuit i lies in the open interior of circuit j
    outside = (~inner).astype(np.float32)
    fits = (circ.astype(np.float32) @ outside.T) == 0
    best = np.ones(C, dtype=np.int64)
    for j in range(C):
        prev = np.nonzero(fits[:j, j])[0]
        if len(prev):
            best[j] = 1 + best[prev].max()
    return int(best.max())


def exhaustive_count(Y, m, limit=None, seconds=None):
    """Maximum number of disjoint good circuits around the origin in ``[-m, m]**2``."""
    return longest_nested_chain(*surrounding_circuits(Y, m, limit, seconds))
