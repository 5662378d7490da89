"""Geometric nested dissection for space-time saddle-point systems.

Every row/column of the KKT matrix lives at a point of the (time, space)
lattice.  Recursively halving the longest box extent and moving the cut's
boundary vertices to the end of the ordering keeps Cholesky/LDL fill close
to that of a 3D grid Laplacian, far below what SuperLU's built-in orderings
achieve on these matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from .energy import ProblemSpec

LEAF = 64


def kkt_coordinates(prob: ProblemSpec) -> np.ndarray:
    """(time, space...) coordinates, in lattice step units, of every KKT index.

    Order: flux unknowns, interior densities, then one constraint row per
    (interval, node) except the final removed row.
    """
    lat, tg = prob.lattice, prob.time
    nodes = np.array(np.unravel_index(np.arange(lat.n_nodes), lat.shape), dtype=float).T
    mids = 0.5 * (nodes[lat.tail] + nodes[lat.head])
    flux = [np.column_stack([np.full(lat.n_edges, l + 0.5), mids]) for l in range(tg.n_intervals)]
    dens = [np.column_stack([np.full(lat.n_nodes, float(l)), nodes]) for l in range(1, tg.n_interior + 1)]
    rows = [np.column_stack([np.full(lat.n_nodes, l + 0.5), nodes]) for l in range(tg.n_intervals)]
    out = np.vstack(flux + dens + rows)
    return out[:-1]


def nested_dissection(pattern: sps.spmatrix, coords: np.ndarray, leaf: int = LEAF) -> np.ndarray:
    """Fill-reducing permutation of a structurally symmetric matrix."""
    adj = sps.csr_matrix(pattern, copy=True)
    adj.data[:] = 1.0
    adj = (adj + adj.T).tocsr()
    n = adj.shape[0]
    if coords.shape[0] != n:
        raise ValueError("need one coordinate per row")
    side = np.zeros(n, dtype=np.int8)
    order: list[np.ndarray] = []

    def recurse(idx: np.ndarray):
        if idx.size <= leaf:
            order.append(idx)
            return
        pts = coords[idx]
        ext = pts.max(axis=0) - pts.min(axis=0)
        ax = int(np.argmax(ext))
        if ext[ax] == 0:
            order.append(idx)
            return
        cut = np.median(pts[:, ax])
        right = pts[:, ax] > cut
        if right.all() or not right.any():
            right = pts[:, ax] >= cut
            if right.all() or not right.any():
                order.append(idx)
                return
        side[idx] = np.where(right, 2, 1)
        left_idx = idx[~right]
        sub = adj[left_idx]
        touches = np.asarray(
            sps.csr_matrix((side[sub.indices] == 2, sub.indices, sub.indptr), shape=sub.shape).sum(axis=1)
        ).ravel() > 0
        side[idx] = 0
        sep = left_idx[touches]
        recurse(left_idx[~touches])
        recurse(idx[right])
        order.append(sep)

    recurse(np.arange(n))
    perm = np.concatenate(order)
    assert perm.size == n
    return perm
