"""Uniform lattice graphs and their discrete differential operators.

Nodes are indexed in row-major (C) order over the multi-index
``(i_0, ..., i_{d-1})``.  Every edge joins a node to its neighbour one step
up along a single axis; the tail is the lower multi-index and the head the
higher one.  Only edges between nodes inside the box exist, which is how the
zero-flux boundary condition is realized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps


@dataclass(frozen=True)
class GridSpec:
    """Points per axis and box extents for a uniform lattice."""

    n_pts: int
    domain: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if int(self.n_pts) != self.n_pts or self.n_pts < 2:
            raise ValueError(f"n_pts must be an integer >= 2, got {self.n_pts}")
        lengths = [hi - lo for lo, hi in self.domain]
        if any(length <= 0 for length in lengths):
            raise ValueError(f"degenerate domain {self.domain}")
        if not np.allclose(lengths, lengths[0], rtol=1e-12, atol=0.0):
            raise ValueError("all axes must have the same length (uniform spacing)")

    @classmethod
    def box(cls, n_pts: int, dimension: int = 1, lo: float = 0.0, hi: float = 1.0) -> "GridSpec":
        return cls(n_pts=n_pts, domain=((float(lo), float(hi)),) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.domain)

    @property
    def spacing(self) -> float:
        lo, hi = self.domain[0]
        return (hi - lo) / (self.n_pts - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_pts,) * self.dimension

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, d)``, in flat node order."""
        axes = [np.linspace(lo, hi, self.n_pts) for lo, hi in self.domain]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class Lattice:
    spec: GridSpec
    tail: np.ndarray
    head: np.ndarray
    axis: np.ndarray
    boundary: np.ndarray
    _div: sps.csr_matrix = field(repr=False)

    @property
    def dx(self) -> float:
        return self.spec.spacing

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.shape

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_edges(self) -> int:
        return self.tail.size

    def flat_index(self, multi_index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(flat, self.shape))

    def neighbors(self, node: int) -> np.ndarray:
        """Sorted adjacency list N(node)."""
        out = np.concatenate([self.head[self.tail == node], self.tail[self.head == node]])
        return np.sort(out)

    @property
    def divergence_matrix(self) -> sps.csr_matrix:
        """Sparse ``|V| x |E|`` matrix of :func:`divergence`."""
        return self._div


def build_lattice(spec: GridSpec) -> Lattice:
    """Build the lattice graph described by ``spec``."""
    shape = spec.shape
    ids = np.arange(int(np.prod(shape))).reshape(shape)
    tails, heads, axes = [], [], []
    for v in range(spec.dimension):
        lower = [slice(None)] * spec.dimension
        upper = [slice(None)] * spec.dimension
        lower[v] = slice(0, -1)
        upper[v] = slice(1, None)
        tails.append(ids[tuple(lower)].ravel())
        heads.append(ids[tuple(upper)].ravel())
        axes.append(np.full(tails[-1].size, v))
    tail = np.concatenate(tails)
    head = np.concatenate(heads)
    axis = np.concatenate(axes)

    idx = np.indices(shape).reshape(spec.dimension, -1)
    boundary = np.any((idx == 0) | (idx == spec.n_pts - 1), axis=0)

    n_nodes, n_edges = ids.size, tail.size
    cols = np.arange(n_edges)
    inv = 1.0 / spec.spacing
    div = sps.csr_matrix(
        (
            np.concatenate([np.full(n_edges, inv), np.full(n_edges, -inv)]),
            (np.concatenate([tail, head]), np.concatenate([cols, cols])),
        ),
        shape=(n_nodes, n_edges),
    )
    for arr in (tail, head, axis, boundary):
        arr.setflags(write=False)
    return Lattice(spec=spec, tail=tail, head=head, axis=axis, boundary=boundary, _div=div)


def _check(name: str, vec: np.ndarray, size: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape[-1] != size:
        raise ValueError(f"{name} has {vec.shape[-1]} entries, expected {size}")
    return vec


def divergence(lat: Lattice, flux: np.ndarray) -> np.ndarray:
    """Discrete divergence ``(1/dx) * sum_v (m_{i+e_v/2} - m_{i-e_v/2})``.

    ``flux`` may carry leading batch axes (e.g. one row per time interval).
    """
    flux = _check("flux", flux, lat.n_edges)
    return (lat.divergence_matrix @ flux.T).T


def gradient(lat: Lattice, potential: np.ndarray) -> np.ndarray:
    """Head-minus-tail differences of a node potential (no 1/dx factor)."""
    potential = _check("potential", potential, lat.n_nodes)
    return potential[..., lat.head] - potential[..., lat.tail]


def gradient_matrix(lat: Lattice) -> sps.csr_matrix:
    n = lat.n_edges
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([lat.head, lat.tail])
    vals = np.concatenate([np.ones(n), -np.ones(n)])
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, lat.n_nodes))


def assemble_laplacian(lat: Lattice) -> sps.csr_matrix:
    """Matrix of ``phi -> divergence(gradient(phi))``.

    Symmetric negative semi-definite with the constants as its null space.
    """
    return (lat.divergence_matrix @ gradient_matrix(lat)).tocsr()
