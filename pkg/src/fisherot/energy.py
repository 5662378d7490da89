"""Discrete kinetic energy, Fisher information and the space-time objective.

A problem has ``L`` interior density levels and ``L + 1`` flux levels, one per
time interval.  Density paths are stored as ``(L + 2, |V|)`` arrays whose first
and last rows are the fixed endpoint histograms; flux paths as ``(L + 1, |E|)``
arrays.  The optimization vector concatenates all flux levels followed by the
interior density levels, both flattened level by level.

Non-finite objective values are reported as ``inf`` so that callers can reject
a trial point without catching exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .lattice import Lattice

INF = np.inf


@dataclass(frozen=True)
class TimeGrid:
    """``L`` interior levels on [0, 1] with ``dt = 1 / (L + 1)``."""

    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"need at least one interior level, got {self.n_interior}")

    @property
    def dt(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def n_levels(self) -> int:
        return self.n_interior + 2

    @property
    def n_intervals(self) -> int:
        return self.n_interior + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_levels) * self.dt


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Lattice, time grid, endpoint histograms and regularization weight.

    ``kinetic_weight`` w sets which density level prices the flux on each
    interval: the kinetic term of interval l is
    ``w * K(m_l, p_l) + (1 - w) * K(m_l, p_{l+1})``.  ``w = 1`` prices with the
    left endpoint only; ``w = 0.5`` is the time-symmetric average.
    """

    lattice: Lattice
    time: TimeGrid
    p0: np.ndarray
    p1: np.ndarray
    beta2: float = 1e-6
    kinetic_weight: float = 1.0

    def __post_init__(self):
        n = self.lattice.n_nodes
        for name in ("p0", "p1"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if arr.size != n:
                raise ValueError(f"{name} has {arr.size} entries, lattice has {n} nodes")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and nonnegative")
            if abs(arr.sum() - 1.0) > 1e-10:
                raise ValueError(f"{name} must sum to 1 (sum={arr.sum():.16g})")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.beta2 < 0:
            raise ValueError("beta2 must be nonnegative")
        if not 0.0 <= self.kinetic_weight <= 1.0:
            raise ValueError("kinetic_weight must lie in [0, 1]")

    # variable layout -----------------------------------------------------

    @property
    def n_flux(self) -> int:
        return self.time.n_intervals * self.lattice.n_edges

    @property
    def n_density(self) -> int:
        return self.time.n_interior * self.lattice.n_nodes

    @property
    def n_unknowns(self) -> int:
        return self.n_flux + self.n_density

    def pack(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Flatten (full density path, flux path) to the unknown vector."""
        p, m = self.check_paths(p, m)
        return np.concatenate([m.ravel(), p[1:-1].ravel()])

    def unpack(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_unknowns,):
            raise ValueError(f"expected {self.n_unknowns} unknowns, got shape {u.shape}")
        m = u[: self.n_flux].reshape(self.time.n_intervals, self.lattice.n_edges)
        p = np.empty((self.time.n_levels, self.lattice.n_nodes))
        p[0], p[-1] = self.p0, self.p1
        p[1:-1] = u[self.n_flux :].reshape(self.time.n_interior, self.lattice.n_nodes)
        return p, m.copy()

    def check_paths(self, p: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        m = np.asarray(m, dtype=float)
        ps = (self.time.n_levels, self.lattice.n_nodes)
        ms = (self.time.n_intervals, self.lattice.n_edges)
        if p.shape != ps:
            raise ValueError(f"density path shape {p.shape}, expected {ps}")
        if m.shape != ms:
            raise ValueError(f"flux path shape {m.shape}, expected {ms}")
        return p, m

    def density_index(self, level: int, node) -> np.ndarray:
        """Unknown-vector index of interior density (level, node)."""
        return self.n_flux + (level - 1) * self.lattice.n_nodes + np.asarray(node)

    def flux_index(self, interval: int, edge) -> np.ndarray:
        return interval * self.lattice.n_edges + np.asarray(edge)


# per-level terms -----------------------------------------------------------


def edge_densities(lat: Lattice, p_level: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the endpoint masses of every edge."""
    p_level = np.asarray(p_level, dtype=float)
    if p_level.shape[-1] != lat.n_nodes:
        raise ValueError(f"density has {p_level.shape[-1]} entries, expected {lat.n_nodes}")
    return 0.5 * (p_level[..., lat.tail] + p_level[..., lat.head])


def kinetic_energy(lat: Lattice, m_level: np.ndarray, p_level: np.ndarray) -> float:
    """``sum_e m_e^2 / g_e``; ``inf`` if flux crosses an edge with zero mass."""
    m_level = np.asarray(m_level, dtype=float)
    if m_level.shape != (lat.n_edges,):
        raise ValueError(f"flux has shape {m_level.shape}, expected ({lat.n_edges},)")
    g = edge_densities(lat, p_level)
    moving = m_level != 0
    if np.any(g[moving] <= 0):
        return INF
    return float(np.sum(m_level[moving] ** 2 / g[moving]))


def fisher_information(lat: Lattice, p_level: np.ndarray) -> float:
    """``sum_e (log p_tail - log p_head)^2 g_e / dx^2``.

    Edges with both endpoints empty contribute 0; an edge with exactly one
    empty endpoint makes the value ``inf``.
    """
    p_level = np.asarray(p_level, dtype=float)
    if p_level.shape != (lat.n_nodes,):
        raise ValueError(f"density has shape {p_level.shape}, expected ({lat.n_nodes},)")
    if np.any(p_level < 0):
        return INF
    a, b = p_level[lat.tail], p_level[lat.head]
    zero_a, zero_b = a == 0, b == 0
    if np.any(zero_a != zero_b):
        return INF
    live = ~zero_a
    a, b = a[live], b[live]
    return float(np.sum((np.log(a) - np.log(b)) ** 2 * (0.5 * (a + b))) / lat.dx**2)


def t_coeff(a, b):
    """``(a - b)(log a - log b) + (a + b)``, the Fisher Hessian edge weight."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("t_coeff needs strictly positive arguments")
    out = (a - b) * (np.log(a) - np.log(b)) + (a + b)
    return float(out) if out.ndim == 0 else out


def relative_entropy_gap(p0: np.ndarray, p1: np.ndarray) -> float:
    """``sum p1 log p1 - sum p0 log p0`` with ``0 log 0 = 0``."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if np.any(p0 < 0) or np.any(p1 < 0):
        raise ValueError("histograms must be nonnegative")

    def neg_entropy(q):
        q = q[q > 0]
        return float(np.sum(q * np.log(q)))

    return neg_entropy(p1) - neg_entropy(p0)


# space-time objective -------------------------------------------------------


def _pricing(prob: ProblemSpec):
    """(interval index, density level, weight) triples for the kinetic terms."""
    w = prob.kinetic_weight
    intervals = np.arange(prob.time.n_intervals)
    out = []
    if w > 0:
        out.append((intervals, intervals, w))
    if w < 1:
        out.append((intervals, intervals + 1, 1.0 - w))
    return out


def kinetic_path(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Kinetic energy of every interval, shape ``(L + 1,)``."""
    p, m = prob.check_paths(p, m)
    lat = prob.lattice
    total = np.zeros(prob.time.n_intervals)
    for intervals, levels, w in _pricing(prob):
        for l, k in zip(intervals, levels):
            total[l] += w * kinetic_energy(lat, m[l], p[k])
    return total


def fisher_path(prob: ProblemSpec, p: np.ndarray) -> np.ndarray:
    """Fisher information of every interior level, shape ``(L,)``."""
    return np.array([fisher_information(prob.lattice, row) for row in p[1:-1]])


def objective(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> float:
    p, m = prob.check_paths(p, m)
    kin = kinetic_path(prob, p, m).sum()
    if prob.beta2 == 0:
        return float(kin)
    return float(kin + prob.beta2 * fisher_path(prob, p).sum())


def _require_interior(p: np.ndarray):
    if np.any(p[1:-1] <= 0) or not np.all(np.isfinite(p[1:-1])):
        raise ValueError("interior densities must be strictly positive")


def _edge_terms(prob: ProblemSpec, p: np.ndarray, m: np.ndarray):
    """Yield per-pricing arrays of (intervals, levels, weight, g) with g > 0."""
    lat = prob.lattice
    for intervals, levels, w in _pricing(prob):
        g = edge_densities(lat, p[levels])
        if np.any(g <= 0):
            raise ValueError("kinetic term needs positive edge densities")
        yield intervals, levels, w, g


def gradient(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives w.r.t. every flux and every interior density.

    Returns ``(grad_m, grad_p)`` with shapes ``(L + 1, |E|)`` and ``(L, |V|)``.
    """
    p, m = prob.check_paths(p, m)
    _require_interior(p)
    lat = prob.lattice
    L = prob.time.n_interior
    gm = np.zeros_like(m)
    gp_full = np.zeros_like(p)
    for intervals, levels, w, g in _edge_terms(prob, p, m):
        gm += w * 2.0 * m / g
        dg = -0.5 * w * (m / g) ** 2
        for row, k in enumerate(levels):
            gp_full[k] += np.bincount(lat.tail, dg[row], lat.n_nodes)
            gp_full[k] += np.bincount(lat.head, dg[row], lat.n_nodes)
    gp = gp_full[1:-1]
    if prob.beta2 > 0:
        q = p[1:-1]
        a, b = q[:, lat.tail], q[:, lat.head]
        d = np.log(a) - np.log(b)
        s = (a + b) / lat.dx**2
        c = prob.beta2
        for row in range(L):
            da = c * (d[row] * s[row] / a[row] + 0.5 * d[row] ** 2 / lat.dx**2)
            db = c * (-d[row] * s[row] / b[row] + 0.5 * d[row] ** 2 / lat.dx**2)
            gp[row] += np.bincount(lat.tail, da, lat.n_nodes)
            gp[row] += np.bincount(lat.head, db, lat.n_nodes)
    return gm, gp.copy()


def gradient_vector(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> np.ndarray:
    gm, gp = gradient(prob, p, m)
    return np.concatenate([gm.ravel(), gp.ravel()])


def hessian(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> sps.csc_matrix:
    """Sparse Hessian over the unknown vector (fluxes first, then densities)."""
    p, m = prob.check_paths(p, m)
    _require_interior(p)
    lat = prob.lattice
    L = prob.time.n_interior
    E, V = lat.n_edges, lat.n_nodes
    n = prob.n_unknowns
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.ravel(r))
        cols.append(np.ravel(c))
        vals.append(np.ravel(v))

    edge = np.arange(E)
    for intervals, levels, w, g in _edge_terms(prob, p, m):
        mi = intervals[:, None] * E + edge[None, :]
        add(mi, mi, w * 2.0 / g)
        interior = (levels >= 1) & (levels <= L)
        if not np.any(interior):
            continue
        li = levels[interior]
        gi, mm, mi_ = g[interior], m[intervals[interior]], mi[interior]
        base = prob.n_flux + (li[:, None] - 1) * V
        pt = base + lat.tail[None, :]
        ph = base + lat.head[None, :]
        cross = -w * mm / gi**2
        for pidx in (pt, ph):
            add(mi_, pidx, cross)
            add(pidx, mi_, cross)
        pp = 0.5 * w * mm**2 / gi**3
        for r in (pt, ph):
            for c in (pt, ph):
                add(r, c, pp)
    if prob.beta2 > 0:
        q = p[1:-1]
        a, b = q[:, lat.tail], q[:, lat.head]
        t = (a - b) * (np.log(a) - np.log(b)) + (a + b)
        t = prob.beta2 * t / lat.dx**2
        base = prob.n_flux + np.arange(L)[:, None] * V
        pt = base + lat.tail[None, :]
        ph = base + lat.head[None, :]
        add(pt, pt, t / a**2)
        add(ph, ph, t / b**2)
        add(pt, ph, -t / (a * b))
        add(ph, pt, -t / (a * b))
    H = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return H.tocsc()
