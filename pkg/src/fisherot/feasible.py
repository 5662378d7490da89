"""Strictly feasible starting paths.

Densities are interpolated linearly in time between the endpoint histograms;
fluxes are potential flows obtained from one graph Poisson solve per time
interval.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .energy import ProblemSpec, TimeGrid
from .lattice import Lattice, assemble_laplacian, divergence, gradient

MASS_TOL = 1e-12


def linear_interpolate_path(p0: np.ndarray, p1: np.ndarray, tg: TimeGrid) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float).ravel()
    p1 = np.asarray(p1, dtype=float).ravel()
    if p0.shape != p1.shape:
        raise ValueError("endpoint histograms differ in size")
    if np.any(p0 < 0) or np.any(p1 < 0):
        raise ValueError("endpoint histograms must be nonnegative")
    if abs(p0.sum() - p1.sum()) > MASS_TOL:
        raise ValueError(f"endpoint masses differ: {p0.sum():.16g} vs {p1.sum():.16g}")
    t = tg.times[:, None]
    path = p0[None, :] + t * (p1 - p0)[None, :]
    # keep the endpoints bit-exact
    path[0], path[-1] = p0, p1
    return path


def potential_flow_flux(lat: Lattice, path: np.ndarray, tg: TimeGrid):
    """Potential-flow fluxes making ``path`` satisfy every continuity equation.

    For each interval l solves ``div(grad phi_l) = -(p_{l+1} - p_l) / dt`` for a
    mean-zero ``phi_l`` and sets ``m_l = grad phi_l``.  Returns ``(m, phi)``
    with shapes ``(L + 1, |E|)`` and ``(L + 1, |V|)``.
    """
    path = np.asarray(path, dtype=float)
    if path.shape != (tg.n_levels, lat.n_nodes):
        raise ValueError(f"path shape {path.shape}, expected {(tg.n_levels, lat.n_nodes)}")
    rhs = -(path[1:] - path[:-1]) / tg.dt
    scale = np.abs(rhs).sum(axis=1) + 1.0
    if np.any(np.abs(rhs.sum(axis=1)) > 1e-10 * scale):
        raise ValueError("Poisson right-hand side does not sum to zero (mass mismatch)")
    # pin node 0; the dropped equation holds because each rhs sums to zero
    lap = assemble_laplacian(lat).tocsc()
    solver = spla.splu(lap[1:, 1:].tocsc())
    phi = np.zeros_like(rhs)
    if lat.n_nodes > 1:
        phi[:, 1:] = solver.solve(np.ascontiguousarray(rhs[:, 1:].T)).T
    phi -= phi.mean(axis=1, keepdims=True)
    m = gradient(lat, phi)
    res = np.abs(divergence(lat, m) - rhs).max()
    if not np.isfinite(res) or res > 1e-8 * (np.abs(rhs).max() + 1.0):
        raise RuntimeError(f"Poisson solve failed, residual {res:.3e}")
    return m, phi


def feasibility_residual(prob: ProblemSpec, p: np.ndarray, m: np.ndarray) -> float:
    """Max violation of ``(p_{l+1} - p_l)/dt + div(m_l) = 0`` over nodes and intervals."""
    p, m = prob.check_paths(p, m)
    r = (p[1:] - p[:-1]) / prob.time.dt + divergence(prob.lattice, m)
    return float(np.abs(r).max())


def initial_point(prob: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Linear-in-time densities with potential-flow fluxes."""
    path = linear_interpolate_path(prob.p0, prob.p1, prob.time)
    m, _ = potential_flow_flux(prob.lattice, path, prob.time)
    return path, m
