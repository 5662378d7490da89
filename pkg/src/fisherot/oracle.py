"""Independent checks: exact 1D transport, finite differences, convexity.

Everything here is deliberately dense and slow; it is meant for small
instances and for cross-checking the solver, never for production solves.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import energy
from .energy import ProblemSpec, TimeGrid
from .lattice import GridSpec, build_lattice
from .newton import ConstraintSystem, assemble_constraints

MAX_DENSE = 500


def w2_squared_1d(x0, p0, x1=None, p1=None) -> float:
    """Exact squared 2-Wasserstein distance between two discrete 1D measures.

    Integrates ``|Q0(s) - Q1(s)|^2`` over [0, 1] where Q are the piecewise
    constant quantile functions; both break points sets are merged so the
    integral is exact.  ``x1`` defaults to ``x0``.
    """
    if x1 is None:
        x1 = x0
    x0, p0, x1, p1 = (np.asarray(v, dtype=float).ravel() for v in (x0, p0, x1, p1))
    for x, p in ((x0, p0), (x1, p1)):
        if x.shape != p.shape:
            raise ValueError("positions and masses differ in length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("masses must be nonnegative")
    s0, s1 = p0.sum(), p1.sum()
    if abs(s0 - s1) > 1e-10 * max(s0, s1, 1.0):
        raise ValueError(f"total masses differ: {s0} vs {s1}")
    c0 = np.cumsum(p0) / s0
    c1 = np.cumsum(p1) / s1
    c0[-1] = c1[-1] = 1.0
    brk = np.union1d(c0, c1)
    widths = np.diff(np.concatenate([[0.0], brk]))
    mids = brk - 0.5 * widths
    i0 = np.minimum(np.searchsorted(c0, mids), x0.size - 1)
    i1 = np.minimum(np.searchsorted(c1, mids), x1.size - 1)
    return float(np.sum(widths * (x0[i0] - x1[i1]) ** 2))


def _shrunk_step(prob: ProblemSpec, u: np.ndarray, j: int, h: float) -> float:
    if j < prob.n_flux:
        return h
    # keep both probes strictly positive
    return min(h, 0.5 * u[j])


def fd_gradient(prob: ProblemSpec, p, m, h: float = 1e-5, func=None) -> np.ndarray:
    """Central-difference gradient of the objective over the unknown vector.

    ``func(u)`` overrides the objective (used to check the harness itself).
    """
    u0 = prob.pack(p, m)
    if func is None:

        def func(u):
            return energy.objective(prob, *prob.unpack(u))

    out = np.empty_like(u0)
    for j in range(u0.size):
        hj = _shrunk_step(prob, u0, j, h)
        up, dn = u0.copy(), u0.copy()
        up[j] += hj
        dn[j] -= hj
        out[j] = (func(up) - func(dn)) / (2 * hj)
    return out


def fd_hessian(prob: ProblemSpec, p, m, h: float = 1e-5) -> np.ndarray:
    """Central differences of the analytic gradient, as a dense matrix."""
    u0 = prob.pack(p, m)
    if u0.size > MAX_DENSE:
        raise ValueError(f"{u0.size} unknowns is too many for a dense finite-difference Hessian")
    out = np.empty((u0.size, u0.size))
    for j in range(u0.size):
        hj = _shrunk_step(prob, u0, j, h)
        up, dn = u0.copy(), u0.copy()
        up[j] += hj
        dn[j] -= hj
        gu = energy.gradient_vector(prob, *prob.unpack(up))
        gd = energy.gradient_vector(prob, *prob.unpack(dn))
        out[:, j] = (gu - gd) / (2 * hj)
    return out


def nullspace_basis(A) -> np.ndarray:
    """Orthonormal basis of ``{d : A d = 0}`` from a dense SVD."""
    if isinstance(A, ConstraintSystem):
        A = A.A
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    if A.shape[1] > MAX_DENSE:
        raise ValueError(f"{A.shape[1]} unknowns is too many for a dense null space")
    return scipy.linalg.null_space(A)


def reduced_hessian_min_eigenvalue(prob: ProblemSpec, p, m, basis=None) -> float:
    """Smallest eigenvalue of ``Z^T H Z`` with Z spanning the constraint null space."""
    p, m = prob.check_paths(p, m)
    if np.any(p[1:-1] <= 0):
        raise ValueError("point is not in the interior")
    Z = nullspace_basis(assemble_constraints(prob)) if basis is None else basis
    H = energy.hessian(prob, p, m).toarray()
    R = Z.T @ H @ Z
    return float(np.linalg.eigvalsh(0.5 * (R + R.T))[0])


def fisher_block_min_eigenvalue(prob: ProblemSpec, p_level) -> float:
    """Smallest eigenvalue of the Fisher Hessian of one level on zero-sum directions."""
    lat = prob.lattice
    q = np.asarray(p_level, dtype=float)
    t = energy.t_coeff(q[lat.tail], q[lat.head]) / lat.dx**2
    n = lat.n_nodes
    F = np.zeros((n, n))
    np.add.at(F, (lat.tail, lat.tail), t / q[lat.tail] ** 2)
    np.add.at(F, (lat.head, lat.head), t / q[lat.head] ** 2)
    np.add.at(F, (lat.tail, lat.head), -t / (q[lat.tail] * q[lat.head]))
    np.add.at(F, (lat.head, lat.tail), -t / (q[lat.tail] * q[lat.head]))
    Z = scipy.linalg.null_space(np.ones((1, n)))
    return float(np.linalg.eigvalsh(prob.beta2 * Z.T @ F @ Z)[0])


def random_interior_point(prob: ProblemSpec, rng: np.random.Generator, spread: float = 0.5):
    """Random strictly positive density path and random fluxes.

    The point is generally infeasible; derivative and convexity checks do
    not need feasibility.
    """
    n_lev, V = prob.time.n_levels, prob.lattice.n_nodes
    p = rng.uniform(1.0 - spread, 1.0 + spread, size=(n_lev, V))
    p /= p.sum(axis=1, keepdims=True)
    p[0], p[-1] = prob.p0, prob.p1
    m = rng.normal(scale=1.0 / V, size=(prob.time.n_intervals, prob.lattice.n_edges))
    return p, m


def _tiny_problem(n_pts, dimension, n_interior, beta2, rng):
    lat = build_lattice(GridSpec.box(n_pts, dimension))
    ends = rng.uniform(0.5, 1.5, size=(2, lat.n_nodes))
    ends /= ends.sum(axis=1, keepdims=True)
    return ProblemSpec(lat, TimeGrid(n_interior), ends[0], ends[1], beta2=beta2)


def gradient_error(prob, p, m, h=1e-5) -> float:
    """``|fd - analytic|_max / |analytic|_max`` for the objective gradient."""
    g = energy.gradient_vector(prob, p, m)
    return float(np.abs(fd_gradient(prob, p, m, h) - g).max() / np.abs(g).max())


def hessian_error(prob, p, m, h=1e-5) -> float:
    """Max entrywise FD-vs-analytic Hessian gap over the largest Hessian entry."""
    H = energy.hessian(prob, p, m).toarray()
    return float(np.abs(fd_hessian(prob, p, m, h) - H).max() / np.abs(H).max())


def run_checks(seed: int = 0, trials: int = 10, beta2: float = 1e-6):
    """Derivative, convexity and barrier checks on small random problems.

    Returns a list of ``(name, passed, detail)``.
    """
    rng = np.random.default_rng(seed)
    results = []
    for label, n_pts, dim, L in (("1D N=8 L=4", 8, 1, 4), ("2D 4x4 L=3", 4, 2, 3)):
        prob = _tiny_problem(n_pts, dim, L, beta2, rng)
        g_err = h_err = 0.0
        for _ in range(trials):
            p, m = random_interior_point(prob, rng)
            g_err = max(g_err, gradient_error(prob, p, m))
            h_err = max(h_err, hessian_error(prob, p, m))
        results.append((f"gradient vs finite differences ({label})", g_err < 1e-5, f"max rel err {g_err:.2e}"))
        results.append((f"hessian vs finite differences ({label})", h_err < 1e-4, f"max scaled err {h_err:.2e}"))

    prob = _tiny_problem(5, 1, 3, beta2, rng)
    Z = nullspace_basis(assemble_constraints(prob))
    lam = min(
        reduced_hessian_min_eigenvalue(prob, *random_interior_point(prob, rng), basis=Z)
        for _ in range(trials)
    )
    results.append(("reduced Hessian positive definite (1D N=5 L=3)", lam > 0, f"min eigenvalue {lam:.3e}"))

    two = build_lattice(GridSpec.box(2, 1, 0.0, 1.0))
    seq = [energy.fisher_information(two, np.array([1 - e, e])) for e in 10.0 ** -np.arange(2, 13, 2)]
    ok = bool(np.all(np.diff(seq) > 0))
    results.append(("Fisher information barrier", ok, f"values {', '.join(f'{v:.3g}' for v in seq)}"))
    return results
