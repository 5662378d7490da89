"""Damped Newton iteration on the equality-constrained space-time problem."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import energy
from .energy import ProblemSpec
from .feasible import initial_point
from .ordering import kkt_coordinates, nested_dissection

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max-iter"
STEP_FAILURE = "step-failure"

# diagonal shift making the equilibrated KKT matrix quasi-definite
QD_SHIFT = 1e-12


class SolverError(RuntimeError):
    """Raised when the Newton iteration cannot proceed."""


class KKTError(SolverError):
    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    beta2: float = 1e-6
    alpha: float = 0.3
    tol: float = 1e-5
    max_iter: int = 500
    tau: float = 0.99
    kkt_tol: float = 1e-10
    gtol: float = 1e-9
    min_step: float = 1e-12

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if min(self.tol, self.kkt_tol, self.gtol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.beta2 < 0:
            raise ValueError("beta2 must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Continuity equations ``A u = b`` with one redundant row removed.

    ``removed_row`` indexes the dropped row in the raw ``(L + 1) * |V|`` row
    numbering (row ``l * |V| + i`` is node i on interval l).
    """

    A: sps.csr_matrix
    b: np.ndarray
    removed_row: int
    A_raw: sps.csr_matrix = field(repr=False)
    b_raw: np.ndarray = field(repr=False)

    def residual(self, u: np.ndarray) -> float:
        return float(np.abs(self.A_raw @ u - self.b_raw).max())


def assemble_constraints(prob: ProblemSpec) -> ConstraintSystem:
    lat, tg = prob.lattice, prob.time
    V, L = lat.n_nodes, tg.n_interior
    if abs(prob.p0.sum() - prob.p1.sum()) > 1e-12:
        raise ValueError("endpoint masses differ; the continuity system is inconsistent")
    inv_dt = 1.0 / tg.dt
    div = lat.divergence_matrix
    flux_block = sps.block_diag([div] * tg.n_intervals, format="csr")
    # density coefficients: +1/dt on level l+1, -1/dt on level l (interior only)
    nodes = np.arange(V)
    rows, cols, vals = [], [], []
    for l in range(tg.n_intervals):
        if l + 1 <= L:
            rows.append(l * V + nodes)
            cols.append(l * V + nodes)
            vals.append(np.full(V, inv_dt))
        if l >= 1:
            rows.append(l * V + nodes)
            cols.append((l - 1) * V + nodes)
            vals.append(np.full(V, -inv_dt))
    dens_block = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(tg.n_intervals * V, L * V),
    )
    A_raw = sps.hstack([flux_block, dens_block], format="csr")
    b_raw = np.zeros(tg.n_intervals * V)
    b_raw[:V] += prob.p0 * inv_dt
    b_raw[L * V :] -= prob.p1 * inv_dt
    # all rows sum to (sum p1 - sum p0)/dt on the data: drop the last one
    removed = A_raw.shape[0] - 1
    keep = np.arange(removed)
    return ConstraintSystem(
        A=A_raw[keep], b=b_raw[keep], removed_row=removed, A_raw=A_raw, b_raw=b_raw
    )


def _kkt_error(K, z, rhs, n, gscale):
    """Scaled residuals of the stationarity and constraint blocks."""
    r = rhs - K @ z
    top = np.abs(r[:n]).max() / gscale
    bottom = np.abs(r[n:]).max() / (1.0 + np.abs(z[:n]).max()) if r.size > n else 0.0
    return r, max(top, bottom)


def _refine(K, rhs, solve, n, tol, max_steps):
    gscale = max(np.abs(rhs).max(), np.finfo(float).tiny)
    z = np.zeros_like(rhs)
    r, err = rhs, np.inf
    for _ in range(max_steps):
        z = z + solve(r)
        r, new = _kkt_error(K, z, rhs, n, gscale)
        # stop once well below tolerance or when refinement stagnates
        if new <= 1e-3 * tol or new > 0.5 * err:
            err = min(err, new)
            break
        err = new
    return z, err


def kkt_ordering(prob: ProblemSpec, H, cs: ConstraintSystem) -> np.ndarray:
    """Nested-dissection permutation for this problem's KKT pattern."""
    K = sps.bmat([[H, cs.A.T], [cs.A, None]], format="csr")
    return nested_dissection(K, kkt_coordinates(prob))


def solve_kkt(H, grad, A, tol: float = 1e-10, perm=None, target=None, max_refine: int = 10):
    """Solve ``min d.grad + d.H.d/2  s.t.  A d = target`` (default 0).

    ``A`` may be a :class:`ConstraintSystem` or a sparse matrix with full row
    rank.  On return the stationarity residual is at most ``tol`` times the
    right-hand side and ``|A d - target| <= tol * (1 + |d|)`` (max norms).

    The factorized matrix is the diagonally equilibrated system with the
    quasi-definite shift ``[[+eps I, 0], [0, -eps I]]``, in the symmetric order ``perm``
    (reverse Cuthill-McKee when omitted); iterative refinement against the
    unshifted system recovers the exact solution.  Falls back to a pivoted LU
    of the exact system if refinement stalls.  Returns ``(d, lam)``.
    """
    if isinstance(A, ConstraintSystem):
        A = A.A
    A = sps.csr_matrix(A)
    H = sps.csr_matrix(H)
    grad = np.asarray(grad, dtype=float)
    n, k = H.shape[0], A.shape[0]
    if A.shape[1] != n or grad.shape != (n,):
        raise ValueError("dimension mismatch in KKT system")
    target = np.zeros(k) if target is None else np.asarray(target, dtype=float)
    if not np.any(grad) and not np.any(target):
        return np.zeros(n), np.zeros(k)
    K = sps.bmat([[H, A.T], [A, None]], format="csr")
    rhs = np.concatenate([-grad, target])
    if perm is None:
        perm = reverse_cuthill_mckee(K, symmetric_mode=False)
    # symmetric diagonal equilibration, then a small quasi-definite shift
    rowmax = np.asarray(abs(K).max(axis=1).todense()).ravel()
    dscale = 1.0 / np.sqrt(np.where(rowmax > 0, rowmax, 1.0))
    Ks = sps.diags(dscale) @ K @ sps.diags(dscale)
    eps = QD_SHIFT
    shift = sps.diags(np.concatenate([np.full(n, eps), np.full(k, -eps)]))
    Kq = (Ks + shift).tocsr()[perm][:, perm].tocsc()
    rel = np.inf
    try:
        lu = spla.splu(
            Kq, permc_spec="NATURAL", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)
        )

        def solve(r):
            out = np.empty_like(r)
            out[perm] = lu.solve((dscale * r)[perm])
            return dscale * out

        z, rel = _refine(K, rhs, solve, n, tol, max_refine)
    except RuntimeError:
        pass
    if not np.isfinite(rel) or rel > tol:
        log.info("quasi-definite solve stalled at %.2e; using pivoted LU", rel)
        try:
            lu = spla.splu(K.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise KKTError(f"KKT factorization failed: {exc}") from exc
        z, rel = _refine(K, rhs, lu.solve, n, tol, max_refine)
    if not np.isfinite(rel) or rel > tol:
        raise KKTError(f"KKT relative residual {rel:.3e} exceeds {tol:.1e}", rel)
    return z[:n], z[n:]


def fraction_to_boundary(p_interior, d_p, tau: float) -> float:
    """Largest step in (0, 1] keeping ``p + step * d_p`` at least ``(1 - tau) p``."""
    p_interior = np.asarray(p_interior, dtype=float)
    d_p = np.asarray(d_p, dtype=float)
    neg = d_p < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, tau * np.min(-p_interior[neg] / d_p[neg])))


@dataclass(eq=False)
class SolveResult:
    problem: ProblemSpec
    config: SolverConfig
    p: np.ndarray
    m: np.ndarray
    trace: np.ndarray
    iterations: int
    reason: str
    kinetic: float
    fisher: float
    residuals: np.ndarray
    min_mass: np.ndarray
    mass_error: np.ndarray
    steps: np.ndarray
    wall_time: float

    @property
    def converged(self) -> bool:
        return self.reason == CONVERGED

    @property
    def objective(self) -> float:
        return float(self.trace[-1])

    @property
    def distance_estimate(self) -> float:
        """``dt`` times the summed kinetic energy: the squared-W2 estimate."""
        return self.problem.time.dt * self.kinetic

    @property
    def entropy_gap(self) -> float:
        """``2 beta D(p1 | p0)``, the constant left out of the minimized objective."""
        beta = np.sqrt(self.problem.beta2)
        return 2.0 * beta * energy.relative_entropy_gap(self.problem.p0, self.problem.p1)


def _diagnostics(prob, cs, u):
    p, m = prob.unpack(u)
    mass = np.abs(p.sum(axis=1) - 1.0).max()
    return cs.residual(u), float(p[1:-1].min()), float(mass)


def newton_solve(prob: ProblemSpec, cfg: SolverConfig | None = None, callback=None) -> SolveResult:
    """Minimize the regularized objective from the linear-interpolation start.

    The regularization weight comes from ``prob.beta2``; ``cfg.beta2`` is not
    consulted.  ``callback(k, u, f)`` is called after every accepted step.
    """
    cfg = cfg or SolverConfig(beta2=prob.beta2)
    t0 = time.perf_counter()
    cs = assemble_constraints(prob)
    p, m = initial_point(prob)
    if np.any(p[1:-1] <= 0):
        raise SolverError("initial path is not strictly positive; floor the endpoint histograms")
    u = prob.pack(p, m)
    f = energy.objective(prob, p, m)
    if not np.isfinite(f):
        raise SolverError("objective is infinite at the initial point")
    nf = prob.n_flux

    trace, steps = [f], []
    res, mn, me = _diagnostics(prob, cs, u)
    residuals, min_mass, mass_error = [res], [mn], [me]
    reason = MAX_ITER
    perm = None
    k = 0
    for k in range(1, cfg.max_iter + 1):
        p, m = prob.unpack(u)
        g = energy.gradient_vector(prob, p, m)
        H = energy.hessian(prob, p, m)
        if perm is None:
            perm = kkt_ordering(prob, H, cs)
        # folding the current residual into the step keeps round-off from accumulating
        drift = cs.b - cs.A @ u
        d, lam = solve_kkt(H, g, cs, tol=cfg.kkt_tol, perm=perm, target=drift)
        if np.abs(g + cs.A.T @ lam).max() <= cfg.gtol:
            reason = CONVERGED
            break
        slope = float(d @ g)
        if slope >= 0:
            log.warning("iteration %d: non-descent direction (slope %.3e)", k, slope)
        amax = fraction_to_boundary(u[nf:], d[nf:], cfg.tau)
        step = min(cfg.alpha, amax)
        if step < cfg.min_step:
            reason = STEP_FAILURE
            break
        u_new = u + step * d
        f_new = energy.objective(prob, *prob.unpack(u_new))
        if not np.isfinite(f_new):
            reason = STEP_FAILURE
            break
        rel = abs(f_new - f) / abs(f) if f != 0 else abs(f_new)
        u, f = u_new, f_new
        trace.append(f)
        steps.append(step)
        res, mn, me = _diagnostics(prob, cs, u)
        residuals.append(res)
        min_mass.append(mn)
        mass_error.append(me)
        log.debug("iter %3d  f=%.10e  rel=%.2e  step=%.3f  res=%.1e", k, f, rel, step, res)
        if callback is not None:
            callback(k, u, f)
        if rel < cfg.tol:
            reason = CONVERGED
            break

    p, m = prob.unpack(u)
    kin = float(energy.kinetic_path(prob, p, m).sum())
    fis = float(energy.fisher_path(prob, p).sum())
    return SolveResult(
        problem=prob,
        config=cfg,
        p=p,
        m=m,
        trace=np.array(trace),
        iterations=k,
        reason=reason,
        kinetic=kin,
        fisher=fis,
        residuals=np.array(residuals),
        min_mass=np.array(min_mass),
        mass_error=np.array(mass_error),
        steps=np.array(steps),
        wall_time=time.perf_counter() - t0,
    )
