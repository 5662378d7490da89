import numpy as np
import pytest
import scipy.sparse as sps

from fisherot import energy
from fisherot.energy import ProblemSpec, TimeGrid
from fisherot.experiments import gaussian_problem
from fisherot.feasible import initial_point
from fisherot.lattice import GridSpec, build_lattice
from fisherot.newton import (
    CONVERGED,
    KKTError,
    SolverConfig,
    assemble_constraints,
    fraction_to_boundary,
    kkt_ordering,
    newton_solve,
    solve_kkt,
)
from fisherot.oracle import random_interior_point
from fisherot.ordering import kkt_coordinates, nested_dissection


def small_problem(n=3, L=2, d=1, seed=0, beta2=1e-6):
    lat = build_lattice(GridSpec.box(n, d))
    ends = np.random.default_rng(seed).uniform(0.2, 1.0, size=(2, lat.n_nodes))
    ends /= ends.sum(axis=1, keepdims=True)
    return ProblemSpec(lat, TimeGrid(L), ends[0], ends[1], beta2=beta2)


def test_config_validation():
    for bad in (dict(alpha=0), dict(alpha=1.5), dict(tau=1), dict(tol=0), dict(max_iter=0), dict(beta2=-1)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# constraints --------------------------------------------------------------


def test_constraint_dimensions_and_rank():
    prob = small_problem(3, 2)
    cs = assemble_constraints(prob)
    assert prob.n_unknowns == 12
    assert cs.A_raw.shape == (9, 12)
    assert cs.A.shape == (8, 12)
    assert np.linalg.matrix_rank(cs.A_raw.toarray()) == 8
    assert np.linalg.matrix_rank(cs.A.toarray()) == 8
    assert cs.removed_row == 8


def test_constraint_rhs_only_on_boundary_intervals():
    prob = small_problem(4, 3)
    cs = assemble_constraints(prob)
    V = prob.lattice.n_nodes
    nz = np.flatnonzero(cs.b_raw)
    assert set(nz // V) <= {0, prob.time.n_interior}


def test_initial_point_satisfies_constraints():
    prob = small_problem(6, 4, d=2, seed=3)
    cs = assemble_constraints(prob)
    u = prob.pack(*initial_point(prob))
    assert cs.residual(u) <= 1e-10
    assert np.abs(cs.A @ u - cs.b).max() <= 1e-10


def test_removed_row_is_implied():
    prob = small_problem(4, 2, seed=8)
    cs = assemble_constraints(prob)
    A = cs.A_raw.toarray()
    coef, *_ = np.linalg.lstsq(A[:-1].T, A[-1], rcond=None)
    assert np.allclose(A[:-1].T @ coef, A[-1])
    assert coef @ cs.b_raw[:-1] == pytest.approx(cs.b_raw[-1], abs=1e-12)


# KKT ----------------------------------------------------------------------


def test_kkt_projection_example():
    d, _ = solve_kkt(sps.identity(3), np.array([1.0, 0.0, 0.0]), sps.csr_matrix(np.ones((1, 3))))
    assert np.allclose(d, [-2 / 3, 1 / 3, 1 / 3], atol=1e-14)


def test_kkt_zero_gradient():
    d, lam = solve_kkt(sps.identity(4), np.zeros(4), sps.csr_matrix(np.ones((1, 4))))
    assert not d.any() and not lam.any()


@pytest.mark.parametrize("seed", range(5))
def test_kkt_random_spd(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(12, 12))
    H = M @ M.T + 0.1 * np.eye(12)
    A = rng.normal(size=(5, 12))
    g = rng.normal(size=12)
    d, lam = solve_kkt(sps.csr_matrix(H), g, sps.csr_matrix(A))
    K = np.block([[H, A.T], [A, np.zeros((5, 5))]])
    r = K @ np.concatenate([d, lam]) - np.concatenate([-g, np.zeros(5)])
    assert np.abs(r).max() <= 1e-10 * max(1.0, np.abs(g).max())


def test_kkt_with_target():
    rng = np.random.default_rng(2)
    H = np.diag(rng.uniform(1, 2, 6))
    A = rng.normal(size=(2, 6))
    t = rng.normal(size=2)
    d, _ = solve_kkt(sps.csr_matrix(H), rng.normal(size=6), sps.csr_matrix(A), target=t)
    assert np.allclose(A @ d, t, atol=1e-12)


def test_kkt_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_kkt(sps.identity(3), np.ones(4), sps.csr_matrix(np.ones((1, 3))))


def test_kkt_singular_raises():
    H = sps.csr_matrix((3, 3))
    A = sps.csr_matrix(np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(KKTError):
        solve_kkt(H, np.array([0.0, 1.0, 0.0]), A)


def test_kkt_on_problem_with_nested_dissection():
    prob = small_problem(5, 3, d=2, seed=1)
    cs = assemble_constraints(prob)
    p, m = random_interior_point(prob, np.random.default_rng(0))
    H = energy.hessian(prob, p, m)
    g = energy.gradient_vector(prob, p, m)
    perm = kkt_ordering(prob, H, cs)
    assert np.array_equal(np.sort(perm), np.arange(prob.n_unknowns + cs.A.shape[0]))
    d, lam = solve_kkt(H, g, cs, perm=perm)
    assert np.abs(cs.A @ d).max() <= 1e-10 * (1 + np.abs(d).max())
    assert np.abs(H @ d + cs.A.T @ lam + g).max() <= 1e-10 * np.abs(g).max()
    d2, _ = solve_kkt(H, g, cs)
    assert np.allclose(d, d2, atol=1e-9 * np.abs(d).max())
    assert d @ g < 0


def test_nested_dissection_is_permutation():
    prob = small_problem(6, 4, d=2)
    cs = assemble_constraints(prob)
    coords = kkt_coordinates(prob)
    assert coords.shape == (prob.n_unknowns + cs.A.shape[0], 3)
    K = sps.bmat([[sps.identity(prob.n_unknowns), cs.A.T], [cs.A, None]])
    perm = nested_dissection(K, coords, leaf=8)
    assert np.array_equal(np.sort(perm), np.arange(K.shape[0]))
    with pytest.raises(ValueError):
        nested_dissection(K, coords[:-1])


# fraction to boundary -------------------------------------------------------


def test_ftb_examples():
    assert fraction_to_boundary([0.5], [-1.0], 0.99) == pytest.approx(0.495)
    assert fraction_to_boundary([0.5, 0.2], [0.0, 3.0], 0.99) == 1.0
    assert fraction_to_boundary([0.2, 0.4], [-0.1, -4.0], 0.99) == pytest.approx(0.099)


def test_ftb_keeps_positive():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(1e-6, 1, 20)
        d = rng.normal(size=20)
        s = fraction_to_boundary(p, d, 0.99)
        assert 0 < s <= 1
        assert np.all(p + s * d >= 0.01 * p - 1e-15)


# solver ---------------------------------------------------------------------


def test_uniform_endpoints_stop_immediately():
    lat = build_lattice(GridSpec.box(10, 1))
    u = np.full(10, 0.1)
    res = newton_solve(ProblemSpec(lat, TimeGrid(5), u, u))
    assert res.reason == CONVERGED and res.iterations == 1
    assert res.objective <= 1e-12
    assert not res.m.any()


def test_small_1d_solve_invariants():
    prob = gaussian_problem(20, 10, (0.4,), (1.6,))
    cs = assemble_constraints(prob)
    slopes = []

    def cb(k, u, f):
        assert cs.residual(u) <= 1e-8
        p, _ = prob.unpack(u)
        assert p[1:-1].min() > 0
        assert np.abs(p.sum(axis=1) - 1).max() <= 1e-10
        slopes.append(f)

    res = newton_solve(prob, callback=cb)
    assert res.converged
    assert res.iterations <= 100
    assert np.all(np.diff(res.trace) < 0)
    assert len(slopes) == len(res.steps) == len(res.trace) - 1
    assert res.residuals.max() <= 1e-8
    assert res.mass_error.max() <= 1e-10
    assert res.min_mass.min() > 0
    assert res.objective == pytest.approx(res.kinetic + prob.beta2 * res.fisher, rel=1e-12)
    assert res.distance_estimate == pytest.approx(prob.time.dt * res.kinetic)


def test_descent_direction_at_initial_point():
    prob = gaussian_problem(12, 5, (0.5,), (1.5,))
    cs = assemble_constraints(prob)
    p, m = initial_point(prob)
    g = energy.gradient_vector(prob, p, m)
    d, _ = solve_kkt(energy.hessian(prob, p, m), g, cs)
    assert d @ g < 0


def test_max_iter_reason():
    prob = gaussian_problem(12, 5, (0.5,), (1.5,))
    res = newton_solve(prob, SolverConfig(max_iter=2))
    assert res.reason == "max-iter" and not res.converged
    assert res.iterations == 2 and res.trace.size == 3


def test_entropy_gap_property():
    prob = gaussian_problem(12, 3, (0.5,), (1.5,))
    res = newton_solve(prob, SolverConfig(max_iter=1))
    expected = 2e-3 * energy.relative_entropy_gap(prob.p0, prob.p1)
    assert res.entropy_gap == pytest.approx(expected)


def test_symmetric_pricing_option_converges():
    prob = gaussian_problem(16, 8, (0.4,), (1.6,), kinetic_weight=0.5)
    res = newton_solve(prob)
    assert res.converged and np.all(np.diff(res.trace) < 0)


def test_small_2d_solve():
    prob = gaussian_problem(6, 4, (0.5, 0.5), (1.5, 1.5), dimension=2)
    res = newton_solve(prob)
    assert res.converged
    assert res.residuals.max() <= 1e-8
    assert np.all(np.diff(res.trace) < 0)


def _reversed(prob):
    return ProblemSpec(prob.lattice, prob.time, prob.p1, prob.p0, beta2=prob.beta2,
                       kinetic_weight=prob.kinetic_weight)


def test_symmetric_pricing_is_time_reversible():
    prob = gaussian_problem(16, 8, (0.5,), (1.3,), kinetic_weight=0.5)
    cfg = SolverConfig(tol=1e-10)
    a, b = newton_solve(prob, cfg), newton_solve(_reversed(prob), cfg)
    assert np.abs(a.p - b.p[::-1]).max() <= 1e-8
    assert a.objective == pytest.approx(b.objective, rel=1e-10)


def test_left_pricing_reversal_is_a_mirror():
    # mirror-symmetric endpoints: reversing time equals reflecting space
    prob = gaussian_problem(16, 8, (0.4,), (1.6,))
    a, b = newton_solve(prob), newton_solve(_reversed(prob))
    assert np.abs(a.p - b.p[:, ::-1]).max() <= 1e-9
    assert np.abs(a.p - b.p[::-1]).max() > 1e-3
