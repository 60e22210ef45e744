import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings, strategies as st

from ellipticlab.assembly import ComplexSparseMatrix, assemble_form, assemble_volume_load
from ellipticlab.coeffs import CoefficientSet, pattern
from ellipticlab.linsolve import (BreakdownError, SingularMatrixError, SolverConfig, SolverError,
                                  solve, solve_bicgstab, solve_dense)
from ellipticlab.mesh import build_box_mesh, named_mask


def csr(dense):
    return ComplexSparseMatrix.from_scipy(sps.csr_matrix(np.asarray(dense, complex)))


def test_scaled_identity_one_iteration(rng):
    n = 10
    A = csr((1 + 1j) * np.eye(n))
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    x, rep = solve_bicgstab(A, b, preconditioner="none")
    np.testing.assert_allclose(x, b / (1 + 1j), rtol=1e-14)
    assert rep.iterations == 1 and rep.converged


def test_zero_rhs():
    A = csr(np.diag([1.0, 2.0, 3.0]))
    x, rep = solve_bicgstab(A, np.zeros(3))
    assert not x.any() and rep.iterations == 0 and rep.converged


def test_dense_examples():
    x, _ = solve_dense(csr(np.eye(4)), np.arange(4.0))
    np.testing.assert_array_equal(x, np.arange(4.0))
    x, _ = solve_dense(csr([[1j, 0], [0, 2]]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [-1j, 1.0], rtol=1e-15)


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_dense_singular():
    with pytest.raises(SingularMatrixError):
        solve_dense(csr([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_dense_cap():
    with pytest.raises(ValueError):
        solve_dense(csr(np.eye(5)), np.ones(5), cap=4)


def test_random_dense_system(rng):
    n = 50
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 10 * np.eye(n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    x, rep = solve_dense(csr(M), b)
    np.testing.assert_allclose(x, np.linalg.solve(M, b), rtol=1e-12, atol=1e-14)
    assert rep.residual < 1e-13


def small_meshes():
    o, e = (0, 0, 0), (1, 1, 1)
    yield build_box_mesh(o, e, (3, 3, 3))
    yield build_box_mesh(o, e, (4, 4, 4))
    yield build_box_mesh(o, e, (4, 4, 4), named_mask("l_shape", o, e))
    yield build_box_mesh(o, (2, 1, 1), (6, 3, 3))
    yield build_box_mesh(o, e, (7, 7, 7))


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
@pytest.mark.parametrize("k", [1e-3, 1.0, 100.0])
def test_bicgstab_agrees_with_dense_oracle(bc, k):
    for mesh in small_meshes():
        assert mesh.n_nodes <= 512
        cs = pattern("checkerboard", mesh, k=k, block=0.25, gamma_hi=10.0)
        A = assemble_form(mesh, cs, bc)
        b = assemble_volume_load(mesh, lambda x: np.exp(x[:, 0]) + 1j * x[:, 1], bc)
        xi, _ = solve(A, b, SolverConfig(tol=1e-10))
        xd, _ = solve_dense(A, b)
        assert np.abs(xi - xd).max() <= 1e-8 * np.abs(xd).max()


def test_uniqueness(unit4):
    A = assemble_form(unit4, pattern("sphere_inclusion", unit4, k=2.0), "neumann")
    x, rep = solve(A, np.zeros(unit4.n_nodes))
    assert not x.any() and rep.converged
    xd, _ = solve_dense(A, np.zeros(unit4.n_nodes))
    assert not xd.any()


def test_reported_residual_is_true_residual(unit4, rng):
    A = assemble_form(unit4, pattern("identity", unit4, k=3.0), "neumann")
    b = rng.normal(size=unit4.n_nodes) + 0j
    x, rep = solve(A, b, SolverConfig(tol=1e-9))
    true = np.linalg.norm(b - A.to_dense() @ x) / np.linalg.norm(b)
    assert rep.residual == pytest.approx(true, rel=1e-6)
    assert rep.residual <= 1e-9


def test_max_iter_returns_nonconverged(unit4, rng):
    A = assemble_form(unit4, pattern("checkerboard", unit4, k=1e-3, block=0.25), "neumann")
    b = rng.normal(size=unit4.n_nodes) + 0j
    x, rep = solve_bicgstab(A, b, tol=1e-14, max_iter=2)
    assert not rep.converged and rep.iterations == 2 and np.all(np.isfinite(x))
    with pytest.raises(SolverError):
        solve(A, b, SolverConfig(tol=1e-14, max_iter=2))


def test_breakdown_is_reported():
    # A = [[0, 1], [1, 0]] with b = e_1: the first step has <r0, A r0> = 0
    A = csr([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(BreakdownError):
        solve_bicgstab(A, np.array([1.0, 0.0]), preconditioner="none")


def test_jacobi_needs_nonzero_diagonal():
    with pytest.raises(ValueError):
        solve_bicgstab(csr([[0.0, 1.0], [1.0, 1.0]]), np.ones(2), preconditioner="jacobi")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40))
def test_random_well_conditioned(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M += (np.abs(M).sum(axis=1).max() + 1) * np.eye(n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    x, rep = solve_bicgstab(csr(M), b, tol=1e-12)
    assert rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(M, b), rtol=1e-9, atol=1e-12)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method="gmres")
    with pytest.raises(ValueError):
        SolverConfig(tol=0)


def test_stagnation_stops_early():
    mesh = build_box_mesh((0, 0, 0), (1, 1, 1), (7, 7, 7))
    A = assemble_form(mesh, pattern("checkerboard", mesh, k=1e-3, block=0.25, gamma_hi=10.0), "neumann")
    b = assemble_volume_load(mesh, lambda x: np.exp(x[:, 0]) + 1j * x[:, 1], "neumann")
    x, rep = solve_bicgstab(A, b, tol=1e-15, max_iter=20000)
    assert not rep.converged
    assert rep.iterations < 2000
    assert rep.residual < 1e-8
