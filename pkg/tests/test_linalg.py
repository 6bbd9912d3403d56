import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deadoil.errors import InvalidArgumentError, NonConvergenceError, SingularMatrixError
from deadoil.grid import create_grid
from deadoil.linalg import (
    SparseMatrix,
    dump_coordinate,
    solve_bicgstab,
    solve_cg,
    solve_dense,
    spmv,
    transpose,
)
from deadoil.operators import laplacian


def random_sparse(rng, n, m, fill=0.5):
    a = rng.normal(size=(n, m)) * (rng.random((n, m)) < fill)
    return a, SparseMatrix.from_dense(a)


def test_spmv_identity():
    np.testing.assert_array_equal(spmv(SparseMatrix.identity(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])


def test_spmv_nilpotent():
    A = SparseMatrix.from_dense([[0, 1], [0, 0]])
    np.testing.assert_array_equal(spmv(A, np.array([5.0, 7.0])), [7.0, 0.0])


def test_spmv_dense_oracle(rng):
    a, A = random_sparse(rng, 6, 6)
    x = rng.normal(size=6)
    np.testing.assert_allclose(spmv(A, x), a @ x, rtol=1e-14, atol=1e-14)


def test_spmv_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        spmv(SparseMatrix.identity(3), np.ones(4))


def test_spmv_bit_reproducible(rng):
    _, A = random_sparse(rng, 50, 50)
    x = rng.normal(size=50)
    assert np.array_equal(spmv(A, x), spmv(A, x))


def test_csr_invariants_enforced():
    with pytest.raises(InvalidArgumentError):
        SparseMatrix(2, 2, np.array([0, 2, 2]), np.array([1, 0]), np.array([1.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        SparseMatrix(1, 2, np.array([0, 1]), np.array([2]), np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        SparseMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([np.nan]))


def test_transpose_examples(rng):
    A = SparseMatrix.from_dense([[0, 1], [0, 0]])
    np.testing.assert_array_equal(transpose(A).to_dense(), [[0, 0], [1, 0]])
    L = laplacian(create_grid(1, 1))
    np.testing.assert_array_equal(transpose(L).to_dense(), L.to_dense())
    a, B = random_sparse(rng, 5, 7)
    BT = transpose(B)
    assert BT.shape == (7, 5)
    np.testing.assert_array_equal(BT.to_dense(), a.T)
    BTT = transpose(BT)
    assert np.array_equal(BTT.row_offsets, B.row_offsets)
    assert np.array_equal(BTT.col_indices, B.col_indices)
    assert np.array_equal(BTT.values, B.values)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_adjoint_identity_of_pairing(n, m, seed):
    rng = np.random.default_rng(seed)
    a, A = random_sparse(rng, n, m)
    x, y = rng.normal(size=m), rng.normal(size=n)
    lhs = spmv(transpose(A), y) @ x
    rhs = y @ spmv(A, x)
    scale = np.abs(y) @ np.abs(a) @ np.abs(x)
    assert abs(lhs - rhs) <= 1e-13 * max(scale, 1e-300)


def test_cg_examples():
    A = SparseMatrix.from_dense([[2, 1], [1, 2]])
    np.testing.assert_allclose(solve_cg(A, np.array([3.0, 3.0]), tol=1e-12), [1, 1], rtol=1e-12)
    L = laplacian(create_grid(1, 1))
    assert L.to_dense()[0, 0] == 16.0
    np.testing.assert_allclose(solve_cg(L, np.array([16.0]), tol=1e-12), [1.0])


def test_cg_matches_dense_oracle(rng):
    L = laplacian(create_grid(3, 3))
    b = rng.normal(size=9)
    np.testing.assert_allclose(solve_cg(L, b, tol=1e-14), np.linalg.solve(L.to_dense(), b), rtol=1e-10)


def test_cg_residual_contract(rng):
    L = laplacian(create_grid(20, 17, 1.0, 0.8))
    b = rng.normal(size=L.nrows)
    x = solve_cg(L, b, tol=1e-10)
    assert np.linalg.norm(L @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_cg_nonconvergence_carries_residual(rng):
    L = laplacian(create_grid(10, 10))
    with pytest.raises(NonConvergenceError) as info:
        solve_cg(L, rng.normal(size=100), tol=1e-12, maxit=3)
    assert info.value.residual > 0


@pytest.mark.parametrize("n", [2, 5, 11, 20])
@pytest.mark.parametrize("tol", [1e-8, 1e-10, 1e-12])
def test_cg_agrees_with_dense(rng, n, tol):
    from deadoil.operators import flux_matrix

    for A in (laplacian(create_grid(n, n)), flux_matrix(create_grid(n, n), rng.uniform(0.5, 1.5, n * n), 1.0)):
        b = rng.normal(size=A.nrows)
        x = solve_cg(A, b, tol=tol)
        xd = solve_dense(A, b)
        assert np.linalg.norm(x - xd) <= 10 * tol * np.linalg.norm(xd)


def test_bicgstab_examples(rng):
    b = rng.normal(size=4)
    np.testing.assert_allclose(solve_bicgstab(SparseMatrix.identity(4), b), b, rtol=1e-14)
    A = SparseMatrix.from_dense([[2, 1], [0, 2]])
    np.testing.assert_allclose(solve_bicgstab(A, np.array([4.0, 2.0])), [1.5, 1.0], rtol=1e-12)


def test_bicgstab_on_coupled_adjoint_operator(rng, smooth):
    from deadoil.grid import Field
    from deadoil.operators import StateSolution, assemble_adjoint_paper, assemble_linearized

    g = create_grid(4, 4)
    s = StateSolution(Field(g, rng.uniform(-0.5, 0.5, 16)), Field(g, rng.uniform(-0.5, 0.5, 16)))
    for A in (assemble_adjoint_paper(smooth, s), transpose(assemble_linearized(smooth, s).A)):
        b = rng.normal(size=32)
        x = solve_bicgstab(A, b, tol=1e-12)
        ref = np.linalg.solve(A.to_dense(), b)
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_bicgstab_without_jacobi_when_diagonal_has_zero():
    A = SparseMatrix.from_dense([[0, 1], [1, 0]])
    np.testing.assert_allclose(solve_bicgstab(A, np.array([2.0, 3.0])), [3.0, 2.0], rtol=1e-12)


def test_dense_examples(rng):
    np.testing.assert_allclose(solve_dense(SparseMatrix.from_dense([[16.0]]), np.array([8.0])), [0.5])
    perm = np.eye(4)[[2, 0, 3, 1]]
    b = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(solve_dense(SparseMatrix.from_dense(perm), b), perm.T @ b)
    a = rng.normal(size=(10, 10)) + 10 * np.eye(10)
    b = rng.normal(size=10)
    x, res = solve_dense(SparseMatrix.from_dense(a), b, return_residual=True)
    assert res <= 1e-10 * np.abs(b).max()
    assert np.abs(a @ x - b).max() == pytest.approx(res)


def test_dense_singular():
    with pytest.raises(SingularMatrixError):
        solve_dense(SparseMatrix.from_dense([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_dense_cap():
    with pytest.raises(InvalidArgumentError):
        solve_dense(SparseMatrix.identity(10), np.ones(10), cap=5)


def test_coordinate_dump(tmp_path):
    A = SparseMatrix.from_dense([[0, 1.5], [-2, 0]])
    dump_coordinate(A, tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text().splitlines() == ["0 1 1.5", "1 0 -2"]
