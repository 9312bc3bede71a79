import numpy as np
import pytest
import scipy.sparse as sp

from volcolor.solver import (
    SolveReport,
    SolverConfig,
    SolverError,
    amg_build,
    assemble,
    cg_solve,
    dump_matrix_market,
    make_preconditioner,
    matvec,
    solve,
)


def poisson_1d(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def poisson_3d(n):
    L1 = poisson_1d(n)
    I = sp.identity(n)
    return (
        sp.kron(sp.kron(L1, I), I) + sp.kron(sp.kron(I, L1), I) + sp.kron(sp.kron(I, I), L1)
    ).tocsr()


class TestAssemble:
    def test_duplicates_summed(self):
        A = assemble(2, [(0, 0, 1.0), (0, 0, 2.0)])
        assert A.nnz == 1
        assert A[0, 0] == 3.0

    def test_empty_triplets(self):
        A = assemble(3, [])
        assert A.nnz == 0
        assert np.all(matvec(A, np.ones(3)) == 0)

    def test_out_of_bounds(self):
        with pytest.raises(SolverError):
            assemble(2, [(0, 2, 1.0)])

    def test_random_matches_dense_accumulation(self):
        rng = np.random.default_rng(0)
        n = 6
        triplets = [
            (int(rng.integers(n)), int(rng.integers(n)), float(rng.standard_normal()))
            for _ in range(40)
        ]
        dense = np.zeros((n, n))
        for r, c, v in triplets:
            dense[r, c] += v
        A = assemble(n, triplets)
        for _ in range(10):
            x = rng.standard_normal(n)
            assert np.abs(matvec(A, x) - dense @ x).max() < 1e-12

    def test_sorted_no_explicit_zeros(self):
        A = assemble(3, [(0, 2, 1.0), (0, 1, 1.0), (1, 1, 1.0), (1, 1, -1.0)])
        assert A.has_sorted_indices
        assert A.nnz == 2  # the cancelling pair is dropped


class TestMatvec:
    def test_identity(self):
        A = sp.identity(4, format="csr")
        x = np.arange(4.0)
        assert np.array_equal(matvec(A, x), x)

    def test_zero(self):
        assert np.all(matvec(assemble(3, []), np.ones(3)) == 0)

    def test_tridiagonal_hand_case(self):
        A = poisson_1d(3)
        assert np.array_equal(matvec(A, np.ones(3)), [1.0, 0.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(SolverError):
            matvec(sp.identity(3, format="csr"), np.ones(4))

    def test_dense_equivalence_random(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            n = int(rng.integers(2, 33))
            dense = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.3)
            A = sp.csr_matrix(dense)
            x = rng.standard_normal(n)
            assert np.abs(matvec(A, x) - dense @ x).max() < 1e-12


class TestCgSolve:
    def test_identity_one_iteration(self):
        b = np.array([1.0, -2.0, 3.0])
        x, report = cg_solve(sp.identity(3, format="csr"), b)
        assert report.converged and report.iterations <= 1
        assert np.allclose(x, b)

    def test_zero_rhs_immediate(self):
        x, report = cg_solve(poisson_1d(5), np.zeros(5))
        assert report.iterations == 0 and report.converged
        assert np.all(x == 0)

    def test_poisson_matches_dense(self):
        A = poisson_1d(16)
        b = np.zeros(16)
        b[0] = 1.0
        x, report = cg_solve(A, b)
        dense = np.linalg.solve(A.toarray(), b)
        assert report.converged
        assert np.abs(x - dense).max() < 1e-8

    def test_indefinite_flagged(self):
        A = sp.diags([1.0, -1.0]).tocsr()
        b = np.array([1.0, 1.0])
        x, report = cg_solve(A, b)
        assert not report.converged  # breakdown or stall, never silent success

    def test_energy_monotone(self):
        rng = np.random.default_rng(2)
        A = poisson_3d(5)
        b = rng.standard_normal(A.shape[0])
        trace = []
        cg_solve(A, b, SolverConfig(preconditioner="none"), energy_trace=trace)
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-10)


class TestAmg:
    def test_monotone_coarsening_1d(self):
        ml = amg_build(poisson_1d(64), SolverConfig())
        sizes = [lvl.A.shape[0] for lvl in ml.levels]
        assert sizes[-1] <= 64
        assert all(a > b for a, b in zip(sizes, sizes[1:]))

    def test_single_entry_matrix(self):
        ml = amg_build(sp.csr_matrix(np.array([[2.0]])), SolverConfig())
        assert len(ml.levels) == 1
        x = ml.solve(np.array([4.0]), tol=1e-12)
        assert np.allclose(x, 2.0)

    def test_empty_row_rejected(self):
        A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        A.eliminate_zeros()
        with pytest.raises(SolverError, match="empty rows"):
            amg_build(A, SolverConfig())

    def test_galerkin_property(self):
        A = poisson_1d(100)
        ml = amg_build(A, SolverConfig())
        for fine, coarse in zip(ml.levels, ml.levels[1:]):
            rap = (fine.R @ fine.A @ fine.P).toarray()
            assert np.abs(rap - coarse.A.toarray()).max() < 1e-10

    def test_3d_laplacian_preconditioned_iterations(self):
        A = poisson_3d(16)
        b = np.random.default_rng(3).standard_normal(A.shape[0])
        cfg = SolverConfig(preconditioner="amg")
        precond = make_preconditioner(A, cfg)
        x, rep_amg = cg_solve(A, b, cfg, precond)
        assert rep_amg.converged and rep_amg.iterations <= 30
        _, rep_plain = cg_solve(A, b, SolverConfig(preconditioner="none"))
        assert rep_amg.iterations <= rep_plain.iterations / 2


class TestSolve:
    def test_preconditioners_agree(self):
        A = poisson_3d(8)
        b = np.random.default_rng(4).standard_normal(A.shape[0])
        solutions = {}
        for pc in ("none", "jacobi", "amg"):
            x, report = solve(A, b, SolverConfig(preconditioner=pc))
            assert report.converged
            solutions[pc] = x
        ref = solutions["none"]
        for pc in ("jacobi", "amg"):
            rel = np.linalg.norm(solutions[pc] - ref) / np.linalg.norm(ref)
            assert rel < 1e-6

    def test_matches_dense(self):
        A = poisson_3d(4)
        b = np.random.default_rng(5).standard_normal(A.shape[0])
        x, report = solve(A, b, SolverConfig(preconditioner="jacobi"))
        dense = np.linalg.solve(A.toarray(), b)
        assert np.linalg.norm(x - dense) / np.linalg.norm(dense) < 1e-6

    def test_singular_neumann_projected(self):
        # pure Neumann 1D Laplacian: singular, constants in the nullspace
        n = 12
        main = np.full(n, 2.0)
        main[0] = main[-1] = 1.0
        off = -np.ones(n - 1)
        A = sp.diags([off, main, off], [-1, 0, 1]).tocsr()
        rng = np.random.default_rng(6)
        b = rng.standard_normal(n)
        b -= b.mean()  # compatible rhs
        cfg = SolverConfig(preconditioner="none", project_constant_nullspace=True)
        x, report = solve(A, b, cfg)
        assert report.nullspace_projected
        assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-7
        assert abs(x.mean()) < 1e-10

    def test_nonconvergence_reported(self):
        A = poisson_3d(8)
        b = np.random.default_rng(7).standard_normal(A.shape[0])
        x, report = solve(A, b, SolverConfig(preconditioner="none", max_iterations=2))
        assert not report.converged
        assert report.iterations == 2


def test_matrix_market_dump(tmp_path):
    A = poisson_1d(4)
    path = tmp_path / "mat.mtx"
    dump_matrix_market(A, path)
    text = path.read_text()
    assert "MatrixMarket" in text and "coordinate" in text
    back = sp.csr_matrix(__import__("scipy.io", fromlist=["mmread"]).mmread(str(path)))
    assert np.abs((back - A)).max() == 0


def test_config_validation():
    with pytest.raises(SolverError):
        SolverConfig(rel_tolerance=0)
    with pytest.raises(SolverError):
        SolverConfig(max_iterations=0)
    with pytest.raises(SolverError):
        SolverConfig(preconditioner="ilu")
