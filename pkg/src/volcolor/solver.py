"""Sparse SPD linear algebra: CSR assembly, preconditioned CG, AMG hierarchy.

The outer iteration is a hand-rolled preconditioned conjugate gradient;
the optional multigrid preconditioner is a classical Ruge-Stuben hierarchy
(strength threshold, C/F splitting, direct interpolation, Galerkin coarse
operators) built through pyamg, applied as one V-cycle per CG iteration.
All solver arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.io
import scipy.sparse as sp


class SolverError(ValueError):
    """Raised on malformed systems (bad indices, degenerate matrices, ...)."""


@dataclass
class SolverConfig:
    rel_tolerance: float = 1e-8
    max_iterations: int = 1000
    preconditioner: str = "amg"  # none | jacobi | amg
    amg_theta: float = 0.25
    amg_presweeps: int = 1
    amg_postsweeps: int = 1
    amg_jacobi_omega: float = 2.0 / 3.0
    amg_max_coarse: int = 64
    # For singular pure-Neumann systems: project b onto range(A) by
    # removing its mean and report the solution mean-pinned to zero.
    project_constant_nullspace: bool = False

    def __post_init__(self):
        if self.rel_tolerance <= 0:
            raise SolverError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be >= 1")
        if self.preconditioner not in ("none", "jacobi", "amg"):
            raise SolverError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    nullspace_projected: bool = False


@dataclass
class SparseSystem:
    """A square system with right-hand side(s) plus free/constrained maps.

    free_index/constrained_index are flat voxel indices into the owning
    grid's canonical x-fastest linearization (or None for whole-grid
    systems).
    """

    matrix: sp.csr_matrix
    rhs: list[np.ndarray]
    free_index: np.ndarray | None = None
    constrained_index: np.ndarray | None = None


def assemble(n: int, triplets) -> sp.csr_matrix:
    """Build an n x n CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed; explicit zeros are dropped; column
    indices end up sorted within each row.
    """
    if triplets is None or len(triplets) == 0:
        rows = cols = vals = []
    else:
        arr = np.asarray(triplets, dtype=np.float64)
        rows, cols, vals = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise SolverError("triplet index out of bounds")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def matvec(A: sp.spmatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise SolverError(f"vector length {x.shape} incompatible with {A.shape}")
    return A @ x


def _jacobi_preconditioner(A):
    d = A.diagonal().astype(np.float64)
    if np.any(d == 0):
        raise SolverError("jacobi preconditioner requires nonzero diagonal")
    inv = 1.0 / d
    return lambda r: inv * r


def amg_build(A: sp.spmatrix, cfg: SolverConfig | None = None):
    """Build a classical Ruge-Stuben multigrid hierarchy for an SPD matrix.

    Levels coarsen by C/F splitting with strength threshold cfg.amg_theta,
    direct interpolation, and Galerkin coarse operators, until the coarse
    size drops to cfg.amg_max_coarse.  Smoothing is weighted Jacobi.
    """
    cfg = cfg or SolverConfig()
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SolverError("amg_build requires a square matrix")
    nnz_per_row = np.diff(A.indptr)
    if np.any(nnz_per_row == 0):
        raise SolverError("degenerate matrix: empty rows")
    smoother = (
        "jacobi",
        {"omega": cfg.amg_jacobi_omega, "iterations": cfg.amg_presweeps},
    )
    post = ("jacobi", {"omega": cfg.amg_jacobi_omega, "iterations": cfg.amg_postsweeps})
    # the smoother setup estimates a spectral radius by power iteration with a
    # randomly drawn start vector; pin the global RNG so hierarchies (and hence
    # solutions) are bit-identical across builds, then restore the caller's state
    state = np.random.get_state()
    np.random.seed(0)
    try:
        return pyamg.ruge_stuben_solver(
            A.astype(np.float64),
            strength=("classical", {"theta": cfg.amg_theta}),
            interpolation="direct",
            max_coarse=max(1, cfg.amg_max_coarse),
            presmoother=smoother,
            postsmoother=post,
        )
    finally:
        np.random.set_state(state)


def cg_solve(A, b, cfg: SolverConfig | None = None, precond=None, energy_trace=None):
    """Preconditioned conjugate gradient for SPD A.

    precond is a callable r -> M^{-1} r (identity if None).  Returns the
    best iterate and a SolveReport; non-convergence and indefiniteness
    breakdowns are flagged, never silent.  If energy_trace is a list, the
    quadratic energy 0.5 x'Ax - b'x is appended after every iteration.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise SolverError(f"rhs length {b.shape} incompatible with {A.shape}")
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True)
    apply_m = precond if precond is not None else (lambda r: r)

    x = np.zeros_like(b)
    r = b.copy()
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    rel = np.linalg.norm(r) / norm_b
    it = 0
    broke_down = False
    while rel > cfg.rel_tolerance and it < cfg.max_iterations:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            broke_down = True  # matrix not SPD along p
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = apply_m(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rel = np.linalg.norm(r) / norm_b
        it += 1
        if energy_trace is not None:
            energy_trace.append(0.5 * float(x @ (A @ x)) - float(b @ x))
    converged = rel <= cfg.rel_tolerance and not broke_down
    return x, SolveReport(it, float(rel), converged)


def make_preconditioner(A, cfg: SolverConfig):
    """Callable r -> M^{-1} r for the configured preconditioner (None = identity)."""
    if cfg.preconditioner == "jacobi":
        return _jacobi_preconditioner(A)
    if cfg.preconditioner == "amg":
        ml = amg_build(A, cfg)
        M = ml.aspreconditioner(cycle="V")
        return lambda r: M @ r
    return None


def solve(A, b, cfg: SolverConfig | None = None):
    """Solve an SPD system with the configured preconditioner.

    With preconditioner="amg" one V-cycle is applied per CG iteration.
    """
    cfg = cfg or SolverConfig()
    A = sp.csr_matrix(A).astype(np.float64)
    b = np.asarray(b, dtype=np.float64)
    projected = False
    if cfg.project_constant_nullspace:
        b = b - b.mean()
        projected = True
    if projected:
        # singular projected systems fall back to plain or jacobi CG
        precond = _jacobi_preconditioner(A) if cfg.preconditioner == "jacobi" else None
    else:
        precond = make_preconditioner(A, cfg)
    x, report = cg_solve(A, b, cfg, precond)
    if projected:
        x = x - x.mean()
        report = SolveReport(
            report.iterations, report.relative_residual, report.converged, True
        )
    return x, report


def dump_matrix_market(A, path):
    """Debug dump in Matrix Market coordinate text format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
