"""Screened-Poisson volume fusion.

Fuses the 6-connected gradients of one volume (the structural source, e.g.
MRI) with the intensities of another (e.g. registered gray cryo) by
minimizing

    sum_edges (f_p - f_q - (m_p - m_q))^2  +  lambda * sum_p (f_p - c_p)^2

over the foreground voxels.  The normal equations are lambda*I + L with L
the foreground graph Laplacian, solved with the sparse solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import SolverConfig, SolverError, SparseSystem, solve
from .volume import ScalarVolume, VolumeError, VolumeMask


@dataclass
class FusionConfig:
    fidelity_lambda: float = 0.1
    solver: SolverConfig = None

    def __post_init__(self):
        if self.fidelity_lambda < 0:
            raise VolumeError("lambda must be >= 0")
        if self.solver is None:
            self.solver = SolverConfig()


def foreground_laplacian(mask_data: np.ndarray):
    """6-connectivity graph Laplacian over foreground voxels.

    Returns (L, fg_flat) with L csr over the foreground voxels in canonical
    flat order and fg_flat their flat indices.
    """
    fg = np.asarray(mask_data, dtype=bool)
    nx, ny, nz = fg.shape
    n = nx * ny * nz
    flat_id = -np.ones(n, dtype=np.int64)
    fg_flat = np.flatnonzero(fg.ravel(order="F"))
    flat_id[fg_flat] = np.arange(fg_flat.size)
    id3 = flat_id.reshape((nx, ny, nz), order="F")

    rows, cols = [], []
    for axis in range(3):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        a = id3[tuple(sl_a)]
        b = id3[tuple(sl_b)]
        keep = (a >= 0) & (b >= 0)
        rows.append(a[keep])
        cols.append(b[keep])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    m = fg_flat.size
    ones = np.ones(r.size, dtype=np.float64)
    adj = sp.coo_matrix((ones, (r, c)), shape=(m, m))
    adj = (adj + adj.T).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    L = sp.diags(deg) - adj
    return sp.csr_matrix(L), fg_flat


def build_fusion_system(
    m_vol: ScalarVolume,
    c_vol: ScalarVolume,
    mask: VolumeMask | None,
    fidelity_lambda: float,
) -> SparseSystem:
    """Normal equations lambda*I + L with rhs lambda*c + L*m on foreground."""
    if m_vol.dims != c_vol.dims:
        raise VolumeError(f"dims mismatch: {m_vol.dims} vs {c_vol.dims}")
    if mask is not None and mask.dims != m_vol.dims:
        raise VolumeError(f"mask dims {mask.dims} != volume dims {m_vol.dims}")
    mask_data = mask.data if mask is not None else np.ones(m_vol.dims, dtype=bool)
    L, fg_flat = foreground_laplacian(mask_data)
    if fg_flat.size == 0:
        raise VolumeError("empty foreground")
    m = m_vol.flat().astype(np.float64)[fg_flat]
    c = c_vol.flat().astype(np.float64)[fg_flat]
    A = (L + fidelity_lambda * sp.identity(L.shape[0], format="csr")).tocsr()
    b = fidelity_lambda * c + L @ m
    return SparseSystem(matrix=A, rhs=[b], free_index=fg_flat)


def fusion_energy(f, m, c, L, fidelity_lambda) -> float:
    """Edge term + lambda data term evaluated at f (all vectors on foreground)."""
    d = f - m
    # sum_edges ((f_p-f_q)-(m_p-m_q))^2 = d' L d for the graph Laplacian L
    return float(d @ (L @ d)) + fidelity_lambda * float(np.sum((f - c) ** 2))


def fuse(
    gradient_source: ScalarVolume,
    intensity_source: ScalarVolume,
    mask: VolumeMask | None = None,
    cfg: FusionConfig | None = None,
):
    """Fuse gradients of gradient_source with intensities of intensity_source.

    Background voxels are excluded from the solve and set to 0 in the
    output; the result is clamped to [0, 1].  Returns (ScalarVolume,
    SolveReport).
    """
    cfg = cfg or FusionConfig()
    if cfg.fidelity_lambda <= 0:
        raise VolumeError("fuse requires lambda > 0 (no Dirichlet constraints exist)")
    system = build_fusion_system(
        gradient_source, intensity_source, mask, cfg.fidelity_lambda
    )
    x, report = solve(system.matrix, system.rhs[0], cfg.solver)
    if not report.converged:
        raise SolverError(
            f"fusion solve did not converge: residual {report.relative_residual:.3e} "
            f"after {report.iterations} iterations"
        )
    nx, ny, nz = gradient_source.dims
    out = np.zeros(nx * ny * nz, dtype=np.float64)
    out[system.free_index] = np.clip(x, 0.0, 1.0)
    vol = ScalarVolume.from_flat(out, gradient_source.dims, gradient_source.spacing)
    return vol, report
