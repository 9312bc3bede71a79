"""Hint-based volume colorization: chroma propagation in YUV space.

Free-voxel chroma minimizes the quadratic cost

    J(U) = sum_{free p} ( U(p) - sum_{q in N(p)} w_pq U(q) )^2

where N(p) is the in-bounds 26-neighborhood and the weights favor
neighbors with similar luminance:

    w_pq ~ exp( -(Y(p) - Y(q))^2 / (2 * var_p) ),  normalized to sum 1,

with var_p the luminance variance over N(p) and p itself (floored to keep
constant neighborhoods well defined).  Hint pixels are hard constraints,
eliminated from the unknowns so the remaining normal equations are SPD and
shared between the U and V solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, exp

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .solver import SolverConfig, SolverError, SparseSystem, cg_solve, make_preconditioner
from .volio import slice_plane_dims
from .volume import (
    ColorVolume,
    ScalarVolume,
    VolumeError,
    VolumeMask,
    YUV_U_MAX,
    YUV_V_MAX,
    neighborhood,
    rgb_to_yuv_arrays,
)

_OFFSETS = [
    (di, dj, dk)
    for dk in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for di in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


@dataclass
class WeightParams:
    sigma_floor: float = 1e-4  # floor on var_p, in squared Y units

    def __post_init__(self):
        if self.sigma_floor <= 0:
            raise VolumeError("sigma_floor must be positive")


@dataclass
class ColorizeConfig:
    weights: WeightParams = field(default_factory=WeightParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    hint_axis: str = "z"
    hint_count: int = 8
    hint_min_sep: int | None = None  # default ceil(extent / (2k))


@dataclass(frozen=True)
class Hint:
    """One colored slice: per-pixel chroma plus validity, pinned at axis/index."""

    axis: str
    index: int
    u: np.ndarray  # (height, width)
    v: np.ndarray
    valid: np.ndarray  # (height, width) bool


@dataclass(frozen=True)
class HintSet:
    hints: tuple[Hint, ...]

    def __post_init__(self):
        seen = set()
        for h in self.hints:
            key = (h.axis.lower(), h.index)
            if key in seen:
                raise VolumeError(f"duplicate hint slice for axis {key[0]} index {key[1]}")
            seen.add(key)

    def __len__(self):
        return len(self.hints)


def select_hint_slices(
    y: ScalarVolume,
    mask: VolumeMask | None,
    axis: str = "z",
    k: int = 8,
    min_sep: int | None = None,
):
    """Greedy pick of k high-contrast slice indices along axis.

    Repeatedly selects the remaining slice with maximal foreground Y
    standard deviation (ties toward the lower index), then removes all
    indices within distance min_sep of the pick.
    """
    ax = {"x": 0, "y": 1, "z": 2}[axis.lower()]
    extent = y.dims[ax]
    if min_sep is None:
        min_sep = max(1, ceil(extent / (2 * k)))
    if k < 1 or min_sep < 1:
        raise VolumeError("need k >= 1 and min_sep >= 1")
    if k * min_sep > extent:
        raise VolumeError(
            f"k*min_sep = {k * min_sep} exceeds axis extent {extent}"
        )
    fg = mask.data if mask is not None else np.ones(y.dims, dtype=bool)
    if not fg.any():
        raise VolumeError("empty foreground")
    stds = np.zeros(extent)
    for idx in range(extent):
        plane_y = np.take(y.data, idx, axis=ax).astype(np.float64)
        plane_fg = np.take(fg, idx, axis=ax)
        if plane_fg.any():
            stds[idx] = plane_y[plane_fg].std()
    available = np.ones(extent, dtype=bool)
    chosen = []
    for _ in range(k):
        if not available.any():
            raise VolumeError(
                f"cannot select {k} slices with separation {min_sep} on extent {extent}"
            )
        cand = np.flatnonzero(available)
        pick = cand[np.argmax(stds[cand])]  # argmax takes first max: lowest index
        chosen.append(int(pick))
        lo, hi = max(0, pick - min_sep + 1), min(extent, pick + min_sep)
        available[lo:hi] = False
    return sorted(chosen)


def compute_weights(y: ScalarVolume, p, params: WeightParams, mask: VolumeMask | None = None):
    """Normalized propagation weights of voxel p over its foreground neighbors.

    Reference scalar implementation; the system assembly vectorizes the
    same arithmetic.  Returns [(q, w_pq)] in deterministic neighbor order.
    """
    fg = mask.data if mask is not None else None
    data = y.data
    if fg is not None and not fg[p]:
        raise VolumeError(f"voxel {p} is background")
    neigh = [q for q in neighborhood(p, y.dims) if fg is None or fg[q]]
    if not neigh:
        raise VolumeError(f"voxel {p} has no foreground neighbors")
    vals = np.array([data[q] for q in neigh] + [data[p]], dtype=np.float64)
    var_p = max(float(vals.var()), params.sigma_floor)
    raw = [exp(-((float(data[p]) - float(data[q])) ** 2) / (2.0 * var_p)) for q in neigh]
    total = sum(raw)
    return [(q, w / total) for q, w in zip(neigh, raw)]


def hints_from_slices(images, dims) -> HintSet:
    """Convert colored (axis, index, SliceImage) triples into a HintSet.

    Pixels are mapped RGB -> YUV; alpha below 128 marks a pixel invalid.
    """
    hints = []
    for axis, index, img in images:
        ax = {"x": 0, "y": 1, "z": 2}[axis.lower()]
        if not 0 <= index < dims[ax]:
            raise VolumeError(f"hint index {index} out of range on axis {axis}")
        w, h = slice_plane_dims(dims, axis)
        if (img.width, img.height) != (w, h):
            raise VolumeError(
                f"hint image {img.width}x{img.height} does not match "
                f"{w}x{h} slice plane of axis {axis}"
            )
        rgbf = img.pixels.astype(np.float64) / 255.0
        _, u, v = rgb_to_yuv_arrays(rgbf[:, :, 0], rgbf[:, :, 1], rgbf[:, :, 2])
        valid = (
            img.alpha >= 128
            if img.alpha is not None
            else np.ones((img.height, img.width), dtype=bool)
        )
        hints.append(Hint(axis.lower(), index, u, v, valid))
    return HintSet(tuple(hints))


def _rasterize_hints(hints: HintSet, dims):
    """Scatter hint planes into 3D hinted/u/v grids (later hints win overlaps)."""
    hinted = np.zeros(dims, dtype=bool)
    u3 = np.zeros(dims, dtype=np.float64)
    v3 = np.zeros(dims, dtype=np.float64)
    for h in hints.hints:
        ax = {"x": 0, "y": 1, "z": 2}[h.axis]
        idx = [slice(None)] * 3
        idx[ax] = h.index
        idx = tuple(idx)
        val = h.valid.T  # planes are (height, width); volume planes are (w-axis, h-axis)
        hinted_plane = hinted[idx]
        u_plane = u3[idx]
        v_plane = v3[idx]
        u_plane[val] = h.u.T[val]
        v_plane[val] = h.v.T[val]
        hinted_plane |= val
    return hinted, u3, v3


def _neighborhood_variance(ydata, fg):
    """Per-voxel Y variance over the foreground 3x3x3 window (center included)."""
    shape = ydata.shape
    cnt = np.zeros(shape, dtype=np.float64)
    s1 = np.zeros(shape, dtype=np.float64)
    s2 = np.zeros(shape, dtype=np.float64)
    yf = np.where(fg, ydata, 0.0)
    yf2 = yf * yf
    fgf = fg.astype(np.float64)
    for off in _OFFSETS + [(0, 0, 0)]:
        dst, src = _shift_slices(shape, off)
        cnt[dst] += fgf[src]
        s1[dst] += yf[src]
        s2[dst] += yf2[src]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / cnt
        var = s2 / cnt - mean * mean
    return np.maximum(var, 0.0), cnt


def _shift_slices(shape, off):
    """Slicing pair so that dst[p] aligns with src[p + off], both in bounds."""
    dst, src = [], []
    for n, d in zip(shape, off):
        if d >= 0:
            dst.append(slice(0, n - d))
            src.append(slice(d, n))
        else:
            dst.append(slice(-d, n))
            src.append(slice(0, n + d))
    return tuple(dst), tuple(src)


def build_colorization_system(
    y: ScalarVolume,
    hints: HintSet,
    mask: VolumeMask | None = None,
    params: WeightParams | None = None,
) -> SparseSystem:
    """Eliminated normal equations of J over the free foreground voxels.

    Builds the residual matrix B = I - W row by free voxel (columns over
    all connected foreground voxels), splits constrained columns out, and
    returns matrix = B_f' B_f with rhs = -B_f' B_c [u_c, v_c].
    """
    params = params or WeightParams()
    if len(hints) == 0:
        raise VolumeError("hint set is empty")
    dims = y.dims
    fg = mask.data if mask is not None else np.ones(dims, dtype=bool)
    if fg.shape != dims:
        raise VolumeError(f"mask dims {fg.shape} != volume dims {dims}")
    ydata = y.data.astype(np.float64)

    hinted, u3, v3 = _rasterize_hints(hints, dims)
    hinted &= fg  # hints on background carry no chroma
    if not hinted.any():
        raise VolumeError("no valid hint pixel on foreground")

    var, cnt = _neighborhood_variance(ydata, fg)
    neighbor_cnt = np.where(fg, cnt - 1.0, 0.0)
    isolated = fg & (neighbor_cnt == 0)
    connected = fg & ~isolated
    free = connected & ~hinted

    # column ids over connected foreground voxels, row ids over free ones
    n = int(np.prod(dims))
    conn_flat = np.flatnonzero(connected.ravel(order="F"))
    free_flat = np.flatnonzero(free.ravel(order="F"))
    hint_flat = np.flatnonzero(hinted.ravel(order="F"))  # includes isolated hinted voxels
    col_id = -np.ones(n, dtype=np.int64)
    col_id[conn_flat] = np.arange(conn_flat.size)
    col3 = col_id.reshape(dims, order="F")
    row_id = -np.ones(n, dtype=np.int64)
    row_id[free_flat] = np.arange(free_flat.size)
    row3 = row_id.reshape(dims, order="F")

    var_p = np.maximum(var, params.sigma_floor)

    # raw-weight row sums for normalization
    rowsum = np.zeros(dims, dtype=np.float64)
    for off in _OFFSETS:
        dst, src = _shift_slices(dims, off)
        pair = free[dst] & fg[src]
        w = np.zeros(dims, dtype=np.float64)
        diff = ydata[dst] - ydata[src]
        w[dst] = np.where(pair, np.exp(-(diff * diff) / (2.0 * var_p[dst])), 0.0)
        rowsum += w

    rows, cols, vals = [], [], []
    for off in _OFFSETS:
        dst, src = _shift_slices(dims, off)
        pair = free[dst] & fg[src]
        if not pair.any():
            continue
        diff = ydata[dst][pair] - ydata[src][pair]
        w = np.exp(-(diff * diff) / (2.0 * var_p[dst][pair]))
        rows.append(row3[dst][pair])
        cols.append(col3[src][pair])
        vals.append(-w / rowsum[dst][pair])
    rows.append(row3.ravel(order="F")[free_flat])
    cols.append(col3.ravel(order="F")[free_flat])
    vals.append(np.ones(free_flat.size, dtype=np.float64))

    n_free, n_conn = free_flat.size, conn_flat.size
    B = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_free, n_conn),
    )

    is_free_col = free.ravel(order="F")[conn_flat]
    Bf = B[:, np.flatnonzero(is_free_col)]
    Bc = B[:, np.flatnonzero(~is_free_col)]
    M = (Bf.T @ Bf).tocsr()
    M.sort_indices()

    hint_cols = conn_flat[~is_free_col]  # connected hinted voxels, column order
    uc = u3.ravel(order="F")[hint_cols]
    vc = v3.ravel(order="F")[hint_cols]
    if n_free:
        rhs_u = -Bf.T @ (Bc @ uc)
        rhs_v = -Bf.T @ (Bc @ vc)
    else:
        rhs_u = np.zeros(0)
        rhs_v = np.zeros(0)
    return SparseSystem(
        matrix=M, rhs=[rhs_u, rhs_v], free_index=free_flat, constrained_index=hint_flat
    )


def colorize(
    y: ScalarVolume,
    hints: HintSet,
    mask: VolumeMask | None = None,
    cfg: ColorizeConfig | None = None,
):
    """Propagate hint chroma through the volume; returns (ColorVolume[yuv], reports).

    The Y channel is the input luminance unchanged; U and V solve the
    propagation system (shared matrix, one AMG hierarchy, two right-hand
    sides) and are clamped to the YUV gamut.  Background voxels get zero
    chroma; isolated foreground voxels copy the nearest hint pixel.
    """
    cfg = cfg or ColorizeConfig()
    dims = y.dims
    fg = mask.data if mask is not None else np.ones(dims, dtype=bool)

    system = build_colorization_system(y, hints, mask, cfg.weights)
    hinted3 = np.zeros(np.prod(dims), dtype=bool)
    hinted3[system.constrained_index] = True
    hinted3 = hinted3.reshape(dims, order="F")

    _, u3, v3 = _rasterize_hints(hints, dims)
    u_out = np.where(hinted3, u3, 0.0).ravel(order="F")
    v_out = np.where(hinted3, v3, 0.0).ravel(order="F")

    reports = {}
    if system.free_index.size:
        precond = make_preconditioner(system.matrix, cfg.solver)
        for name, rhs, out in (("u", system.rhs[0], u_out), ("v", system.rhs[1], v_out)):
            x, rep = cg_solve(system.matrix, rhs, cfg.solver, precond)
            if not rep.converged:
                raise SolverError(
                    f"{name}-channel solve did not converge: residual "
                    f"{rep.relative_residual:.3e} after {rep.iterations} iterations"
                )
            out[system.free_index] = x
            reports[name] = rep

    # isolated foreground voxels: nearest valid hint pixel in voxel distance
    free3 = np.zeros(np.prod(dims), dtype=bool)
    free3[system.free_index] = True
    free3 = free3.reshape(dims, order="F")
    isolated = fg & ~free3 & ~hinted3
    if isolated.any():
        hcoords = np.argwhere(hinted3)
        tree = cKDTree(hcoords)
        icoords = np.argwhere(isolated)
        _, nearest = tree.query(icoords)
        hflat = np.ravel_multi_index(hcoords[nearest].T, dims, order="F")
        iflat = np.ravel_multi_index(icoords.T, dims, order="F")
        u_out[iflat] = u_out[hflat]
        v_out[iflat] = v_out[hflat]

    u_vol = np.clip(u_out, -YUV_U_MAX, YUV_U_MAX).reshape(dims, order="F")
    v_vol = np.clip(v_out, -YUV_V_MAX, YUV_V_MAX).reshape(dims, order="F")
    out = ColorVolume(
        (
            ScalarVolume(y.data.copy(), y.spacing),
            ScalarVolume(u_vol, y.spacing),
            ScalarVolume(v_vol, y.spacing),
        ),
        "yuv",
    )
    return out, reports
