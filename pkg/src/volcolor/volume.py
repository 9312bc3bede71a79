"""Core volume data model: scalar/color volumes, masks, neighborhoods, YUV conversion.

Volumes are 3D grids of real samples in [0, 1], indexed [i, j, k] with
dims (nx, ny, nz).  The canonical flat linearization is x-fastest
(index = i + nx*(j + ny*k)), which corresponds to Fortran-order raveling
of the (nx, ny, nz) array.  All volumes are treated as immutable value
objects after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Analog YUV (BT.601 luma) coefficients.
YUV_U_MAX = 0.436
YUV_V_MAX = 0.615
_WR, _WG, _WB = 0.299, 0.587, 0.114
_KU, _KV = 0.492, 0.877


class VolumeError(ValueError):
    """Raised on contract violations (dimension mismatch, bad ranges, ...)."""


@dataclass(frozen=True)
class ScalarVolume:
    """A 3D grid of scalar samples.

    data is an (nx, ny, nz) float32 array; spacing is physical units per
    voxel and is informational only.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise VolumeError(f"expected 3D data, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise VolumeError("volume contains non-finite samples")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def flat(self) -> np.ndarray:
        """Samples in the canonical x-fastest flat order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, spacing=(1.0, 1.0, 1.0)) -> "ScalarVolume":
        flat = np.asarray(flat)
        nx, ny, nz = dims
        if flat.size != nx * ny * nz:
            raise VolumeError(f"flat length {flat.size} != {nx}*{ny}*{nz}")
        return cls(flat.reshape((nx, ny, nz), order="F"), tuple(spacing))


@dataclass(frozen=True)
class VolumeMask:
    """Boolean foreground mask aligned with a companion volume."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool)
        if arr.ndim != 3:
            raise VolumeError(f"expected 3D mask, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def full(cls, dims) -> "VolumeMask":
        return cls(np.ones(dims, dtype=bool))


@dataclass(frozen=True)
class ColorVolume:
    """Three aligned scalar channels tagged with a color space.

    space is "rgb" (all channels in [0,1]) or "yuv" (Y in [0,1],
    U in [-0.436, 0.436], V in [-0.615, 0.615]).
    """

    channels: tuple[ScalarVolume, ScalarVolume, ScalarVolume]
    space: str

    def __post_init__(self):
        if self.space not in ("rgb", "yuv"):
            raise VolumeError(f"unknown color space {self.space!r}")
        d0 = self.channels[0].dims
        for c in self.channels[1:]:
            if c.dims != d0:
                raise VolumeError(f"channel dims differ: {c.dims} vs {d0}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.channels[0].dims

    def arrays(self):
        return tuple(c.data for c in self.channels)


def neighborhood(p, dims):
    """In-bounds 26-neighbors of voxel p, excluding p itself.

    Order is deterministic: lexicographic by (dk, dj, di) offset.
    """
    i, j, k = p
    nx, ny, nz = dims
    out = []
    for dk in (-1, 0, 1):
        kk = k + dk
        if not 0 <= kk < nz:
            continue
        for dj in (-1, 0, 1):
            jj = j + dj
            if not 0 <= jj < ny:
                continue
            for di in (-1, 0, 1):
                ii = i + di
                if (di, dj, dk) == (0, 0, 0) or not 0 <= ii < nx:
                    continue
                out.append((ii, jj, kk))
    return out


def rgb_to_yuv(c: ColorVolume) -> ColorVolume:
    """Convert an RGB color volume to analog YUV (BT.601 luma weights)."""
    if c.space != "rgb":
        raise VolumeError(f"expected rgb volume, got {c.space}")
    r, g, b = (a.astype(np.float64) for a in c.arrays())
    y, u, v = rgb_to_yuv_arrays(r, g, b)
    sp = c.channels[0].spacing
    return ColorVolume(
        (ScalarVolume(y, sp), ScalarVolume(u, sp), ScalarVolume(v, sp)), "yuv"
    )


def rgb_to_yuv_arrays(r, g, b):
    """Array-level RGB -> YUV; shared by volume, slice, and hint code paths."""
    y = _WR * r + _WG * g + _WB * b
    u = _KU * (b - y)
    v = _KV * (r - y)
    return y, u, v


def yuv_to_rgb_arrays(y, u, v):
    """Array-level YUV -> RGB with clamping to [0, 1]."""
    r = y + v / _KV
    b = y + u / _KU
    g = (y - _WR * r - _WB * b) / _WG
    return (np.clip(r, 0.0, 1.0), np.clip(g, 0.0, 1.0), np.clip(b, 0.0, 1.0))


def yuv_to_rgb(c: ColorVolume) -> ColorVolume:
    """Invert rgb_to_yuv, clamping results into the RGB unit cube."""
    if c.space != "yuv":
        raise VolumeError(f"expected yuv volume, got {c.space}")
    y, u, v = (a.astype(np.float64) for a in c.arrays())
    r, g, b = yuv_to_rgb_arrays(y, u, v)
    sp = c.channels[0].spacing
    return ColorVolume(
        (ScalarVolume(r, sp), ScalarVolume(g, sp), ScalarVolume(b, sp)), "rgb"
    )


def normalize(v: ScalarVolume, lo: float, hi: float) -> ScalarVolume:
    """Affinely map [lo, hi] to [0, 1], clamping outside samples."""
    if hi <= lo:
        raise VolumeError(f"normalize requires hi > lo, got [{lo}, {hi}]")
    out = np.clip((v.data.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return ScalarVolume(out, v.spacing)


def apply_mask(v: ScalarVolume, m: VolumeMask, fill: float = 0.0) -> ScalarVolume:
    """Keep foreground samples, set background voxels to fill."""
    if v.dims != m.dims:
        raise VolumeError(f"mask dims {m.dims} != volume dims {v.dims}")
    out = np.where(m.data, v.data, np.float32(fill))
    return ScalarVolume(out, v.spacing)
