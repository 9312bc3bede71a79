"""Synthetic phantom volumes with known region structure and reference colors.

Each generator returns the grayscale volume, its foreground mask, an
integer region-label volume (0 = background), and a reference YUV color
volume assigning one chroma per region.  Deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import ColorVolume, ScalarVolume, VolumeError, VolumeMask

KINDS = ("two-blob", "concentric-shells", "ramp", "checker")

# per-region chroma assignments, cycled for phantoms with many regions
CHROMA_PALETTE = [
    (-0.100, 0.280),  # warm red-ish
    (0.180, -0.220),  # blue-ish
    (-0.200, -0.080),  # green-ish
    (0.060, 0.300),
    (0.250, 0.100),
    (-0.050, -0.250),
]


@dataclass
class PhantomSpec:
    kind: str = "two-blob"
    dims: tuple[int, int, int] = (16, 16, 16)
    levels: tuple[float, ...] = (0.2, 0.8)
    seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise VolumeError(f"unknown phantom kind {self.kind!r}")
        if any(d < 4 for d in self.dims):
            raise VolumeError(f"phantom dims must be >= 4 per axis, got {self.dims}")
        if any(not 0.0 <= lv <= 1.0 for lv in self.levels):
            raise VolumeError("intensity levels must lie in [0, 1]")


def _grid(dims):
    nx, ny, nz = dims
    return np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )


def _two_blob(spec: PhantomSpec):
    nx, ny, nz = spec.dims
    i, j, k = _grid(spec.dims)
    r = 0.24 * min(spec.dims)
    ca = (0.32 * (nx - 1), 0.5 * (ny - 1), 0.5 * (nz - 1))
    cb = (0.68 * (nx - 1), 0.5 * (ny - 1), 0.5 * (nz - 1))
    da = np.sqrt((i - ca[0]) ** 2 + (j - ca[1]) ** 2 + (k - ca[2]) ** 2)
    db = np.sqrt((i - cb[0]) ** 2 + (j - cb[1]) ** 2 + (k - cb[2]) ** 2)
    labels = np.zeros(spec.dims, dtype=np.int32)
    labels[(da <= r) & (da <= db)] = 1
    labels[(db <= r) & (db < da)] = 2
    return labels


def _concentric_shells(spec: PhantomSpec):
    i, j, k = _grid(spec.dims)
    c = tuple((d - 1) / 2.0 for d in spec.dims)
    rr = np.sqrt((i - c[0]) ** 2 + (j - c[1]) ** 2 + (k - c[2]) ** 2)
    r_max = 0.45 * min(spec.dims)
    nb = max(2, len(spec.levels))
    band = r_max / nb
    labels = np.zeros(spec.dims, dtype=np.int32)
    inside = rr <= r_max
    labels[inside] = np.minimum((rr[inside] / band).astype(np.int32), nb - 1) + 1
    return labels


def _ramp(spec: PhantomSpec):
    return np.ones(spec.dims, dtype=np.int32)


def _checker(spec: PhantomSpec):
    i, j, k = _grid(spec.dims)
    block = max(2, min(spec.dims) // 4)
    parity = ((i // block) + (j // block) + (k // block)) % 2
    return parity.astype(np.int32) + 1


def generate(spec: PhantomSpec):
    """Build a phantom; returns (y, mask, labels, reference ColorVolume[yuv])."""
    builders = {
        "two-blob": _two_blob,
        "concentric-shells": _concentric_shells,
        "ramp": _ramp,
        "checker": _checker,
    }
    labels = builders[spec.kind](spec)
    mask = labels > 0

    levels = list(spec.levels)
    n_regions = int(labels.max())
    y = np.zeros(spec.dims, dtype=np.float64)
    if spec.kind == "ramp":
        nx = spec.dims[0]
        lo, hi = levels[0], levels[-1]
        ramp = lo + (hi - lo) * (np.arange(nx) / max(1, nx - 1))
        y[:] = ramp[:, None, None]
    else:
        for region in range(1, n_regions + 1):
            y[labels == region] = levels[(region - 1) % len(levels)]

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        y = y + spec.noise_sigma * rng.standard_normal(spec.dims)
        y = np.clip(y, 0.0, 1.0)
    y = np.where(mask, y, 0.0)

    u = np.zeros(spec.dims, dtype=np.float64)
    v = np.zeros(spec.dims, dtype=np.float64)
    for region in range(1, n_regions + 1):
        cu, cv = CHROMA_PALETTE[(region - 1) % len(CHROMA_PALETTE)]
        u[labels == region] = cu
        v[labels == region] = cv

    y_vol = ScalarVolume(y)
    reference = ColorVolume(
        (ScalarVolume(y), ScalarVolume(u), ScalarVolume(v)), "yuv"
    )
    return y_vol, VolumeMask(mask), labels, reference


def structural_proxy(y: ScalarVolume, amplitude: float = 0.15) -> ScalarVolume:
    """Phantom Y plus a smooth low-frequency bias, standing in for an MRI.

    Fusing this proxy's gradients with the clean Y should suppress the
    bias, mimicking gradient-preserving intensity correction.
    """
    nx, ny, nz = y.dims
    i, j, k = _grid(y.dims)
    bias = (
        np.sin(2 * np.pi * i / nx)
        * np.cos(2 * np.pi * j / ny)
        * np.cos(np.pi * k / nz)
    )
    return ScalarVolume(np.clip(y.data + amplitude * bias, 0.0, 1.0), y.spacing)
