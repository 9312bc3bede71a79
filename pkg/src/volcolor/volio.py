"""Bit-exact file I/O: raw volumes with JSON sidecar headers, PNG hint slices.

Native volume format: a JSON header {"dims":[nx,ny,nz], "spacing":[sx,sy,sz],
"dtype":"u8|u16le|f32le", "channels":1|3, "offset":0} next to a little-endian
raw payload in x-fastest voxel order, channel-interleaved for channels=3.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .volume import ColorVolume, ScalarVolume, VolumeError, VolumeMask

_DTYPES = {
    "u8": (np.uint8, 1, 255.0),
    "u16le": (np.dtype("<u2"), 2, 65535.0),
    "f32le": (np.dtype("<f4"), 4, None),
}


class IOFormatError(ValueError):
    """Raised for malformed headers, size mismatches, unsupported formats."""


@dataclass(frozen=True)
class VolumeHeader:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: str = "f32le"
    channels: int = 1
    offset: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise IOFormatError(f"bad dims {self.dims}")
        if self.dtype not in _DTYPES:
            raise IOFormatError(f"unknown dtype {self.dtype!r}")
        if self.channels not in (1, 3):
            raise IOFormatError(f"channels must be 1 or 3, got {self.channels}")
        if self.offset < 0:
            raise IOFormatError("negative offset")

    @property
    def payload_bytes(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz * self.channels * _DTYPES[self.dtype][1]


def read_header(header_path) -> VolumeHeader:
    try:
        with open(header_path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IOFormatError(f"cannot parse header {header_path}: {e}") from e
    try:
        return VolumeHeader(
            dims=tuple(int(d) for d in doc["dims"]),
            spacing=tuple(float(s) for s in doc.get("spacing", (1.0, 1.0, 1.0))),
            dtype=str(doc.get("dtype", "f32le")),
            channels=int(doc.get("channels", 1)),
            offset=int(doc.get("offset", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise IOFormatError(f"malformed header {header_path}: {e}") from e


def write_header(header: VolumeHeader, header_path):
    doc = {
        "dims": list(header.dims),
        "spacing": list(header.spacing),
        "dtype": header.dtype,
        "channels": header.channels,
        "offset": header.offset,
    }
    with open(header_path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def read_volume(header_path, raw_path):
    """Read a native volume; returns ScalarVolume or ColorVolume (RGB).

    Integer payloads are scaled to [0, 1] (u8/255, u16le/65535).
    """
    header = read_header(header_path)
    with open(raw_path, "rb") as f:
        blob = f.read()
    if len(blob) - header.offset != header.payload_bytes:
        raise IOFormatError(
            f"payload size mismatch: header declares {header.payload_bytes} bytes, "
            f"file has {len(blob) - header.offset}"
        )
    np_dtype, _, scale = _DTYPES[header.dtype]
    raw = np.frombuffer(blob, dtype=np_dtype, offset=header.offset)
    data = raw.astype(np.float64)
    if scale is not None:
        data /= scale
    nx, ny, nz = header.dims
    if header.channels == 1:
        return ScalarVolume.from_flat(data, header.dims, header.spacing)
    chans = tuple(
        ScalarVolume.from_flat(data[c::3], header.dims, header.spacing)
        for c in range(3)
    )
    return ColorVolume(chans, "rgb")


def write_volume(vol, header_path, raw_path, dtype="f32le"):
    """Write a ScalarVolume or ColorVolume in the native format."""
    if dtype not in _DTYPES:
        raise IOFormatError(f"unknown dtype {dtype!r}")
    np_dtype, _, scale = _DTYPES[dtype]
    if isinstance(vol, ColorVolume):
        flats = [c.flat() for c in vol.channels]
        flat = np.empty(3 * flats[0].size, dtype=np.float64)
        for c in range(3):
            flat[c::3] = flats[c]
        channels = 3
        dims, spacing = vol.dims, vol.channels[0].spacing
    else:
        flat = vol.flat().astype(np.float64)
        channels = 1
        dims, spacing = vol.dims, vol.spacing
    if scale is None:
        payload = flat.astype("<f4")
    else:
        payload = np.rint(np.clip(flat, 0.0, 1.0) * scale).astype(np_dtype)
    header = VolumeHeader(dims=dims, spacing=spacing, dtype=dtype, channels=channels)
    write_header(header, header_path)
    with open(raw_path, "wb") as f:
        f.write(payload.tobytes())


def read_mask(header_path, raw_path) -> VolumeMask:
    """Read a mask stored as a scalar volume; samples > 0.5 are foreground."""
    vol = read_volume(header_path, raw_path)
    if isinstance(vol, ColorVolume):
        raise IOFormatError("mask volume must have channels=1")
    return VolumeMask(vol.data > 0.5)


@dataclass(frozen=True)
class SliceImage:
    """8-bit RGB image with optional alpha used as hint-validity mask.

    pixels is (height, width, 3) uint8; alpha is (height, width) uint8 or None.
    """

    pixels: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise IOFormatError(f"expected (h, w, 3) pixels, got {px.shape}")
        object.__setattr__(self, "pixels", px)
        if self.alpha is not None:
            a = np.asarray(self.alpha, dtype=np.uint8)
            if a.shape != px.shape[:2]:
                raise IOFormatError("alpha shape does not match pixels")
            object.__setattr__(self, "alpha", a)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _check_png_ihdr(path):
    # IHDR: bit depth at byte 24, color type at byte 25.
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != b"\x89PNG\r\n\x1a\n":
        raise IOFormatError(f"{path}: not a PNG file")
    bit_depth, color_type = head[24], head[25]
    if color_type not in (2, 6):
        raise IOFormatError(f"{path}: unsupported: expected RGB/RGBA PNG")
    if bit_depth != 8:
        raise IOFormatError(f"{path}: unsupported PNG bit depth {bit_depth}")


def read_slice_png(path) -> SliceImage:
    """Read an 8-bit RGB or RGBA PNG."""
    _check_png_ihdr(path)
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 4:
        return SliceImage(arr[:, :, :3], arr[:, :, 3])
    return SliceImage(arr)


def write_slice_png(img: SliceImage, path):
    if img.alpha is not None:
        arr = np.dstack([img.pixels, img.alpha])
        Image.fromarray(arr, mode="RGBA").save(path, format="PNG")
    else:
        Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


_AXES = {"x": 0, "y": 1, "z": 2}

# In-plane axis order per slicing axis: (width axis, height axis).
_PLANE = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def slice_plane_dims(dims, axis: str) -> tuple[int, int]:
    """(width, height) of the 2D plane cut perpendicular to axis."""
    ax = _axis_id(axis)
    wa, ha = _PLANE[ax]
    return dims[wa], dims[ha]


def _axis_id(axis) -> int:
    if isinstance(axis, str) and axis.lower() in _AXES:
        return _AXES[axis.lower()]
    raise VolumeError(f"axis must be one of x, y, z, got {axis!r}")


def extract_slice_values(data: np.ndarray, axis: str, index: int) -> np.ndarray:
    """Cut a float (height, width) plane out of an (nx, ny, nz) array.

    Z-slice -> (x as width, y as height); Y-slice -> (x, z); X-slice -> (y, z).
    """
    ax = _axis_id(axis)
    if not 0 <= index < data.shape[ax]:
        raise VolumeError(
            f"slice index {index} out of range for axis {axis} "
            f"(extent {data.shape[ax]})"
        )
    plane = np.take(data, index, axis=ax)  # shape (width axis, height axis)
    return plane.T


def insert_slice_values(data: np.ndarray, axis: str, index: int, plane: np.ndarray):
    """Inverse of extract_slice_values; writes into a copy and returns it."""
    ax = _axis_id(axis)
    out = data.copy()
    idx = [slice(None)] * 3
    idx[ax] = index
    out[tuple(idx)] = plane.T
    return out


def extract_slice(vol, axis: str, index: int) -> SliceImage:
    """Extract a slice as an 8-bit RGB image (grayscale replicated to RGB)."""
    if isinstance(vol, ColorVolume):
        planes = [extract_slice_values(c.data, axis, index) for c in vol.arrays()]
    else:
        planes = [extract_slice_values(vol.data, axis, index)] * 3
    stacked = np.dstack([np.clip(p, 0.0, 1.0) for p in planes])
    return SliceImage(np.rint(stacked * 255.0).astype(np.uint8))
