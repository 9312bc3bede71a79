"""Classical example-based hint generation (Welsh-style patch matching).

A style photograph is jitter-sampled into luminance statistics plus chroma;
the grayscale target slice is luminance-remapped to the style's global
statistics, then every pixel picks the sample whose windowed (mean, std)
is closest and inherits its chroma.  Deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, isqrt

import numpy as np

from .volio import IOFormatError, SliceImage
from .volume import rgb_to_yuv_arrays, yuv_to_rgb_arrays


@dataclass(frozen=True)
class StyleSamples:
    """Jitter-sampled style statistics: per-sample window stats and chroma."""

    mean: np.ndarray  # (n,) luminance mean over the s x s window
    std: np.ndarray  # (n,)
    u: np.ndarray  # (n,) window-center chroma
    v: np.ndarray
    style_mean: float  # global luminance statistics of the style image
    style_std: float
    window: int
    seed: int

    def __len__(self):
        return self.mean.size


def _window_stats(lum, cy, cx, s):
    half = s // 2
    h, w = lum.shape
    y0, y1 = max(0, cy - half), min(h, cy + half + 1)
    x0, x1 = max(0, cx - half), min(w, cx + half + 1)
    win = lum[y0:y1, x0:x1]
    return float(win.mean()), float(win.std())


def sample_style(style: SliceImage, n: int = 256, s: int = 5, seed: int = 0) -> StyleSamples:
    """Jittered sampling of the style image into n luminance/chroma records."""
    if n < 1:
        raise ValueError("need n >= 1 samples")
    h, w = style.height, style.width
    if h < s or w < s:
        raise ValueError(f"style image {w}x{h} smaller than the {s}x{s} window")
    rgbf = style.pixels.astype(np.float64) / 255.0
    lum, u, v = rgb_to_yuv_arrays(rgbf[:, :, 0], rgbf[:, :, 1], rgbf[:, :, 2])

    rng = np.random.RandomState(seed)
    g = ceil(np.sqrt(n))
    means, stds, us, vs = [], [], [], []
    for cell in range(g * g):
        if len(means) == n:
            break
        gy, gx = divmod(cell, g)
        y0, y1 = (h * gy) // g, (h * (gy + 1)) // g
        x0, x1 = (w * gx) // g, (w * (gx + 1)) // g
        if y1 <= y0 or x1 <= x0:
            continue
        cy = int(rng.randint(y0, y1))
        cx = int(rng.randint(x0, x1))
        m, sd = _window_stats(lum, cy, cx, s)
        means.append(m)
        stds.append(sd)
        us.append(float(u[cy, cx]))
        vs.append(float(v[cy, cx]))
    return StyleSamples(
        mean=np.array(means),
        std=np.array(stds),
        u=np.array(us),
        v=np.array(vs),
        style_mean=float(lum.mean()),
        style_std=float(lum.std()),
        window=s,
        seed=seed,
    )


def luminance_remap(lum: np.ndarray, samples: StyleSamples) -> np.ndarray:
    """Affine remap so the slice's global mean/std match the style image's."""
    if len(samples) == 0:
        raise ValueError("empty style samples")
    t_mean, t_std = float(lum.mean()), float(lum.std())
    if t_std < 1e-12:  # constant slice up to rounding
        return np.full_like(lum, samples.style_mean, dtype=np.float64)
    scale = samples.style_std / t_std
    return samples.style_mean + scale * (lum.astype(np.float64) - t_mean)


def _clamped_window_stats(lum, s):
    """Exact mean/std over the s x s window clamped to the image, per pixel."""
    h, w = lum.shape
    half = s // 2

    def box_sums(img):
        c = np.zeros((h + 1, w + 1))
        np.cumsum(np.cumsum(img, axis=0), axis=1, out=c[1:, 1:])
        y0 = np.clip(np.arange(h) - half, 0, h)
        y1 = np.clip(np.arange(h) + half + 1, 0, h)
        x0 = np.clip(np.arange(w) - half, 0, w)
        x1 = np.clip(np.arange(w) + half + 1, 0, w)
        return c[y1[:, None], x1[None, :]] - c[y0[:, None], x1[None, :]] - c[
            y1[:, None], x0[None, :]
        ] + c[y0[:, None], x0[None, :]], (y1 - y0)[:, None] * (x1 - x0)[None, :]

    s1, cnt = box_sums(lum)
    s2, _ = box_sums(lum * lum)
    mean = s1 / cnt
    var = np.maximum(s2 / cnt - mean * mean, 0.0)
    return mean, np.sqrt(var)


def transfer_colors_yuv(gray_lum: np.ndarray, samples: StyleSamples, s: int | None = None):
    """Match every pixel to its closest style sample; returns (Y, U, V) arrays.

    Distance is 0.5*|mean difference| + 0.5*|std difference| of the remapped
    luminance over a clamped s x s window; ties break to the lowest sample
    index.  Output luminance is the input slice's own (un-remapped) values.
    """
    if len(samples) == 0:
        raise ValueError("empty style samples")
    s = s or samples.window
    remapped = luminance_remap(gray_lum, samples)
    mean, std = _clamped_window_stats(remapped, s)

    h, w = gray_lum.shape
    best = np.zeros((h, w), dtype=np.int64)
    best_d = np.full((h, w), np.inf)
    for i in range(len(samples)):
        d = 0.5 * np.abs(mean - samples.mean[i]) + 0.5 * np.abs(std - samples.std[i])
        better = d < best_d  # strict: earlier samples win ties
        best[better] = i
        best_d[better] = d[better]
    u = samples.u[best]
    v = samples.v[best]
    return gray_lum.astype(np.float64), u, v


def transfer_colors(gray_slice: SliceImage, samples: StyleSamples, s: int | None = None) -> SliceImage:
    """Colorize a grayscale slice image; returns an RGBA SliceImage (alpha=255)."""
    rgbf = gray_slice.pixels.astype(np.float64) / 255.0
    lum, _, _ = rgb_to_yuv_arrays(rgbf[:, :, 0], rgbf[:, :, 1], rgbf[:, :, 2])
    y, u, v = transfer_colors_yuv(lum, samples, s)
    r, g, b = yuv_to_rgb_arrays(y, u, v)
    pixels = np.rint(np.dstack([r, g, b]) * 255.0).astype(np.uint8)
    alpha = np.full((gray_slice.height, gray_slice.width), 255, dtype=np.uint8)
    return SliceImage(pixels, alpha)
