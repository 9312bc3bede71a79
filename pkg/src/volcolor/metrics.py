"""Volume quality metrics: SSIM, PSNR, MSE, channel-averaged for color volumes.

SSIM follows the closed form

    (2*mu1*mu2 + c1)(2*cov12 + c2) / ((mu1^2 + mu2^2 + c1)(var1 + var2 + c2))

evaluated by default with whole-volume moments (population statistics); a
windowed mode (11^3 Gaussian, sigma 1.5) averages per-window quotients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .volume import ColorVolume, ScalarVolume, VolumeError

DYNAMIC_RANGE = 1.0


@dataclass
class MetricsConfig:
    c1: float = (0.01 * DYNAMIC_RANGE) ** 2
    c2: float = (0.03 * DYNAMIC_RANGE) ** 2
    mode: str = "global"  # global | windowed

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise VolumeError("SSIM constants must be positive")
        if self.mode not in ("global", "windowed"):
            raise VolumeError(f"unknown SSIM mode {self.mode!r}")


@dataclass(frozen=True)
class MetricsReport:
    ssim: float
    psnr: float
    mse: float
    per_channel: dict | None = None

    def to_json(self) -> str:
        def enc(x):
            return "inf" if math.isinf(x) else x

        doc = {"ssim": enc(self.ssim), "psnr": enc(self.psnr), "mse": enc(self.mse)}
        if self.per_channel is not None:
            doc["per_channel"] = {
                ch: {k: enc(v) for k, v in vals.items()}
                for ch, vals in self.per_channel.items()
            }
        return json.dumps(doc, indent=2)


def _check_dims(a: ScalarVolume, b: ScalarVolume):
    if a.dims != b.dims:
        raise VolumeError(f"dims mismatch: {a.dims} vs {b.dims}")


def ssim(a: ScalarVolume, b: ScalarVolume, cfg: MetricsConfig | None = None) -> float:
    cfg = cfg or MetricsConfig()
    _check_dims(a, b)
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    if cfg.mode == "global":
        mu1, mu2 = x.mean(), y.mean()
        var1, var2 = x.var(), y.var()
        cov = ((x - mu1) * (y - mu2)).mean()
        return float(
            (2 * mu1 * mu2 + cfg.c1)
            * (2 * cov + cfg.c2)
            / ((mu1 * mu1 + mu2 * mu2 + cfg.c1) * (var1 + var2 + cfg.c2))
        )
    # windowed: 11-wide Gaussian, sigma 1.5 (truncate chosen to give radius 5)
    sigma, radius = 1.5, 5
    blur = lambda img: gaussian_filter(img, sigma, truncate=radius / sigma, mode="reflect")
    mu1, mu2 = blur(x), blur(y)
    var1 = blur(x * x) - mu1 * mu1
    var2 = blur(y * y) - mu2 * mu2
    cov = blur(x * y) - mu1 * mu2
    quot = (
        (2 * mu1 * mu2 + cfg.c1)
        * (2 * cov + cfg.c2)
        / ((mu1 * mu1 + mu2 * mu2 + cfg.c1) * (var1 + var2 + cfg.c2))
    )
    return float(quot.mean())


def mse(a: ScalarVolume, b: ScalarVolume) -> float:
    _check_dims(a, b)
    d = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: ScalarVolume, b: ScalarVolume) -> float:
    """10*log10(L^2 / mse) in dB; infinity for identical volumes."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / err)


def evaluate(a: ColorVolume, b: ColorVolume, cfg: MetricsConfig | None = None) -> MetricsReport:
    """Per-channel SSIM/PSNR/MSE plus arithmetic channel averages (RGB volumes)."""
    cfg = cfg or MetricsConfig()
    if a.space != b.space or a.space != "rgb":
        raise VolumeError(f"expected two rgb volumes, got {a.space}/{b.space}")
    if a.dims != b.dims:
        raise VolumeError(f"dims mismatch: {a.dims} vs {b.dims}")
    names = ("r", "g", "b")
    per = {}
    for name, ca, cb in zip(names, a.channels, b.channels):
        per[name] = {"ssim": ssim(ca, cb, cfg), "psnr": psnr(ca, cb), "mse": mse(ca, cb)}
    avg = lambda k: sum(per[n][k] for n in names) / 3.0
    return MetricsReport(ssim=avg("ssim"), psnr=avg("psnr"), mse=avg("mse"), per_channel=per)
