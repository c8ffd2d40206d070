"""Image quality metrics: PSNR and multi-scale SSIM.

PSNR is computed jointly over all channels by default (a luma variant is
exposed). MS-SSIM follows the standard 5-scale construction: 11x11 Gaussian
window with sigma 1.5, K1=0.01, K2=0.03, scale weights
0.0448/0.2856/0.3001/0.2363/0.1333, 2x2 mean-pool downsampling, computed on
BT.601 luma. All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DATA_RANGE = 255.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
K1 = 0.01
K2 = 0.03
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
MIN_SIDE = 176  # smallest side so that 5 dyadic scales fit an 11x11 window

_LUMA = np.array([0.299, 0.587, 0.114])  # BT.601


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ms_ssim: float
    bpp: float


def _to_planes(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (H,W) or (C,H,W) image, got {arr.shape}")
    return arr


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def luma(img) -> np.ndarray:
    """BT.601 luma plane of an RGB or grayscale image."""
    arr = _to_planes(img)
    if arr.shape[0] == 1:
        return arr[0]
    return np.tensordot(_LUMA, arr, axes=([0], [0]))


def psnr(a, b, on: str = "rgb") -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    pa, pb = _to_planes(a), _to_planes(b)
    _check_dims(pa, pb)
    if on == "luma":
        pa, pb = luma(a)[None], luma(b)[None]
    elif on != "rgb":
        raise ValueError("on must be 'rgb' or 'luma'")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE * DATA_RANGE / mse)


def _gauss_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    half = (size - 1) / 2
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    t = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(t, len(g), axis=1) @ g


def _ssim_terms(x: np.ndarray, y: np.ndarray, g: np.ndarray):
    c1 = (K1 * DATA_RANGE) ** 2
    c2 = (K2 * DATA_RANGE) ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    return float(lum.mean()), float(cs.mean())


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    c = img[:h, :w]
    return (c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2]) / 4.0


def ms_ssim(a, b) -> float:
    """Multi-scale SSIM over 5 dyadic scales on luma; symmetric, in (0, 1]."""
    pa, pb = _to_planes(a), _to_planes(b)
    _check_dims(pa, pb)
    x, y = luma(a), luma(b)
    if min(x.shape) < MIN_SIDE:
        raise ValueError(
            f"images must be at least {MIN_SIDE} px per side for 5 scales")
    g = _gauss_window()
    score = 1.0
    for level, weight in enumerate(MS_SSIM_WEIGHTS):
        lum, cs = _ssim_terms(x, y, g)
        if level == len(MS_SSIM_WEIGHTS) - 1:
            score *= max(lum * cs, 0.0) ** weight
        else:
            score *= max(cs, 0.0) ** weight
            x, y = _downsample2(x), _downsample2(y)
    return score
