"""SSIM and PSNR on [0, 1] images.

SSIM uses uniform 8x8 windows with stride 4 and the standard stabilizers
C1 = 0.01^2, C2 = 0.03^2, averaged over windows and channels. PSNR of
identical images is +inf, carried as the PSNR_EXACT sentinel and encoded
as the string "exact" in JSON reports.
"""

from __future__ import annotations

import math

import numpy as np

from flowdance.errors import ValidationError

PSNR_EXACT = math.inf

SSIM_WINDOW = 8
SSIM_STRIDE = 4
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_pair(x: np.ndarray, y: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def _windows(img: np.ndarray) -> np.ndarray:
    """(n_windows, win*win) view per channel: img is (H, W)."""
    h, w = img.shape
    k, s = SSIM_WINDOW, SSIM_STRIDE
    if h < k or w < k:
        raise ValidationError(f"image {h}x{w} smaller than the {k}x{k} SSIM window")
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))[::s, ::s]
    return view.reshape(-1, k * k)


def ssim_window_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-window SSIM values for one channel pair, flattened window grid."""
    wx = _windows(x)
    wy = _windows(y)
    mx = wx.mean(axis=1)
    my = wy.mean(axis=1)
    vx = wx.var(axis=1)
    vy = wy.var(axis=1)
    cov = (wx * wy).mean(axis=1) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2)
    return num / den


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean SSIM over channels; inputs (H, W) or (H, W, C) in [0, 1]."""
    x, y = _check_pair(x, y)
    if x.ndim == 2:
        x = x[..., None]
        y = y[..., None]
    per_channel = [ssim_window_map(x[..., c], y[..., c]).mean() for c in range(x.shape[2])]
    return float(np.mean(per_channel))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """10 log10(1 / MSE) for [0, 1] range; PSNR_EXACT when images match."""
    x, y = _check_pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_EXACT
    return 10.0 * math.log10(1.0 / mse)


def encode_psnr(value: float):
    """JSON encoding: +inf becomes the string sentinel "exact"."""
    return "exact" if math.isinf(value) else value
