"""Pure-numpy implementations of the hot kernels.

These are the fallback twins of the compiled extension (_kernels.pyx):
im2col/col2im for 2D and 3D convolution, and bilinear grid sampling with
border clamping. Both backends implement the exact same signatures and
must agree to float rounding; tests/test_kernels.py enforces parity.

The numpy versions vectorize over kernel offsets (k*k slice copies instead
of per-pixel loops), which keeps them within a small factor of the compiled
code for typical shapes.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def im2col2d(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """xp: padded input (B, C, HP, WP) -> cols (B, C*kh*kw, OH*OW)."""
    b, c, hp, wp = xp.shape
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + oh * sh : sh, kj : kj + ow * sw : sw]
    return cols.reshape(b, c * kh * kw, oh * ow)


def col2im2d(cols: np.ndarray, b: int, c: int, hp: int, wp: int,
             kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Adjoint of im2col2d: scatter-add columns back into (B, C, HP, WP)."""
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    cols6 = cols.reshape(b, c, kh, kw, oh, ow)
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for ki in range(kh):
        for kj in range(kw):
            xp[:, :, ki : ki + oh * sh : sh, kj : kj + ow * sw : sw] += cols6[:, :, ki, kj]
    return xp


def im2col3d(xp: np.ndarray, kt: int, kh: int, kw: int,
             st: int, sh: int, sw: int) -> np.ndarray:
    """xp: (B, C, TP, HP, WP) -> cols (B, C*kt*kh*kw, OT*OH*OW)."""
    b, c, tp, hp, wp = xp.shape
    ot = (tp - kt) // st + 1
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    cols = np.empty((b, c, kt, kh, kw, ot, oh, ow), dtype=xp.dtype)
    for kt_ in range(kt):
        for ki in range(kh):
            for kj in range(kw):
                cols[:, :, kt_, ki, kj] = xp[
                    :, :,
                    kt_ : kt_ + ot * st : st,
                    ki : ki + oh * sh : sh,
                    kj : kj + ow * sw : sw,
                ]
    return cols.reshape(b, c * kt * kh * kw, ot * oh * ow)


def col2im3d(cols: np.ndarray, b: int, c: int, tp: int, hp: int, wp: int,
             kt: int, kh: int, kw: int, st: int, sh: int, sw: int) -> np.ndarray:
    ot = (tp - kt) // st + 1
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    cols8 = cols.reshape(b, c, kt, kh, kw, ot, oh, ow)
    xp = np.zeros((b, c, tp, hp, wp), dtype=cols.dtype)
    for kt_ in range(kt):
        for ki in range(kh):
            for kj in range(kw):
                xp[
                    :, :,
                    kt_ : kt_ + ot * st : st,
                    ki : ki + oh * sh : sh,
                    kj : kj + ow * sw : sw,
                ] += cols8[:, :, kt_, ki, kj]
    return xp


def _corner_setup(coords: np.ndarray, h: int, w: int):
    x = np.clip(coords[..., 0], 0.0, w - 1.0)
    y = np.clip(coords[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0).astype(coords.dtype)
    fy = (y - y0).astype(coords.dtype)
    return x0, x1, y0, y1, fx, fy


def grid_sample_forward(src: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear sample with border clamping.

    src: (B, C, H, W); coords: (B, OH, OW, 2) in pixel units, where
    coords[..., 0] is the x (width) coordinate. Returns (B, C, OH, OW).
    """
    b, c, h, w = src.shape
    x0, x1, y0, y1, fx, fy = _corner_setup(coords, h, w)
    flat = src.reshape(b, c, h * w)
    bidx = np.arange(b)[:, None, None]

    def gather(yy, xx):
        return flat[bidx, :, (yy * w + xx)]  # (B, OH, OW, C)

    v00 = gather(y0, x0)
    v01 = gather(y0, x1)
    v10 = gather(y1, x0)
    v11 = gather(y1, x1)
    fx_ = fx[..., None]
    fy_ = fy[..., None]
    out = (
        v00 * (1 - fx_) * (1 - fy_)
        + v01 * fx_ * (1 - fy_)
        + v10 * (1 - fx_) * fy_
        + v11 * fx_ * fy_
    )
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def grid_sample_backward(src: np.ndarray, coords: np.ndarray, gout: np.ndarray):
    """Gradients of grid_sample_forward wrt src and coords.

    gout: (B, C, OH, OW). Returns (gsrc (B,C,H,W), gcoords (B,OH,OW,2)).
    Clamped coordinates (outside [0, dim-1]) receive zero gradient.
    """
    b, c, h, w = src.shape
    x0, x1, y0, y1, fx, fy = _corner_setup(coords, h, w)
    flat = src.reshape(b, c, h * w)
    bidx = np.arange(b)[:, None, None]

    def gather(yy, xx):
        return flat[bidx, :, (yy * w + xx)]  # (B, OH, OW, C)

    g = gout.transpose(0, 2, 3, 1)  # (B, OH, OW, C)
    fx_ = fx[..., None]
    fy_ = fy[..., None]

    gsrc_flat = np.zeros((b, h * w, c), dtype=src.dtype)
    for yy, xx, wgt in (
        (y0, x0, (1 - fx_) * (1 - fy_)),
        (y0, x1, fx_ * (1 - fy_)),
        (y1, x0, (1 - fx_) * fy_),
        (y1, x1, fx_ * fy_),
    ):
        np.add.at(gsrc_flat, (bidx, yy * w + xx), g * wgt)
    gsrc = np.ascontiguousarray(gsrc_flat.transpose(0, 2, 1).reshape(b, c, h, w))

    v00 = gather(y0, x0)
    v01 = gather(y0, x1)
    v10 = gather(y1, x0)
    v11 = gather(y1, x1)
    dx = ((v01 - v00) * (1 - fy_) + (v11 - v10) * fy_) * g
    dy = ((v10 - v00) * (1 - fx_) + (v11 - v01) * fx_) * g
    gx = dx.sum(axis=3)
    gy = dy.sum(axis=3)
    # Zero gradient where the raw coordinate was clamped.
    in_x = (coords[..., 0] >= 0.0) & (coords[..., 0] <= w - 1.0)
    in_y = (coords[..., 1] >= 0.0) & (coords[..., 1] <= h - 1.0)
    gcoords = np.stack([gx * in_x, gy * in_y], axis=-1).astype(coords.dtype)
    return gsrc, gcoords
