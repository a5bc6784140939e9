# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: im2col/col2im (2D/3D) and bilinear grid sampling.

Signature-compatible with flowdance.nn._kernels_np; the backend module
picks whichever is available. Single-threaded on purpose so results are
bit-reproducible run to run.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

ctypedef fused floating:
    float
    double


def im2col2d(xp, int kh, int kw, int sh, int sw):
    if xp.dtype == np.float32:
        return _im2col2d[float](np.ascontiguousarray(xp), kh, kw, sh, sw)
    return _im2col2d[double](np.ascontiguousarray(xp), kh, kw, sh, sw)


def col2im2d(cols, int b, int c, int hp, int wp, int kh, int kw, int sh, int sw):
    if cols.dtype == np.float32:
        return _col2im2d[float](np.ascontiguousarray(cols), b, c, hp, wp, kh, kw, sh, sw)
    return _col2im2d[double](np.ascontiguousarray(cols), b, c, hp, wp, kh, kw, sh, sw)


def im2col3d(xp, int kt, int kh, int kw, int st, int sh, int sw):
    if xp.dtype == np.float32:
        return _im2col3d[float](np.ascontiguousarray(xp), kt, kh, kw, st, sh, sw)
    return _im2col3d[double](np.ascontiguousarray(xp), kt, kh, kw, st, sh, sw)


def col2im3d(cols, int b, int c, int tp, int hp, int wp,
             int kt, int kh, int kw, int st, int sh, int sw):
    if cols.dtype == np.float32:
        return _col2im3d[float](np.ascontiguousarray(cols), b, c, tp, hp, wp,
                                kt, kh, kw, st, sh, sw)
    return _col2im3d[double](np.ascontiguousarray(cols), b, c, tp, hp, wp,
                             kt, kh, kw, st, sh, sw)


def grid_sample_forward(src, coords):
    if src.dtype == np.float32:
        return _grid_sample_forward[float](np.ascontiguousarray(src),
                                           np.ascontiguousarray(coords))
    return _grid_sample_forward[double](np.ascontiguousarray(src),
                                        np.ascontiguousarray(coords))


def grid_sample_backward(src, coords, gout):
    if src.dtype == np.float32:
        return _grid_sample_backward[float](np.ascontiguousarray(src),
                                            np.ascontiguousarray(coords),
                                            np.ascontiguousarray(gout))
    return _grid_sample_backward[double](np.ascontiguousarray(src),
                                         np.ascontiguousarray(coords),
                                         np.ascontiguousarray(gout))


cdef _im2col2d(floating[:, :, :, ::1] xp, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t b = xp.shape[0], c = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((b, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t bi, ci, ki, kj, i, j, row
    cdef const floating* src
    cdef floating* dst
    for bi in range(b):
        for ci in range(c):
            for ki in range(kh):
                for kj in range(kw):
                    row = ((ci * kh) + ki) * kw + kj
                    if sw == 1:
                        # unit column stride: each output row is a contiguous
                        # source segment
                        for i in range(oh):
                            src = &xp[bi, ci, ki + i * sh, kj]
                            dst = &cols[bi, row, i * ow]
                            for j in range(ow):
                                dst[j] = src[j]
                    else:
                        for i in range(oh):
                            for j in range(ow):
                                cols[bi, row, i * ow + j] = xp[bi, ci, ki + i * sh, kj + j * sw]
    return out


cdef _col2im2d(floating[:, :, ::1] cols, int b, int c, int hp, int wp,
               int kh, int kw, int sh, int sw):
    cdef Py_ssize_t oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((b, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] xp = out
    cdef Py_ssize_t bi, ci, ki, kj, i, j, row
    cdef const floating* src
    cdef floating* dst
    for bi in range(b):
        for ci in range(c):
            for ki in range(kh):
                for kj in range(kw):
                    row = ((ci * kh) + ki) * kw + kj
                    if sw == 1:
                        for i in range(oh):
                            dst = &xp[bi, ci, ki + i * sh, kj]
                            src = &cols[bi, row, i * ow]
                            for j in range(ow):
                                dst[j] += src[j]
                    else:
                        for i in range(oh):
                            for j in range(ow):
                                xp[bi, ci, ki + i * sh, kj + j * sw] += cols[bi, row, i * ow + j]
    return out


cdef _im2col3d(floating[:, :, :, :, ::1] xp, int kt, int kh, int kw,
               int st, int sh, int sw):
    cdef Py_ssize_t b = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t tp = xp.shape[2], hp = xp.shape[3], wp = xp.shape[4]
    cdef Py_ssize_t ot = (tp - kt) // st + 1, oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((b, c * kt * kh * kw, ot * oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t bi, ci, kt_, ki, kj, t, i, j, row, pos
    cdef const floating* src
    cdef floating* dst
    for bi in range(b):
        for ci in range(c):
            for kt_ in range(kt):
                for ki in range(kh):
                    for kj in range(kw):
                        row = (((ci * kt) + kt_) * kh + ki) * kw + kj
                        if sw == 1:
                            for t in range(ot):
                                for i in range(oh):
                                    src = &xp[bi, ci, kt_ + t * st, ki + i * sh, kj]
                                    dst = &cols[bi, row, (t * oh + i) * ow]
                                    for j in range(ow):
                                        dst[j] = src[j]
                        else:
                            for t in range(ot):
                                for i in range(oh):
                                    for j in range(ow):
                                        pos = (t * oh + i) * ow + j
                                        cols[bi, row, pos] = xp[bi, ci, kt_ + t * st,
                                                                ki + i * sh, kj + j * sw]
    return out


cdef _col2im3d(floating[:, :, ::1] cols, int b, int c, int tp, int hp, int wp,
               int kt, int kh, int kw, int st, int sh, int sw):
    cdef Py_ssize_t ot = (tp - kt) // st + 1, oh = (hp - kh) // sh + 1, ow = (wp - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((b, c, tp, hp, wp), dtype=dtype)
    cdef floating[:, :, :, :, ::1] xp = out
    cdef Py_ssize_t bi, ci, kt_, ki, kj, t, i, j, row, pos
    cdef const floating* src
    cdef floating* dst
    for bi in range(b):
        for ci in range(c):
            for kt_ in range(kt):
                for ki in range(kh):
                    for kj in range(kw):
                        row = (((ci * kt) + kt_) * kh + ki) * kw + kj
                        if sw == 1:
                            for t in range(ot):
                                for i in range(oh):
                                    dst = &xp[bi, ci, kt_ + t * st, ki + i * sh, kj]
                                    src = &cols[bi, row, (t * oh + i) * ow]
                                    for j in range(ow):
                                        dst[j] += src[j]
                        else:
                            for t in range(ot):
                                for i in range(oh):
                                    for j in range(ow):
                                        pos = (t * oh + i) * ow + j
                                        xp[bi, ci, kt_ + t * st, ki + i * sh, kj + j * sw] += \
                                            cols[bi, row, pos]
    return out


cdef _grid_sample_forward(floating[:, :, :, ::1] src, floating[:, :, :, ::1] coords):
    cdef Py_ssize_t b = src.shape[0], c = src.shape[1], h = src.shape[2], w = src.shape[3]
    cdef Py_ssize_t oh = coords.shape[1], ow = coords.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((b, c, oh, ow), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t bi, ci, i, j, x0, y0, x1, y1
    cdef floating x, y, fx, fy, w00, w01, w10, w11
    for bi in range(b):
        for i in range(oh):
            for j in range(ow):
                x = coords[bi, i, j, 0]
                y = coords[bi, i, j, 1]
                if x < 0:
                    x = 0
                elif x > w - 1:
                    x = w - 1
                if y < 0:
                    y = 0
                elif y > h - 1:
                    y = h - 1
                x0 = <Py_ssize_t>x
                y0 = <Py_ssize_t>y
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                fx = x - x0
                fy = y - y0
                w00 = (1 - fx) * (1 - fy)
                w01 = fx * (1 - fy)
                w10 = (1 - fx) * fy
                w11 = fx * fy
                for ci in range(c):
                    out[bi, ci, i, j] = (w00 * src[bi, ci, y0, x0]
                                         + w01 * src[bi, ci, y0, x1]
                                         + w10 * src[bi, ci, y1, x0]
                                         + w11 * src[bi, ci, y1, x1])
    return out_arr


cdef _grid_sample_backward(floating[:, :, :, ::1] src, floating[:, :, :, ::1] coords,
                           floating[:, :, :, ::1] gout):
    cdef Py_ssize_t b = src.shape[0], c = src.shape[1], h = src.shape[2], w = src.shape[3]
    cdef Py_ssize_t oh = coords.shape[1], ow = coords.shape[2]
    dtype = np.float32 if floating is float else np.float64
    gsrc_arr = np.zeros((b, c, h, w), dtype=dtype)
    gcoords_arr = np.zeros((b, oh, ow, 2), dtype=dtype)
    cdef floating[:, :, :, ::1] gsrc = gsrc_arr
    cdef floating[:, :, :, ::1] gcoords = gcoords_arr
    cdef Py_ssize_t bi, ci, i, j, x0, y0, x1, y1
    cdef floating x, y, xr, yr, fx, fy, g, gx, gy, v00, v01, v10, v11
    for bi in range(b):
        for i in range(oh):
            for j in range(ow):
                xr = coords[bi, i, j, 0]
                yr = coords[bi, i, j, 1]
                x = xr
                y = yr
                if x < 0:
                    x = 0
                elif x > w - 1:
                    x = w - 1
                if y < 0:
                    y = 0
                elif y > h - 1:
                    y = h - 1
                x0 = <Py_ssize_t>x
                y0 = <Py_ssize_t>y
                x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                fx = x - x0
                fy = y - y0
                gx = 0
                gy = 0
                for ci in range(c):
                    g = gout[bi, ci, i, j]
                    v00 = src[bi, ci, y0, x0]
                    v01 = src[bi, ci, y0, x1]
                    v10 = src[bi, ci, y1, x0]
                    v11 = src[bi, ci, y1, x1]
                    gsrc[bi, ci, y0, x0] += g * (1 - fx) * (1 - fy)
                    gsrc[bi, ci, y0, x1] += g * fx * (1 - fy)
                    gsrc[bi, ci, y1, x0] += g * (1 - fx) * fy
                    gsrc[bi, ci, y1, x1] += g * fx * fy
                    gx += g * ((v01 - v00) * (1 - fy) + (v11 - v10) * fy)
                    gy += g * ((v10 - v00) * (1 - fx) + (v11 - v01) * fx)
                if 0 <= xr <= w - 1:
                    gcoords[bi, i, j, 0] = gx
                if 0 <= yr <= h - 1:
                    gcoords[bi, i, j, 1] = gy
    return gsrc_arr, gcoords_arr
