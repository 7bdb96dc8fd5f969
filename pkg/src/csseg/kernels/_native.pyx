# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native conv kernels: filter-tap sweeps over float64 memoryviews.

Each kernel iterates the (filter, channel, tap) triples in the outer
loops and walks the output rows in the inner loops. The tap's valid
output range is computed once per tap, so the inner loops are branch
free; the common stride-1 case runs on raw row pointers so the C
compiler can unroll and vectorize the contiguous walk. Loop order is
fixed, so results are deterministic; padding is handled by the range
clipping and nothing is allocated beyond the outputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "native"


cdef inline Py_ssize_t _lo(Py_ssize_t pad, Py_ssize_t kk, Py_ssize_t stride) nogil:
    # smallest o with o*stride - pad + kk >= 0
    cdef Py_ssize_t d = pad - kk
    if d <= 0:
        return 0
    return (d + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t pad,
                           Py_ssize_t kk, Py_ssize_t stride) nogil:
    # one past the largest o with o*stride - pad + kk <= n_in - 1
    cdef Py_ssize_t top = n_in - 1 + pad - kk
    if top < 0:
        return 0
    top = top // stride + 1
    return top if top < n_out else n_out


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b,
                   int stride, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t F = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    out = np.empty((F, Ho, Wo), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t f, c, kh, kw, oh, ow, ih, n
    cdef Py_ssize_t oh0, oh1, ow0, ow1
    cdef double wv, bv
    cdef double *yrow
    cdef const double *xrow
    with nogil:
        for f in range(F):
            bv = b[f]
            for oh in range(Ho):
                for ow in range(Wo):
                    y[f, oh, ow] = bv
        for f in range(F):
            for c in range(C):
                for kh in range(k):
                    oh0 = _lo(pad, kh, stride)
                    oh1 = _hi(H, Ho, pad, kh, stride)
                    for kw in range(k):
                        wv = w[f, c, kh, kw]
                        ow0 = _lo(pad, kw, stride)
                        ow1 = _hi(W, Wo, pad, kw, stride)
                        n = ow1 - ow0
                        if n <= 0:
                            continue
                        for oh in range(oh0, oh1):
                            ih = oh * stride - pad + kh
                            yrow = &y[f, oh, ow0]
                            xrow = &x[c, ih, ow0 * stride - pad + kw]
                            if stride == 1:
                                for ow in range(n):
                                    yrow[ow] += wv * xrow[ow]
                            else:
                                for ow in range(n):
                                    yrow[ow] += wv * xrow[ow * stride]
    return out


def conv2d_grad_input(double[:, :, :, ::1] w, double[:, :, ::1] gy,
                      tuple x_shape, int stride, int pad):
    cdef Py_ssize_t C = x_shape[0], H = x_shape[1], W = x_shape[2]
    cdef Py_ssize_t F = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    out = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t f, c, kh, kw, oh, ow, ih, n
    cdef Py_ssize_t oh0, oh1, ow0, ow1
    cdef double wv
    cdef double *gxrow
    cdef const double *gyrow
    with nogil:
        for f in range(F):
            for c in range(C):
                for kh in range(k):
                    oh0 = _lo(pad, kh, stride)
                    oh1 = _hi(H, Ho, pad, kh, stride)
                    for kw in range(k):
                        wv = w[f, c, kh, kw]
                        ow0 = _lo(pad, kw, stride)
                        ow1 = _hi(W, Wo, pad, kw, stride)
                        n = ow1 - ow0
                        if n <= 0:
                            continue
                        for oh in range(oh0, oh1):
                            ih = oh * stride - pad + kh
                            gxrow = &gx[c, ih, ow0 * stride - pad + kw]
                            gyrow = &gy[f, oh, ow0]
                            if stride == 1:
                                for ow in range(n):
                                    gxrow[ow] += wv * gyrow[ow]
                            else:
                                for ow in range(n):
                                    gxrow[ow * stride] += wv * gyrow[ow]
    return out


def conv2d_grad_kernel(double[:, :, ::1] x, double[:, :, ::1] gy,
                       tuple w_shape, int stride, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t F = w_shape[0], k = w_shape[2]
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    out = np.zeros((F, C, k, k), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = out
    cdef Py_ssize_t f, c, kh, kw, oh, ow, ih, n, m
    cdef Py_ssize_t oh0, oh1, ow0, ow1
    cdef double acc, a0, a1, a2, a3
    cdef const double *xrow
    cdef const double *gyrow
    with nogil:
        for f in range(F):
            for c in range(C):
                for kh in range(k):
                    oh0 = _lo(pad, kh, stride)
                    oh1 = _hi(H, Ho, pad, kh, stride)
                    for kw in range(k):
                        ow0 = _lo(pad, kw, stride)
                        ow1 = _hi(W, Wo, pad, kw, stride)
                        n = ow1 - ow0
                        if n <= 0:
                            continue
                        # four fixed-order partial sums: the lanes map onto
                        # SIMD registers while keeping summation deterministic
                        a0 = 0.0
                        a1 = 0.0
                        a2 = 0.0
                        a3 = 0.0
                        acc = 0.0
                        m = n - (n & 3)
                        for oh in range(oh0, oh1):
                            ih = oh * stride - pad + kh
                            xrow = &x[c, ih, ow0 * stride - pad + kw]
                            gyrow = &gy[f, oh, ow0]
                            if stride == 1:
                                for ow in range(0, m, 4):
                                    a0 += gyrow[ow] * xrow[ow]
                                    a1 += gyrow[ow + 1] * xrow[ow + 1]
                                    a2 += gyrow[ow + 2] * xrow[ow + 2]
                                    a3 += gyrow[ow + 3] * xrow[ow + 3]
                                for ow in range(m, n):
                                    acc += gyrow[ow] * xrow[ow]
                            else:
                                for ow in range(0, m, 4):
                                    a0 += gyrow[ow] * xrow[ow * stride]
                                    a1 += gyrow[ow + 1] * xrow[(ow + 1) * stride]
                                    a2 += gyrow[ow + 2] * xrow[(ow + 2) * stride]
                                    a3 += gyrow[ow + 3] * xrow[(ow + 3) * stride]
                                for ow in range(m, n):
                                    acc += gyrow[ow] * xrow[ow * stride]
                        gw[f, c, kh, kw] = acc + ((a0 + a1) + (a2 + a3))
    return out
