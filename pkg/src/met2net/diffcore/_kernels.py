"""Direct convolution loops compiled with numba.

These are serial on purpose: summation order is fixed, so results are
bitwise reproducible run to run. Layout is NCHW. The input arrives split
into its stride x stride polyphase components ``xph[phase, b, c, :, :]``
(phase = row_offset * stride + col_offset of the padded input), so every
kernel tap reads a contiguous row slice of one component and the inner
loops vectorize for strided convolutions too.
"""

from numba import njit


@njit(cache=True, fastmath=True)
def conv_forward(xph, w, out, stride, dilation, groups):
    B = xph.shape[1]
    cout, cin_g, kh, kw = w.shape
    cout_g = cout // groups
    ho, wo = out.shape[2], out.shape[3]
    for b in range(B):
        for o in range(cout):
            c0 = (o // cout_g) * cin_g
            for ci in range(cin_g):
                for i in range(kh):
                    a = i * dilation
                    pi, ai = a % stride, a // stride
                    for j in range(kw):
                        c = j * dilation
                        ph, cj = pi * stride + c % stride, c // stride
                        wv = w[o, ci, i, j]
                        for y in range(ho):
                            r = xph[ph, b, c0 + ci, y + ai, cj:cj + wo]
                            orow = out[b, o, y]
                            for x in range(wo):
                                orow[x] += wv * r[x]
    return out


@njit(cache=True, fastmath=True)
def conv_backward_input(gout, w, gph, stride, dilation, groups):
    B = gout.shape[0]
    cout, cin_g, kh, kw = w.shape
    cout_g = cout // groups
    ho, wo = gout.shape[2], gout.shape[3]
    for b in range(B):
        for o in range(cout):
            c0 = (o // cout_g) * cin_g
            for ci in range(cin_g):
                for i in range(kh):
                    a = i * dilation
                    pi, ai = a % stride, a // stride
                    for j in range(kw):
                        c = j * dilation
                        ph, cj = pi * stride + c % stride, c // stride
                        wv = w[o, ci, i, j]
                        for y in range(ho):
                            r = gph[ph, b, c0 + ci, y + ai, cj:cj + wo]
                            orow = gout[b, o, y]
                            for x in range(wo):
                                r[x] += wv * orow[x]
    return gph


@njit(cache=True, fastmath=True)
def conv_backward_weight(gout, xph, gw, stride, dilation, groups):
    B = gout.shape[0]
    cout, cin_g, kh, kw = gw.shape
    cout_g = cout // groups
    ho, wo = gout.shape[2], gout.shape[3]
    for b in range(B):
        for o in range(cout):
            c0 = (o // cout_g) * cin_g
            for ci in range(cin_g):
                for i in range(kh):
                    a = i * dilation
                    pi, ai = a % stride, a // stride
                    for j in range(kw):
                        c = j * dilation
                        ph, cj = pi * stride + c % stride, c // stride
                        acc = 0.0
                        for y in range(ho):
                            r = xph[ph, b, c0 + ci, y + ai, cj:cj + wo]
                            orow = gout[b, o, y]
                            for x in range(wo):
                                acc += orow[x] * r[x]
                        gw[o, ci, i, j] += acc
    return gw


@njit(cache=True)
def upsample_forward(x, f, out):
    B, C, H, W = x.shape
    for b in range(B):
        for c in range(C):
            for y in range(H):
                src = x[b, c, y]
                for k in range(f):
                    dst = out[b, c, y * f + k]
                    for xx in range(W):
                        v = src[xx]
                        for m in range(f):
                            dst[xx * f + m] = v
    return out


@njit(cache=True)
def upsample_backward(g, f, gx):
    B, C, H, W = gx.shape
    for b in range(B):
        for c in range(C):
            for y in range(H):
                dst = gx[b, c, y]
                for k in range(f):
                    src = g[b, c, y * f + k]
                    for xx in range(W):
                        acc = 0.0
                        for m in range(f):
                            acc += src[xx * f + m]
                        dst[xx] += acc
    return gx


@njit(cache=True)
def channel_sum(g, out):
    """out[c] = sum of g[:, c] for g shaped [B, C, L]."""
    B, C, L = g.shape
    for b in range(B):
        for c in range(C):
            row = g[b, c]
            acc = 0.0
            for k in range(L):
                acc += row[k]
            out[c] += acc
    return out


@njit(cache=True, fastmath=True)
def silu_backward(g, x, sig, gx):
    for k in range(x.size):
        s = sig[k]
        gx[k] = g[k] * (s * (1.0 + x[k] * (1.0 - s)))
