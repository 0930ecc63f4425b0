"""Convolution, upsampling and normalization ops."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .tensor import ShapeError, Tensor, as_tensor, make_node


def channel_sum(g: np.ndarray, dtype=None) -> np.ndarray:
    """Sum of an NCHW array over batch and space, per channel."""
    B, C = g.shape[:2]
    out = np.zeros(C, dtype=dtype or g.dtype)
    _kernels.channel_sum(np.ascontiguousarray(g).reshape(B, C, -1), out)
    return out


def _phases(xp: np.ndarray, stride: int) -> np.ndarray:
    """Split a padded NCHW array into stride*stride polyphase components of equal size."""
    if stride == 1:
        return xp[None]
    B, C, Hp, Wp = xp.shape
    hq, wq = -(-Hp // stride), -(-Wp // stride)
    out = np.zeros((stride * stride, B, C, hq, wq), dtype=xp.dtype)
    for pi in range(stride):
        for pj in range(stride):
            part = xp[:, :, pi::stride, pj::stride]
            out[pi * stride + pj, :, :, :part.shape[2], :part.shape[3]] = part
    return out


def _unphase(gph: np.ndarray, stride: int, shape: tuple) -> np.ndarray:
    if stride == 1:
        return gph[0]
    g = np.empty(shape, dtype=gph.dtype)
    for pi in range(stride):
        for pj in range(stride):
            dst = g[:, :, pi::stride, pj::stride]
            dst[...] = gph[pi * stride + pj, :, :, :dst.shape[2], :dst.shape[3]]
    return g


def conv_output_size(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1, groups: int = 1) -> Tensor:
    """2D cross-correlation over an NCHW batch.

    ``weight`` has shape [Cout, Cin/groups, kh, kw]. 1x1 dense kernels go
    through BLAS; everything else uses the compiled direct loops.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be [B,C,H,W], got ndim={x.ndim}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be [Cout,Cin/g,kh,kw], got ndim={weight.ndim}")
    if stride < 1 or dilation < 1 or padding < 0 or groups < 1:
        raise ValueError(f"invalid conv2d geometry stride={stride} padding={padding} "
                         f"dilation={dilation} groups={groups}")
    B, cin, H, W = x.shape
    cout, cin_g, kh, kw = weight.shape
    if cin % groups:
        raise ShapeError(f"input channels {cin} not divisible by groups {groups}")
    if cout % groups:
        raise ShapeError(f"output channels {cout} not divisible by groups {groups}")
    if cin_g * groups != cin:
        raise ShapeError(f"channel dimension mismatch: input has {cin}, weight expects {cin_g * groups}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} does not match output channels {cout}")
    ho = conv_output_size(H, kh, stride, padding, dilation)
    wo = conv_output_size(W, kw, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty ({ho}x{wo}) for input {H}x{W}")
    dtype = x.dtype
    wdata = weight.data.astype(dtype, copy=False)
    pointwise = kh == 1 and kw == 1 and stride == 1 and padding == 0 and groups == 1

    if pointwise:
        xflat = x.data.reshape(B, cin, H * W)
        w2 = wdata.reshape(cout, cin)
        out = np.matmul(w2, xflat).reshape(B, cout, ho, wo)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        xph = _phases(np.ascontiguousarray(xp), stride)
        out = np.zeros((B, cout, ho, wo), dtype=dtype)
        _kernels.conv_forward(xph, np.ascontiguousarray(wdata), out, stride, dilation, groups)
    if bias is not None:
        out += bias.data.astype(dtype, copy=False)[None, :, None, None]
        bdtype = bias.dtype

    def bw(g, needs):
        g = np.ascontiguousarray(g)
        gx = gw = gb = None
        if pointwise:
            gflat = g.reshape(B, cout, H * W)
            if needs[0]:
                gx = np.matmul(w2.T, gflat).reshape(x.shape)
            if needs[1]:
                gw = np.tensordot(gflat, xflat, axes=([0, 2], [0, 2])).reshape(weight.shape)
        else:
            if needs[0]:
                gph = np.zeros(xph.shape, dtype=dtype)
                _kernels.conv_backward_input(g, np.ascontiguousarray(wdata), gph, stride, dilation, groups)
                gxp = _unphase(gph, stride, xp.shape)
                gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
            if needs[1]:
                gw = np.zeros(weight.shape, dtype=dtype)
                _kernels.conv_backward_weight(g, xph, gw, stride, dilation, groups)
        if bias is not None and needs[2]:
            gb = channel_sum(g, bdtype)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, bw, "conv2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate every pixel into a factor x factor block."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest input must be [B,C,H,W], got ndim={x.ndim}")
    if factor == 1:
        return x
    B, C, H, W = x.shape
    f = factor
    out = np.empty((B, C, H * f, W * f), dtype=x.dtype)
    _kernels.upsample_forward(np.ascontiguousarray(x.data), f, out)

    def bw(g, needs):
        gx = np.zeros(x.shape, dtype=g.dtype)
        _kernels.upsample_backward(np.ascontiguousarray(g), f, gx)
        return (gx,)

    return make_node(out, (x,), bw, "upsample_nearest")


def group_norm(x: Tensor, groups: int, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel group) to zero mean and unit variance, then apply an affine map."""
    if x.ndim != 4:
        raise ShapeError(f"group_norm input must be [B,C,H,W], got ndim={x.ndim}")
    if eps <= 0:
        raise ValueError("group_norm eps must be positive")
    B, C, H, W = x.shape
    if groups < 1 or C % groups:
        raise ShapeError(f"channels {C} cannot be divided into {groups} groups")
    m = (C // groups) * H * W
    xg = x.data.reshape(B, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = np.mean(xc * xc, axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(B, C, H, W).astype(x.dtype, copy=False)
    out = xhat
    if gamma is not None:
        out = out * gamma.data.astype(x.dtype, copy=False)[None, :, None, None]
    if beta is not None:
        out = out + beta.data.astype(x.dtype, copy=False)[None, :, None, None]
    if out is xhat:
        out = xhat.copy()

    def bw(g, needs):
        gxhat = g if gamma is None else g * gamma.data[None, :, None, None]
        grads = []
        if needs[0]:
            gh = gxhat.reshape(B, groups, m)
            xh = xhat.reshape(B, groups, m)
            s1 = gh.sum(axis=2, keepdims=True)
            s2 = (gh * xh).sum(axis=2, keepdims=True)
            gx = (inv / m) * (m * gh - s1 - xh * s2)
            grads.append(gx.reshape(B, C, H, W).astype(x.dtype, copy=False))
        else:
            grads.append(None)
        k = 1
        if gamma is not None:
            grads.append(channel_sum(g * xhat) if needs[k] else None)
            k += 1
        if beta is not None:
            grads.append(channel_sum(g) if needs[k] else None)
        return tuple(grads)

    parents = tuple(p for p in (x, gamma, beta) if p is not None)
    return make_node(out, parents, bw, "group_norm")
