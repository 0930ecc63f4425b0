"""Dense-tensor engine with reverse-mode autodiff and Adam."""

from .functional import (add, concat, div, exp, getitem, leaky_relu, matmul, mean, mse, mul,
                         permute, reshape, sigmoid, silu, slice_axis, softmax, stack, sub, sum)
from .module import Module, kaiming_normal
from .nn import conv2d, conv_output_size, group_norm, upsample_nearest
from .optim import Adam, adam_step
from .tensor import (DTYPES, Parameter, ShapeError, Tensor, as_tensor, backward, is_grad_enabled,
                     no_grad, zero_grad)

__all__ = [
    "Adam", "DTYPES", "Module", "Parameter", "ShapeError", "Tensor", "adam_step", "add", "as_tensor",
    "backward", "concat", "conv2d", "conv_output_size", "div", "exp", "getitem", "group_norm",
    "is_grad_enabled", "kaiming_normal", "leaky_relu", "matmul", "mean", "mse", "mul", "no_grad",
    "permute", "reshape", "sigmoid", "silu", "slice_axis", "softmax", "stack", "sub", "sum",
    "upsample_nearest", "zero_grad",
]
