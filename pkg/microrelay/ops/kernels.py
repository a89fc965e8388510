"""Reference numpy kernels.

Kernels take numpy arrays (a tuple argument arrives as a tuple of arrays) plus
the operator's resolved attributes, and return an array or a tuple of arrays
whose dtype matches the type relation's prediction.
"""

import logging
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..ir.types import BaseType
from ..utils.errors import TrapDivideByZero
from .quant_math import simulated_quantize_array
from .relations import DATA_LAYOUTS, _pads, reduce_axes

logger = logging.getLogger(__name__)

Kernel = Callable[[Sequence[Any], Mapping[str, Any]], Any]


def _like(result: Any, dtype: np.dtype) -> np.ndarray:
    return np.asarray(result).astype(dtype, copy=False)


def _binary(fn: Callable[[np.ndarray, np.ndarray], Any]) -> Kernel:
    def kernel(args, attrs):
        a, b = args
        with np.errstate(all="ignore"):
            return _like(fn(a, b), a.dtype)

    return kernel


def _compare(fn: Callable[[np.ndarray, np.ndarray], Any]) -> Kernel:
    def kernel(args, attrs):
        a, b = args
        return np.asarray(fn(a, b), dtype=np.bool_)

    return kernel


def _unary(fn: Callable[[np.ndarray], Any]) -> Kernel:
    def kernel(args, attrs):
        (x,) = args
        with np.errstate(all="ignore"):
            return _like(fn(x), x.dtype)

    return kernel


def divide(args, attrs):
    a, b = args
    if a.dtype.kind in "iu":
        if np.any(b == 0):
            raise TrapDivideByZero()
        with np.errstate(all="ignore"):
            quotient = np.abs(a) // np.abs(b)
            sign = np.where((a < 0) != (b < 0), -1, 1).astype(a.dtype)
            return _like(quotient * sign, a.dtype)
    with np.errstate(all="ignore"):
        return _like(np.true_divide(a, b), a.dtype)


def relu(args, attrs):
    (x,) = args
    return _like(np.maximum(x, np.zeros((), dtype=x.dtype)), x.dtype)


def sigmoid(args, attrs):
    (x,) = args
    with np.errstate(all="ignore"):
        return _like(1.0 / (1.0 + np.exp(-x)), x.dtype)


def clip(args, attrs):
    (x,) = args
    return _like(np.clip(x, attrs["a_min"], attrs["a_max"]), x.dtype)


def cast(args, attrs):
    (x,) = args
    dtype = BaseType.parse(str(attrs["dtype"])).numpy_dtype
    with np.errstate(all="ignore"):
        return np.asarray(x).astype(dtype)


def reshape(args, attrs):
    (x,) = args
    return np.reshape(x, tuple(int(d) for d in attrs["newshape"]))


def transpose(args, attrs):
    (x,) = args
    axes = attrs.get("axes")
    return np.transpose(x, None if axes is None else tuple(int(a) for a in axes))


def squeeze(args, attrs):
    (x,) = args
    axis = attrs.get("axis")
    if axis is None:
        return np.squeeze(x)
    axes = axis if isinstance(axis, tuple) else (axis,)
    return np.squeeze(x, axis=tuple(int(a) for a in axes))


def expand_dims(args, attrs):
    (x,) = args
    axis = int(attrs.get("axis", 0))
    if axis < 0:
        axis += x.ndim + 1
    for _ in range(int(attrs.get("num_newaxis", 1))):
        x = np.expand_dims(x, axis)
    return x


def _reduction(fn: Callable[..., Any], out_dtype: Any = None) -> Kernel:
    def kernel(args, attrs):
        (x,) = args
        axes = tuple(reduce_axes(attrs.get("axis"), x.ndim))
        keepdims = bool(attrs.get("keepdims", False))
        result = fn(x, axis=axes, keepdims=keepdims)
        return _like(result, out_dtype or x.dtype)

    return kernel


def argmax(args, attrs):
    (x,) = args
    axes = reduce_axes(attrs.get("axis"), x.ndim)
    keepdims = bool(attrs.get("keepdims", False))
    # Move reduced axes last and flatten them, so one argmax covers them all.
    kept = [i for i in range(x.ndim) if i not in axes]
    moved = np.transpose(x, kept + axes)
    flat = moved.reshape(moved.shape[: len(kept)] + (-1,))
    result = np.argmax(flat, axis=-1)
    if keepdims:
        for axis in axes:
            result = np.expand_dims(result, axis)
    return _like(result, np.int32)


def dense(args, attrs):
    x, w = args
    out_dtype = attrs.get("out_dtype") or ""
    dtype = BaseType.parse(str(out_dtype)).numpy_dtype if out_dtype else x.dtype
    return _like(np.matmul(x.astype(dtype), w.astype(dtype).T), dtype)


def conv2d(args, attrs):
    x, w = args
    data_layout = str(attrs.get("data_layout", "NCHW"))
    kernel_layout = str(attrs.get("kernel_layout", "OIHW"))
    out_dtype = attrs.get("out_dtype") or ""
    dtype = BaseType.parse(str(out_dtype)).numpy_dtype if out_dtype else x.dtype
    if data_layout == "NHWC":
        x = np.transpose(x, (0, 3, 1, 2))
    if kernel_layout == "HWIO":
        w = np.transpose(w, (3, 2, 0, 1))
    x = x.astype(dtype)
    w = w.astype(dtype)
    sh, sw = (int(s) for s in attrs.get("strides", (1, 1)))
    pt, pl, pb, pr = _pads(attrs.get("padding", (0, 0)))
    x = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    kh, kw = w.shape[2], w.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.einsum("nchwij,ocij->nohw", windows, w)
    if data_layout == "NHWC":
        out = np.transpose(out, (0, 2, 3, 1))
    return _like(out, dtype)


def bias_add(args, attrs):
    x, b = args
    axis = int(attrs.get("axis", 1))
    if axis < 0:
        axis += x.ndim
    shape = [1] * x.ndim
    shape[axis] = b.shape[0]
    return _like(x + b.reshape(shape), x.dtype)


def concat(args, attrs):
    (parts,) = args
    return np.concatenate(parts, axis=int(attrs.get("axis", 0)))


def split(args, attrs):
    (x,) = args
    pieces = np.split(x, attrs["indices_or_sections"], axis=int(attrs.get("axis", 0)))
    return tuple(np.ascontiguousarray(p) for p in pieces)


def simulated_quantize(args, attrs):
    (x,) = args
    scale = float(attrs.get("scale", 0.0))
    if scale <= 0.0:
        # Uncalibrated sites are transparent.
        return x
    return simulated_quantize_array(
        x,
        bits=int(attrs.get("bits", 8)),
        sign=int(attrs.get("sign", 1)),
        scale=scale,
        rounding=str(attrs.get("rounding", "round")),
    ).astype(x.dtype)


KERNELS: dict[str, Kernel] = {
    "add": _binary(np.add),
    "subtract": _binary(np.subtract),
    "multiply": _binary(np.multiply),
    "divide": divide,
    "minimum": _binary(np.minimum),
    "maximum": _binary(np.maximum),
    "negative": _unary(np.negative),
    "exp": _unary(np.exp),
    "log": _unary(np.log),
    "sqrt": _unary(np.sqrt),
    "tanh": _unary(np.tanh),
    "sigmoid": sigmoid,
    "relu": relu,
    "round": _unary(np.rint),
    "clip": clip,
    "cast": cast,
    "logical_not": _unary(np.logical_not),
    "equal": _compare(np.equal),
    "not_equal": _compare(np.not_equal),
    "less": _compare(np.less),
    "greater_equal": _compare(np.greater_equal),
    "logical_and": _compare(np.logical_and),
    "reshape": reshape,
    "transpose": transpose,
    "squeeze": squeeze,
    "expand_dims": expand_dims,
    "sum": _reduction(np.sum),
    "max_reduce": _reduction(np.max),
    "min_reduce": _reduction(np.min),
    "max": _reduction(np.max),
    "min": _reduction(np.min),
    "argmax": argmax,
    "dense": dense,
    "conv2d": conv2d,
    "bias_add": bias_add,
    "concat": concat,
    "split": split,
    "simulated_quantize": simulated_quantize,
}

__all__ = ["KERNELS", "Kernel", "DATA_LAYOUTS"]
