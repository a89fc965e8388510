"""Fold constant scales into convolution weights.

Accelerators without scalar units need every multiplication by a constant
removed from the data path. Convolution is linear in each input channel, so

    conv2d(x * c, w)             == conv2d(x, w * c[in])
    conv2d(x, w) * c             == conv2d(x, w * c[out])
    bias_add(conv2d(x, w), b) * c == bias_add(conv2d(x, w * c[out]), b * c)

when `c` is a scalar or varies only along the channel axis. The scaled
weights are then computed away by constant folding.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Optional

import numpy as np

from ..ir.expr import Call, Constant, Expr, Function, GlobalVar, LocalVar, ModuleEnv, OperatorRef
from ..ops.registry import OpRegistry, builtin_registry
from ..ops.relations import DATA_LAYOUTS, KERNEL_LAYOUTS
from .common import ScopedMutator, constant_array, is_op_call, map_user_functions, use_counts
from .dead_code import eliminate_dead_code
from .fold_constant import fold_constant_expr

logger = logging.getLogger(__name__)


def channel_scale(scale: np.ndarray, channel_axis: int, rank: int = 4) -> Optional[np.ndarray]:
    """The scale as a scalar or a per-channel vector, or None if it varies elsewhere."""
    if scale.size == 1:
        return scale.reshape(())
    if scale.ndim > rank:
        return None
    shape = (1,) * (rank - scale.ndim) + scale.shape
    if any(d != 1 for i, d in enumerate(shape) if i != channel_axis):
        return None
    return scale.reshape(-1)


def weight_scale(scale: np.ndarray, kernel_axis: int) -> np.ndarray:
    """Shape a scalar or channel vector to broadcast along one weight axis."""
    if scale.ndim == 0:
        return scale
    shape = [1, 1, 1, 1]
    shape[kernel_axis] = scale.shape[0]
    return scale.reshape(shape)


def _split_multiply(expr: Expr) -> Optional[tuple[Expr, np.ndarray]]:
    """(data, constant) for `multiply(data, const)` in either argument order."""
    if not is_op_call(expr, "multiply"):
        return None
    a, b = expr.args  # type: ignore[attr-defined]
    for data, other in ((a, b), (b, a)):
        array = constant_array(other)
        if array is not None and constant_array(data) is None:
            return data, array
    return None


def _op(name: str, *args: Expr, attrs: Optional[dict] = None) -> Call:
    return Call(OperatorRef(name), tuple(args), attrs or {})


class ScaleFolder(ScopedMutator):
    def __init__(self, registry: OpRegistry, uses: Counter):
        super().__init__()
        self.registry = registry
        self.uses = uses
        self.folded = 0

    def _conv_attrs(self, call: Call) -> dict:
        return self.registry.lookup("conv2d").resolve_attrs(call.attrs)

    def _single_use(self, expr: Expr) -> bool:
        if not isinstance(expr, LocalVar):
            return True
        return self.uses.get(expr, 0) == 1

    def _scaled_weight(self, weight: Expr, scale: np.ndarray, kernel_axis: int) -> Call:
        return _op("multiply", weight, Constant.of(weight_scale(scale, kernel_axis)))

    def visit_call(self, expr: Call) -> Expr:
        call = super().visit_call(expr)
        if is_op_call(call, "conv2d"):
            return self._fold_input_scale(call)  # type: ignore[arg-type]
        if is_op_call(call, "multiply"):
            return self._fold_output_scale(call)  # type: ignore[arg-type]
        return call

    def _fold_input_scale(self, call: Call) -> Expr:
        data, weight = call.args
        split = _split_multiply(self.lookup(data))
        if split is None:
            return call
        source, scale = split
        attrs = self._conv_attrs(call)
        if attrs["data_layout"] not in DATA_LAYOUTS or attrs["kernel_layout"] not in KERNEL_LAYOUTS:
            return call
        channel_axis = DATA_LAYOUTS[attrs["data_layout"]][0]
        scale = channel_scale(scale, channel_axis)
        if scale is None:
            return call
        in_axis = KERNEL_LAYOUTS[attrs["kernel_layout"]][1]
        self.folded += 1
        new_weight = self._scaled_weight(weight, scale, in_axis)
        return Call(call.callee, (source, new_weight), call.attrs, span=call.span)

    def _fold_output_scale(self, call: Call) -> Expr:
        split = _split_multiply(call)
        if split is None or not self._single_use(split[0]):
            return call
        producer_var, scale = split
        producer = self.lookup(producer_var)
        bias: Optional[Call] = None
        if is_op_call(producer, "bias_add"):
            bias_input = producer.args[0]  # type: ignore[attr-defined]
            if not self._single_use(bias_input):
                return call
            bias, producer = producer, self.lookup(bias_input)  # type: ignore[assignment]
        if not is_op_call(producer, "conv2d"):
            return call
        conv: Call = producer  # type: ignore[assignment]
        attrs = self._conv_attrs(conv)
        if attrs["data_layout"] not in DATA_LAYOUTS or attrs["kernel_layout"] not in KERNEL_LAYOUTS:
            return call
        channel_axis = DATA_LAYOUTS[attrs["data_layout"]][0]
        vector = channel_scale(scale, channel_axis)
        if vector is None:
            return call
        if bias is not None:
            bias_axis = int(self.registry.lookup("bias_add").resolve_attrs(bias.attrs)["axis"])
            if bias_axis % 4 != channel_axis:
                return call
        out_axis = KERNEL_LAYOUTS[attrs["kernel_layout"]][0]
        data, weight = conv.args
        result: Expr = Call(conv.callee, (data, self._scaled_weight(weight, vector, out_axis)), conv.attrs, span=conv.span)
        if bias is not None:
            new_bias = _op("multiply", bias.args[1], Constant.of(vector))
            result = Call(bias.callee, (result, new_bias), bias.attrs, span=bias.span)
        self.folded += 1
        return result


def fold_axis_scale(module: ModuleEnv, registry: Optional[OpRegistry] = None) -> ModuleEnv:
    """Move constant multiplications around convolutions into their weights.

    Input scales fold into the weight's input-channel axis; output scales (also
    through a `bias_add`) fold into the output-channel axis when the
    convolution result has no other use. Constant folding and dead code
    elimination then remove the scaled constants and the dropped bindings.
    """
    registry = registry or builtin_registry()
    total = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal total
        folder = ScaleFolder(registry, use_counts(fn.body))
        result = folder.visit(fn)
        total += folder.folded
        return eliminate_dead_code(fold_constant_expr(result, registry))  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.info(f"Folded {total} constant scales into convolution weights")
    return module
