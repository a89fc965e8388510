"""Operator layout alteration for convolutions."""

from __future__ import annotations

import logging
from typing import Optional

from ..ir.expr import Call, Expr, Function, GlobalVar, ModuleEnv, OperatorRef
from ..ops.registry import OpRegistry, builtin_registry
from ..utils.errors import UnsupportedLayout
from .common import ScopedMutator, is_op_call, map_user_functions
from .dead_code import eliminate_dead_code
from .fold_constant import fold_constant_expr

logger = logging.getLogger(__name__)

KERNEL_LAYOUT_FOR = {"NCHW": "OIHW", "NHWC": "HWIO"}


def layout_permutation(src: str, dst: str) -> tuple[int, ...]:
    """Axes for `transpose` that turn a `src`-ordered tensor into `dst` order."""
    if sorted(src) != sorted(dst):
        raise UnsupportedLayout(dst)
    return tuple(src.index(axis) for axis in dst)


def _transpose(expr: Expr, axes: tuple[int, ...]) -> Call:
    return Call(OperatorRef("transpose"), (expr,), {"axes": axes})


class LayoutAlterer(ScopedMutator):
    """Rewrites convolutions into the target layout and cancels inverse transposes."""

    def __init__(self, target: str, registry: OpRegistry):
        super().__init__()
        self.target = target
        self.kernel_target = KERNEL_LAYOUT_FOR[target]
        self.registry = registry
        self.altered = 0
        self.cancelled = 0

    def visit_call(self, expr: Call) -> Expr:
        call = super().visit_call(expr)
        if is_op_call(call, "conv2d"):
            return self._alter_conv(call)  # type: ignore[arg-type]
        if is_op_call(call, "transpose"):
            return self._cancel(call)  # type: ignore[arg-type]
        return call

    def _alter_conv(self, call: Call) -> Expr:
        attrs = self.registry.lookup("conv2d").resolve_attrs(call.attrs)
        data_layout, kernel_layout = str(attrs["data_layout"]), str(attrs["kernel_layout"])
        if data_layout == self.target and kernel_layout == self.kernel_target:
            return call
        data, weight = call.args
        new_attrs = dict(call.attrs)
        new_attrs["data_layout"] = self.target
        new_attrs["kernel_layout"] = self.kernel_target
        conv = Call(
            call.callee,
            (
                self._cancel(_transpose(data, layout_permutation(data_layout, self.target))),
                self._cancel(_transpose(weight, layout_permutation(kernel_layout, self.kernel_target))),
            ),
            new_attrs,
            span=call.span,
        )
        self.altered += 1
        return _transpose(conv, layout_permutation(self.target, data_layout))

    def _cancel(self, call: Call) -> Expr:
        """transpose(transpose(x, p), q) is x when q undoes p; an identity transpose is x."""
        axes = call.attrs.get("axes")
        if axes is None:
            return call
        axes = tuple(int(a) for a in axes)
        if axes == tuple(range(len(axes))):
            self.cancelled += 1
            return call.args[0]
        inner = self.lookup(call.args[0])
        if not is_op_call(inner, "transpose") or inner.attrs.get("axes") is None:  # type: ignore[attr-defined]
            return call
        inner_axes = tuple(int(a) for a in inner.attrs["axes"])  # type: ignore[attr-defined]
        if len(inner_axes) == len(axes) and all(inner_axes[axes[i]] == i for i in range(len(axes))):
            self.cancelled += 1
            return inner.args[0]  # type: ignore[attr-defined]
        return call


def alter_op_layout(
    module: ModuleEnv,
    target_layout: str = "NHWC",
    registry: Optional[OpRegistry] = None,
) -> ModuleEnv:
    """Rewrite every conv2d to `target_layout` with explicit transposes at its boundary.

    Raises:
        UnsupportedLayout: When the target is not NCHW or NHWC
    """
    if target_layout not in KERNEL_LAYOUT_FOR:
        raise UnsupportedLayout(target_layout)
    registry = registry or builtin_registry()
    altered = cancelled = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal altered, cancelled
        alterer = LayoutAlterer(target_layout, registry)
        result = alterer.visit(fn)
        altered += alterer.altered
        cancelled += alterer.cancelled
        return eliminate_dead_code(fold_constant_expr(result, registry))  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.info(f"Altered {altered} convolutions to {target_layout}; cancelled {cancelled} transposes")
    return module
