"""Combine parallel convolutions that read the same input.

Sibling `conv2d` calls on one data value with identical attributes and kernel
spatial size become a single convolution over the concatenated weights,
followed by a `split` along the channel axis; each original result is a
projection of the split.
"""

from __future__ import annotations

import logging
from typing import Any, Optional

from ..ir.anf import to_anf
from ..ir.expr import (
    Call,
    Constant,
    Expr,
    Function,
    GlobalVar,
    Let,
    LocalVar,
    ModuleEnv,
    OperatorRef,
    Projection,
    Tuple,
    build_lets,
    let_chain,
)
from ..ir.types import TensorType
from ..ir.visitor import ExprMutator
from ..ops.registry import OpRegistry, builtin_registry
from ..ops.relations import DATA_LAYOUTS, KERNEL_LAYOUTS
from .common import is_op_call, map_user_functions
from .fold_constant import fold_constant_expr

logger = logging.getLogger(__name__)


def _static_shape(expr: Expr, bound: dict[LocalVar, Expr]) -> Optional[tuple[int, ...]]:
    if isinstance(expr, Constant):
        return tuple(expr.data.shape)
    ty = expr.checked_type
    if ty is None and isinstance(expr, LocalVar) and expr in bound:
        ty = bound[expr].checked_type
    if isinstance(ty, TensorType) and ty.shape.is_concrete:
        return ty.shape.as_ints()
    return None


class ParallelConvCombiner(ExprMutator):
    def __init__(self, registry: OpRegistry, min_branches: int = 2):
        super().__init__()
        self.registry = registry
        self.min_branches = min_branches
        self.combined = 0

    def _signature(self, call: Call, bound: dict[LocalVar, Expr]) -> Optional[tuple[Any, ...]]:
        """What two sibling convolutions must share to be combined."""
        attrs = self.registry.lookup("conv2d").resolve_attrs(call.attrs)
        if attrs["data_layout"] not in DATA_LAYOUTS or attrs["kernel_layout"] not in KERNEL_LAYOUTS:
            return None
        shape = _static_shape(call.args[1], bound)
        if shape is None or len(shape) != 4:
            return None
        _, _, kh_axis, kw_axis = KERNEL_LAYOUTS[attrs["kernel_layout"]]
        attr_key = tuple(sorted((k, repr(v)) for k, v in attrs.items()))
        return (shape[kh_axis], shape[kw_axis]) + attr_key

    def visit_let(self, expr: Let) -> Expr:
        chain, body = let_chain(expr)
        values = [self.visit(let.value) for let in chain]
        body = self.visit(body)
        bound = {let.var: value for let, value in zip(chain, values)}
        position = {let.var: i for i, let in enumerate(chain)}

        by_input: dict[Any, list[int]] = {}
        for i, value in enumerate(values):
            if is_op_call(value, "conv2d") and isinstance(value.args[0], LocalVar):  # type: ignore[attr-defined]
                by_input.setdefault(value.args[0], []).append(i)  # type: ignore[attr-defined]

        replacements: dict[int, list[tuple[LocalVar, Expr]]] = {}
        for data, sites in by_input.items():
            if len(sites) < self.min_branches:
                continue
            groups: dict[Any, list[int]] = {}
            merged: set[int] = set()
            for i in sites:
                signature = self._signature(values[i], bound)  # type: ignore[arg-type]
                if signature is not None:
                    groups.setdefault(signature, []).append(i)
            for members in groups.values():
                if len(members) < self.min_branches:
                    continue
                first = members[0]
                weights = [values[i].args[1] for i in members]  # type: ignore[attr-defined]
                if any(isinstance(w, LocalVar) and position.get(w, -1) >= first for w in weights):
                    logger.warning(f"Not combining convolutions on {data.name}: a weight is computed after the first")
                    continue
                self._combine(chain, values, members, bound, replacements)
                merged.update(members)
            skipped = [i for i in sites if i not in merged]
            if skipped:
                logger.warning(
                    f"{len(skipped)} of {len(sites)} convolutions on {data.name} are incompatible with their siblings"
                )

        if not replacements:
            return build_lets([(let.var, v) for let, v in zip(chain, values)], body)
        bindings: list[tuple[LocalVar, Expr]] = []
        for i, (let, value) in enumerate(zip(chain, values)):
            bindings.extend(replacements.get(i, [(let.var, value)]))
        return build_lets(bindings, body)

    def _combine(
        self,
        chain: list[Let],
        values: list[Expr],
        members: list[int],
        bound: dict[LocalVar, Expr],
        replacements: dict[int, list[tuple[LocalVar, Expr]]],
    ) -> None:
        convs: list[Call] = [values[i] for i in members]  # type: ignore[misc]
        attrs = self.registry.lookup("conv2d").resolve_attrs(convs[0].attrs)
        out_axis = KERNEL_LAYOUTS[attrs["kernel_layout"]][0]
        channel_axis = DATA_LAYOUTS[attrs["data_layout"]][0]
        widths = [_static_shape(c.args[1], bound)[out_axis] for c in convs]  # type: ignore[index]
        indices = []
        total = 0
        for width in widths[:-1]:
            total += width
            indices.append(total)

        span = convs[0].span
        weights = LocalVar.fresh("weights", span)
        combined = LocalVar.fresh("combined", span)
        parts = LocalVar.fresh("parts", span)
        prefix: list[tuple[LocalVar, Expr]] = [
            (weights, Call(OperatorRef("concat"), (Tuple(tuple(c.args[1] for c in convs)),), {"axis": out_axis})),
            (combined, Call(OperatorRef("conv2d"), (convs[0].args[0], weights), dict(convs[0].attrs), span=span)),
            (
                parts,
                Call(
                    OperatorRef("split"),
                    (combined,),
                    {"indices_or_sections": tuple(indices), "axis": channel_axis},
                ),
            ),
        ]
        for k, i in enumerate(members):
            projection = (chain[i].var, Projection(parts, k, span=chain[i].span))
            replacements[i] = (prefix if k == 0 else []) + [projection]
        self.combined += 1
        logger.debug(f"Combined {len(members)} convolutions with widths {widths}")


def combine_parallel_conv2d(
    module: ModuleEnv,
    min_branches: int = 2,
    registry: Optional[OpRegistry] = None,
) -> ModuleEnv:
    """Merge groups of compatible convolutions sharing an input into one.

    Args:
        module: Type-checked module
        min_branches: Smallest number of siblings worth combining
        registry: Operator registry for attribute defaults

    Returns:
        The rewritten module, with the concatenated constant weights folded
    """
    registry = registry or builtin_registry()
    combiner = ParallelConvCombiner(registry, min_branches)

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        return fold_constant_expr(combiner.visit(to_anf(fn)), registry)  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.info(f"Combined {combiner.combined} groups of parallel convolutions")
    return module
