"""Operator registry, type relations and reference kernels."""

from .registry import (
    FusionPattern,
    OperatorDecl,
    OpRegistry,
    builtin_registry,
    fresh_registry,
    lookup,
    register_op,
    unregister_op,
)
from .relations import (
    HOLDS,
    Fails,
    Holds,
    Progress,
    apply_relation,
    broadcast_shapes,
    is_resolved,
    register_relation,
)
from .kernels import KERNELS
from .quant_math import (
    code_bounds,
    dequantize_array,
    quant_dtype,
    quant_step,
    quantize_array,
    simulated_quantize_array,
)

__all__ = [
    "FusionPattern",
    "OperatorDecl",
    "OpRegistry",
    "builtin_registry",
    "fresh_registry",
    "lookup",
    "register_op",
    "unregister_op",
    "HOLDS",
    "Fails",
    "Holds",
    "Progress",
    "apply_relation",
    "broadcast_shapes",
    "is_resolved",
    "register_relation",
    "KERNELS",
    "code_bounds",
    "dequantize_array",
    "quant_dtype",
    "quant_step",
    "quantize_array",
    "simulated_quantize_array",
]
