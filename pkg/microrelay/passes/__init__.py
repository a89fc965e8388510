"""Module-to-module optimization passes and the pass pipeline."""

from .alter_layout import alter_op_layout
from .combine_conv import combine_parallel_conv2d
from .cse import common_subexpr_elim
from .dead_code import dead_code_elim, eliminate_dead_code
from .fold_constant import fold_constant, fold_constant_expr
from .fold_scale import fold_axis_scale
from .fuse_ops import DataflowDag, fuse_ops, fusion_groups, post_dominators
from .manager import PASS_TABLE, PassContext, parse_pass_list, run_pass, run_pipeline
from .partial_eval import partial_eval
from .quantize import (
    AnnotateRule,
    QuantConfig,
    quant_annotate,
    quant_calibrate,
    quant_realize,
    quantize,
)

__all__ = [
    "alter_op_layout",
    "combine_parallel_conv2d",
    "common_subexpr_elim",
    "dead_code_elim",
    "eliminate_dead_code",
    "fold_constant",
    "fold_constant_expr",
    "fold_axis_scale",
    "DataflowDag",
    "fuse_ops",
    "fusion_groups",
    "post_dominators",
    "PASS_TABLE",
    "PassContext",
    "parse_pass_list",
    "run_pass",
    "run_pipeline",
    "partial_eval",
    "AnnotateRule",
    "QuantConfig",
    "quant_annotate",
    "quant_calibrate",
    "quant_realize",
    "quantize",
]
