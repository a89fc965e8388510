"""Pass pipeline: named passes run in order with type inference in between."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..infer.inference import infer
from ..ir.analysis import check_well_formed
from ..ir.anf import module_to_anf
from ..ir.expr import ModuleEnv
from ..ops.registry import OpRegistry, builtin_registry
from ..runtime.interpreter import random_arguments
from ..utils.config import config
from ..utils.errors import CalibrationFailed, MicroRelayError, PassError, QuantizationError, UnknownPass
from ..utils.stats import count_ops
from .alter_layout import alter_op_layout
from .combine_conv import combine_parallel_conv2d
from .cse import common_subexpr_elim
from .dead_code import dead_code_elim
from .fold_constant import fold_constant
from .fold_scale import fold_axis_scale
from .fuse_ops import fuse_ops
from .partial_eval import partial_eval
from .quantize import QuantConfig, quantize

logger = logging.getLogger(__name__)


@dataclass
class PassContext:
    """Everything a pipeline run needs besides the module.

    `options` holds dotted keys such as `fuse.max_depth`, `quant.bits`,
    `quant.calib_size`, `quant.calibration`, `pe.fuel` and `combine.min_branches`.
    """

    passes: list[str] = field(default_factory=list)
    options: dict[str, Any] = field(default_factory=dict)
    registry: OpRegistry = field(default_factory=builtin_registry)
    calib_inputs: Optional[list[list[Any]]] = None
    seed: int = 0
    entry: str = field(default_factory=lambda: config.DEFAULT_ENTRY)

    def option(self, key: str, default: Any = None) -> Any:
        return self.options.get(key, default)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


PassFn = Callable[[ModuleEnv, PassContext, Optional[str]], ModuleEnv]


def _quantize(module: ModuleEnv, ctx: PassContext, arg: Optional[str]) -> ModuleEnv:
    calib = ctx.calib_inputs
    if calib is None:
        rng = ctx.rng()
        size = max(1, int(ctx.option("quant.calib_size", 8)))
        try:
            calib = [random_arguments(module, ctx.entry, rng) for _ in range(size)]
        except ValueError as e:
            raise CalibrationFailed(f"cannot generate calibration inputs: {e}") from e
    try:
        qconfig = QuantConfig(
            bits=int(ctx.option("quant.bits", config.QUANT_BITS)),
            sign=int(ctx.option("quant.sign", 1)),
            calibration=str(ctx.option("quant.calibration", "global")),
        )
    except ValueError as e:
        raise QuantizationError(str(e)) from e
    return quantize(module, calib, ctx.entry, qconfig, registry=ctx.registry)


PASS_TABLE: dict[str, PassFn] = {
    "fold": lambda m, ctx, arg: fold_constant(m, ctx.registry),
    "dce": lambda m, ctx, arg: dead_code_elim(m),
    "cse": lambda m, ctx, arg: common_subexpr_elim(m),
    "anf": lambda m, ctx, arg: module_to_anf(m),
    "fuse": lambda m, ctx, arg: fuse_ops(m, ctx.option("fuse.max_depth"), ctx.registry),
    "pe": lambda m, ctx, arg: partial_eval(m, ctx.option("pe.fuel"), ctx.registry),
    "quantize": _quantize,
    "fold-scale": lambda m, ctx, arg: fold_axis_scale(m, ctx.registry),
    "combine-conv": lambda m, ctx, arg: combine_parallel_conv2d(
        m, int(ctx.option("combine.min_branches", 2)), ctx.registry
    ),
    "layout": lambda m, ctx, arg: alter_op_layout(m, arg or "NHWC", ctx.registry),
}


def split_pass(spec: str) -> tuple[str, Optional[str]]:
    """`layout=NHWC` -> ("layout", "NHWC"); `fold` -> ("fold", None)."""
    name, sep, arg = spec.strip().partition("=")
    return name.strip(), (arg.strip() if sep else None)


def parse_pass_list(text: str) -> list[str]:
    """Split a comma-separated pass list, checking every name.

    Raises:
        UnknownPass: For a name missing from PASS_TABLE
    """
    passes = [p.strip() for p in text.split(",") if p.strip()]
    for spec in passes:
        name, _ = split_pass(spec)
        if name not in PASS_TABLE:
            raise UnknownPass(name, PASS_TABLE)
    return passes


def parse_option_value(raw: str) -> Any:
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def run_pass(module: ModuleEnv, spec: str, ctx: PassContext) -> ModuleEnv:
    """Run one pass, then re-infer types; failures are tagged with the pass name."""
    name, arg = split_pass(spec)
    if name not in PASS_TABLE:
        raise UnknownPass(name, PASS_TABLE)
    before = count_ops(module)
    try:
        module = PASS_TABLE[name](module, ctx, arg)
        module = infer(module, ctx.registry)
    except PassError:
        raise
    except MicroRelayError as e:
        logger.error(f"Pass {spec} failed: {e.render()}")
        raise PassError(spec, e) from e
    logger.info(f"Pass {spec}: {before} -> {count_ops(module)} operator calls")
    return module


def run_pipeline(module: ModuleEnv, ctx: Optional[PassContext] = None, passes: Optional[Sequence[str]] = None) -> ModuleEnv:
    """Apply the context's passes in order to a well-formed module.

    Args:
        module: Module to optimize
        ctx: Pass list, options and calibration data
        passes: Overrides `ctx.passes` when given

    Returns:
        The optimized, type-annotated module

    Raises:
        PassError: Naming the first pass that failed
        WellFormednessError, TypeInferenceError: When the input itself is rejected
    """
    ctx = ctx or PassContext()
    specs = list(ctx.passes if passes is None else passes)
    check_well_formed(module, ctx.registry)
    module = infer(module, ctx.registry)
    for spec in specs:
        module = run_pass(module, spec, ctx)
    return module
