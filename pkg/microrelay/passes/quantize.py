"""Quantization: annotate, calibrate, realize.

Annotation wraps the inputs of quantizable operators in `simulated_quantize`
calls, which compute the quantized value in the original float type. Each call
carries `bits`, `sign`, `scale`, `rounding`, a `kind` (input or weight) and a
`site` number. Calibration sweeps one global power-of-two scale and writes it
into every site. Realization replaces the simulated calls with real integer
arithmetic: multiply, round, clip and cast, and rescales the integer results
of the quantized operators back to float.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..ir.expr import Call, Constant, Expr, Function, GlobalVar, Let, LocalVar, ModuleEnv, OperatorRef
from ..ir.types import FLOAT32, BaseType, TensorType
from ..ir.visitor import ExprMutator
from ..ops.quant_math import ROUNDING_MODES, code_bounds, quant_dtype, quant_step
from ..ops.registry import OperatorDecl, OpRegistry, builtin_registry
from ..runtime.interpreter import interp
from ..utils.config import config
from ..utils.errors import CalibrationFailed, MissingRule, QuantizationError, Uncalibrated
from .common import ScopedMutator, is_op_call, map_user_functions
from .dead_code import eliminate_dead_code

logger = logging.getLogger(__name__)

SIMQ = "simulated_quantize"
CALIBRATION_MODES = ("global", "site")


@dataclass(frozen=True)
class QuantConfig:
    """Parameters shared by every quantization site."""

    bits: int = 8
    sign: int = 1
    scale: float = 0.0
    rounding: str = "round"
    # Accumulator type of quantized operators
    accum_dtype: str = "int32"
    # "global": one scale for every site; "site": one scale per site
    calibration: str = "global"

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError(f"bits must be positive, got {self.bits}")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding!r}")
        if self.calibration not in CALIBRATION_MODES:
            raise ValueError(f"unknown calibration mode {self.calibration!r}; expected one of {CALIBRATION_MODES}")

    @property
    def qtype(self) -> BaseType:
        return quant_dtype(self.bits, self.sign)


@dataclass(frozen=True)
class AnnotateRule:
    """Which arguments of an operator are quantized, and with which kind."""

    op: str
    kinds: tuple[Optional[str], ...]
    # Integer-accumulating realization is possible when every input is quantized.
    realize_integer: bool = True


DEFAULT_RULES: dict[str, AnnotateRule] = {
    "conv2d": AnnotateRule("conv2d", ("input", "weight")),
    "dense": AnnotateRule("dense", ("input", "weight")),
}


def _simq(expr: Expr, qconfig: QuantConfig, kind: str, site: int) -> Call:
    attrs = {
        "bits": qconfig.bits,
        "sign": qconfig.sign,
        "scale": float(qconfig.scale),
        "rounding": qconfig.rounding,
        "kind": kind,
        "site": site,
    }
    return Call(OperatorRef(SIMQ), (expr,), attrs, span=expr.span)


# Annotate


class Annotator(ExprMutator):
    """Wraps each designated operator input in a simulated quantization call."""

    def __init__(self, rules: Mapping[str, AnnotateRule], qconfig: QuantConfig, first_site: int = 0):
        super().__init__()
        self.rules = rules
        self.qconfig = qconfig
        self.site = first_site

    def visit_call(self, expr: Call) -> Expr:
        call = super().visit_call(expr)
        assert isinstance(call, Call)
        if not is_op_call(call):
            return call
        rule = self.rules.get(call.callee.name)  # type: ignore[attr-defined]
        if rule is None:
            return call
        args = list(call.args)
        for i, kind in enumerate(rule.kinds):
            if kind is None or is_op_call(args[i], SIMQ):
                continue
            args[i] = _simq(args[i], self.qconfig, kind, self.site)
            self.site += 1
        return replace(call, args=tuple(args))


def quant_annotate(
    module: ModuleEnv,
    rules: Optional[Mapping[str, AnnotateRule]] = None,
    qconfig: Optional[QuantConfig] = None,
    ops: Optional[Iterable[str]] = None,
) -> ModuleEnv:
    """Insert simulated quantization around the inputs of quantizable operators.

    Args:
        module: Type-checked module
        rules: Annotation rules by operator name (defaults to conv2d and dense)
        qconfig: Bits, sign and rounding for the inserted calls
        ops: Operators to quantize; each one needs a rule (defaults to every rule)

    Raises:
        MissingRule: When an operator listed in `ops` has no rule
    """
    rules = dict(DEFAULT_RULES if rules is None else rules)
    qconfig = qconfig or QuantConfig(bits=config.QUANT_BITS)
    if ops is not None:
        wanted = list(ops)
        for op in wanted:
            if op not in rules:
                raise MissingRule(op)
        rules = {op: rules[op] for op in wanted}
    site = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal site
        annotator = Annotator(rules, qconfig, site)
        result = annotator.visit(fn)
        site = annotator.site
        return result  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.info(f"Annotated {site} quantization sites")
    return module


# Calibrate


def _set_scale(module: ModuleEnv, scale: float, per_site: Optional[Mapping[int, float]] = None) -> ModuleEnv:
    """Write `scale` into every site, or `per_site[site]` where one is given."""
    per_site = per_site or {}

    class _SetScale(ExprMutator):
        def visit_call(self, expr: Call) -> Expr:
            call = super().visit_call(expr)
            if is_op_call(call, SIMQ):
                attrs = dict(call.attrs)  # type: ignore[attr-defined]
                attrs["scale"] = float(per_site.get(int(attrs.get("site", -1)), scale))
                return replace(call, attrs=attrs)
            return call

    return map_user_functions(module, lambda gv, fn: _SetScale().visit(fn))  # type: ignore[arg-type, return-value]


def _observe_sites(
    module: ModuleEnv,
    entry: str,
    calib_inputs: Sequence[Sequence[Any]],
    registry: OpRegistry,
) -> dict[int, float]:
    """Largest magnitude reaching each quantization site over the calibration set."""
    peaks: dict[int, float] = {}

    def on_op(decl: OperatorDecl, attrs: Mapping[str, Any], args: Sequence[Any], result: Any) -> None:
        if decl.name == SIMQ:
            site = int(attrs.get("site", -1))
            value = float(np.max(np.abs(args[0]))) if np.size(args[0]) else 0.0
            peaks[site] = max(peaks.get(site, 0.0), value)

    for inputs in calib_inputs:
        interp(module, entry, inputs, registry, on_op=on_op)
    return peaks


def _observe(
    module: ModuleEnv,
    entry: str,
    calib_inputs: Sequence[Sequence[Any]],
    registry: OpRegistry,
) -> float:
    """Largest magnitude reaching any quantization site over the calibration set."""
    return max(_observe_sites(module, entry, calib_inputs, registry).values(), default=0.0)


def _calibrate_global(
    module: ModuleEnv,
    entry: str,
    calib_inputs: Sequence[Sequence[Any]],
    candidates: list[float],
    registry: OpRegistry,
) -> ModuleEnv:
    transparent = _observe(_set_scale(module, 0.0), entry, calib_inputs, registry)
    for scale in candidates:
        if transparent > scale:
            continue
        trial = _set_scale(module, scale)
        peak = _observe(trial, entry, calib_inputs, registry)
        if peak <= scale:
            logger.info(f"Calibrated global scale {scale} (peak magnitude {peak:.6g})")
            return trial
    raise CalibrationFailed(
        f"no scale in [{candidates[0]}, {candidates[-1]}] covers peak magnitude {transparent:.6g}"
    )


def _calibrate_per_site(
    module: ModuleEnv,
    entry: str,
    calib_inputs: Sequence[Sequence[Any]],
    candidates: list[float],
    registry: OpRegistry,
) -> ModuleEnv:
    def covering(site: int, peak: float) -> float:
        for scale in candidates:
            if peak <= scale:
                return scale
        raise CalibrationFailed(
            f"no scale in [{candidates[0]}, {candidates[-1]}] covers peak magnitude {peak:.6g} at site {site}"
        )

    assigned: dict[int, float] = {}
    trial = _set_scale(module, 0.0)
    peaks = _observe_sites(trial, entry, calib_inputs, registry)
    # Scales only grow, so this settles within one pass per candidate per site.
    for _ in range(len(candidates) * max(1, len(peaks)) + 1):
        grown = False
        for site, peak in peaks.items():
            scale = covering(site, peak)
            if scale > assigned.get(site, 0.0):
                assigned[site] = scale
                grown = True
        if not grown:
            break
        # Sites the calibration set never reaches share the largest scale.
        trial = _set_scale(module, max(assigned.values(), default=candidates[0]), assigned)
        peaks = _observe_sites(trial, entry, calib_inputs, registry)
    else:
        raise CalibrationFailed(f"per-site scales did not settle within [{candidates[0]}, {candidates[-1]}]")
    if not assigned:
        trial = _set_scale(module, candidates[0])
    summary = ", ".join(f"{site}: {scale}" for site, scale in sorted(assigned.items()))
    logger.info(f"Calibrated per-site scales {{{summary}}}")
    return trial


def quant_calibrate(
    module: ModuleEnv,
    calib_inputs: Sequence[Sequence[Any]],
    entry: str = "main",
    scales: Optional[Sequence[float]] = None,
    registry: Optional[OpRegistry] = None,
    granularity: str = "global",
) -> ModuleEnv:
    """Choose power-of-two scales under which no site overflows.

    A site overflows when a value reaching it has a magnitude above its scale.
    With `granularity="global"` one scale, the smallest candidate that avoids
    overflow everywhere, is written into every site. Candidates below the peak
    seen with transparent (uncalibrated) sites are skipped; from there, each
    candidate is checked by running the calibration set with that scale in place.

    With `granularity="site"` each site gets the smallest candidate covering the
    values that reach it. Quantizing one site changes what reaches the sites
    after it, so peaks are re-observed until no scale needs to grow.

    Raises:
        ValueError: On an empty calibration set or an unknown granularity
        CalibrationFailed: When no candidate avoids overflow
    """
    if not calib_inputs:
        raise ValueError("calibration needs at least one input")
    if granularity not in CALIBRATION_MODES:
        raise ValueError(f"unknown calibration mode {granularity!r}; expected one of {CALIBRATION_MODES}")
    registry = registry or builtin_registry()
    candidates = sorted(scales if scales is not None else config.calibration_scales())
    if granularity == "site":
        return _calibrate_per_site(module, entry, calib_inputs, candidates, registry)
    return _calibrate_global(module, entry, calib_inputs, candidates, registry)


# Realize


def _site_params(call: Call) -> tuple[int, int, float, str, int]:
    attrs = call.attrs
    scale = float(attrs.get("scale", 0.0))
    site = int(attrs.get("site", -1))
    if scale <= 0.0:
        raise Uncalibrated(site, call.span)
    return int(attrs.get("bits", 8)), int(attrs.get("sign", 1)), scale, str(attrs.get("rounding", "round")), site


def _float_dtype(expr: Expr) -> BaseType:
    ty = expr.checked_type
    if isinstance(ty, TensorType):
        return ty.dtype
    return FLOAT32


def _scalar(value: float, dtype: BaseType) -> Constant:
    return Constant.of(value, dtype)


def _op(name: str, *args: Expr, **attrs: Any) -> Call:
    return Call(OperatorRef(name), tuple(args), attrs)


def realize_codes(x: Expr, bits: int, sign: int, scale: float, rounding: str, dtype: BaseType) -> Expr:
    """Q(x): cast(clip(round(x * 2^(bits-sign) / scale)), qtype)."""
    lo, hi = code_bounds(bits, sign)
    scaled = _op("multiply", x, _scalar(1.0 / quant_step(bits, sign, scale), dtype))
    if rounding != "round":
        raise QuantizationError(f"only round-to-nearest sites can be realized, got {rounding!r}")
    rounded = _op("round", scaled)
    clipped = _op("clip", rounded, a_min=float(lo), a_max=float(hi))
    return _op("cast", clipped, dtype=str(quant_dtype(bits, sign)))


def dequantize(codes: Expr, step: float, dtype: BaseType) -> Expr:
    return _op("multiply", _op("cast", codes, dtype=str(dtype)), _scalar(step, dtype))


class Realizer(ScopedMutator):
    """Rewrites simulated quantization into integer arithmetic."""

    def __init__(self, rules: Mapping[str, AnnotateRule], accum_dtype: str = "int32"):
        super().__init__()
        self.rules = rules
        self.accum_dtype = accum_dtype
        self.realized = 0
        # Let-bound values before rewriting, so simQ bindings stay recognizable.
        self.original: dict[LocalVar, Expr] = {}

    def rewrite_binding(self, let: Let, value: Expr) -> Optional[Expr]:
        self.original[let.var] = let.value
        return value

    def _quantized_input(self, arg: Expr) -> Optional[Call]:
        node = arg
        while isinstance(node, LocalVar) and node in self.original:
            node = self.original[node]
        return node if is_op_call(node, SIMQ) else None

    def visit_call(self, expr: Call) -> Expr:
        if is_op_call(expr):
            rule = self.rules.get(expr.callee.name)  # type: ignore[attr-defined]
            if rule is not None and rule.realize_integer:
                sims = [self._quantized_input(a) for a in expr.args]
                if all(s is not None for s in sims):
                    return self._integer_op(expr, sims)  # type: ignore[arg-type]
        call = super().visit_call(expr)
        if is_op_call(call, SIMQ):
            bits, sign, scale, rounding, _ = _site_params(call)  # type: ignore[arg-type]
            (x,) = call.args  # type: ignore[attr-defined]
            dtype = _float_dtype(expr)
            self.realized += 1
            codes = realize_codes(x, bits, sign, scale, rounding, dtype)
            return dequantize(codes, quant_step(bits, sign, scale), dtype)
        return call

    def _integer_op(self, expr: Call, sims: list[Call]) -> Expr:
        """op(simQ(a), simQ(b)) -> cast(op(Q(a), Q(b), out_dtype=accum), float) * step_a * step_b."""
        dtype = _float_dtype(expr)
        codes = []
        rescale = 1.0
        for sim in sims:
            bits, sign, scale, rounding, _ = _site_params(sim)
            source = self.visit(sim.args[0])
            codes.append(realize_codes(source, bits, sign, scale, rounding, dtype))
            rescale *= quant_step(bits, sign, scale)
            self.realized += 1
        attrs = dict(expr.attrs)
        attrs["out_dtype"] = self.accum_dtype
        integer = Call(expr.callee, tuple(codes), attrs, span=expr.span)
        return dequantize(integer, rescale, dtype)


def quant_realize(
    module: ModuleEnv,
    rules: Optional[Mapping[str, AnnotateRule]] = None,
    accum_dtype: str = "int32",
) -> ModuleEnv:
    """Replace every simulated quantization with real quantized arithmetic.

    Raises:
        Uncalibrated: When a site still has no scale
    """
    rules = dict(DEFAULT_RULES if rules is None else rules)
    total = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal total
        realizer = Realizer(rules, accum_dtype)
        result = realizer.visit(fn)
        total += realizer.realized
        # Bindings of simQ values consumed only by integer operators are now dead.
        return eliminate_dead_code(result)  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.info(f"Realized {total} quantization sites")
    return module


def quantize(
    module: ModuleEnv,
    calib_inputs: Sequence[Sequence[Any]],
    entry: str = "main",
    qconfig: Optional[QuantConfig] = None,
    rules: Optional[Mapping[str, AnnotateRule]] = None,
    registry: Optional[OpRegistry] = None,
    realize: bool = True,
) -> ModuleEnv:
    """Annotate, calibrate and (optionally) realize in one call.

    Type inference runs between the stages so realization knows the float types.
    """
    from ..infer.inference import infer

    registry = registry or builtin_registry()
    qconfig = qconfig or QuantConfig(bits=config.QUANT_BITS)
    annotated = infer(quant_annotate(module, rules, qconfig), registry)
    calibrated = quant_calibrate(annotated, calib_inputs, entry, registry=registry, granularity=qconfig.calibration)
    calibrated = infer(calibrated, registry)
    if not realize:
        return calibrated
    return quant_realize(calibrated, rules, qconfig.accum_dtype)
