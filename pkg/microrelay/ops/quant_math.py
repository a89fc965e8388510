"""Numeric definition of simulated and real quantization.

With step = scale / 2**(bits - sign):

    simQ(x) = clip(round(x / step), lo, hi) * step
    Q(x)    = cast(clip(round(x / step), lo, hi), qtype)

where [lo, hi] is [-2**(bits-1), 2**(bits-1) - 1] for signed (sign = 1) and
[0, 2**bits - 1] for unsigned (sign = 0) codes. Division by the step is
computed as multiplication by its reciprocal, exactly as realized programs do.
"""

from typing import Optional

import numpy as np

from ..ir.types import BaseType, TypeCode

ROUNDING_MODES = ("round", "floor", "ceil", "stochastic")


def code_bounds(bits: int, sign: int) -> tuple[int, int]:
    """Get the representable integer range for `bits` with or without a sign bit."""
    if bits < 1:
        raise ValueError(f"bits must be positive, got {bits}")
    if sign:
        return -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    return 0, 2**bits - 1


def quant_step(bits: int, sign: int, scale: float) -> float:
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return float(scale) / 2.0 ** (bits - sign)


def quant_dtype(bits: int, sign: int) -> BaseType:
    """Smallest integer type holding `bits`-bit codes."""
    for width in (8, 16, 32, 64):
        if bits <= width:
            return BaseType(TypeCode.Int if sign else TypeCode.UInt, width)
    raise ValueError(f"no integer type holds {bits} bits")


def round_values(values: np.ndarray, rounding: str = "round", seed: Optional[int] = 0) -> np.ndarray:
    """Round with the given strategy; `round` is half-to-even."""
    if rounding == "round":
        return np.rint(values)
    if rounding == "floor":
        return np.floor(values)
    if rounding == "ceil":
        return np.ceil(values)
    if rounding == "stochastic":
        rng = np.random.default_rng(seed)
        noise = rng.random(np.shape(values)).astype(np.asarray(values).dtype)
        return np.floor(values + noise)
    raise ValueError(f"unknown rounding mode {rounding!r}; expected one of {ROUNDING_MODES}")


def quantize_codes(
    x: np.ndarray, bits: int, sign: int, scale: float, rounding: str = "round"
) -> np.ndarray:
    """Clipped integer codes, still in the floating type of `x`."""
    x = np.asarray(x)
    lo, hi = code_bounds(bits, sign)
    inv_step = np.asarray(1.0 / quant_step(bits, sign, scale), dtype=x.dtype)
    with np.errstate(all="ignore"):
        codes = round_values(x * inv_step, rounding)
    return np.clip(codes, lo, hi).astype(x.dtype)


def simulated_quantize_array(
    x: np.ndarray, bits: int = 8, sign: int = 1, scale: float = 1.0, rounding: str = "round"
) -> np.ndarray:
    """simQ: quantize and immediately rescale, staying in the input's float type."""
    x = np.asarray(x)
    step = np.asarray(quant_step(bits, sign, scale), dtype=x.dtype)
    return quantize_codes(x, bits, sign, scale, rounding) * step


def quantize_array(
    x: np.ndarray, bits: int = 8, sign: int = 1, scale: float = 1.0, rounding: str = "round"
) -> np.ndarray:
    """Q: the integer codes cast to the narrow storage type."""
    codes = quantize_codes(x, bits, sign, scale, rounding)
    return codes.astype(quant_dtype(bits, sign).numpy_dtype)


def dequantize_array(q: np.ndarray, bits: int, sign: int, scale: float, dtype=np.float32) -> np.ndarray:
    step = np.asarray(quant_step(bits, sign, scale), dtype=dtype)
    return np.asarray(q).astype(dtype) * step
