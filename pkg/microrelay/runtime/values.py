"""Runtime values produced by the interpreter."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Union

import numpy as np

from ..ir.expr import Function, LocalVar, TensorLiteral
from ..ir.types import BaseType, Shape, TensorType
from ..utils.errors import RuntimeTrap


@dataclass(frozen=True, eq=False)
class TensorValue:
    array: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "array", np.asarray(self.array))

    @classmethod
    def from_literal(cls, lit: TensorLiteral) -> "TensorValue":
        return cls(lit.array)

    @property
    def dtype(self) -> BaseType:
        return BaseType.from_numpy(self.array.dtype)

    @property
    def type(self) -> TensorType:
        return TensorType(Shape.of(*self.array.shape), self.dtype)

    def to_literal(self) -> TensorLiteral:
        return TensorLiteral.from_array(self.array)


@dataclass(frozen=True, eq=False)
class TupleValue:
    fields: tuple["Value", ...] = ()


@dataclass(frozen=True, eq=False)
class Closure:
    """A function literal together with the values of its free variables."""

    fn: Function
    env: Mapping[LocalVar, "Value"] = field(default_factory=dict)
    name: Optional[str] = None


@dataclass(frozen=True, eq=False)
class OpClosure:
    """An operator used as a first-class function."""

    op: str
    attrs: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ConstructorValue:
    """A constructor with fields, not yet applied."""

    name: str
    tag: int
    arity: int


@dataclass(frozen=True, eq=False)
class AdtValue:
    name: str
    tag: int
    fields: tuple["Value", ...] = ()


@dataclass(frozen=True, eq=False)
class RefValue:
    cell: int


Value = Union[TensorValue, TupleValue, Closure, OpClosure, ConstructorValue, AdtValue, RefValue]


class Store:
    """Mutable reference cells of one execution; ids are never reused."""

    def __init__(self) -> None:
        self.cells: dict[int, Value] = {}
        self._ids = itertools.count()

    def new(self, value: Value) -> RefValue:
        cell = next(self._ids)
        self.cells[cell] = value
        return RefValue(cell)

    def read(self, ref: RefValue) -> Value:
        try:
            return self.cells[ref.cell]
        except KeyError:
            raise RuntimeTrap(f"dangling reference to cell {ref.cell}") from None

    def write(self, ref: RefValue, value: Value) -> None:
        if ref.cell not in self.cells:
            raise RuntimeTrap(f"dangling reference to cell {ref.cell}")
        self.cells[ref.cell] = value


def to_value(obj: Any) -> Value:
    """Convert arrays, numbers and (nested) tuples of them to runtime values."""
    if isinstance(obj, (TensorValue, TupleValue, Closure, OpClosure, ConstructorValue, AdtValue, RefValue)):
        return obj
    if isinstance(obj, TensorLiteral):
        return TensorValue.from_literal(obj)
    if isinstance(obj, tuple):
        return TupleValue(tuple(to_value(f) for f in obj))
    return TensorValue(np.asarray(obj))


def _element(value: Any, dtype: np.dtype) -> str:
    if dtype == np.bool_:
        return "True" if bool(value) else "False"
    if dtype.kind == "f":
        return str(dtype.type(value))
    return str(int(value))


def _nested(array: np.ndarray) -> str:
    if array.ndim == 0:
        return _element(array[()], array.dtype)
    return "[" + ", ".join(_nested(sub) for sub in array) + "]"


def format_value(value: Value) -> str:
    """Render a value the way `run` prints results: `[1, 2]`, `6`, `Cons(1, Nil)`."""
    if isinstance(value, TensorValue):
        return _nested(value.array)
    if isinstance(value, TupleValue):
        items = [format_value(f) for f in value.fields]
        return "(" + ", ".join(items) + ("," if len(items) == 1 else "") + ")"
    if isinstance(value, AdtValue):
        if not value.fields:
            return value.name
        return value.name + "(" + ", ".join(format_value(f) for f in value.fields) + ")"
    if isinstance(value, RefValue):
        return f"ref(#{value.cell})"
    if isinstance(value, Closure):
        return f"<closure {value.name or 'fn'}>"
    if isinstance(value, OpClosure):
        return f"<operator {value.op}>"
    if isinstance(value, ConstructorValue):
        return f"<constructor {value.name}>"
    raise TypeError(f"not a value: {value!r}")


def values_close(a: Value, b: Value, rtol: float = 1e-5, atol: float = 1e-6) -> bool:
    """Structural comparison: exact for integers and booleans, tolerant for floats."""
    if isinstance(a, TensorValue) and isinstance(b, TensorValue):
        x, y = a.array, b.array
        if x.shape != y.shape or x.dtype != y.dtype:
            return False
        if x.dtype.kind == "f":
            return bool(np.allclose(x, y, rtol=rtol, atol=atol, equal_nan=True))
        return bool(np.array_equal(x, y))
    if isinstance(a, TupleValue) and isinstance(b, TupleValue):
        return len(a.fields) == len(b.fields) and all(
            values_close(x, y, rtol, atol) for x, y in zip(a.fields, b.fields)
        )
    if isinstance(a, AdtValue) and isinstance(b, AdtValue):
        return (
            a.name == b.name
            and len(a.fields) == len(b.fields)
            and all(values_close(x, y, rtol, atol) for x, y in zip(a.fields, b.fields))
        )
    return a is b


def value_type(value: Value) -> Optional[Any]:
    """Type of a first-order value (tensors and tuples of them), else None."""
    from ..ir.types import TupleType

    if isinstance(value, TensorValue):
        return value.type
    if isinstance(value, TupleValue):
        fields = [value_type(f) for f in value.fields]
        if any(f is None for f in fields):
            return None
        return TupleType(tuple(fields))
    return None


def random_value(ty: Any, rng: np.random.Generator) -> Value:
    """A random first-order value of a concrete tensor or tuple type.

    Floats are standard normal, integers are drawn from [-5, 5] and booleans
    are fair coin flips.

    Raises:
        ValueError: For shapes with unknown dimensions or higher-order types
    """
    from ..ir.types import TupleType

    if isinstance(ty, TupleType):
        return TupleValue(tuple(random_value(f, rng) for f in ty.fields))
    if not isinstance(ty, TensorType) or not ty.shape.is_concrete:
        raise ValueError(f"cannot generate a random value of type {ty}")
    shape = ty.shape.as_ints()
    if ty.dtype.is_bool:
        array = rng.random(shape) < 0.5
    elif ty.dtype.is_float:
        array = rng.standard_normal(shape)
    else:
        array = rng.integers(-5, 6, size=shape)
    return TensorValue(np.asarray(array).astype(ty.dtype.numpy_dtype))
