"""Base types, shapes and the type language of the IR."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Optional

import numpy as np


class TypeCode(enum.Enum):
    Int = "int"
    UInt = "uint"
    Float = "float"
    Bool = "bool"


_VALID_BITS = (1, 8, 16, 32, 64)
_BASE_TYPE_RE = re.compile(r"^(int|uint|float|bool)(\d+)?(?:x(\d+))?$")


@dataclass(frozen=True)
class BaseType:
    """Element type of a tensor: kind, bit width and vector lanes."""

    code: TypeCode
    bits: int
    lanes: int = 1

    def __post_init__(self) -> None:
        if self.bits not in _VALID_BITS:
            raise ValueError(f"invalid bit width {self.bits}")
        if self.lanes < 1:
            raise ValueError(f"invalid lane count {self.lanes}")
        if (self.code is TypeCode.Bool) != (self.bits == 1):
            raise ValueError("bool is exactly the 1-bit type")
        if self.code is TypeCode.Float and self.bits < 16:
            raise ValueError(f"no float{self.bits} type")

    @classmethod
    def parse(cls, name: str) -> "BaseType":
        """Parse names such as `float32`, `int8`, `bool` or `float32x4`."""
        match = _BASE_TYPE_RE.match(name)
        if match is None:
            raise ValueError(f"not a base type: {name!r}")
        code = TypeCode(match.group(1))
        if code is TypeCode.Bool:
            if match.group(2) is not None:
                raise ValueError(f"not a base type: {name!r}")
            bits = 1
        elif match.group(2) is None:
            raise ValueError(f"missing bit width in {name!r}")
        else:
            bits = int(match.group(2))
        lanes = int(match.group(3)) if match.group(3) else 1
        return cls(code, bits, lanes)

    @classmethod
    def from_numpy(cls, dtype: Any) -> "BaseType":
        dtype = np.dtype(dtype)
        if dtype == np.bool_:
            return BOOL
        return cls.parse(dtype.name)

    @property
    def is_float(self) -> bool:
        return self.code is TypeCode.Float

    @property
    def is_bool(self) -> bool:
        return self.code is TypeCode.Bool

    @property
    def is_integral(self) -> bool:
        return self.code in (TypeCode.Int, TypeCode.UInt)

    @property
    def numpy_dtype(self) -> np.dtype:
        if self.lanes != 1:
            raise ValueError(f"{self} has no scalar numpy equivalent")
        if self.is_bool:
            return np.dtype(np.bool_)
        return np.dtype(f"{self.code.value}{self.bits}")

    def __str__(self) -> str:
        name = "bool" if self.is_bool else f"{self.code.value}{self.bits}"
        return name if self.lanes == 1 else f"{name}x{self.lanes}"


FLOAT16 = BaseType(TypeCode.Float, 16)
FLOAT32 = BaseType(TypeCode.Float, 32)
FLOAT64 = BaseType(TypeCode.Float, 64)
INT8 = BaseType(TypeCode.Int, 8)
INT16 = BaseType(TypeCode.Int, 16)
INT32 = BaseType(TypeCode.Int, 32)
INT64 = BaseType(TypeCode.Int, 64)
UINT8 = BaseType(TypeCode.UInt, 8)
BOOL = BaseType(TypeCode.Bool, 1)


# Dimensions


class Dim:
    """A single tensor dimension."""

    @property
    def is_const(self) -> bool:
        return False


@dataclass(frozen=True)
class DimConst(Dim):
    value: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError(f"negative dimension {self.value}")

    @property
    def is_const(self) -> bool:
        return True

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class DimVar(Dim):
    """A named shape variable, bound by the enclosing function type."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class DimAny(Dim):
    """A dynamic dimension exempt from static shape constraints."""

    def __str__(self) -> str:
        return "?"


ANY = DimAny()


def as_dim(value: Any) -> Dim:
    if isinstance(value, Dim):
        return value
    if isinstance(value, (int, np.integer)):
        return DimConst(int(value))
    if value == "?":
        return ANY
    if isinstance(value, str):
        return DimVar(value)
    raise TypeError(f"cannot use {value!r} as a dimension")


@dataclass(frozen=True)
class Shape:
    dims: tuple[Dim, ...] = ()

    @classmethod
    def of(cls, *dims: Any) -> "Shape":
        return cls(tuple(as_dim(d) for d in dims))

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def is_concrete(self) -> bool:
        return all(d.is_const for d in self.dims)

    def as_ints(self) -> tuple[int, ...]:
        if not self.is_concrete:
            raise ValueError(f"shape {self} is not concrete")
        return tuple(d.value for d in self.dims)  # type: ignore[attr-defined]

    def __iter__(self) -> Iterator[Dim]:
        return iter(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, index: int) -> Dim:
        return self.dims[index]

    def __str__(self) -> str:
        if len(self.dims) == 1:
            return f"({self.dims[0]},)"
        return "(" + ", ".join(str(d) for d in self.dims) + ")"


# Types


class Type:
    """Base class of the type language."""


@dataclass(frozen=True)
class TensorType(Type):
    shape: Shape
    dtype: BaseType

    @classmethod
    def of(cls, shape: Any, dtype: Any = FLOAT32) -> "TensorType":
        if not isinstance(shape, Shape):
            shape = Shape.of(*shape)
        if not isinstance(dtype, BaseType):
            dtype = BaseType.parse(str(dtype))
        return cls(shape, dtype)

    @classmethod
    def scalar(cls, dtype: BaseType) -> "TensorType":
        return cls(Shape(), dtype)

    def __str__(self) -> str:
        return f"Tensor[{self.shape}, {self.dtype}]"


@dataclass(frozen=True)
class TupleType(Type):
    fields: tuple[Type, ...] = ()

    def __str__(self) -> str:
        if len(self.fields) == 1:
            return f"({self.fields[0]},)"
        return "(" + ", ".join(str(f) for f in self.fields) + ")"


UNIT = TupleType(())


@dataclass(frozen=True)
class TypeVar(Type):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TypeName(Type):
    """The head of an algebraic data type."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TypeCall(Type):
    head: TypeName
    args: tuple[Type, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return str(self.head)
        return f"{self.head}[" + ", ".join(str(a) for a in self.args) + "]"


@dataclass(frozen=True)
class RefType(Type):
    inner: Type

    def __str__(self) -> str:
        return f"Ref[{self.inner}]"


@dataclass(frozen=True, eq=False)
class RelationInstance:
    """A type relation applied to argument types followed by the result type."""

    relation: str
    types: tuple[Any, ...]
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelationInstance):
            return NotImplemented
        return (
            self.relation == other.relation
            and self.types == other.types
            and dict(self.attrs) == dict(other.attrs)
        )

    def __hash__(self) -> int:
        return hash((self.relation, self.types))

    def __str__(self) -> str:
        return f"{self.relation}(" + ", ".join(str(t) for t in self.types) + ")"


@dataclass(frozen=True)
class FuncType(Type):
    arg_types: tuple[Type, ...]
    ret_type: Type
    type_params: tuple[TypeVar, ...] = ()
    relations: tuple[RelationInstance, ...] = ()

    def __str__(self) -> str:
        params = ""
        if self.type_params:
            params = "<" + ", ".join(str(t) for t in self.type_params) + ">"
        args = ", ".join(str(a) for a in self.arg_types)
        text = f"fn{params}({args}) -> {self.ret_type}"
        if self.relations:
            text += " where " + ", ".join(str(r) for r in self.relations)
        return text


# Structural helpers


def walk_type(ty: Any) -> Iterator[Any]:
    """Yield every type and dimension nested inside `ty`, preorder."""
    yield ty
    if isinstance(ty, TensorType):
        yield from ty.shape.dims
    elif isinstance(ty, TupleType):
        for f in ty.fields:
            yield from walk_type(f)
    elif isinstance(ty, TypeCall):
        for a in ty.args:
            yield from walk_type(a)
    elif isinstance(ty, RefType):
        yield from walk_type(ty.inner)
    elif isinstance(ty, FuncType):
        for a in ty.arg_types:
            yield from walk_type(a)
        yield from walk_type(ty.ret_type)
        for rel in ty.relations:
            for t in rel.types:
                yield from walk_type(t)


def substitute_type(ty: Any, mapping: Mapping[Any, Any]) -> Any:
    """Replace type variables, shape variables (or holes) according to `mapping`.

    Keys are compared with `==`, so both `TypeVar`/`DimVar` values and inference
    holes may be substituted.
    """
    if not mapping:
        return ty
    if isinstance(ty, (Type, Dim)) and not isinstance(ty, (TensorType, TupleType, TypeCall, RefType, FuncType)):
        try:
            return mapping.get(ty, ty)
        except TypeError:
            return ty
    if isinstance(ty, TensorType):
        dims = tuple(substitute_type(d, mapping) for d in ty.shape.dims)
        return TensorType(Shape(dims), ty.dtype)
    if isinstance(ty, TupleType):
        return TupleType(tuple(substitute_type(f, mapping) for f in ty.fields))
    if isinstance(ty, TypeCall):
        return TypeCall(ty.head, tuple(substitute_type(a, mapping) for a in ty.args))
    if isinstance(ty, RefType):
        return RefType(substitute_type(ty.inner, mapping))
    if isinstance(ty, FuncType):
        inner = {k: v for k, v in mapping.items() if k not in ty.type_params}
        return FuncType(
            tuple(substitute_type(a, inner) for a in ty.arg_types),
            substitute_type(ty.ret_type, inner),
            ty.type_params,
            tuple(
                RelationInstance(
                    r.relation,
                    tuple(substitute_type(t, inner) for t in r.types),
                    r.attrs,
                )
                for r in ty.relations
            ),
        )
    return ty


def dim_vars(ty: Any) -> list[DimVar]:
    """Collect shape variables in first-occurrence order."""
    seen: list[DimVar] = []
    for node in walk_type(ty):
        if isinstance(node, DimVar) and node not in seen:
            seen.append(node)
    return seen


def is_concrete_type(ty: Any) -> bool:
    """True when no type variable, shape variable or hole remains (Any is allowed)."""
    for node in walk_type(ty):
        if isinstance(node, (TensorType, TupleType, TypeCall, RefType, FuncType, TypeName)):
            continue
        if isinstance(node, (DimConst, DimAny)):
            continue
        return False
    return True
