"""Expression nodes, patterns, tensor literals, ADT declarations and modules.

Every node is an immutable dataclass. Expressions compare by identity so that
shared sub-graphs can be memoized; local variables compare by their unique id.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping, NamedTuple, Optional

import numpy as np

from ..utils.span import SourceSpan
from .types import BaseType, FuncType, Shape, TensorType, Type, TypeCall, TypeName, TypeVar

_EMPTY: Mapping[str, Any] = MappingProxyType({})
_var_ids = itertools.count()


def frozen_attrs(attrs: Optional[Mapping[str, Any]]) -> Mapping[str, Any]:
    """Get a read-only copy of an attribute map with sorted keys."""
    if not attrs:
        return _EMPTY
    return MappingProxyType({k: attrs[k] for k in sorted(attrs)})


# Tensor literals


@dataclass(frozen=True, eq=False)
class TensorLiteral:
    """Row-major constant tensor data."""

    shape: tuple[int, ...]
    dtype: BaseType
    data: np.ndarray

    @classmethod
    def from_array(cls, array: Any, dtype: Optional[BaseType] = None) -> "TensorLiteral":
        arr = np.asarray(array)
        if dtype is None:
            dtype = BaseType.from_numpy(arr.dtype)
        arr = arr.astype(dtype.numpy_dtype, copy=False)
        flat = np.ascontiguousarray(arr).reshape(-1).copy()
        flat.setflags(write=False)
        return cls(tuple(int(d) for d in arr.shape), dtype, flat)

    @classmethod
    def from_flat(cls, values: Iterable[Any], shape: Iterable[int], dtype: BaseType) -> "TensorLiteral":
        """Build a literal without checking the length invariant."""
        flat = np.asarray(list(values), dtype=dtype.numpy_dtype).reshape(-1)
        flat.setflags(write=False)
        return cls(tuple(int(d) for d in shape), dtype, flat)

    @classmethod
    def scalar(cls, value: Any, dtype: BaseType) -> "TensorLiteral":
        return cls.from_array(np.asarray(value, dtype=dtype.numpy_dtype), dtype)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    @property
    def is_well_formed(self) -> bool:
        return self.data.size == self.size and all(d >= 0 for d in self.shape)

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @property
    def type(self) -> TensorType:
        return TensorType(Shape.of(*self.shape), self.dtype)

    def same_as(self, other: "TensorLiteral") -> bool:
        """Bitwise equality of shape, dtype and data (NaNs compare equal)."""
        if self.shape != other.shape or self.dtype != other.dtype:
            return False
        if self.data.shape != other.data.shape:
            return False
        if self.dtype.is_float:
            return bool(np.array_equal(self.data, other.data, equal_nan=True))
        return bool(np.array_equal(self.data, other.data))


# Expressions


@dataclass(frozen=True, eq=False)
class Expr:
    span: Optional[SourceSpan] = field(default=None, kw_only=True, repr=False)
    checked_type: Optional[Type] = field(default=None, kw_only=True, repr=False)

    def with_type(self, ty: Optional[Type]) -> "Expr":
        return replace(self, checked_type=ty)


@dataclass(frozen=True, eq=False)
class LocalVar(Expr):
    name: str
    vid: int = field(default_factory=lambda: next(_var_ids))

    @classmethod
    def fresh(cls, name: str = "x", span: Optional[SourceSpan] = None) -> "LocalVar":
        return cls(name, span=span)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LocalVar) and other.vid == self.vid

    def __hash__(self) -> int:
        return hash(("LocalVar", self.vid))

    def __repr__(self) -> str:
        return f"%{self.name}#{self.vid}"


@dataclass(frozen=True, eq=False)
class GlobalVar(Expr):
    name: str

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GlobalVar) and other.name == self.name

    def __hash__(self) -> int:
        return hash(("GlobalVar", self.name))

    def __repr__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True, eq=False)
class Constant(Expr):
    data: TensorLiteral

    @classmethod
    def of(cls, value: Any, dtype: Optional[BaseType] = None) -> "Constant":
        return cls(TensorLiteral.from_array(value, dtype))


@dataclass(frozen=True, eq=False)
class OperatorRef(Expr):
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Constructor(Expr):
    """Reference to an ADT constructor; applied with `Call` when it has fields."""

    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Call(Expr):
    callee: Expr
    args: tuple[Expr, ...] = ()
    attrs: Mapping[str, Any] = field(default=_EMPTY)
    type_args: tuple[Type, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "attrs", frozen_attrs(self.attrs))
        object.__setattr__(self, "type_args", tuple(self.type_args))

    @property
    def op_name(self) -> Optional[str]:
        return self.callee.name if isinstance(self.callee, OperatorRef) else None


@dataclass(frozen=True, eq=False)
class Let(Expr):
    var: LocalVar
    value: Expr
    body: Expr
    type_annotation: Optional[Type] = None


class Param(NamedTuple):
    var: LocalVar
    annotation: Optional[Type] = None


PRIMITIVE = "Primitive"


@dataclass(frozen=True, eq=False)
class Function(Expr):
    params: tuple[Param, ...]
    body: Expr
    ret_type: Optional[Type] = None
    type_params: tuple[TypeVar, ...] = ()
    attrs: Mapping[str, Any] = field(default=_EMPTY)

    def __post_init__(self) -> None:
        params = tuple(p if isinstance(p, Param) else Param(*p) for p in self.params)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "type_params", tuple(self.type_params))
        object.__setattr__(self, "attrs", frozen_attrs(self.attrs))

    @property
    def param_vars(self) -> tuple[LocalVar, ...]:
        return tuple(p.var for p in self.params)

    @property
    def is_primitive(self) -> bool:
        return bool(self.attrs.get(PRIMITIVE, 0))

    def declared_type(self) -> Optional[FuncType]:
        """The function type when every parameter and the result are annotated."""
        if self.ret_type is None or any(p.annotation is None for p in self.params):
            return None
        return FuncType(
            tuple(p.annotation for p in self.params),  # type: ignore[misc]
            self.ret_type,
            self.type_params,
        )


@dataclass(frozen=True, eq=False)
class Tuple(Expr):
    fields: tuple[Expr, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))


@dataclass(frozen=True, eq=False)
class Projection(Expr):
    tuple_value: Expr
    index: int


@dataclass(frozen=True, eq=False)
class If(Expr):
    cond: Expr
    then_branch: Expr
    else_branch: Expr


# Patterns


@dataclass(frozen=True, eq=False)
class Pattern:
    span: Optional[SourceSpan] = field(default=None, kw_only=True, repr=False)


@dataclass(frozen=True, eq=False)
class PatternWildcard(Pattern):
    pass


@dataclass(frozen=True, eq=False)
class PatternVar(Pattern):
    var: LocalVar


@dataclass(frozen=True, eq=False)
class PatternConstructor(Pattern):
    name: str
    patterns: tuple[Pattern, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))


@dataclass(frozen=True, eq=False)
class PatternTuple(Pattern):
    patterns: tuple[Pattern, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))


def pattern_vars(pattern: Pattern) -> list[LocalVar]:
    """Variables bound by a pattern, left to right."""
    if isinstance(pattern, PatternVar):
        return [pattern.var]
    if isinstance(pattern, (PatternConstructor, PatternTuple)):
        out: list[LocalVar] = []
        for p in pattern.patterns:
            out.extend(pattern_vars(p))
        return out
    return []


class Clause(NamedTuple):
    pattern: Pattern
    body: Expr


@dataclass(frozen=True, eq=False)
class Match(Expr):
    scrutinee: Expr
    clauses: tuple[Clause, ...]

    def __post_init__(self) -> None:
        clauses = tuple(c if isinstance(c, Clause) else Clause(*c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)


@dataclass(frozen=True, eq=False)
class RefNew(Expr):
    init: Expr


@dataclass(frozen=True, eq=False)
class RefRead(Expr):
    ref: Expr


@dataclass(frozen=True, eq=False)
class RefWrite(Expr):
    ref: Expr
    value: Expr


ATOMS = (LocalVar, GlobalVar, Constant, OperatorRef, Constructor)


def is_atom(expr: Expr) -> bool:
    return isinstance(expr, ATOMS)


def children(expr: Expr) -> Iterator[Expr]:
    """Immediate sub-expressions in evaluation order."""
    if isinstance(expr, Call):
        yield expr.callee
        yield from expr.args
    elif isinstance(expr, Let):
        yield expr.value
        yield expr.body
    elif isinstance(expr, Function):
        yield expr.body
    elif isinstance(expr, Tuple):
        yield from expr.fields
    elif isinstance(expr, Projection):
        yield expr.tuple_value
    elif isinstance(expr, If):
        yield expr.cond
        yield expr.then_branch
        yield expr.else_branch
    elif isinstance(expr, Match):
        yield expr.scrutinee
        for clause in expr.clauses:
            yield clause.body
    elif isinstance(expr, RefNew):
        yield expr.init
    elif isinstance(expr, RefRead):
        yield expr.ref
    elif isinstance(expr, RefWrite):
        yield expr.ref
        yield expr.value


def let_chain(expr: Expr) -> tuple[list[Let], Expr]:
    """Split nested lets into their bindings and the final body."""
    bindings: list[Let] = []
    while isinstance(expr, Let):
        bindings.append(expr)
        expr = expr.body
    return bindings, expr


def build_lets(bindings: Iterable[tuple[LocalVar, Expr]], body: Expr) -> Expr:
    """Nest `let` bindings around `body`, first binding outermost."""
    for var, value in reversed(list(bindings)):
        body = Let(var, value, body)
    return body


# Algebraic data types and modules


@dataclass(frozen=True)
class ConstructorDef:
    name: str
    fields: tuple[Type, ...] = ()
    tag: int = 0


@dataclass(frozen=True)
class AdtDef:
    name: str
    type_params: tuple[TypeVar, ...]
    constructors: tuple[ConstructorDef, ...]

    @property
    def head(self) -> TypeName:
        return TypeName(self.name)

    def self_type(self) -> TypeCall:
        return TypeCall(self.head, tuple(self.type_params))

    def constructor(self, name: str) -> ConstructorDef:
        for ctor in self.constructors:
            if ctor.name == name:
                return ctor
        raise KeyError(name)

    def constructor_type(self, name: str) -> Type:
        """Type of the constructor reference: a function unless it has no fields."""
        ctor = self.constructor(name)
        if not ctor.fields:
            return self.self_type()
        return FuncType(ctor.fields, self.self_type(), self.type_params)


@dataclass(frozen=True)
class ModuleEnv:
    """Global functions and ADT declarations of a program."""

    globals: Mapping[GlobalVar, Function] = field(default_factory=dict)
    adts: Mapping[str, AdtDef] = field(default_factory=dict)
    prelude_names: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "globals", MappingProxyType(dict(self.globals)))
        object.__setattr__(self, "adts", MappingProxyType(dict(self.adts)))

    @classmethod
    def from_expr(cls, expr: Expr, base: Optional["ModuleEnv"] = None, name: str = "main") -> "ModuleEnv":
        """Wrap an expression as the body of a parameterless `@main` (or the function itself)."""
        fn = expr if isinstance(expr, Function) else Function((), expr)
        base = base or cls()
        return base.with_global(GlobalVar(name), fn)

    def get_global(self, name: str) -> GlobalVar:
        gv = GlobalVar(name)
        if gv not in self.globals:
            raise KeyError(f"@{name}")
        return gv

    def __getitem__(self, name: str) -> Function:
        return self.globals[self.get_global(name)]

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and GlobalVar(name) in self.globals

    def lookup_constructor(self, name: str) -> tuple[AdtDef, ConstructorDef]:
        for adt in self.adts.values():
            for ctor in adt.constructors:
                if ctor.name == name:
                    return adt, ctor
        raise KeyError(name)

    def constructor_names(self) -> set[str]:
        return {c.name for adt in self.adts.values() for c in adt.constructors}

    def with_global(self, gv: GlobalVar, fn: Function) -> "ModuleEnv":
        updated = dict(self.globals)
        updated[gv] = fn
        return replace(self, globals=updated)

    def with_globals(self, functions: Mapping[GlobalVar, Function]) -> "ModuleEnv":
        return replace(self, globals=dict(functions))

    def with_adt(self, adt: AdtDef) -> "ModuleEnv":
        updated = dict(self.adts)
        updated[adt.name] = adt
        return replace(self, adts=updated)

    def user_globals(self) -> list[GlobalVar]:
        return [gv for gv in self.globals if gv.name not in self.prelude_names]
