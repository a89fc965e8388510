"""Inference holes and a union-find unifier over the type language."""

from __future__ import annotations

import itertools
import logging
from typing import Any, Callable, Optional

from ..ir.types import (
    ANY,
    Dim,
    DimAny,
    DimConst,
    DimVar,
    FuncType,
    RefType,
    Shape,
    TensorType,
    TupleType,
    Type,
    TypeCall,
    TypeName,
    TypeVar,
    walk_type,
)
from ..utils.errors import UnificationError

logger = logging.getLogger(__name__)

_hole_ids = itertools.count()


class InferVar(Type):
    """A type hole: an unknown type to be solved for."""

    __slots__ = ("id", "hint")

    def __init__(self, hint: str = "t"):
        self.id = next(_hole_ids)
        self.hint = hint

    def __repr__(self) -> str:
        return f"?{self.hint}{self.id}"

    __str__ = __repr__


class DimHole(Dim):
    """An unknown dimension."""

    __slots__ = ("id",)

    def __init__(self) -> None:
        self.id = next(_hole_ids)

    def __repr__(self) -> str:
        return f"?d{self.id}"

    __str__ = __repr__


Hole = InferVar | DimHole


def is_hole(node: Any) -> bool:
    return isinstance(node, (InferVar, DimHole))


def holes_in(ty: Any) -> list[Hole]:
    out: list[Hole] = []
    for node in walk_type(ty):
        if is_hole(node) and not any(node is h for h in out):
            out.append(node)
    return out


class Unifier:
    """Union-find over holes.

    Each hole is either unbound or bound to another hole or to a (possibly
    partial) type. `on_bind` is called with every hole that becomes bound.

    Only holes bind: the `InferVar` and `DimHole` unknowns that inference
    creates, printed as `?t3` or `?d7`. A `DimVar` such as `n` in
    `Tensor[(n, 3), float32]` is rigid, and so is a `TypeVar`: unification
    never binds them, so `n` never takes the value 3.
    """

    def __init__(self, on_bind: Optional[Callable[[Hole, Any], None]] = None):
        self.binding: dict[Hole, Any] = {}
        self.on_bind = on_bind
        self.bind_count = 0

    def find(self, node: Any) -> Any:
        """Follow bindings to an unbound hole or a non-hole, compressing paths."""
        path = []
        while is_hole(node) and node in self.binding:
            path.append(node)
            node = self.binding[node]
        for hole in path[:-1]:
            self.binding[hole] = node
        return node

    def resolve(self, ty: Any) -> Any:
        """Substitute every bound hole inside `ty`."""
        ty = self.find(ty)
        if isinstance(ty, TensorType):
            dims = tuple(self.find(d) for d in ty.shape.dims)
            if all(a is b for a, b in zip(dims, ty.shape.dims)):
                return ty
            return TensorType(Shape(dims), ty.dtype)
        if isinstance(ty, TupleType):
            return TupleType(tuple(self.resolve(f) for f in ty.fields))
        if isinstance(ty, TypeCall):
            return TypeCall(ty.head, tuple(self.resolve(a) for a in ty.args))
        if isinstance(ty, RefType):
            return RefType(self.resolve(ty.inner))
        if isinstance(ty, FuncType):
            return FuncType(
                tuple(self.resolve(a) for a in ty.arg_types),
                self.resolve(ty.ret_type),
                ty.type_params,
                ty.relations,
            )
        return ty

    def _bind(self, hole: Hole, target: Any) -> None:
        if any(h is hole for h in holes_in(self.resolve(target))):
            raise UnificationError(hole, self.resolve(target))
        self.binding[hole] = target
        self.bind_count += 1
        if self.on_bind is not None:
            self.on_bind(hole, target)

    def unify_dims(self, a: Any, b: Any) -> Any:
        a, b = self.find(a), self.find(b)
        if a is b:
            return a
        if isinstance(a, DimAny) or isinstance(b, DimAny):
            # Any absorbs the other side; a hole meeting Any is bound to it.
            for side in (a, b):
                if isinstance(side, DimHole):
                    self._bind(side, ANY)
            return ANY
        if isinstance(a, DimHole):
            self._bind(a, b)
            return b
        if isinstance(b, DimHole):
            self._bind(b, a)
            return a
        if isinstance(a, DimConst) and isinstance(b, DimConst) and a.value == b.value:
            return a
        if isinstance(a, DimVar) and isinstance(b, DimVar) and a.name == b.name:
            return a
        raise UnificationError(a, b)

    def unify(self, a: Any, b: Any) -> Any:
        """Make `a` and `b` equal, returning the merged type."""
        a, b = self.find(a), self.find(b)
        if a is b:
            return a
        if isinstance(a, InferVar):
            self._bind(a, b)
            return b
        if isinstance(b, InferVar):
            self._bind(b, a)
            return a
        if isinstance(a, TensorType) and isinstance(b, TensorType):
            if a.shape.rank != b.shape.rank:
                raise UnificationError(self.resolve(a), self.resolve(b))
            if a.dtype != b.dtype:
                raise UnificationError(a.dtype, b.dtype)
            dims = tuple(self.unify_dims(x, y) for x, y in zip(a.shape.dims, b.shape.dims))
            return TensorType(Shape(dims), a.dtype)
        if isinstance(a, TupleType) and isinstance(b, TupleType):
            if len(a.fields) != len(b.fields):
                raise UnificationError(self.resolve(a), self.resolve(b))
            return TupleType(tuple(self.unify(x, y) for x, y in zip(a.fields, b.fields)))
        if isinstance(a, FuncType) and isinstance(b, FuncType):
            if len(a.arg_types) != len(b.arg_types) or a.type_params != b.type_params:
                raise UnificationError(self.resolve(a), self.resolve(b))
            args = tuple(self.unify(x, y) for x, y in zip(a.arg_types, b.arg_types))
            return FuncType(args, self.unify(a.ret_type, b.ret_type), a.type_params, a.relations)
        if isinstance(a, RefType) and isinstance(b, RefType):
            return RefType(self.unify(a.inner, b.inner))
        if isinstance(a, TypeCall) and isinstance(b, TypeCall):
            if a.head != b.head or len(a.args) != len(b.args):
                raise UnificationError(self.resolve(a), self.resolve(b))
            return TypeCall(a.head, tuple(self.unify(x, y) for x, y in zip(a.args, b.args)))
        if isinstance(a, (TypeVar, TypeName)) and a == b:
            return a
        raise UnificationError(self.resolve(a), self.resolve(b))


def unify(a: Type, b: Type) -> Type:
    """Unify two types with a throwaway unifier and return the merged, resolved type."""
    unifier = Unifier()
    merged = unifier.unify(a, b)
    return unifier.resolve(merged)


def fresh_tensor_holes(rank: int, dtype) -> TensorType:
    return TensorType(Shape(tuple(DimHole() for _ in range(rank))), dtype)
