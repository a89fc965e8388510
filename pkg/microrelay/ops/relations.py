"""Type relations: executable constraints between operator argument and result types.

A relation receives the argument types followed by the result type. Slots that
are still unknown to the solver arrive as inference holes; a relation never
inspects a hole, it only reuses it. The outcome is one of:

* `Holds`: every slot is known and the constraint is satisfied.
* `Fails(reason)`: the constraint can never be satisfied.
* `Progress(assignments)`: slot index -> type to unify (possibly empty).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

from ..ir.types import (
    ANY,
    BOOL,
    INT32,
    BaseType,
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

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Holds:
    pass


@dataclass(frozen=True)
class Fails:
    reason: str = ""


@dataclass(frozen=True)
class Progress:
    assignments: Mapping[int, Type] = field(default_factory=dict)


RelationResult = Holds | Fails | Progress
RelationFn = Callable[[Sequence[Any], Mapping[str, Any]], RelationResult]

HOLDS = Holds()
WAIT = Progress({})

_KNOWN_TYPES = (TensorType, TupleType, TypeCall, TypeName, TypeVar, RefType, FuncType)
_KNOWN_DIMS = (DimConst, DimVar, DimAny)


class _Incompatible(Exception):
    pass


class _Unknown(Exception):
    pass


def is_hole(ty: Any) -> bool:
    """True for a type (or dimension) the solver has not determined yet."""
    return not isinstance(ty, _KNOWN_TYPES + _KNOWN_DIMS)


def is_resolved(ty: Any) -> bool:
    """True when `ty` contains no holes (rigid variables and Any are allowed)."""
    return not any(is_hole(node) for node in walk_type(ty))


def _tensor(ty: Any, what: str = "argument") -> TensorType:
    if isinstance(ty, TensorType):
        return ty
    if is_hole(ty):
        raise _Unknown()
    raise _Incompatible(f"{what} must be a tensor, found {ty}")


def _const(dim: Dim) -> Optional[int]:
    return dim.value if isinstance(dim, DimConst) else None


def _finish(types: Sequence[Any], out: Type) -> RelationResult:
    slot = len(types) - 1
    if is_resolved(types[slot]) and types[slot] == out:
        return HOLDS
    return Progress({slot: out})


def _axis(axis: int, rank: int, extra: int = 0) -> int:
    limit = rank + extra
    if not -limit <= axis < limit:
        raise _Incompatible(f"axis {axis} out of range for rank {rank}")
    return axis + limit if axis < 0 else axis


# Broadcasting


def broadcast_dim(a: Any, b: Any) -> Any:
    """Combine two right-aligned dimensions under the broadcasting rule."""
    if isinstance(a, DimAny) or isinstance(b, DimAny):
        return ANY
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        if ca == cb or cb == 1:
            return a
        if ca == 1:
            return b
        raise _Incompatible(f"dimensions {ca} and {cb} do not broadcast")
    if ca == 1:
        return b
    if cb == 1:
        return a
    if a is b or (isinstance(a, DimVar) and a == b):
        return a
    if ca is not None:
        return a
    if cb is not None:
        return b
    if isinstance(a, DimVar) and isinstance(b, DimVar):
        return ANY
    raise _Unknown()


def broadcast_shapes(a: Shape, b: Shape) -> Shape:
    rank = max(a.rank, b.rank)
    pa = (DimConst(1),) * (rank - a.rank) + a.dims
    pb = (DimConst(1),) * (rank - b.rank) + b.dims
    return Shape(tuple(broadcast_dim(x, y) for x, y in zip(pa, pb)))


def _broadcast(types: Sequence[Any], attrs: Mapping[str, Any], out_dtype: Optional[BaseType] = None,
               require_bool: bool = False) -> RelationResult:
    a, b = _tensor(types[0]), _tensor(types[1])
    if a.dtype != b.dtype:
        return Fails(f"dtype mismatch {a.dtype} vs {b.dtype}")
    if require_bool and not a.dtype.is_bool:
        return Fails(f"expected bool operands, found {a.dtype}")
    shape = broadcast_shapes(a.shape, b.shape)
    return _finish(types, TensorType(shape, out_dtype or a.dtype))


def broadcast_rel(types, attrs):
    return _broadcast(types, attrs)


def broadcast_compare_rel(types, attrs):
    return _broadcast(types, attrs, out_dtype=BOOL)


def broadcast_logical_rel(types, attrs):
    return _broadcast(types, attrs, out_dtype=BOOL, require_bool=True)


# Elementwise


def identity_rel(types, attrs):
    return _finish(types, _tensor(types[0]))


def float_identity_rel(types, attrs):
    data = _tensor(types[0])
    if not data.dtype.is_float:
        return Fails(f"expected a float tensor, found {data.dtype}")
    return _finish(types, data)


def bool_identity_rel(types, attrs):
    data = _tensor(types[0])
    if not data.dtype.is_bool:
        return Fails(f"expected a bool tensor, found {data.dtype}")
    return _finish(types, data)


def cast_rel(types, attrs):
    data = _tensor(types[0])
    try:
        dtype = BaseType.parse(str(attrs["dtype"]))
    except (KeyError, ValueError) as exc:
        return Fails(f"bad cast dtype: {exc}")
    return _finish(types, TensorType(data.shape, dtype))


# Shape manipulation


def reshape_rel(types, attrs):
    data = _tensor(types[0])
    newshape = [int(d) for d in attrs["newshape"]]
    if newshape.count(-1) > 1:
        return Fails("at most one -1 is allowed in newshape")
    if any(d < -1 for d in newshape):
        return Fails(f"invalid newshape {tuple(newshape)}")
    if any(is_hole(d) for d in data.shape.dims):
        raise _Unknown()
    if data.shape.is_concrete:
        total = 1
        for d in data.shape.as_ints():
            total *= d
        known = 1
        for d in newshape:
            if d != -1:
                known *= d
        if -1 in newshape:
            if known == 0 or total % known:
                return Fails(f"cannot reshape {data.shape} to {tuple(newshape)}")
            newshape[newshape.index(-1)] = total // known
        elif known != total:
            return Fails(f"cannot reshape {data.shape} to {tuple(newshape)}")
        return _finish(types, TensorType(Shape.of(*newshape), data.dtype))
    dims = [ANY if d == -1 else DimConst(d) for d in newshape]
    return _finish(types, TensorType(Shape(tuple(dims)), data.dtype))


def transpose_rel(types, attrs):
    data = _tensor(types[0])
    rank = data.shape.rank
    axes = attrs.get("axes")
    if axes is None:
        perm = list(reversed(range(rank)))
    else:
        perm = [_axis(int(a), rank) for a in axes]
    if sorted(perm) != list(range(rank)):
        return Fails(f"axes {tuple(perm)} are not a permutation of rank {rank}")
    return _finish(types, TensorType(Shape(tuple(data.shape[i] for i in perm)), data.dtype))


def squeeze_rel(types, attrs):
    data = _tensor(types[0])
    axis = attrs.get("axis")
    rank = data.shape.rank
    if axis is None:
        if any(is_hole(d) for d in data.shape.dims):
            raise _Unknown()
        dims = tuple(d for d in data.shape.dims if _const(d) != 1)
    else:
        axes = {_axis(int(a), rank) for a in (axis if isinstance(axis, tuple) else (axis,))}
        for a in axes:
            value = _const(data.shape[a])
            if value is not None and value != 1:
                return Fails(f"cannot squeeze axis {a} of size {value}")
        dims = tuple(d for i, d in enumerate(data.shape.dims) if i not in axes)
    return _finish(types, TensorType(Shape(dims), data.dtype))


def expand_dims_rel(types, attrs):
    data = _tensor(types[0])
    rank = data.shape.rank
    axis = _axis(int(attrs.get("axis", 0)), rank, extra=1)
    count = int(attrs.get("num_newaxis", 1))
    if count < 0:
        return Fails("num_newaxis must be non-negative")
    dims = data.shape.dims[:axis] + (DimConst(1),) * count + data.shape.dims[axis:]
    return _finish(types, TensorType(Shape(dims), data.dtype))


def reduce_axes(axis: Any, rank: int) -> list[int]:
    """Normalize a reduction `axis` attribute to sorted non-negative axes."""
    if axis is None:
        return list(range(rank))
    items = axis if isinstance(axis, (tuple, list)) else (axis,)
    return sorted({_axis(int(a), rank) for a in items})


def _reduce(types, attrs, dtype: Optional[BaseType] = None):
    data = _tensor(types[0])
    axes = reduce_axes(attrs.get("axis"), data.shape.rank)
    keepdims = bool(attrs.get("keepdims", False))
    dims = []
    for i, d in enumerate(data.shape.dims):
        if i in axes:
            if keepdims:
                dims.append(DimConst(1))
        else:
            dims.append(d)
    return _finish(types, TensorType(Shape(tuple(dims)), dtype or data.dtype))


def reduce_rel(types, attrs):
    return _reduce(types, attrs)


def arg_reduce_rel(types, attrs):
    return _reduce(types, attrs, dtype=INT32)


# Neural network operators


def _out_dtype(attrs: Mapping[str, Any], default: BaseType) -> BaseType:
    name = attrs.get("out_dtype") or ""
    return BaseType.parse(str(name)) if name else default


def _same_dim(a: Dim, b: Dim, what: str) -> None:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None and ca != cb:
        raise _Incompatible(f"{what}: {ca} vs {cb}")


def dense_rel(types, attrs):
    data, weight = _tensor(types[0], "data"), _tensor(types[1], "weight")
    if data.shape.rank < 1 or weight.shape.rank != 2:
        return Fails(f"dense expects data of rank >= 1 and a rank-2 weight, found {data} and {weight}")
    if data.dtype != weight.dtype:
        return Fails(f"dtype mismatch {data.dtype} vs {weight.dtype}")
    _same_dim(data.shape[-1], weight.shape[1], "reduction dimension mismatch")
    dims = data.shape.dims[:-1] + (weight.shape[0],)
    return _finish(types, TensorType(Shape(dims), _out_dtype(attrs, data.dtype)))


DATA_LAYOUTS = {"NCHW": (1, 2, 3), "NHWC": (3, 1, 2)}
KERNEL_LAYOUTS = {"OIHW": (0, 1, 2, 3), "HWIO": (3, 2, 0, 1)}


def _pads(padding: Any) -> tuple[int, int, int, int]:
    pads = tuple(int(p) for p in padding)
    if len(pads) == 2:
        return pads[0], pads[1], pads[0], pads[1]
    if len(pads) == 4:
        return pads  # type: ignore[return-value]
    raise _Incompatible(f"padding must have 2 or 4 entries, found {len(pads)}")


def _window(size: Dim, kernel: Dim, pad: int, stride: int) -> Dim:
    cs, ck = _const(size), _const(kernel)
    if cs is None or ck is None:
        if is_hole(size) or is_hole(kernel):
            raise _Unknown()
        return ANY
    out = (cs + pad - ck) // stride + 1
    if out < 1:
        raise _Incompatible(f"kernel {ck} larger than padded input {cs + pad}")
    return DimConst(out)


def conv2d_rel(types, attrs):
    data, weight = _tensor(types[0], "data"), _tensor(types[1], "weight")
    data_layout = str(attrs.get("data_layout", "NCHW"))
    kernel_layout = str(attrs.get("kernel_layout", "OIHW"))
    if data_layout not in DATA_LAYOUTS or kernel_layout not in KERNEL_LAYOUTS:
        return Fails(f"unsupported layouts {data_layout}/{kernel_layout}")
    if data.shape.rank != 4 or weight.shape.rank != 4:
        return Fails("conv2d expects rank-4 data and weight")
    if data.dtype != weight.dtype:
        return Fails(f"dtype mismatch {data.dtype} vs {weight.dtype}")
    c_axis, h_axis, w_axis = DATA_LAYOUTS[data_layout]
    o_axis, i_axis, kh_axis, kw_axis = KERNEL_LAYOUTS[kernel_layout]
    _same_dim(data.shape[c_axis], weight.shape[i_axis], "input channel mismatch")
    sh, sw = (int(s) for s in attrs.get("strides", (1, 1)))
    if sh < 1 or sw < 1:
        return Fails("strides must be positive")
    pt, pl, pb, pr = _pads(attrs.get("padding", (0, 0)))
    out_h = _window(data.shape[h_axis], weight.shape[kh_axis], pt + pb, sh)
    out_w = _window(data.shape[w_axis], weight.shape[kw_axis], pl + pr, sw)
    batch = data.shape[0]
    channels = weight.shape[o_axis]
    if data_layout == "NCHW":
        dims = (batch, channels, out_h, out_w)
    else:
        dims = (batch, out_h, out_w, channels)
    return _finish(types, TensorType(Shape(dims), _out_dtype(attrs, data.dtype)))


def bias_add_rel(types, attrs):
    data, bias = _tensor(types[0], "data"), _tensor(types[1], "bias")
    if bias.shape.rank != 1:
        return Fails(f"bias must be rank 1, found {bias}")
    if data.dtype != bias.dtype:
        return Fails(f"dtype mismatch {data.dtype} vs {bias.dtype}")
    axis = _axis(int(attrs.get("axis", 1)), data.shape.rank)
    _same_dim(data.shape[axis], bias.shape[0], "bias length mismatch")
    return _finish(types, data)


def concat_rel(types, attrs):
    tup = types[0]
    if is_hole(tup):
        raise _Unknown()
    if not isinstance(tup, TupleType) or not tup.fields:
        return Fails(f"concat expects a non-empty tuple of tensors, found {tup}")
    tensors = [_tensor(f) for f in tup.fields]
    rank = tensors[0].shape.rank
    dtype = tensors[0].dtype
    if any(t.shape.rank != rank or t.dtype != dtype for t in tensors):
        return Fails("concat inputs must share rank and dtype")
    axis = _axis(int(attrs.get("axis", 0)), rank)
    dims: list[Any] = []
    for i in range(rank):
        column = [t.shape[i] for t in tensors]
        if i == axis:
            values = [_const(d) for d in column]
            if all(v is not None for v in values):
                dims.append(DimConst(sum(values)))  # type: ignore[arg-type]
            elif any(is_hole(d) for d in column):
                raise _Unknown()
            else:
                dims.append(ANY)
            continue
        chosen = column[0]
        for d in column[1:]:
            _same_dim(chosen, d, f"concat dimension {i} mismatch")
            if _const(chosen) is None and not isinstance(chosen, DimAny):
                chosen = d
        if is_hole(chosen):
            raise _Unknown()
        dims.append(chosen)
    return _finish(types, TensorType(Shape(tuple(dims)), dtype))


def split_sizes(size: Optional[int], indices_or_sections: Any) -> list[Optional[int]]:
    """Sizes of the pieces produced by split, `None` where unknown."""
    if isinstance(indices_or_sections, (tuple, list)):
        bounds = [0] + [int(i) for i in indices_or_sections]
        if any(b > a for a, b in zip(bounds[1:], bounds)):
            raise _Incompatible("split indices must be non-decreasing")
        sizes: list[Optional[int]] = [b - a for a, b in zip(bounds, bounds[1:])]
        if size is None:
            sizes.append(None)
        else:
            if bounds[-1] > size:
                raise _Incompatible(f"split index {bounds[-1]} beyond size {size}")
            sizes.append(size - bounds[-1])
        return sizes
    sections = int(indices_or_sections)
    if sections < 1:
        raise _Incompatible("sections must be positive")
    if size is None:
        return [None] * sections
    if size % sections:
        raise _Incompatible(f"size {size} is not divisible into {sections} sections")
    return [size // sections] * sections


def split_rel(types, attrs):
    data = _tensor(types[0])
    axis = _axis(int(attrs.get("axis", 0)), data.shape.rank)
    dim = data.shape[axis]
    if is_hole(dim):
        raise _Unknown()
    sizes = split_sizes(_const(dim), attrs["indices_or_sections"])
    fields = []
    for size in sizes:
        dims = list(data.shape.dims)
        dims[axis] = ANY if size is None else DimConst(size)
        fields.append(TensorType(Shape(tuple(dims)), data.dtype))
    return _finish(types, TupleType(tuple(fields)))


def tuple_get_item_rel(types, attrs):
    tup = types[0]
    if is_hole(tup):
        raise _Unknown()
    if not isinstance(tup, TupleType):
        return Fails(f"projection from non-tuple type {tup}")
    index = int(attrs["index"])
    if not 0 <= index < len(tup.fields):
        return Fails(f"index {index} out of range for {tup}")
    return _finish(types, tup.fields[index])


# Relation table

RELATIONS: dict[str, tuple[int, RelationFn]] = {}


def register_relation(name: str, arity: int, fn: RelationFn) -> None:
    """Make `fn` available as relation `name` over `arity` slots (result included)."""
    if name in RELATIONS:
        raise ValueError(f"relation {name} already registered")
    RELATIONS[name] = (arity, fn)


for _name, _arity, _fn in (
    ("Identity", 2, identity_rel),
    ("FloatIdentity", 2, float_identity_rel),
    ("BoolIdentity", 2, bool_identity_rel),
    ("Broadcast", 3, broadcast_rel),
    ("BroadcastCompare", 3, broadcast_compare_rel),
    ("BroadcastLogical", 3, broadcast_logical_rel),
    ("Cast", 2, cast_rel),
    ("Reshape", 2, reshape_rel),
    ("Transpose", 2, transpose_rel),
    ("Squeeze", 2, squeeze_rel),
    ("ExpandDims", 2, expand_dims_rel),
    ("Reduce", 2, reduce_rel),
    ("ArgReduce", 2, arg_reduce_rel),
    ("Dense", 3, dense_rel),
    ("Conv2D", 3, conv2d_rel),
    ("BiasAdd", 3, bias_add_rel),
    ("Concat", 2, concat_rel),
    ("Split", 2, split_rel),
    ("TupleGetItem", 2, tuple_get_item_rel),
):
    register_relation(_name, _arity, _fn)


def relation_arity(name: str) -> int:
    return RELATIONS[name][0]


def apply_relation(name: str, types: Sequence[Any], attrs: Optional[Mapping[str, Any]] = None) -> RelationResult:
    """Run relation `name` over argument types followed by the result type."""
    arity, fn = RELATIONS[name]
    if len(types) != arity:
        raise ValueError(f"relation {name} takes {arity} types, got {len(types)}")
    try:
        return fn(tuple(types), attrs or {})
    except _Unknown:
        return WAIT
    except _Incompatible as exc:
        return Fails(str(exc))
    except (KeyError, TypeError, ValueError) as exc:
        logger.debug(f"Relation {name} rejected {list(map(str, types))}: {exc}")
        return Fails(f"invalid attributes: {exc}")
