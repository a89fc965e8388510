"""Operator declarations and the process-wide operator registry."""

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Optional

from ..utils.errors import DuplicateOperator, OperatorNotFound
from .kernels import KERNELS, Kernel
from .relations import RELATIONS

logger = logging.getLogger(__name__)


class FusionPattern(enum.IntEnum):
    """How an operator may take part in fusion; ordered from most to least fusable."""

    Elementwise = 0
    Broadcast = 1
    Injective = 2
    Reduction = 3
    ComplexOutFusable = 4
    Opaque = 5


@dataclass(frozen=True)
class OperatorDecl:
    """Everything the compiler knows about one operator.

    `attrs_schema` maps each accepted attribute to its default value.
    """

    name: str
    arity: int
    relation: str
    pattern: FusionPattern
    kernel: Kernel
    attrs_schema: Mapping[str, Any] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ValueError(f"operator {self.name} names unknown relation {self.relation}")
        arity = RELATIONS[self.relation][0]
        if arity != self.arity + 1:
            raise ValueError(
                f"operator {self.name} takes {self.arity} arguments but relation "
                f"{self.relation} has {arity} slots"
            )

    def resolve_attrs(self, attrs: Optional[Mapping[str, Any]] = None) -> dict[str, Any]:
        """Merge call-site attributes over the declared defaults."""
        resolved = dict(self.attrs_schema)
        resolved.update(attrs or {})
        return resolved


class OpRegistry:
    """Name -> OperatorDecl table."""

    def __init__(self) -> None:
        self._ops: dict[str, OperatorDecl] = {}

    def register(self, decl: OperatorDecl) -> None:
        if decl.name in self._ops:
            raise DuplicateOperator(decl.name)
        self._ops[decl.name] = decl
        logger.debug(f"Registered operator {decl.name} ({decl.pattern.name}, {decl.relation})")

    def unregister(self, name: str) -> None:
        if name not in self._ops:
            raise OperatorNotFound(name)
        del self._ops[name]

    def lookup(self, name: str) -> OperatorDecl:
        try:
            return self._ops[name]
        except KeyError:
            raise OperatorNotFound(name) from None

    def get(self, name: str) -> Optional[OperatorDecl]:
        return self._ops.get(name)

    def __contains__(self, name: object) -> bool:
        return name in self._ops

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._ops))

    def __len__(self) -> int:
        return len(self._ops)


E, B, I, R, C, O = (
    FusionPattern.Elementwise,
    FusionPattern.Broadcast,
    FusionPattern.Injective,
    FusionPattern.Reduction,
    FusionPattern.ComplexOutFusable,
    FusionPattern.Opaque,
)

_REDUCE_ATTRS = {"axis": None, "keepdims": False}
_CONV_ATTRS = {
    "strides": (1, 1),
    "padding": (0, 0),
    "data_layout": "NCHW",
    "kernel_layout": "OIHW",
    "out_dtype": "",
}

# name, arity, relation, pattern, attribute defaults
_BUILTINS: list[tuple[str, int, str, FusionPattern, dict[str, Any]]] = [
    ("add", 2, "Broadcast", B, {}),
    ("subtract", 2, "Broadcast", B, {}),
    ("multiply", 2, "Broadcast", B, {}),
    ("divide", 2, "Broadcast", B, {}),
    ("minimum", 2, "Broadcast", B, {}),
    ("maximum", 2, "Broadcast", B, {}),
    ("equal", 2, "BroadcastCompare", B, {}),
    ("not_equal", 2, "BroadcastCompare", B, {}),
    ("less", 2, "BroadcastCompare", B, {}),
    ("greater_equal", 2, "BroadcastCompare", B, {}),
    ("logical_and", 2, "BroadcastLogical", B, {}),
    ("negative", 1, "Identity", E, {}),
    ("relu", 1, "Identity", E, {}),
    ("round", 1, "Identity", E, {}),
    ("clip", 1, "Identity", E, {"a_min": None, "a_max": None}),
    ("exp", 1, "FloatIdentity", E, {}),
    ("log", 1, "FloatIdentity", E, {}),
    ("sqrt", 1, "FloatIdentity", E, {}),
    ("tanh", 1, "FloatIdentity", E, {}),
    ("sigmoid", 1, "FloatIdentity", E, {}),
    ("logical_not", 1, "BoolIdentity", E, {}),
    ("cast", 1, "Cast", E, {"dtype": None}),
    (
        "simulated_quantize",
        1,
        "FloatIdentity",
        E,
        {"bits": 8, "sign": 1, "scale": 0.0, "rounding": "round", "kind": "input", "site": -1},
    ),
    ("reshape", 1, "Reshape", I, {"newshape": None}),
    ("transpose", 1, "Transpose", I, {"axes": None}),
    ("squeeze", 1, "Squeeze", I, {"axis": None}),
    ("expand_dims", 1, "ExpandDims", I, {"axis": 0, "num_newaxis": 1}),
    ("concat", 1, "Concat", I, {"axis": 0}),
    ("sum", 1, "Reduce", R, _REDUCE_ATTRS),
    ("max_reduce", 1, "Reduce", R, _REDUCE_ATTRS),
    ("min_reduce", 1, "Reduce", R, _REDUCE_ATTRS),
    ("max", 1, "Reduce", R, _REDUCE_ATTRS),
    ("min", 1, "Reduce", R, _REDUCE_ATTRS),
    ("argmax", 1, "ArgReduce", R, _REDUCE_ATTRS),
    ("dense", 2, "Dense", C, {"out_dtype": ""}),
    ("conv2d", 2, "Conv2D", C, _CONV_ATTRS),
    ("bias_add", 2, "BiasAdd", B, {"axis": 1}),
    ("split", 1, "Split", O, {"indices_or_sections": None, "axis": 0}),
]


def _populate(registry: OpRegistry) -> OpRegistry:
    for name, arity, relation, pattern, attrs in _BUILTINS:
        registry.register(
            OperatorDecl(
                name=name,
                arity=arity,
                relation=relation,
                pattern=pattern,
                kernel=KERNELS[name],
                attrs_schema=dict(attrs),
            )
        )
    return registry


_registry: Optional[OpRegistry] = None


def builtin_registry() -> OpRegistry:
    """Get the shared registry, populated with the builtin operators on first use."""
    global _registry
    if _registry is None:
        _registry = _populate(OpRegistry())
        logger.debug(f"Built operator registry with {len(_registry)} operators")
    return _registry


def fresh_registry() -> OpRegistry:
    """A private registry with only the builtin operators."""
    return _populate(OpRegistry())


def register_op(decl: OperatorDecl, registry: Optional[OpRegistry] = None) -> None:
    (registry or builtin_registry()).register(decl)


def unregister_op(name: str, registry: Optional[OpRegistry] = None) -> None:
    (registry or builtin_registry()).unregister(name)


def lookup(name: str, registry: Optional[OpRegistry] = None) -> OperatorDecl:
    return (registry or builtin_registry()).lookup(name)
