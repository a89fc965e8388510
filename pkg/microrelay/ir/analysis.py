"""Structural utilities: free variables, alpha-equivalence, hashing, well-formedness and effects."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Optional

from ..utils.errors import (
    InvalidAttribute,
    MalformedLiteral,
    UnboundVariable,
    UnknownConstructor,
    UnknownOperator,
)
from .expr import (
    Call,
    Constant,
    Constructor,
    Expr,
    Function,
    GlobalVar,
    If,
    Let,
    LocalVar,
    Match,
    ModuleEnv,
    OperatorRef,
    Pattern,
    PatternConstructor,
    PatternTuple,
    PatternVar,
    PatternWildcard,
    Projection,
    RefNew,
    RefRead,
    RefWrite,
    Tuple,
    children,
    pattern_vars,
)
from .types import TypeVar, substitute_type

if TYPE_CHECKING:
    from ..ops.registry import OpRegistry

logger = logging.getLogger(__name__)


# Free variables


def free_vars(expr: Expr) -> list[LocalVar]:
    """Variables occurring free in `expr`, in first-use order."""
    seen: set[LocalVar] = set()
    order: list[LocalVar] = []

    def walk(node: Expr, bound: frozenset) -> None:
        while isinstance(node, Let):
            walk(node.value, bound)
            bound = bound | {node.var}
            node = node.body
        if isinstance(node, LocalVar):
            if node not in bound and node not in seen:
                seen.add(node)
                order.append(node)
        elif isinstance(node, Function):
            walk(node.body, bound | set(node.param_vars))
        elif isinstance(node, Match):
            walk(node.scrutinee, bound)
            for clause in node.clauses:
                walk(clause.body, bound | set(pattern_vars(clause.pattern)))
        else:
            for child in children(node):
                walk(child, bound)

    walk(expr, frozenset())
    return order


def bound_vars(expr: Expr) -> list[LocalVar]:
    """Variables bound anywhere inside `expr`, in binding order."""
    out: list[LocalVar] = []
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Let):
            out.append(node.var)
        elif isinstance(node, Function):
            out.extend(node.param_vars)
        elif isinstance(node, Match):
            for clause in node.clauses:
                out.extend(pattern_vars(clause.pattern))
        stack.extend(reversed(list(children(node))))
    return out


def global_refs(expr: Expr) -> list[GlobalVar]:
    """Global functions referenced by `expr`, in first-use order."""
    seen: list[GlobalVar] = []
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, GlobalVar) and node not in seen:
            seen.append(node)
        stack.extend(reversed(list(children(node))))
    return seen


# Alpha-equivalence


def _attrs_equal(a: Mapping[str, Any], b: Mapping[str, Any]) -> bool:
    if set(a) != set(b):
        return False
    return all(_attr_value_equal(a[k], b[k]) for k in a)


def _attr_value_equal(a: Any, b: Any) -> bool:
    if isinstance(a, (tuple, list)) and isinstance(b, (tuple, list)):
        return len(a) == len(b) and all(_attr_value_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    return a == b


class _AlphaEq:
    """Pairs bound local variables by binding site and type parameters by position."""

    def __init__(self) -> None:
        self.left: dict[LocalVar, LocalVar] = {}
        self.right: dict[LocalVar, LocalVar] = {}
        # Type parameters of both sides map to one shared placeholder per position.
        self.left_types: dict[TypeVar, TypeVar] = {}
        self.right_types: dict[TypeVar, TypeVar] = {}
        self.placeholders = 0

    def bind(self, a: LocalVar, b: LocalVar) -> None:
        self.left[a] = b
        self.right[b] = a

    def var(self, a: LocalVar, b: LocalVar) -> bool:
        if a in self.left or b in self.right:
            return self.left.get(a) == b and self.right.get(b) == a
        return a == b

    def types_equal(self, a: Any, b: Any) -> bool:
        return substitute_type(a, self.left_types) == substitute_type(b, self.right_types)

    def bind_type_params(self, a: tuple[TypeVar, ...], b: tuple[TypeVar, ...]) -> None:
        for ta, tb in zip(a, b):
            shared = TypeVar(f"'{self.placeholders}")
            self.placeholders += 1
            self.left_types[ta] = shared
            self.right_types[tb] = shared

    def pattern(self, a: Pattern, b: Pattern) -> bool:
        if type(a) is not type(b):
            return False
        if isinstance(a, PatternWildcard):
            return True
        if isinstance(a, PatternVar):
            self.bind(a.var, b.var)  # type: ignore[attr-defined]
            return True
        if isinstance(a, PatternConstructor) and a.name != b.name:  # type: ignore[attr-defined]
            return False
        pa, pb = a.patterns, b.patterns  # type: ignore[attr-defined]
        return len(pa) == len(pb) and all(self.pattern(x, y) for x, y in zip(pa, pb))

    def expr(self, a: Expr, b: Expr) -> bool:
        while isinstance(a, Let) and isinstance(b, Let):
            if not self.types_equal(a.type_annotation, b.type_annotation) or not self.expr(a.value, b.value):
                return False
            self.bind(a.var, b.var)
            a, b = a.body, b.body
        if type(a) is not type(b):
            return False
        if isinstance(a, LocalVar):
            return self.var(a, b)  # type: ignore[arg-type]
        if isinstance(a, (GlobalVar, OperatorRef, Constructor)):
            return a.name == b.name  # type: ignore[attr-defined]
        if isinstance(a, Constant):
            return a.data.same_as(b.data)  # type: ignore[attr-defined]
        if isinstance(a, Call):
            return (
                len(a.args) == len(b.args)  # type: ignore[attr-defined]
                and len(a.type_args) == len(b.type_args)  # type: ignore[attr-defined]
                and all(self.types_equal(x, y) for x, y in zip(a.type_args, b.type_args))  # type: ignore[attr-defined]
                and _attrs_equal(a.attrs, b.attrs)  # type: ignore[attr-defined]
                and self.expr(a.callee, b.callee)  # type: ignore[attr-defined]
                and all(self.expr(x, y) for x, y in zip(a.args, b.args))  # type: ignore[attr-defined]
            )
        if isinstance(a, Function):
            assert isinstance(b, Function)
            if (
                len(a.params) != len(b.params)
                or len(a.type_params) != len(b.type_params)
                or not _attrs_equal(a.attrs, b.attrs)
            ):
                return False
            outer = dict(self.left_types), dict(self.right_types)
            self.bind_type_params(a.type_params, b.type_params)
            try:
                if not self.types_equal(a.ret_type, b.ret_type):
                    return False
                for pa, pb in zip(a.params, b.params):
                    if not self.types_equal(pa.annotation, pb.annotation):
                        return False
                    self.bind(pa.var, pb.var)
                return self.expr(a.body, b.body)
            finally:
                self.left_types, self.right_types = outer
        if isinstance(a, Tuple):
            return len(a.fields) == len(b.fields) and all(  # type: ignore[attr-defined]
                self.expr(x, y) for x, y in zip(a.fields, b.fields)  # type: ignore[attr-defined]
            )
        if isinstance(a, Projection):
            return a.index == b.index and self.expr(a.tuple_value, b.tuple_value)  # type: ignore[attr-defined]
        if isinstance(a, Match):
            assert isinstance(b, Match)
            if len(a.clauses) != len(b.clauses) or not self.expr(a.scrutinee, b.scrutinee):
                return False
            return all(
                self.pattern(ca.pattern, cb.pattern) and self.expr(ca.body, cb.body)
                for ca, cb in zip(a.clauses, b.clauses)
            )
        return all(self.expr(x, y) for x, y in zip(children(a), children(b)))


def alpha_equal(a: Expr, b: Expr) -> bool:
    """True when `a` and `b` differ only by a consistent renaming of bound variables."""
    return _AlphaEq().expr(a, b)


def alpha_equal_modules(a: ModuleEnv, b: ModuleEnv) -> bool:
    """Compare the user-level globals and ADT declarations of two modules."""
    names_a = {gv.name for gv in a.user_globals()}
    names_b = {gv.name for gv in b.user_globals()}
    if names_a != names_b:
        return False
    user_adts = lambda m: {k: v for k, v in m.adts.items() if k not in m.prelude_names}  # noqa: E731
    if user_adts(a) != user_adts(b):
        return False
    return all(alpha_equal(a[name], b[name]) for name in names_a)


# Structural hashing


def _attr_key(value: Any) -> Any:
    if isinstance(value, (tuple, list)):
        return tuple(_attr_key(v) for v in value)
    return (type(value).__name__, value)


def _pattern_key(pattern: Pattern, env: dict[LocalVar, int]) -> Any:
    if isinstance(pattern, PatternVar):
        env[pattern.var] = len(env)
        return ("pvar",)
    if isinstance(pattern, PatternConstructor):
        return ("pctor", pattern.name, tuple(_pattern_key(p, env) for p in pattern.patterns))
    if isinstance(pattern, PatternTuple):
        return ("ptuple", tuple(_pattern_key(p, env) for p in pattern.patterns))
    return ("_",)


def structural_key(expr: Expr) -> Any:
    """A hashable key equal for alpha-equal expressions."""

    def ty(t: Any, types: tuple) -> str:
        return str(substitute_type(t, dict(types)))

    def key(node: Expr, env: dict[LocalVar, int], types: tuple = ()) -> Any:
        if isinstance(node, Let):
            parts = []
            env = dict(env)
            while isinstance(node, Let):
                parts.append((ty(node.type_annotation, types), key(node.value, env, types)))
                env[node.var] = len(env)
                node = node.body
            return ("let", tuple(parts), key(node, env, types))
        if isinstance(node, LocalVar):
            if node in env:
                return ("bound", len(env) - env[node])
            return ("free", node.vid)
        if isinstance(node, (GlobalVar, OperatorRef, Constructor)):
            return (type(node).__name__, node.name)
        if isinstance(node, Constant):
            lit = node.data
            return ("const", lit.shape, str(lit.dtype), lit.data.tobytes())
        if isinstance(node, Call):
            return (
                "call",
                key(node.callee, env, types),
                tuple(key(a, env, types) for a in node.args),
                tuple(sorted((k, _attr_key(v)) for k, v in node.attrs.items())),
                tuple(ty(t, types) for t in node.type_args),
            )
        if isinstance(node, Function):
            inner = dict(env)
            for p in node.params:
                inner[p.var] = len(inner)
            # Type parameters are named by how many enclose them.
            for tv in node.type_params:
                types = types + ((tv, TypeVar(f"'{len(types)}")),)
            return (
                "fn",
                len(node.type_params),
                tuple(ty(p.annotation, types) for p in node.params),
                ty(node.ret_type, types),
                tuple(sorted((k, _attr_key(v)) for k, v in node.attrs.items())),
                key(node.body, inner, types),
            )
        if isinstance(node, Projection):
            return ("proj", node.index, key(node.tuple_value, env, types))
        if isinstance(node, Match):
            clauses = []
            for clause in node.clauses:
                inner = dict(env)
                pk = _pattern_key(clause.pattern, inner)
                clauses.append((pk, key(clause.body, inner, types)))
            return ("match", key(node.scrutinee, env, types), tuple(clauses))
        return (type(node).__name__, tuple(key(c, env, types) for c in children(node)))

    return key(expr, {})


def structural_hash(expr: Expr) -> int:
    return hash(structural_key(expr))


# Effects


def is_pure(expr: Expr, cache: Optional[dict[int, bool]] = None) -> bool:
    """True when evaluating `expr` has no observable effect on the store.

    Reference operations are effectful; so is calling anything other than an
    operator, a constructor or a function literal with a pure body. Building a
    closure is pure whatever its body does. Pass a `cache` (keyed by node
    identity) when asking about many nodes of one shared graph.
    """
    if cache is None:
        cache = {}
    key = id(expr)
    if key not in cache:
        cache[key] = _is_pure(expr, cache)
    return cache[key]


def _is_pure(expr: Expr, cache: dict[int, bool]) -> bool:
    if isinstance(expr, (RefNew, RefRead, RefWrite)):
        return False
    if isinstance(expr, Function):
        return True
    if isinstance(expr, Call):
        callee = expr.callee
        if isinstance(callee, Function):
            callee_ok = is_pure(callee.body, cache)
        else:
            callee_ok = isinstance(callee, (OperatorRef, Constructor))
        return callee_ok and all(is_pure(a, cache) for a in expr.args)
    if isinstance(expr, Let):
        while isinstance(expr, Let):
            if not is_pure(expr.value, cache):
                return False
            expr = expr.body
        return is_pure(expr, cache)
    return all(is_pure(c, cache) for c in children(expr))


# Well-formedness


def _check_literal(expr: Constant) -> None:
    lit = expr.data
    if not lit.is_well_formed:
        raise MalformedLiteral(lit.shape, int(lit.data.size), expr.span)


def check_expr_well_formed(
    expr: Expr,
    module: ModuleEnv,
    registry: Optional["OpRegistry"] = None,
    bound: Iterable[LocalVar] = (),
) -> None:
    """Check that every reference inside `expr` resolves."""
    if registry is None:
        from ..ops.registry import builtin_registry

        registry = builtin_registry()
    constructors = module.constructor_names()

    def check_pattern(pattern: Pattern) -> None:
        if isinstance(pattern, PatternConstructor):
            if pattern.name not in constructors:
                raise UnknownConstructor(pattern.name, pattern.span)
        for sub in getattr(pattern, "patterns", ()):
            check_pattern(sub)

    def walk(node: Expr, scope: frozenset) -> None:
        while isinstance(node, Let):
            walk(node.value, scope)
            scope = scope | {node.var}
            node = node.body
        if isinstance(node, LocalVar):
            if node not in scope:
                raise UnboundVariable(f"%{node.name}", node.span)
        elif isinstance(node, GlobalVar):
            if node not in module.globals:
                raise UnboundVariable(f"@{node.name}", node.span)
        elif isinstance(node, OperatorRef):
            if node.name not in registry:
                raise UnknownOperator(node.name, node.span)
        elif isinstance(node, Constructor):
            if node.name not in constructors:
                raise UnknownConstructor(node.name, node.span)
        elif isinstance(node, Constant):
            _check_literal(node)
        elif isinstance(node, Function):
            walk(node.body, scope | set(node.param_vars))
        elif isinstance(node, Match):
            walk(node.scrutinee, scope)
            for clause in node.clauses:
                check_pattern(clause.pattern)
                walk(clause.body, scope | set(pattern_vars(clause.pattern)))
        else:
            if isinstance(node, Call) and isinstance(node.callee, OperatorRef):
                name = node.callee.name
                if name in registry:
                    decl = registry.lookup(name)
                    for attr in node.attrs:
                        if attr not in decl.attrs_schema:
                            raise InvalidAttribute(name, attr, node.span)
            for child in children(node):
                walk(child, scope)

    walk(expr, frozenset(bound))


def check_well_formed(module: ModuleEnv, registry: Optional["OpRegistry"] = None) -> None:
    """Raise the first unresolved reference or malformed literal found in `module`."""
    for gv, fn in module.globals.items():
        check_expr_well_formed(fn, module, registry)
    logger.debug(f"Module with {len(module.globals)} globals is well formed")
