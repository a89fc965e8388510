"""Type inference for whole modules.

Inference runs in three phases per group of mutually recursive globals:
constraint generation over the AST (unifying where structure is known and
queueing operator relations), solving the relation queue to a fixpoint, and
annotating every sub-expression with its resolved type. Top-level functions
are then generalized over whatever remains unknown in their signature.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Any, Iterator, Optional

from ..ir.analysis import global_refs
from ..ir.expr import (
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
)
from ..ir.types import (
    BOOL,
    UNIT,
    DimVar,
    FuncType,
    RefType,
    TensorType,
    TupleType,
    Type,
    TypeVar,
    dim_vars,
    substitute_type,
    walk_type,
)
from ..ir.visitor import ExprMutator
from ..ops.registry import OpRegistry, builtin_registry
from ..utils.errors import (
    TypeMismatch,
    UnannotatedRecursion,
    UnboundVariable,
    UnificationError,
    UnknownConstructor,
)
from ..utils.recursion import deep_recursion
from .solver import Solver
from .unifier import DimHole, InferVar, holes_in

logger = logging.getLogger(__name__)


def instantiate(scheme: FuncType, type_args: tuple[Type, ...] = ()) -> FuncType:
    """Replace a scheme's type parameters and shape variables with fresh holes.

    Explicit `type_args` take the place of the leading type parameters.
    """
    mapping: dict[Any, Any] = {}
    for i, tv in enumerate(scheme.type_params):
        mapping[tv] = type_args[i] if i < len(type_args) else InferVar(tv.name)
    for dv in dim_vars(scheme):
        mapping[dv] = DimHole()
    body = FuncType(scheme.arg_types, scheme.ret_type, (), scheme.relations)
    return substitute_type(body, mapping)


def strongly_connected_globals(module: ModuleEnv) -> list[list[GlobalVar]]:
    """Tarjan's algorithm over the global call graph; callees come before callers."""
    order = list(module.globals)
    edges = {gv: [g for g in global_refs(module.globals[gv]) if g in module.globals] for gv in order}
    index: dict[GlobalVar, int] = {}
    low: dict[GlobalVar, int] = {}
    on_stack: set[GlobalVar] = set()
    stack: list[GlobalVar] = []
    out: list[list[GlobalVar]] = []
    counter = 0

    for root in order:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            node, i = work.pop()
            if i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            succs = edges[node]
            if i < len(succs):
                work.append((node, i + 1))
                nxt = succs[i]
                if nxt not in index:
                    work.append((nxt, 0))
                elif nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
                continue
            if low[node] == index[node]:
                scc = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    scc.append(member)
                    if member == node:
                        break
                out.append(sorted(scc, key=order.index))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return out


class _ConstraintGenerator:
    """Walks expressions, returning (possibly partial) types and queueing relations."""

    def __init__(self, module: ModuleEnv, registry: OpRegistry, solver: Solver):
        self.module = module
        self.registry = registry
        self.solver = solver
        self.types: dict[int, Any] = {}
        self.env: dict[LocalVar, Any] = {}
        self.schemes: dict[GlobalVar, FuncType] = {}
        self.monomorphic: dict[GlobalVar, FuncType] = {}
        self._keep: list[Expr] = []

    def resolve(self, ty: Any) -> Any:
        return self.solver.unifier.resolve(ty)

    def unify(self, expected: Any, found: Any, span=None) -> Any:
        try:
            return self.solver.unifier.unify(expected, found)
        except UnificationError as exc:
            raise TypeMismatch(self.resolve(expected), self.resolve(found), span, exc.message) from None

    def record(self, expr: Expr, ty: Any) -> Any:
        self.types[id(expr)] = ty
        self._keep.append(expr)
        return ty

    # Expressions

    def gen(self, expr: Expr) -> Any:
        known = self.types.get(id(expr))
        if known is not None:
            return known
        if isinstance(expr, Let):
            return self._gen_let(expr)
        method = getattr(self, f"_gen_{type(expr).__name__.lower()}")
        return self.record(expr, method(expr))

    def _gen_let(self, expr: Let) -> Any:
        chain: list[Let] = []
        node: Expr = expr
        while isinstance(node, Let) and id(node) not in self.types:
            value_ty = self.gen(node.value)
            if node.type_annotation is not None:
                self.unify(node.type_annotation, value_ty, node.span)
                value_ty = node.type_annotation
            self.env[node.var] = value_ty
            self.record(node.var, value_ty)
            chain.append(node)
            node = node.body
        body_ty = self.gen(node)
        for let in chain:
            self.record(let, body_ty)
        return body_ty

    def _gen_localvar(self, expr: LocalVar) -> Any:
        try:
            return self.env[expr]
        except KeyError:
            raise UnboundVariable(f"%{expr.name}", expr.span) from None

    def _global_type(self, gv: GlobalVar, type_args: tuple[Type, ...] = ()) -> Any:
        if gv in self.monomorphic:
            return self.monomorphic[gv]
        if gv in self.schemes:
            scheme = self.schemes[gv]
            if type_args and len(type_args) != len(scheme.type_params):
                raise TypeMismatch(
                    f"{len(scheme.type_params)} type arguments", len(type_args), gv.span
                )
            return instantiate(scheme, type_args)
        raise UnboundVariable(f"@{gv.name}", gv.span)

    def _gen_globalvar(self, expr: GlobalVar) -> Any:
        return self._global_type(expr)

    def _gen_constant(self, expr: Constant) -> Any:
        return expr.data.type

    def _operator_type(self, expr: OperatorRef, attrs=None, arg_types=None, span=None) -> FuncType:
        decl = self.registry.lookup(expr.name)
        if arg_types is None:
            arg_types = tuple(InferVar() for _ in range(decl.arity))
        out = InferVar()
        self.solver.add(decl.relation, (*arg_types, out), decl.resolve_attrs(attrs), span or expr.span)
        return FuncType(tuple(arg_types), out)

    def _gen_operatorref(self, expr: OperatorRef) -> Any:
        return self._operator_type(expr)

    def _constructor_type(self, name: str, span, type_args: tuple[Type, ...] = ()) -> Any:
        try:
            adt, _ = self.module.lookup_constructor(name)
        except KeyError:
            raise UnknownConstructor(name, span) from None
        ty = adt.constructor_type(name)
        if isinstance(ty, FuncType):
            return instantiate(ty, type_args)
        mapping = {
            tv: (type_args[i] if i < len(type_args) else InferVar(tv.name))
            for i, tv in enumerate(adt.type_params)
        }
        return substitute_type(ty, mapping)

    def _gen_constructor(self, expr: Constructor) -> Any:
        return self._constructor_type(expr.name, expr.span)

    def _gen_call(self, expr: Call) -> Any:
        callee = expr.callee
        if isinstance(callee, OperatorRef):
            decl = self.registry.lookup(callee.name)
            if len(expr.args) != decl.arity:
                raise TypeMismatch(f"{decl.arity} arguments to {decl.name}", len(expr.args), expr.span)
            arg_types = tuple(self.gen(a) for a in expr.args)
            fn_ty = self._operator_type(callee, expr.attrs, arg_types, expr.span)
            self.record(callee, fn_ty)
            return fn_ty.ret_type

        if isinstance(callee, Constructor):
            fn_ty = self._constructor_type(callee.name, callee.span, expr.type_args)
            self.record(callee, fn_ty)
            if not isinstance(fn_ty, FuncType):
                if expr.args:
                    raise TypeMismatch(f"0 arguments to {callee.name}", len(expr.args), expr.span)
                return fn_ty
        elif isinstance(callee, GlobalVar) and expr.type_args:
            fn_ty = self.record(callee, self._global_type(callee, expr.type_args))
        else:
            fn_ty = self.gen(callee)

        arg_types = [self.gen(a) for a in expr.args]
        fn_ty = self.resolve(fn_ty)
        if isinstance(fn_ty, FuncType) and fn_ty.type_params:
            fn_ty = instantiate(fn_ty, expr.type_args)
        if isinstance(fn_ty, InferVar):
            ret = InferVar()
            self.unify(fn_ty, FuncType(tuple(arg_types), ret), expr.span)
            return ret
        if not isinstance(fn_ty, FuncType):
            raise TypeMismatch("a function", fn_ty, callee.span or expr.span)
        if len(fn_ty.arg_types) != len(arg_types):
            raise TypeMismatch(f"{len(fn_ty.arg_types)} arguments", len(arg_types), expr.span)
        for param_ty, arg, arg_ty in zip(fn_ty.arg_types, expr.args, arg_types):
            self.unify(param_ty, arg_ty, arg.span or expr.span)
        for rel in fn_ty.relations:
            self.solver.add(rel.relation, rel.types, rel.attrs, expr.span)
        return fn_ty.ret_type

    def _gen_function(self, expr: Function) -> Any:
        param_types = []
        for param in expr.params:
            ty = param.annotation if param.annotation is not None else InferVar(param.var.name)
            self.env[param.var] = ty
            self.record(param.var, ty)
            param_types.append(ty)
        body_ty = self.gen(expr.body)
        if expr.ret_type is not None:
            self.unify(expr.ret_type, body_ty, expr.body.span or expr.span)
            body_ty = expr.ret_type
        return FuncType(tuple(param_types), body_ty)

    def _gen_tuple(self, expr: Tuple) -> Any:
        return TupleType(tuple(self.gen(f) for f in expr.fields))

    def _gen_projection(self, expr: Projection) -> Any:
        tup = self.resolve(self.gen(expr.tuple_value))
        if isinstance(tup, TupleType):
            if not 0 <= expr.index < len(tup.fields):
                raise TypeMismatch(f"a tuple with more than {expr.index} fields", tup, expr.span)
            return tup.fields[expr.index]
        if isinstance(tup, InferVar):
            out = InferVar()
            self.solver.add("TupleGetItem", (tup, out), {"index": expr.index}, expr.span)
            return out
        raise TypeMismatch("a tuple", tup, expr.span)

    def _gen_if(self, expr: If) -> Any:
        cond_ty = self.gen(expr.cond)
        self.unify(TensorType.scalar(BOOL), cond_ty, expr.cond.span or expr.span)
        then_ty = self.gen(expr.then_branch)
        else_ty = self.gen(expr.else_branch)
        return self.unify(then_ty, else_ty, expr.else_branch.span or expr.span)

    def _gen_match(self, expr: Match) -> Any:
        scrutinee = self.gen(expr.scrutinee)
        if isinstance(self.resolve(scrutinee), RefType):
            raise TypeMismatch("an ADT or tuple", self.resolve(scrutinee), expr.scrutinee.span or expr.span)
        result: Any = InferVar()
        for clause in expr.clauses:
            self._gen_pattern(clause.pattern, scrutinee)
            body_ty = self.gen(clause.body)
            result = self.unify(result, body_ty, clause.body.span or expr.span)
        return result

    def _gen_pattern(self, pattern: Pattern, ty: Any) -> None:
        if isinstance(pattern, PatternWildcard):
            return
        if isinstance(pattern, PatternVar):
            self.env[pattern.var] = ty
            self.record(pattern.var, ty)
            return
        if isinstance(pattern, PatternConstructor):
            try:
                adt, ctor = self.module.lookup_constructor(pattern.name)
            except KeyError:
                raise UnknownConstructor(pattern.name, pattern.span) from None
            mapping = {tv: InferVar(tv.name) for tv in adt.type_params}
            self.unify(substitute_type(adt.self_type(), mapping), ty, pattern.span)
            if len(pattern.patterns) != len(ctor.fields):
                raise TypeMismatch(
                    f"{len(ctor.fields)} fields for {ctor.name}", len(pattern.patterns), pattern.span
                )
            for sub, field_ty in zip(pattern.patterns, ctor.fields):
                self._gen_pattern(sub, substitute_type(field_ty, mapping))
            return
        if isinstance(pattern, PatternTuple):
            resolved = self.resolve(ty)
            if isinstance(resolved, TupleType) and len(resolved.fields) == len(pattern.patterns):
                fields = resolved.fields
            else:
                fields = tuple(InferVar() for _ in pattern.patterns)
                self.unify(TupleType(fields), ty, pattern.span)
            for sub, field_ty in zip(pattern.patterns, fields):
                self._gen_pattern(sub, field_ty)
            return
        raise TypeError(f"unknown pattern {pattern!r}")

    def _gen_refnew(self, expr: RefNew) -> Any:
        return RefType(self.gen(expr.init))

    def _gen_refread(self, expr: RefRead) -> Any:
        inner = InferVar()
        self.unify(RefType(inner), self.gen(expr.ref), expr.span)
        return inner

    def _gen_refwrite(self, expr: RefWrite) -> Any:
        value_ty = self.gen(expr.value)
        self.unify(RefType(value_ty), self.gen(expr.ref), expr.span)
        return UNIT


class _Annotate(ExprMutator):
    """Attach the final type of every node as `checked_type`."""

    def __init__(self, gen: _ConstraintGenerator, finalize):
        super().__init__()
        self.gen = gen
        self.finalize = finalize

    def _typed(self, original: Expr, rebuilt: Expr) -> Expr:
        if isinstance(original, LocalVar):
            ty = self.gen.env.get(original)
        else:
            ty = self.gen.types.get(id(original))
        if ty is None:
            return rebuilt
        return replace(rebuilt, checked_type=self.finalize(ty))

    def visit(self, expr: Expr) -> Expr:
        key = id(expr)
        if key in self.memo:
            return self.memo[key]
        result = self._typed(expr, super().visit(expr))
        self.memo[key] = result
        return result

    def visit_let_binding(self, expr: Let, new_body: Expr) -> Expr:
        return self._typed(expr, super().visit_let_binding(expr, new_body))

    def visit_pattern(self, pattern: Pattern) -> Pattern:
        if isinstance(pattern, PatternVar):
            var = self.visit(pattern.var)
            return pattern if var is pattern.var else replace(pattern, var=var)
        if isinstance(pattern, (PatternConstructor, PatternTuple)):
            subs = tuple(self.visit_pattern(p) for p in pattern.patterns)
            if all(a is b for a, b in zip(subs, pattern.patterns)):
                return pattern
            return replace(pattern, patterns=subs)
        return pattern


def _fresh_names(prefix: str, taken: set[str]) -> Iterator[str]:
    n = 0
    while True:
        name = f"{prefix}{n}"
        n += 1
        if name not in taken:
            taken.add(name)
            yield name


def _rigid_names(fn: Function) -> set[str]:
    taken = {tv.name for tv in fn.type_params}
    for param in fn.params:
        for node in walk_type(param.annotation):
            if isinstance(node, (TypeVar, DimVar)):
                taken.add(node.name)
    for node in walk_type(fn.ret_type):
        if isinstance(node, (TypeVar, DimVar)):
            taken.add(node.name)
    return taken


class TypeInferencer:
    """Infers a whole module, one strongly connected group of globals at a time."""

    def __init__(self, module: ModuleEnv, registry: Optional[OpRegistry] = None):
        self.module = module
        self.registry = registry or builtin_registry()
        self.solver = Solver()
        self.gen = _ConstraintGenerator(module, self.registry, self.solver)
        self.signatures: dict[GlobalVar, FuncType] = {}

    def _is_recursive(self, group: list[GlobalVar]) -> bool:
        if len(group) > 1:
            return True
        gv = group[0]
        return gv in global_refs(self.module.globals[gv])

    def _bind_leftover(self, hole: Any, names: Iterator[str], dim_names: Iterator[str]) -> None:
        target = DimVar(next(dim_names)) if isinstance(hole, DimHole) else TypeVar(next(names))
        # Solving is over for this group, so no relation needs waking.
        self.solver.unifier.binding[hole] = target

    def infer_group(self, group: list[GlobalVar]) -> dict[GlobalVar, Function]:
        gen = self.gen
        recursive = self._is_recursive(group)
        for gv in group:
            fn = self.module.globals[gv]
            if not recursive:
                continue
            if any(p.annotation is None for p in fn.params):
                raise UnannotatedRecursion(f"@{gv.name}", fn.span)
            declared = fn.declared_type()
            if declared is not None:
                gen.schemes[gv] = declared
            else:
                param_types = tuple(p.annotation for p in fn.params)
                gen.monomorphic[gv] = FuncType(param_types, InferVar(f"{gv.name}_ret"))

        fn_types: dict[GlobalVar, FuncType] = {}
        for gv in group:
            fn = self.module.globals[gv]
            fn_ty = gen.gen(fn)
            if gv in gen.monomorphic:
                gen.unify(gen.monomorphic[gv], fn_ty, fn.span)
            fn_types[gv] = fn_ty
        self.solver.solve()

        out: dict[GlobalVar, Function] = {}
        for gv in group:
            fn = self.module.globals[gv]
            taken = _rigid_names(fn)
            names = _fresh_names("t", taken)
            dim_names = _fresh_names("d", taken)
            signature = self.solver.unifier.resolve(fn_types[gv])
            generalized: list[TypeVar] = []
            for hole in holes_in(signature):
                self._bind_leftover(hole, names, dim_names)
                if isinstance(hole, InferVar):
                    generalized.append(self.solver.unifier.binding[hole])
            signature = self.solver.unifier.resolve(signature)
            scheme = FuncType(
                signature.arg_types, signature.ret_type, tuple(fn.type_params) + tuple(generalized)
            )
            gen.schemes[gv] = scheme
            gen.monomorphic.pop(gv, None)
            self.signatures[gv] = scheme

            def finalize(ty: Any) -> Any:
                resolved = self.solver.unifier.resolve(ty)
                leftovers = holes_in(resolved)
                if not leftovers:
                    return resolved
                for hole in leftovers:
                    self._bind_leftover(hole, names, dim_names)
                return self.solver.unifier.resolve(resolved)

            annotated = _Annotate(gen, finalize).visit(fn)
            out[gv] = replace(annotated, checked_type=scheme)
            logger.debug(f"Inferred @{gv.name} : {scheme}")
        return out

    def run(self) -> ModuleEnv:
        functions: dict[GlobalVar, Function] = {}
        with deep_recursion():
            for group in strongly_connected_globals(self.module):
                functions.update(self.infer_group(group))
        ordered = {gv: functions[gv] for gv in self.module.globals}
        logger.debug(
            f"Typed {len(ordered)} globals; {len(self.solver.nodes)} relations, "
            f"{self.solver.unifier.bind_count} bindings"
        )
        return self.module.with_globals(ordered)


def infer(module: ModuleEnv, registry: Optional[OpRegistry] = None) -> ModuleEnv:
    """Typecheck `module`, returning a copy whose every sub-expression carries its type.

    Args:
        module: A well-formed module
        registry: Operator registry (defaults to the builtin one)

    Returns:
        The annotated module; each global's `checked_type` is its generalized signature

    Raises:
        TypeMismatch, RelationFailed, Underconstrained, UnannotatedRecursion
    """
    return TypeInferencer(module, registry).run()


def infer_expr(expr: Expr, module: Optional[ModuleEnv] = None, registry: Optional[OpRegistry] = None) -> Expr:
    """Infer a closed expression in the context of `module`'s globals."""
    name = "__expr__"
    fn = expr if isinstance(expr, Function) else Function((), expr)
    typed = infer((module or ModuleEnv()).with_global(GlobalVar(name), fn), registry)
    fn = typed[name]
    return fn if isinstance(expr, Function) else fn.body


def signature_of(module: ModuleEnv, name: str) -> FuncType:
    """The (generalized) type of global `name` in an inferred module."""
    ty = module[name].checked_type
    if not isinstance(ty, FuncType):
        raise ValueError(f"@{name} has not been type-checked")
    return ty


def type_of(expr: Expr) -> Type:
    if expr.checked_type is None:
        raise ValueError("expression has not been type-checked")
    return expr.checked_type


__all__ = [
    "TypeInferencer",
    "infer",
    "infer_expr",
    "instantiate",
    "signature_of",
    "strongly_connected_globals",
    "type_of",
]
