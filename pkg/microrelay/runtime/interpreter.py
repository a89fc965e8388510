"""Reference tree-walking interpreter.

Call-by-value, left to right. Calls in tail position (let bodies, branches,
clause bodies and closure applications there) reuse the host frame, so
tail-recursive loops do not grow the Python stack.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..infer.inference import instantiate
from ..infer.unifier import Unifier
from ..ir.analysis import free_vars
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
from ..ir.types import FuncType
from ..ops.registry import OperatorDecl, OpRegistry, builtin_registry
from ..utils.config import config
from ..utils.errors import (
    MatchFailure,
    OutOfFuel,
    RuntimeTrap,
    TypeMismatch,
    UnificationError,
)
from ..utils.recursion import deep_recursion
from ..utils.span import SourceSpan
from .values import (
    AdtValue,
    Closure,
    ConstructorValue,
    OpClosure,
    RefValue,
    Store,
    TensorValue,
    TupleValue,
    Value,
    format_value,
    random_value,
    to_value,
    value_type,
)

logger = logging.getLogger(__name__)

OpHook = Callable[[OperatorDecl, Mapping[str, Any], Sequence[Any], Any], None]

UNIT_VALUE = TupleValue(())


def _to_host(value: Value) -> Any:
    if isinstance(value, TensorValue):
        return value.array
    if isinstance(value, TupleValue):
        return tuple(_to_host(f) for f in value.fields)
    raise RuntimeTrap(f"operator argument is not a tensor: {format_value(value)}")


def eval_kernel(
    decl: OperatorDecl,
    args: Sequence[Value],
    attrs: Optional[Mapping[str, Any]] = None,
    on_op: Optional[OpHook] = None,
) -> Value:
    """Run an operator's reference kernel on runtime values.

    Args:
        decl: Operator declaration
        args: Argument values (tensors, or tuples of tensors)
        attrs: Call-site attributes, merged over the declared defaults
        on_op: Optional observer called with the inputs and the result

    Returns:
        The kernel result as a value
    """
    resolved = decl.resolve_attrs(attrs)
    host = [_to_host(a) for a in args]
    result = decl.kernel(host, resolved)
    if on_op is not None:
        on_op(decl, resolved, host, result)
    return to_value(result)


class Interpreter:
    """Evaluates expressions of one module; each instance owns its store."""

    def __init__(
        self,
        module: ModuleEnv,
        registry: Optional[OpRegistry] = None,
        fuel: Optional[int] = None,
        on_op: Optional[OpHook] = None,
    ):
        self.module = module
        self.registry = registry or builtin_registry()
        self.budget = config.INTERP_FUEL if fuel is None else fuel
        self.steps = 0
        self.store = Store()
        self.on_op = on_op
        self._captures: dict[int, tuple[Function, tuple[LocalVar, ...]]] = {}
        self._globals: dict[GlobalVar, Closure] = {}

    def tick(self, span: Optional[SourceSpan]) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise OutOfFuel(self.budget, span)

    # Closures and globals

    def global_closure(self, gv: GlobalVar) -> Closure:
        closure = self._globals.get(gv)
        if closure is None:
            closure = Closure(self.module.globals[gv], {}, gv.name)
            self._globals[gv] = closure
        return closure

    def make_closure(self, fn: Function, env: Mapping[LocalVar, Value]) -> Closure:
        cached = self._captures.get(id(fn))
        if cached is None or cached[0] is not fn:
            captured = tuple(v for v in free_vars(fn))
            cached = (fn, captured)
            self._captures[id(fn)] = cached
        return Closure(fn, {v: env[v] for v in cached[1]})

    def constructor_value(self, name: str) -> Value:
        adt, ctor = self.module.lookup_constructor(name)
        if not ctor.fields:
            return AdtValue(name, ctor.tag)
        return ConstructorValue(name, ctor.tag, len(ctor.fields))

    # Evaluation

    def atom(self, expr: Expr, env: Mapping[LocalVar, Value]) -> Value:
        if isinstance(expr, LocalVar):
            try:
                return env[expr]
            except KeyError:
                raise RuntimeTrap(f"unbound variable %{expr.name}", expr.span) from None
        if isinstance(expr, GlobalVar):
            return self.global_closure(expr)
        if isinstance(expr, Constant):
            return TensorValue.from_literal(expr.data)
        if isinstance(expr, OperatorRef):
            return OpClosure(expr.name)
        if isinstance(expr, Constructor):
            return self.constructor_value(expr.name)
        raise TypeError(f"not an atom: {type(expr).__name__}")

    def eval(self, expr: Expr, env: Mapping[LocalVar, Value]) -> Value:
        """Evaluate `expr` under `env`."""
        while True:
            if isinstance(expr, (LocalVar, GlobalVar, Constant, OperatorRef, Constructor)):
                return self.atom(expr, env)
            self.tick(expr.span)
            if isinstance(expr, Let):
                scope = dict(env)
                while isinstance(expr, Let):
                    scope[expr.var] = self.eval(expr.value, scope)
                    expr = expr.body
                env = scope
                continue
            if isinstance(expr, If):
                cond = self.eval(expr.cond, env)
                expr = expr.then_branch if self.truth(cond, expr.span) else expr.else_branch
                continue
            if isinstance(expr, Match):
                value = self.eval(expr.scrutinee, env)
                for clause in expr.clauses:
                    scope = dict(env)
                    if self.match(clause.pattern, value, scope):
                        env, expr = scope, clause.body
                        break
                else:
                    raise MatchFailure(format_value(value), expr.span)
                continue
            if isinstance(expr, Call):
                target = self.call(expr, env)
                if isinstance(target, tuple):
                    # Tail call into a closure body.
                    env, expr = target
                    continue
                return target
            if isinstance(expr, Function):
                return self.make_closure(expr, env)
            if isinstance(expr, Tuple):
                return TupleValue(tuple(self.eval(f, env) for f in expr.fields))
            if isinstance(expr, Projection):
                value = self.eval(expr.tuple_value, env)
                if not isinstance(value, TupleValue):
                    raise RuntimeTrap(f"projection from non-tuple {format_value(value)}", expr.span)
                return value.fields[expr.index]
            if isinstance(expr, RefNew):
                return self.store.new(self.eval(expr.init, env))
            if isinstance(expr, RefRead):
                return self.store.read(self.reference(self.eval(expr.ref, env), expr.span))
            if isinstance(expr, RefWrite):
                ref = self.reference(self.eval(expr.ref, env), expr.span)
                self.store.write(ref, self.eval(expr.value, env))
                return UNIT_VALUE
            raise TypeError(f"cannot evaluate {type(expr).__name__}")

    def call(self, expr: Call, env: Mapping[LocalVar, Value]) -> Any:
        """Evaluate a call; returns a value, or (env, body) for a closure application."""
        callee = expr.callee
        if isinstance(callee, OperatorRef):
            args = [self.eval(a, env) for a in expr.args]
            return eval_kernel(self.registry.lookup(callee.name), args, expr.attrs, self.on_op)
        fn = self.eval(callee, env)
        args = [self.eval(a, env) for a in expr.args]
        return self.enter(fn, args, expr.span, expr.attrs)

    def enter(
        self,
        fn: Value,
        args: Sequence[Value],
        span: Optional[SourceSpan] = None,
        attrs: Optional[Mapping[str, Any]] = None,
    ) -> Any:
        if isinstance(fn, Closure):
            params = fn.fn.param_vars
            if len(params) != len(args):
                raise RuntimeTrap(f"expected {len(params)} arguments, got {len(args)}", span)
            scope = dict(fn.env)
            scope.update(zip(params, args))
            return scope, fn.fn.body
        if isinstance(fn, OpClosure):
            merged = dict(fn.attrs)
            merged.update(attrs or {})
            return eval_kernel(self.registry.lookup(fn.op), args, merged, self.on_op)
        if isinstance(fn, ConstructorValue):
            if len(args) != fn.arity:
                raise RuntimeTrap(f"{fn.name} expects {fn.arity} fields, got {len(args)}", span)
            return AdtValue(fn.name, fn.tag, tuple(args))
        raise RuntimeTrap(f"cannot call {format_value(fn)}", span)

    def apply(self, fn: Value, args: Sequence[Value], span: Optional[SourceSpan] = None) -> Value:
        """Apply a function value to argument values."""
        target = self.enter(fn, args, span)
        if isinstance(target, tuple):
            env, body = target
            return self.eval(body, env)
        return target

    def truth(self, value: Value, span: Optional[SourceSpan]) -> bool:
        if not isinstance(value, TensorValue) or value.array.shape != () or value.array.dtype != np.bool_:
            raise RuntimeTrap(f"condition must be a scalar bool, got {format_value(value)}", span)
        return bool(value.array[()])

    def reference(self, value: Value, span: Optional[SourceSpan]) -> RefValue:
        if not isinstance(value, RefValue):
            raise RuntimeTrap(f"not a reference: {format_value(value)}", span)
        return value

    def match(self, pattern: Pattern, value: Value, env: dict[LocalVar, Value]) -> bool:
        if isinstance(pattern, PatternWildcard):
            return True
        if isinstance(pattern, PatternVar):
            env[pattern.var] = value
            return True
        if isinstance(pattern, PatternConstructor):
            if not isinstance(value, AdtValue) or value.name != pattern.name:
                return False
            if len(pattern.patterns) != len(value.fields):
                return False
            return all(self.match(p, v, env) for p, v in zip(pattern.patterns, value.fields))
        if isinstance(pattern, PatternTuple):
            if not isinstance(value, TupleValue) or len(value.fields) != len(pattern.patterns):
                return False
            return all(self.match(p, v, env) for p, v in zip(pattern.patterns, value.fields))
        raise TypeError(f"unknown pattern {type(pattern).__name__}")

    def run(self, entry: str, args: Iterable[Any] = ()) -> Value:
        """Call global `entry` with `args` (values, arrays or numbers)."""
        gv = self.module.get_global(entry)
        values = [to_value(a) for a in args]
        check_arguments(self.module, entry, values)
        result = self.apply(self.global_closure(gv), values)
        logger.debug(f"@{entry} finished after {self.steps} steps, {len(self.store.cells)} cells")
        return result


def check_arguments(module: ModuleEnv, entry: str, values: Sequence[Value]) -> None:
    """Reject arguments whose count or tensor types do not fit @entry's signature.

    Raises:
        TypeMismatch: On an arity or type mismatch
    """
    fn = module[entry]
    if len(fn.params) != len(values):
        raise TypeMismatch(
            f"{len(fn.params)} arguments",
            f"{len(values)} arguments",
            fn.span,
            f"calling @{entry}",
        )
    scheme = fn.checked_type if isinstance(fn.checked_type, FuncType) else fn.declared_type()
    if scheme is None:
        return
    sig = instantiate(scheme)
    unifier = Unifier()
    for i, (param_type, value) in enumerate(zip(sig.arg_types, values)):
        found = value_type(value)
        if found is None:
            continue
        try:
            unifier.unify(param_type, found)
        except UnificationError:
            raise TypeMismatch(
                unifier.resolve(param_type), found, fn.span, f"argument {i} of @{entry}"
            ) from None


def random_arguments(module: ModuleEnv, entry: str, rng: np.random.Generator) -> list[Value]:
    """Random arguments fitting the parameter types of a type-checked @entry."""
    fn = module[entry]
    scheme = fn.checked_type if isinstance(fn.checked_type, FuncType) else fn.declared_type()
    if scheme is None:
        raise ValueError(f"@{entry} has no known signature")
    return [random_value(ty, rng) for ty in scheme.arg_types]


def interp(
    module: ModuleEnv,
    entry: str = "main",
    args: Iterable[Any] = (),
    registry: Optional[OpRegistry] = None,
    fuel: Optional[int] = None,
    on_op: Optional[OpHook] = None,
) -> Value:
    """Run `entry` of `module` on `args` with a fresh interpreter and store.

    Args:
        module: A type-checked module
        entry: Name of the global to call
        args: Argument values; numpy arrays and numbers are accepted
        registry: Operator registry (defaults to the builtin one)
        fuel: Step budget (defaults to MICRORELAY_FUEL)
        on_op: Observer for every operator evaluation

    Returns:
        The result value

    Raises:
        MatchFailure, TrapDivideByZero, OutOfFuel, TypeMismatch
    """
    interpreter = Interpreter(module, registry, fuel, on_op)
    with deep_recursion():
        return interpreter.run(entry, args)


def eval_expr(expr: Expr, module: Optional[ModuleEnv] = None, registry: Optional[OpRegistry] = None) -> Value:
    """Evaluate a closed expression against `module`'s globals."""
    interpreter = Interpreter(module or ModuleEnv(), registry)
    with deep_recursion():
        return interpreter.eval(expr, {})
