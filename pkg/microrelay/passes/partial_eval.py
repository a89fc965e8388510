"""Online partial evaluator.

The evaluator interprets a function body over partially static values: every
value is either known at compile time (a tensor, a tuple, a closure, an ADT
value or a reference cell, each carrying the residual atom that rebuilds it)
or dynamic (only the residual atom). Residual code is emitted in A-normal
form, in evaluation order, so effects keep their order.

Policy:

* operator calls on static tensors are evaluated;
* conditionals and matches on static values take the known branch;
* a call to a global is unfolded when at least one argument is static and no
  dynamic conditional encloses it; under a dynamic conditional the call is
  residualized, which bounds unrolling to statically decided recursion;
* a local closure is inlined when at least one argument is static;
* reference cells are simulated; an unknown write, a residualized call or a
  dynamic branch forgets every cell.

Each unfolding and each evaluated operator costs one unit of fuel;
FuelExhausted is raised when MICRORELAY_PE_FUEL units are used up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Union

from ..ir.expr import (
    Call,
    Clause,
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
    Param,
    Pattern,
    PatternConstructor,
    PatternTuple,
    PatternVar,
    PatternWildcard,
    Projection,
    RefNew,
    RefRead,
    RefWrite,
    TensorLiteral,
    Tuple,
)
from ..ops.registry import OpRegistry, builtin_registry
from ..runtime.interpreter import eval_kernel
from ..runtime.values import TensorValue, TupleValue, Value
from ..utils.config import config
from ..utils.errors import FuelExhausted, RuntimeTrap
from ..utils.recursion import deep_recursion
from .common import map_user_functions
from .dead_code import eliminate_dead_code

logger = logging.getLogger(__name__)


# Partially static values


@dataclass(eq=False)
class StaticTensor:
    literal: TensorLiteral


@dataclass(eq=False)
class StaticTuple:
    fields: list["PValue"]


@dataclass(eq=False)
class StaticClosure:
    fn: Function
    env: Mapping[LocalVar, "PValue"] = field(default_factory=dict)
    gv: Optional[GlobalVar] = None


@dataclass(eq=False)
class StaticAdt:
    name: str
    tag: int
    fields: list["PValue"] = field(default_factory=list)


@dataclass(eq=False)
class StaticRef:
    cell: int


@dataclass(eq=False)
class StaticOp:
    name: str


@dataclass(eq=False)
class StaticConstructor:
    name: str
    tag: int
    arity: int


Static = Union[StaticTensor, StaticTuple, StaticClosure, StaticAdt, StaticRef, StaticOp, StaticConstructor]


@dataclass(eq=False)
class PValue:
    """A partially static value; `static` is None for a dynamic one."""

    static: Optional[Static]
    residual: Expr

    @property
    def is_dynamic(self) -> bool:
        return self.static is None


def dynamic(residual: Expr) -> PValue:
    return PValue(None, residual)


def _runtime_value(value: PValue) -> Optional[Value]:
    """The runtime value of a fully static tensor or tuple of tensors."""
    static = value.static
    if isinstance(static, StaticTensor):
        return TensorValue.from_literal(static.literal)
    if isinstance(static, StaticTuple):
        fields = [_runtime_value(f) for f in static.fields]
        if any(f is None for f in fields):
            return None
        return TupleValue(tuple(fields))  # type: ignore[arg-type]
    return None


# Simulated store


class SimulatedStore:
    """Compile-time picture of the reference cells; None marks an unknown cell."""

    def __init__(self, counter: Optional[list[int]] = None):
        self.cells: dict[int, Optional[PValue]] = {}
        self.generation = 0
        self._counter = counter if counter is not None else [0]

    def new(self, value: PValue) -> int:
        cell = self._counter[0]
        self._counter[0] += 1
        self.cells[cell] = value
        return cell

    def read(self, cell: int) -> Optional[PValue]:
        return self.cells.get(cell)

    def write(self, cell: int, value: PValue) -> None:
        self.cells[cell] = value

    def invalidate(self) -> None:
        self.cells = {cell: None for cell in self.cells}
        self.generation += 1

    def copy(self) -> "SimulatedStore":
        other = SimulatedStore(self._counter)
        other.cells = dict(self.cells)
        other.generation = self.generation
        return other

    def forgotten(self) -> "SimulatedStore":
        other = self.copy()
        other.invalidate()
        return other


class LetList:
    """Residual bindings of one scope, in emission order."""

    def __init__(self) -> None:
        self.bindings: list[tuple[LocalVar, Expr]] = []

    def emit(self, value: Expr, hint: str = "v") -> LocalVar:
        var = LocalVar.fresh(hint, span=value.span)
        self.bindings.append((var, value))
        return var

    def wrap(self, body: Expr) -> Expr:
        for var, value in reversed(self.bindings):
            body = Let(var, value, body, span=value.span)
        return body


# Evaluator


class PartialEvaluator:
    def __init__(self, module: ModuleEnv, registry: OpRegistry, fuel: Optional[int] = None):
        self.module = module
        self.registry = registry
        self.budget = config.PE_FUEL if fuel is None else fuel
        self.steps = 0
        self.dynamic_depth = 0
        self.store = SimulatedStore()

    def tick(self, span) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise FuelExhausted(self.budget, span)

    def specialize(self, fn: Function) -> Function:
        """Partially evaluate a global's body with every parameter dynamic."""
        self.store = SimulatedStore()
        env = {p.var: dynamic(p.var) for p in fn.params}
        ll = LetList()
        result = self.eval(fn.body, env, ll)
        return Function(fn.params, ll.wrap(result.residual), fn.ret_type, fn.type_params, fn.attrs, span=fn.span)

    # Expressions

    def eval(self, expr: Expr, env: Mapping[LocalVar, PValue], ll: LetList) -> PValue:
        while isinstance(expr, Let):
            scope = dict(env)
            while isinstance(expr, Let):
                scope[expr.var] = self.eval(expr.value, scope, ll)
                expr = expr.body
            env = scope
        if isinstance(expr, LocalVar):
            return env.get(expr) or dynamic(expr)
        if isinstance(expr, GlobalVar):
            return PValue(StaticClosure(self.module.globals[expr], {}, expr), expr)
        if isinstance(expr, Constant):
            return PValue(StaticTensor(expr.data), expr)
        if isinstance(expr, OperatorRef):
            return PValue(StaticOp(expr.name), expr)
        if isinstance(expr, Constructor):
            adt, ctor = self.module.lookup_constructor(expr.name)
            if not ctor.fields:
                return PValue(StaticAdt(ctor.name, ctor.tag), expr)
            return PValue(StaticConstructor(ctor.name, ctor.tag, len(ctor.fields)), expr)
        method = getattr(self, f"_eval_{type(expr).__name__.lower()}")
        return method(expr, env, ll)

    def _eval_tuple(self, expr: Tuple, env, ll: LetList) -> PValue:
        fields = [self.eval(f, env, ll) for f in expr.fields]
        var = ll.emit(Tuple(tuple(f.residual for f in fields), span=expr.span), "tup")
        return PValue(StaticTuple(fields), var)

    def _eval_projection(self, expr: Projection, env, ll: LetList) -> PValue:
        value = self.eval(expr.tuple_value, env, ll)
        if isinstance(value.static, StaticTuple):
            return value.static.fields[expr.index]
        return dynamic(ll.emit(Projection(value.residual, expr.index, span=expr.span), "proj"))

    def _eval_function(self, expr: Function, env, ll: LetList) -> PValue:
        closure = StaticClosure(expr, dict(env))
        if expr.is_primitive:
            return PValue(closure, ll.emit(expr, "prim"))
        return PValue(closure, ll.emit(self.residual_function(expr, env), "fn"))

    def residual_function(self, fn: Function, env: Mapping[LocalVar, PValue]) -> Function:
        params = [Param(LocalVar.fresh(p.var.name, span=p.var.span), p.annotation) for p in fn.params]
        inner = dict(env)
        inner.update({old.var: dynamic(new.var) for old, new in zip(fn.params, params)})
        saved = self.store
        self.store = saved.forgotten()
        self.dynamic_depth += 1
        try:
            body_ll = LetList()
            result = self.eval(fn.body, inner, body_ll)
        finally:
            self.dynamic_depth -= 1
            self.store = saved
        return Function(params, body_ll.wrap(result.residual), fn.ret_type, fn.type_params, fn.attrs, span=fn.span)

    def _branch(self, expr: Expr, env, store: SimulatedStore) -> Expr:
        self.store = store
        self.dynamic_depth += 1
        try:
            ll = LetList()
            result = self.eval(expr, env, ll)
        finally:
            self.dynamic_depth -= 1
        return ll.wrap(result.residual)

    def _eval_if(self, expr: If, env, ll: LetList) -> PValue:
        cond = self.eval(expr.cond, env, ll)
        if isinstance(cond.static, StaticTensor) and cond.static.literal.shape == ():
            taken = expr.then_branch if bool(cond.static.literal.data[0]) else expr.else_branch
            return self.eval(taken, env, ll)
        saved = self.store
        then_branch = self._branch(expr.then_branch, env, saved.copy())
        else_branch = self._branch(expr.else_branch, env, saved.copy())
        self.store = saved
        self.store.invalidate()
        return dynamic(ll.emit(If(cond.residual, then_branch, else_branch, span=expr.span), "if"))

    def _eval_match(self, expr: Match, env, ll: LetList) -> PValue:
        scrutinee = self.eval(expr.scrutinee, env, ll)
        remaining = list(expr.clauses)
        while remaining:
            clause = remaining[0]
            bindings: dict[LocalVar, PValue] = {}
            outcome = _match_static(clause.pattern, scrutinee, bindings)
            if outcome is None:
                break
            if outcome:
                scope = dict(env)
                scope.update(bindings)
                return self.eval(clause.body, scope, ll)
            remaining.pop(0)
        if not remaining:
            # No clause can match; the residual match fails at run time.
            remaining = list(expr.clauses)
        saved = self.store
        clauses = []
        for clause in remaining:
            pattern, renaming = _rename_pattern(clause.pattern)
            scope = dict(env)
            scope.update({old: dynamic(new) for old, new in renaming.items()})
            clauses.append(Clause(pattern, self._branch(clause.body, scope, saved.copy())))
        self.store = saved
        self.store.invalidate()
        return dynamic(ll.emit(Match(scrutinee.residual, tuple(clauses), span=expr.span), "match"))

    def _eval_refnew(self, expr: RefNew, env, ll: LetList) -> PValue:
        init = self.eval(expr.init, env, ll)
        var = ll.emit(RefNew(init.residual, span=expr.span), "ref")
        return PValue(StaticRef(self.store.new(init)), var)

    def _eval_refread(self, expr: RefRead, env, ll: LetList) -> PValue:
        ref = self.eval(expr.ref, env, ll)
        if isinstance(ref.static, StaticRef):
            known = self.store.read(ref.static.cell)
            if known is not None:
                return known
        return dynamic(ll.emit(RefRead(ref.residual, span=expr.span), "read"))

    def _eval_refwrite(self, expr: RefWrite, env, ll: LetList) -> PValue:
        ref = self.eval(expr.ref, env, ll)
        value = self.eval(expr.value, env, ll)
        var = ll.emit(RefWrite(ref.residual, value.residual, span=expr.span), "unit")
        if isinstance(ref.static, StaticRef):
            self.store.write(ref.static.cell, value)
        else:
            self.store.invalidate()
        return PValue(StaticTuple([]), var)

    def _eval_call(self, expr: Call, env, ll: LetList) -> PValue:
        if isinstance(expr.callee, OperatorRef):
            args = [self.eval(a, env, ll) for a in expr.args]
            return self.op_call(expr.callee.name, args, expr.attrs, expr, ll)
        callee = self.eval(expr.callee, env, ll)
        args = [self.eval(a, env, ll) for a in expr.args]
        return self.apply(callee, args, expr, ll)

    # Calls

    def op_call(self, name: str, args: list[PValue], attrs: Mapping[str, Any], site: Call, ll: LetList) -> PValue:
        values = [_runtime_value(a) for a in args]
        if all(v is not None for v in values):
            try:
                result = eval_kernel(self.registry.lookup(name), values, attrs)  # type: ignore[arg-type]
            except RuntimeTrap:
                result = None
            if result is not None:
                self.tick(site.span)
                return self.reify(result, ll)
        call = Call(OperatorRef(name), tuple(a.residual for a in args), attrs, span=site.span)
        return dynamic(ll.emit(call, name))

    def reify(self, value: Value, ll: LetList) -> PValue:
        if isinstance(value, TensorValue):
            lit = value.to_literal()
            return PValue(StaticTensor(lit), Constant(lit))
        assert isinstance(value, TupleValue)
        fields = [self.reify(f, ll) for f in value.fields]
        var = ll.emit(Tuple(tuple(f.residual for f in fields)), "tup")
        return PValue(StaticTuple(fields), var)

    def apply(self, callee: PValue, args: list[PValue], site: Call, ll: LetList) -> PValue:
        static = callee.static
        any_static = any(not a.is_dynamic for a in args)
        if isinstance(static, StaticOp):
            return self.op_call(static.name, args, site.attrs, site, ll)
        if isinstance(static, StaticConstructor):
            var = ll.emit(Call(Constructor(static.name), tuple(a.residual for a in args), span=site.span), "adt")
            return PValue(StaticAdt(static.name, static.tag, list(args)), var)
        if isinstance(static, StaticClosure):
            fn = static.fn
            if static.gv is not None:
                unfold = any_static and self.dynamic_depth == 0
            elif fn.is_primitive:
                unfold = all(_runtime_value(a) is not None for a in args)
            else:
                unfold = any_static
            if unfold:
                self.tick(site.span)
                scope = dict(static.env)
                scope.update(zip(fn.param_vars, args))
                return self.eval(fn.body, scope, ll)
            residual_callee = fn if fn.is_primitive else callee.residual
        else:
            residual_callee = callee.residual
        self.store.invalidate()
        call = Call(residual_callee, tuple(a.residual for a in args), type_args=site.type_args, span=site.span)
        return dynamic(ll.emit(call, "call"))


def _match_static(pattern: Pattern, value: PValue, bindings: dict[LocalVar, PValue]) -> Optional[bool]:
    """True or False when the match is decided at compile time, None otherwise."""
    if isinstance(pattern, PatternWildcard):
        return True
    if isinstance(pattern, PatternVar):
        bindings[pattern.var] = value
        return True
    static = value.static
    if isinstance(pattern, PatternConstructor):
        if not isinstance(static, StaticAdt):
            return None
        if static.name != pattern.name:
            return False
        subs = list(zip(pattern.patterns, static.fields))
    elif isinstance(pattern, PatternTuple):
        if not isinstance(static, StaticTuple):
            return None
        subs = list(zip(pattern.patterns, static.fields))
    else:
        raise TypeError(f"unknown pattern {type(pattern).__name__}")
    outcome: Optional[bool] = True
    for sub_pattern, sub_value in subs:
        result = _match_static(sub_pattern, sub_value, bindings)
        if result is False:
            return False
        if result is None:
            outcome = None
    return outcome


def _rename_pattern(pattern: Pattern) -> tuple[Pattern, dict[LocalVar, LocalVar]]:
    renaming: dict[LocalVar, LocalVar] = {}

    def walk(p: Pattern) -> Pattern:
        if isinstance(p, PatternVar):
            fresh = LocalVar.fresh(p.var.name, span=p.var.span)
            renaming[p.var] = fresh
            return PatternVar(fresh, span=p.span)
        if isinstance(p, PatternConstructor):
            return PatternConstructor(p.name, tuple(walk(s) for s in p.patterns), span=p.span)
        if isinstance(p, PatternTuple):
            return PatternTuple(tuple(walk(s) for s in p.patterns), span=p.span)
        return p

    return walk(pattern), renaming


def partial_eval(
    module: ModuleEnv,
    fuel: Optional[int] = None,
    registry: Optional[OpRegistry] = None,
) -> ModuleEnv:
    """Partially evaluate every user global; the result is in ANF.

    Raises:
        FuelExhausted: When unfolding needs more than `fuel` steps
    """
    evaluator = PartialEvaluator(module, registry or builtin_registry(), fuel)

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        return eliminate_dead_code(evaluator.specialize(fn))  # type: ignore[return-value]

    with deep_recursion():
        module = map_user_functions(module, rewrite)
    logger.debug(f"Partial evaluation used {evaluator.steps} of {evaluator.budget} fuel")
    return module
