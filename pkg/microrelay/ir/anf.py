"""Conversion to A-normal form."""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .expr import (
    Call,
    Clause,
    Expr,
    Function,
    If,
    Let,
    LocalVar,
    Match,
    ModuleEnv,
    Projection,
    RefNew,
    RefRead,
    RefWrite,
    Tuple,
    is_atom,
)
from .analysis import is_pure
from .types import Type


class _Scope:
    """Bindings emitted for one let chain, plus the values already named in it."""

    def __init__(self, parent: Optional["_Scope"] = None):
        self.parent = parent
        self.bindings: list[tuple[LocalVar, Expr, Optional[Type]]] = []
        self.named: dict[int, LocalVar] = {}
        self._keep: list[Expr] = []

    def lookup(self, expr: Expr) -> Optional[LocalVar]:
        scope: Optional[_Scope] = self
        while scope is not None:
            var = scope.named.get(id(expr))
            if var is not None:
                return var
            scope = scope.parent
        return None

    def bind(self, expr: Expr, value: Expr, share: bool, hint: str = "t") -> LocalVar:
        var = LocalVar.fresh(hint, span=expr.span)
        self.bindings.append((var, value, None))
        if share:
            self.remember(expr, var)
        return var

    def remember(self, expr: Expr, var: LocalVar) -> None:
        self.named[id(expr)] = var
        self._keep.append(expr)

    def wrap(self, body: Expr) -> Expr:
        for var, value, annotation in reversed(self.bindings):
            body = Let(var, value, body, annotation, span=value.span)
        return body


class _ToANF:
    """Effectful nodes reached twice are evaluated twice, as the interpreter does."""

    def __init__(self):
        self._pure: dict[int, bool] = {}

    def shareable(self, expr: Expr) -> bool:
        return is_pure(expr, self._pure)

    def scope_body(self, expr: Expr, parent: Optional[_Scope]) -> Expr:
        scope = _Scope(parent)
        atom = self.atom(expr, scope)
        return scope.wrap(atom)

    def atom(self, expr: Expr, scope: _Scope) -> Expr:
        """Normalize `expr`, naming it unless it is already an atom."""
        if is_atom(expr):
            return expr
        if isinstance(expr, Let):
            return self.let_chain(expr, scope)
        share = self.shareable(expr)
        named = scope.lookup(expr) if share else None
        if named is not None:
            return named
        value = self.value(expr, scope)
        return scope.bind(expr, value, share)

    def let_chain(self, expr: Expr, scope: _Scope) -> Expr:
        while isinstance(expr, Let):
            share = not is_atom(expr.value) and self.shareable(expr.value)
            shared = scope.lookup(expr.value) if share else None
            if shared is not None:
                value: Expr = shared
            elif is_atom(expr.value):
                value = expr.value
            else:
                value = self.value(expr.value, scope)
            scope.bindings.append((expr.var, value, expr.type_annotation))
            if share and shared is None:
                scope.remember(expr.value, expr.var)
            expr = expr.body
        return self.atom(expr, scope)

    def value(self, expr: Expr, scope: _Scope) -> Expr:
        """Normalize the operands of a compound expression, keeping its head."""
        if isinstance(expr, Let):
            return self.let_chain(expr, scope)
        if isinstance(expr, Call):
            callee = expr.callee
            if isinstance(callee, Function):
                callee = self.function(callee, scope)
            else:
                callee = self.atom(callee, scope)
            args = tuple(self.atom(a, scope) for a in expr.args)
            return replace(expr, callee=callee, args=args)
        if isinstance(expr, Function):
            return self.function(expr, scope)
        if isinstance(expr, Tuple):
            return replace(expr, fields=tuple(self.atom(f, scope) for f in expr.fields))
        if isinstance(expr, Projection):
            return replace(expr, tuple_value=self.atom(expr.tuple_value, scope))
        if isinstance(expr, If):
            cond = self.atom(expr.cond, scope)
            return replace(
                expr,
                cond=cond,
                then_branch=self.scope_body(expr.then_branch, scope),
                else_branch=self.scope_body(expr.else_branch, scope),
            )
        if isinstance(expr, Match):
            scrutinee = self.atom(expr.scrutinee, scope)
            clauses = tuple(Clause(c.pattern, self.scope_body(c.body, scope)) for c in expr.clauses)
            return replace(expr, scrutinee=scrutinee, clauses=clauses)
        if isinstance(expr, RefNew):
            return replace(expr, init=self.atom(expr.init, scope))
        if isinstance(expr, RefRead):
            return replace(expr, ref=self.atom(expr.ref, scope))
        if isinstance(expr, RefWrite):
            ref = self.atom(expr.ref, scope)
            return replace(expr, ref=ref, value=self.atom(expr.value, scope))
        return expr

    def function(self, fn: Function, scope: Optional[_Scope]) -> Function:
        return replace(fn, body=self.scope_body(fn.body, scope))


def to_anf(expr: Expr) -> Expr:
    """Let-bind every compound sub-expression, preserving evaluation order.

    A function literal in callee position stays inline, so fused calls keep the
    `fn (...) { ... }(args)` shape. Shared pure sub-expressions are named once in
    the innermost scope that dominates their first use; an effectful one is
    re-emitted at every use.
    """
    if isinstance(expr, Function):
        return _ToANF().function(expr, None)
    return _ToANF().scope_body(expr, None)


def module_to_anf(module: ModuleEnv) -> ModuleEnv:
    """Apply `to_anf` to the body of every non-prelude global."""
    updated = dict(module.globals)
    for gv in module.user_globals():
        updated[gv] = to_anf(module.globals[gv])  # type: ignore[assignment]
    return module.with_globals(updated)


def is_anf(expr: Expr) -> bool:
    """True when every operand position holds an atom."""
    from .expr import children

    def operand_ok(e: Expr) -> bool:
        return is_atom(e)

    def check(node: Expr) -> bool:
        while isinstance(node, Let):
            if not check_value(node.value):
                return False
            node = node.body
        return is_atom(node)

    def check_value(node: Expr) -> bool:
        if is_atom(node):
            return True
        if isinstance(node, Call):
            callee_ok = (
                check_function(node.callee) if isinstance(node.callee, Function) else operand_ok(node.callee)
            )
            return callee_ok and all(operand_ok(a) for a in node.args)
        if isinstance(node, Function):
            return check_function(node)
        if isinstance(node, If):
            return operand_ok(node.cond) and check(node.then_branch) and check(node.else_branch)
        if isinstance(node, Match):
            return operand_ok(node.scrutinee) and all(check(c.body) for c in node.clauses)
        if isinstance(node, Let):
            return False
        return all(operand_ok(c) for c in children(node))

    def check_function(fn: Function) -> bool:
        return check(fn.body)

    if isinstance(expr, Function):
        return check_function(expr)
    return check(expr)

