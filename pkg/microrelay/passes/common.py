"""Helpers shared by the rewriting passes."""

from __future__ import annotations

from collections import Counter
from typing import Callable, Optional

import numpy as np

from ..ir.expr import (
    Call,
    Constant,
    Expr,
    Function,
    GlobalVar,
    Let,
    LocalVar,
    ModuleEnv,
    OperatorRef,
    children,
    let_chain,
)
from ..ir.visitor import ExprMutator

FunctionRewrite = Callable[[GlobalVar, Function], Function]


def map_user_functions(module: ModuleEnv, rewrite: FunctionRewrite) -> ModuleEnv:
    """Apply `rewrite` to every non-prelude global, keeping declaration order."""
    updated = dict(module.globals)
    for gv in module.user_globals():
        updated[gv] = rewrite(gv, module.globals[gv])
    return module.with_globals(updated)


class ScopedMutator(ExprMutator):
    """An ExprMutator that rewrites let chains front to back.

    Each binding's value is rewritten before anything after it, so subclasses
    can record what a variable is bound to (`self.bound`) and consult it while
    rewriting later bindings. `rewrite_binding` may drop a binding by
    returning None.
    """

    def __init__(self) -> None:
        super().__init__()
        self.bound: dict[LocalVar, Expr] = {}

    def rewrite_binding(self, let: Let, value: Expr) -> Optional[Expr]:
        return value

    def visit_let(self, expr: Let) -> Expr:
        chain, body = let_chain(expr)
        kept: list[tuple[Let, Expr]] = []
        for let in chain:
            value = self.visit(let.value)
            value = self.rewrite_binding(let, value)
            if value is None:
                continue
            self.bound[let.var] = value
            kept.append((let, value))
        result = self.visit(body)
        for let, value in reversed(kept):
            if value is let.value and result is let.body:
                result = let
            else:
                result = Let(let.var, value, result, let.type_annotation, span=let.span)
        return result

    def lookup(self, expr: Expr) -> Expr:
        """Follow let-bound variables to the expression they name."""
        seen = 0
        while isinstance(expr, LocalVar) and expr in self.bound and seen < 64:
            expr = self.bound[expr]
            seen += 1
        return expr


def use_counts(expr: Expr) -> Counter:
    """How many times each local variable is referenced (binders excluded)."""
    counts: Counter = Counter()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, LocalVar):
            counts[node] += 1
            continue
        if isinstance(node, Let):
            chain, body = let_chain(node)
            stack.extend(let.value for let in chain)
            stack.append(body)
            continue
        stack.extend(children(node))
    return counts


def is_op_call(expr: Expr, name: Optional[str] = None) -> bool:
    return (
        isinstance(expr, Call)
        and isinstance(expr.callee, OperatorRef)
        and (name is None or expr.callee.name == name)
    )


def constant_array(expr: Expr) -> Optional[np.ndarray]:
    if isinstance(expr, Constant):
        return expr.data.array
    return None
