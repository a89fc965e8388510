"""Generic traversal and rewriting of expressions.

Both classes memoize on node identity, so a sub-graph shared between several
parents is visited (and rewritten) once. Let chains are walked iteratively.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

from .expr import (
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
    OperatorRef,
    Param,
    Pattern,
    Projection,
    RefNew,
    RefRead,
    RefWrite,
    Tuple,
    children,
)


class ExprVisitor:
    """Visit every node once, in evaluation order."""

    def __init__(self) -> None:
        self._visited: set[int] = set()

    def visit(self, expr: Expr) -> None:
        if id(expr) in self._visited:
            return
        self._visited.add(id(expr))
        if isinstance(expr, Let):
            self._visit_let_chain(expr)
            return
        self.visit_node(expr)
        for child in children(expr):
            self.visit(child)

    def _visit_let_chain(self, expr: Expr) -> None:
        while isinstance(expr, Let):
            self.visit_node(expr)
            self.visit(expr.value)
            expr = expr.body
            if id(expr) in self._visited:
                return
            self._visited.add(id(expr))
        self.visit_node(expr)
        for child in children(expr):
            self.visit(child)

    def visit_node(self, expr: Expr) -> None:
        """Hook called once per node before its children."""


def post_order_visit(expr: Expr, fn: Callable[[Expr], None]) -> None:
    """Call `fn` on every node, children first."""

    class _PostOrder(ExprVisitor):
        def visit(self, node: Expr) -> None:
            stack = [(node, False)]
            while stack:
                current, expanded = stack.pop()
                if expanded:
                    fn(current)
                    continue
                if id(current) in self._visited:
                    continue
                self._visited.add(id(current))
                stack.append((current, True))
                for child in reversed(list(children(current))):
                    if id(child) not in self._visited:
                        stack.append((child, False))

    _PostOrder().visit(expr)


class ExprMutator:
    """Rebuild an expression bottom-up; unchanged nodes are returned as is."""

    def __init__(self) -> None:
        self.memo: dict[int, Expr] = {}
        self._keep: list[Expr] = []

    def visit(self, expr: Expr) -> Expr:
        key = id(expr)
        if key in self.memo:
            return self.memo[key]
        if isinstance(expr, Let):
            result = self.visit_let(expr)
        else:
            method = getattr(self, _METHODS[type(expr)])
            result = method(expr)
        self.memo[key] = result
        self._keep.append(expr)
        return result

    def visit_local_var(self, expr: LocalVar) -> Expr:
        return expr

    def visit_global_var(self, expr: GlobalVar) -> Expr:
        return expr

    def visit_constant(self, expr: Constant) -> Expr:
        return expr

    def visit_operator_ref(self, expr: OperatorRef) -> Expr:
        return expr

    def visit_constructor(self, expr: Constructor) -> Expr:
        return expr

    def visit_call(self, expr: Call) -> Expr:
        callee = self.visit(expr.callee)
        args = tuple(self.visit(a) for a in expr.args)
        if callee is expr.callee and all(a is b for a, b in zip(args, expr.args)):
            return expr
        return replace(expr, callee=callee, args=args)

    def visit_let(self, expr: Let) -> Expr:
        # Iterative over the chain so long ANF bodies do not exhaust the stack.
        chain: list[Let] = []
        node: Expr = expr
        while isinstance(node, Let) and (node is expr or id(node) not in self.memo):
            chain.append(node)
            node = node.body
        body = self.visit(node)
        for let in reversed(chain):
            result = self.visit_let_binding(let, body)
            if let is not expr:
                self.memo[id(let)] = result
                self._keep.append(let)
            body = result
        return body

    def visit_let_binding(self, expr: Let, new_body: Expr) -> Expr:
        """Rebuild one binding given its already-visited body."""
        var = self.visit(expr.var)
        value = self.visit(expr.value)
        if var is expr.var and value is expr.value and new_body is expr.body:
            return expr
        return replace(expr, var=var, value=value, body=new_body)

    def visit_function(self, expr: Function) -> Expr:
        params = tuple(Param(self.visit(p.var), p.annotation) for p in expr.params)
        body = self.visit(expr.body)
        if body is expr.body and all(a.var is b.var for a, b in zip(params, expr.params)):
            return expr
        return replace(expr, params=params, body=body)

    def visit_tuple(self, expr: Tuple) -> Expr:
        fields = tuple(self.visit(f) for f in expr.fields)
        if all(a is b for a, b in zip(fields, expr.fields)):
            return expr
        return replace(expr, fields=fields)

    def visit_projection(self, expr: Projection) -> Expr:
        value = self.visit(expr.tuple_value)
        return expr if value is expr.tuple_value else replace(expr, tuple_value=value)

    def visit_if(self, expr: If) -> Expr:
        cond = self.visit(expr.cond)
        then_branch = self.visit(expr.then_branch)
        else_branch = self.visit(expr.else_branch)
        if cond is expr.cond and then_branch is expr.then_branch and else_branch is expr.else_branch:
            return expr
        return replace(expr, cond=cond, then_branch=then_branch, else_branch=else_branch)

    def visit_pattern(self, pattern: Pattern) -> Pattern:
        return pattern

    def visit_match(self, expr: Match) -> Expr:
        scrutinee = self.visit(expr.scrutinee)
        clauses = tuple(Clause(self.visit_pattern(c.pattern), self.visit(c.body)) for c in expr.clauses)
        if scrutinee is expr.scrutinee and all(
            a.pattern is b.pattern and a.body is b.body for a, b in zip(clauses, expr.clauses)
        ):
            return expr
        return replace(expr, scrutinee=scrutinee, clauses=clauses)

    def visit_ref_new(self, expr: RefNew) -> Expr:
        init = self.visit(expr.init)
        return expr if init is expr.init else replace(expr, init=init)

    def visit_ref_read(self, expr: RefRead) -> Expr:
        ref = self.visit(expr.ref)
        return expr if ref is expr.ref else replace(expr, ref=ref)

    def visit_ref_write(self, expr: RefWrite) -> Expr:
        ref = self.visit(expr.ref)
        value = self.visit(expr.value)
        if ref is expr.ref and value is expr.value:
            return expr
        return replace(expr, ref=ref, value=value)


_METHODS = {
    LocalVar: "visit_local_var",
    GlobalVar: "visit_global_var",
    Constant: "visit_constant",
    OperatorRef: "visit_operator_ref",
    Constructor: "visit_constructor",
    Call: "visit_call",
    Function: "visit_function",
    Tuple: "visit_tuple",
    Projection: "visit_projection",
    If: "visit_if",
    Match: "visit_match",
    RefNew: "visit_ref_new",
    RefRead: "visit_ref_read",
    RefWrite: "visit_ref_write",
}


class Substitute(ExprMutator):
    """Replace local variables according to a mapping."""

    def __init__(self, mapping: dict[LocalVar, Expr]):
        super().__init__()
        self.mapping = mapping

    def visit_local_var(self, expr: LocalVar) -> Expr:
        return self.mapping.get(expr, expr)


def substitute(expr: Expr, mapping: dict[LocalVar, Expr]) -> Expr:
    if not mapping:
        return expr
    return Substitute(mapping).visit(expr)
