"""Common subexpression elimination over ANF let chains.

A pure binding whose value is alpha-equal to a binding in the same or an
enclosing scope is dropped and its variable replaced by the earlier one.
Branch bodies, clause bodies and function bodies open new scopes, so a value
computed in one arm is never reused in another.
"""

import logging
from typing import Any, Optional

from ..ir.analysis import is_pure, structural_key
from ..ir.expr import Clause, Expr, Function, GlobalVar, If, Let, LocalVar, Match, ModuleEnv, is_atom
from ..ir.anf import to_anf
from .common import ScopedMutator, map_user_functions

logger = logging.getLogger(__name__)


class CommonSubexprEliminator(ScopedMutator):
    def __init__(self) -> None:
        super().__init__()
        self.scopes: list[dict[Any, LocalVar]] = [{}]
        self.renamed: dict[LocalVar, LocalVar] = {}
        self.merged = 0

    def visit_local_var(self, expr: LocalVar) -> Expr:
        return self.renamed.get(expr, expr)

    def _find(self, key: Any) -> Optional[LocalVar]:
        for scope in reversed(self.scopes):
            if key in scope:
                return scope[key]
        return None

    def _scoped(self, expr: Expr) -> Expr:
        self.scopes.append({})
        try:
            return self.visit(expr)
        finally:
            self.scopes.pop()

    def rewrite_binding(self, let: Let, value: Expr) -> Optional[Expr]:
        if is_atom(value) or not is_pure(value) or isinstance(value, Function):
            return value
        key = structural_key(value)
        earlier = self._find(key)
        if earlier is not None:
            self.renamed[let.var] = earlier
            self.merged += 1
            return None
        self.scopes[-1][key] = let.var
        return value

    def visit_if(self, expr: If) -> Expr:
        cond = self.visit(expr.cond)
        then_branch = self._scoped(expr.then_branch)
        else_branch = self._scoped(expr.else_branch)
        return If(cond, then_branch, else_branch, span=expr.span)

    def visit_match(self, expr: Match) -> Expr:
        scrutinee = self.visit(expr.scrutinee)
        clauses = tuple(Clause(c.pattern, self._scoped(c.body)) for c in expr.clauses)
        return Match(scrutinee, clauses, span=expr.span)

    def visit_function(self, expr: Function) -> Expr:
        body = self._scoped(expr.body)
        if body is expr.body:
            return expr
        return Function(expr.params, body, expr.ret_type, expr.type_params, expr.attrs, span=expr.span)


def common_subexpr_elim(module: ModuleEnv) -> ModuleEnv:
    """Merge alpha-equal pure bindings; the module is put in ANF first."""
    total = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal total
        eliminator = CommonSubexprEliminator()
        result = eliminator.visit(to_anf(fn))
        total += eliminator.merged
        return result  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.debug(f"Merged {total} common subexpressions")
    return module
