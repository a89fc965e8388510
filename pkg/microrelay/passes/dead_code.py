"""Dead code elimination for let bindings."""

import logging

from ..ir.analysis import free_vars, is_pure
from ..ir.expr import Expr, Function, GlobalVar, Let, ModuleEnv, let_chain
from ..ir.visitor import ExprMutator
from .common import map_user_functions

logger = logging.getLogger(__name__)


class DeadCodeEliminator(ExprMutator):
    def __init__(self) -> None:
        super().__init__()
        self.removed = 0

    def visit_let(self, expr: Let) -> Expr:
        chain, body = let_chain(expr)
        values = [self.visit(let.value) for let in chain]
        result = self.visit(body)
        live = set(free_vars(result))
        # Walking backwards removes whole dead chains in one sweep.
        for let, value in zip(reversed(chain), reversed(values)):
            if let.var not in live and is_pure(value):
                self.removed += 1
                continue
            live.update(free_vars(value))
            result = Let(let.var, value, result, let.type_annotation, span=let.span)
        return result


def eliminate_dead_code(expr: Expr) -> Expr:
    return DeadCodeEliminator().visit(expr)


def dead_code_elim(module: ModuleEnv) -> ModuleEnv:
    """Remove bindings whose variable is unused and whose value has no effect."""
    total = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal total
        eliminator = DeadCodeEliminator()
        result = eliminator.visit(fn)
        total += eliminator.removed
        return result  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.debug(f"Removed {total} dead bindings")
    return module
