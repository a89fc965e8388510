"""Constant folding: operator calls on constant arguments are evaluated away."""

import logging
from typing import Optional

from ..ir.expr import Call, Constant, Expr, Function, GlobalVar, Let, ModuleEnv, Tuple
from ..ops.registry import OpRegistry, builtin_registry
from ..runtime.interpreter import eval_kernel
from ..runtime.values import TensorValue, TupleValue, Value
from ..utils.errors import RuntimeTrap
from .common import ScopedMutator, is_op_call, map_user_functions

logger = logging.getLogger(__name__)


def _static(expr: Expr) -> Optional[Value]:
    """The value of a constant or a tuple of constants, else None."""
    if isinstance(expr, Constant):
        return TensorValue.from_literal(expr.data)
    if isinstance(expr, Tuple):
        fields = [_static(f) for f in expr.fields]
        if any(f is None for f in fields):
            return None
        return TupleValue(tuple(fields))  # type: ignore[arg-type]
    return None


def _reify(value: Value, span=None) -> Expr:
    if isinstance(value, TensorValue):
        return Constant(value.to_literal(), span=span)
    assert isinstance(value, TupleValue)
    return Tuple(tuple(_reify(f, span) for f in value.fields), span=span)


class ConstantFolder(ScopedMutator):
    def __init__(self, registry: OpRegistry):
        super().__init__()
        self.registry = registry
        self.folded = 0
        self.known: dict = {}

    def visit_local_var(self, expr):
        return self.known.get(expr, expr)

    def rewrite_binding(self, let: Let, value: Expr) -> Optional[Expr]:
        if _static(value) is not None:
            # Constants are pure; uses read the literal directly.
            self.known[let.var] = value
            return None
        return value

    def visit_call(self, expr: Call) -> Expr:
        call = super().visit_call(expr)
        assert isinstance(call, Call)
        if not is_op_call(call):
            return call
        args = [_static(a) for a in call.args]
        if any(a is None for a in args):
            return call
        decl = self.registry.lookup(call.callee.name)  # type: ignore[attr-defined]
        try:
            result = eval_kernel(decl, args, call.attrs)  # type: ignore[arg-type]
        except (RuntimeTrap, ValueError) as exc:
            logger.debug(f"Not folding {decl.name}: {exc}")
            return call
        self.folded += 1
        return _reify(result, call.span)


def fold_constant_expr(expr: Expr, registry: Optional[OpRegistry] = None) -> Expr:
    return ConstantFolder(registry or builtin_registry()).visit(expr)


def fold_constant(module: ModuleEnv, registry: Optional[OpRegistry] = None) -> ModuleEnv:
    """Replace every operator call whose arguments are all constants by its result.

    Let bindings of constants are inlined into their uses. No algebraic
    simplification is attempted.
    """
    registry = registry or builtin_registry()
    total = 0

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        nonlocal total
        folder = ConstantFolder(registry)
        result = folder.visit(fn)
        total += folder.folded
        return result  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    logger.debug(f"Folded {total} operator calls")
    return module
