"""Pretty-printer producing text that parses back to an alpha-equal module."""

from __future__ import annotations

import logging
import re
from typing import Any, Optional

import numpy as np

from ..ir.expr import (
    AdtDef,
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
    TensorLiteral,
    Tuple,
)
from ..ir.types import FLOAT16, FLOAT32, FLOAT64, INT8, INT16, INT32, INT64, UINT8, BaseType
from ..utils.config import config

logger = logging.getLogger(__name__)

INDENT = "  "

# Scalars of these types print in short form, e.g. `3`, `0.5f`, `7i64`.
_SCALAR_SUFFIX: dict[BaseType, str] = {
    INT32: "",
    INT64: "i64",
    INT16: "i16",
    INT8: "i8",
    UINT8: "u8",
    FLOAT32: "f",
    FLOAT16: "f16",
    FLOAT64: "f64",
}

# Node kinds that can be followed by `(args)` or `.index` without parentheses.
_POSTFIX_OK = (LocalVar, GlobalVar, OperatorRef, Constructor, Call, Projection, Tuple)

_NAME_RE = re.compile(r"[^A-Za-z0-9_]")


def _float_text(value: Any, dtype: BaseType) -> str:
    return str(dtype.numpy_dtype.type(value))


def element_text(value: Any, dtype: BaseType) -> str:
    if dtype.is_bool:
        return "True" if bool(value) else "False"
    if dtype.is_float:
        return _float_text(value, dtype)
    return str(int(value))


def literal_text(lit: TensorLiteral) -> str:
    """Render a tensor literal: a short scalar form when one exists, else `const(...)`."""
    if lit.shape == ():
        value = lit.data[0]
        if lit.dtype.is_bool:
            return element_text(value, lit.dtype)
        suffix = _SCALAR_SUFFIX.get(lit.dtype)
        if suffix is not None and (not lit.dtype.is_float or np.isfinite(value)):
            return element_text(value, lit.dtype) + suffix
    return literal_text_full(lit)


def literal_text_full(lit: TensorLiteral) -> str:
    """Always the `const(...)` form, as used in the metadata pool."""
    elements = ", ".join(element_text(v, lit.dtype) for v in lit.data)
    shape = "(" + ", ".join(str(d) for d in lit.shape) + ("," if len(lit.shape) == 1 else "") + ")"
    return f"const([{elements}], {shape}, {lit.dtype})"


def attr_text(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "True" if value else "False"
    if value is None:
        return "None"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        items = [attr_text(v) for v in value]
        return "(" + ", ".join(items) + ("," if len(items) == 1 else "") + ")"
    text = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{text}"'


class _Printer:
    def __init__(self, meta_threshold: int = 0):
        self.meta_threshold = meta_threshold
        self.pool: list[TensorLiteral] = []
        self.names: dict[LocalVar, str] = {}
        self.used: set[str] = set()

    def reset_names(self) -> None:
        self.names = {}
        self.used = set()

    def bind(self, var: LocalVar) -> str:
        base = _NAME_RE.sub("_", var.name) or "v"
        name, k = base, 0
        while name in self.used:
            k += 1
            name = f"{base}_{k}"
        self.used.add(name)
        self.names[var] = name
        return f"%{name}"

    def var(self, var: LocalVar) -> str:
        return f"%{self.names.get(var, var.name)}"

    # Expressions

    def wrap(self, expr: Expr, ind: int, ok: tuple = _POSTFIX_OK) -> str:
        text = self.expr(expr, ind)
        return text if isinstance(expr, ok) else f"({text})"

    def block(self, expr: Expr, ind: int) -> str:
        pad = INDENT * (ind + 1)
        return "{\n" + pad + self.expr(expr, ind + 1) + "\n" + INDENT * ind + "}"

    def expr(self, expr: Expr, ind: int) -> str:
        if isinstance(expr, Let):
            lines = []
            while isinstance(expr, Let):
                value = self.expr(expr.value, ind)
                if isinstance(expr.value, Let):
                    value = f"({value})"
                name = self.bind(expr.var)
                annotation = f": {expr.type_annotation}" if expr.type_annotation is not None else ""
                lines.append(f"let {name}{annotation} = {value};")
                expr = expr.body
            lines.append(self.expr(expr, ind))
            return ("\n" + INDENT * ind).join(lines)
        if isinstance(expr, LocalVar):
            return self.var(expr)
        if isinstance(expr, GlobalVar):
            return f"@{expr.name}"
        if isinstance(expr, (OperatorRef, Constructor)):
            return expr.name
        if isinstance(expr, Constant):
            lit = expr.data
            if self.meta_threshold > 0 and lit.size > self.meta_threshold:
                self.pool.append(lit)
                return f"meta[Constant][{len(self.pool) - 1}]"
            return literal_text(lit)
        if isinstance(expr, Call):
            callee = self.wrap(expr.callee, ind)
            type_args = ""
            if expr.type_args:
                type_args = "<" + ", ".join(str(t) for t in expr.type_args) + ">"
            items = [self.arg(a, ind) for a in expr.args]
            items += [f"{k}={attr_text(v)}" for k, v in expr.attrs.items()]
            return f"{callee}{type_args}(" + ", ".join(items) + ")"
        if isinstance(expr, Function):
            return "fn" + self.signature(expr) + " " + self.block(expr.body, ind)
        if isinstance(expr, Tuple):
            items = [self.arg(f, ind) for f in expr.fields]
            return "(" + ", ".join(items) + ("," if len(items) == 1 else "") + ")"
        if isinstance(expr, Projection):
            return f"{self.wrap(expr.tuple_value, ind)}.{expr.index}"
        if isinstance(expr, If):
            cond = self.expr(expr.cond, ind)
            return (
                f"if ({cond}) "
                + self.block(expr.then_branch, ind)
                + " else "
                + self.block(expr.else_branch, ind)
            )
        if isinstance(expr, Match):
            pad = INDENT * (ind + 1)
            lines = [f"match ({self.expr(expr.scrutinee, ind)}) {{"]
            for clause in expr.clauses:
                pattern = self.pattern(clause.pattern)
                lines.append(f"{pad}{pattern} => {self.block(clause.body, ind + 1)},")
            lines.append(INDENT * ind + "}")
            return "\n".join(lines)
        if isinstance(expr, RefNew):
            return f"ref({self.expr(expr.init, ind)})"
        if isinstance(expr, RefRead):
            return "!" + self.wrap(expr.ref, ind, _POSTFIX_OK + (RefRead, RefNew, Constant))
        if isinstance(expr, RefWrite):
            target = self.wrap(expr.ref, ind, _POSTFIX_OK + (RefRead, RefNew))
            value = self.expr(expr.value, ind)
            if isinstance(expr.value, Let):
                value = f"({value})"
            return f"{target} := {value}"
        raise TypeError(f"cannot print {type(expr).__name__}")

    def arg(self, expr: Expr, ind: int) -> str:
        text = self.expr(expr, ind)
        return f"({text})" if isinstance(expr, Let) else text

    def pattern(self, pattern: Pattern) -> str:
        if isinstance(pattern, PatternWildcard):
            return "_"
        if isinstance(pattern, PatternVar):
            return self.bind(pattern.var)
        if isinstance(pattern, PatternConstructor):
            if not pattern.patterns:
                return pattern.name
            return pattern.name + "(" + ", ".join(self.pattern(p) for p in pattern.patterns) + ")"
        if isinstance(pattern, PatternTuple):
            return "(" + ", ".join(self.pattern(p) for p in pattern.patterns) + ")"
        raise TypeError(f"cannot print pattern {type(pattern).__name__}")

    def signature(self, fn: Function) -> str:
        text = ""
        if fn.type_params:
            text += "<" + ", ".join(str(t) for t in fn.type_params) + ">"
        items = []
        for param in fn.params:
            name = self.bind(param.var)
            items.append(f"{name}: {param.annotation}" if param.annotation is not None else name)
        items += [f"{k}={attr_text(v)}" for k, v in fn.attrs.items()]
        text += "(" + ", ".join(items) + ")"
        if fn.ret_type is not None:
            text += f" -> {fn.ret_type}"
        return text

    # Declarations

    def adt(self, adt: AdtDef) -> str:
        params = ""
        if adt.type_params:
            params = "[" + ", ".join(str(t) for t in adt.type_params) + "]"
        lines = [f"type {adt.name}{params} {{"]
        for ctor in adt.constructors:
            fields = ""
            if ctor.fields:
                fields = "(" + ", ".join(str(f) for f in ctor.fields) + ")"
            lines.append(f"{INDENT}{ctor.name}{fields},")
        lines.append("}")
        return "\n".join(lines)

    def define(self, gv: GlobalVar, fn: Function) -> str:
        self.reset_names()
        return f"def @{gv.name}" + self.signature(fn) + " " + self.block(fn.body, 0)

    def metadata(self) -> str:
        if not self.pool:
            return ""
        lines = ["#[metadata]", "Constant = ["]
        lines += [f"{INDENT}{literal_text_full(lit)}," for lit in self.pool]
        lines.append("]")
        return "\n".join(lines)


def print_module(module: ModuleEnv, meta_threshold: Optional[int] = None) -> str:
    """Render the user-defined part of `module` (the prelude is left out).

    Args:
        module: Module to print
        meta_threshold: Tensors with more elements than this go to the metadata
            pool; 0 keeps every literal inline. Defaults to MICRORELAY_META_THRESHOLD.

    Returns:
        Text ending in a newline
    """
    threshold = config.META_THRESHOLD if meta_threshold is None else meta_threshold
    printer = _Printer(threshold)
    parts = [printer.adt(adt) for name, adt in module.adts.items() if name not in module.prelude_names]
    parts += [printer.define(gv, module.globals[gv]) for gv in module.user_globals()]
    meta = printer.metadata()
    if meta:
        parts.append(meta)
    logger.debug(f"Printed {len(parts)} declarations, {len(printer.pool)} pooled constants")
    return "\n\n".join(parts) + "\n"


def print_expr(expr: Expr) -> str:
    """Render one expression with inline literals."""
    return _Printer(0).expr(expr, 0)
