"""Reference interpreter and runtime values."""

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
    values_close,
)
from .interpreter import UNIT_VALUE, Interpreter, check_arguments, eval_expr, eval_kernel, interp, random_arguments

__all__ = [
    "AdtValue",
    "Closure",
    "ConstructorValue",
    "OpClosure",
    "RefValue",
    "Store",
    "TensorValue",
    "TupleValue",
    "Value",
    "format_value",
    "random_value",
    "to_value",
    "value_type",
    "values_close",
    "Interpreter",
    "check_arguments",
    "eval_expr",
    "eval_kernel",
    "interp",
    "random_arguments",
    "UNIT_VALUE",
]
