"""Operator statistics for modules, as pandas tables."""

from collections import Counter
from typing import Optional

import pandas as pd

from ..ir.expr import Call, Expr, Function, ModuleEnv, OperatorRef
from ..ir.visitor import post_order_visit

PRIMITIVE_ROW = "<primitive fn>"


def _count(module: ModuleEnv) -> Counter:
    counts: Counter = Counter()

    def record(node: Expr) -> None:
        if isinstance(node, Call) and isinstance(node.callee, OperatorRef):
            counts[node.callee.name] += 1
        elif isinstance(node, Function) and node.is_primitive:
            counts[PRIMITIVE_ROW] += 1

    for gv in module.user_globals():
        post_order_visit(module.globals[gv], record)
    return counts


def count_ops(module: ModuleEnv, name: Optional[str] = None) -> int:
    """Number of operator calls in the user globals, optionally of one operator."""
    counts = _count(module)
    if name is not None:
        return counts.get(name, 0)
    return sum(c for op, c in counts.items() if op != PRIMITIVE_ROW)


def op_histogram(module: ModuleEnv) -> pd.DataFrame:
    """Operator call counts, most frequent first.

    Primitive (fused) functions are counted in their own row.

    Args:
        module: Module to inspect; prelude globals are skipped

    Returns:
        DataFrame with columns Operator and Count
    """
    counts = _count(module)
    rows = sorted(counts.items(), key=lambda x: (-x[1], x[0]))
    return pd.DataFrame(rows, columns=["Operator", "Count"])


def compare_histograms(before: ModuleEnv, after: ModuleEnv) -> pd.DataFrame:
    """Side-by-side operator counts of two versions of a module."""
    left = op_histogram(before).set_index("Operator")["Count"].rename("Before")
    right = op_histogram(after).set_index("Operator")["Count"].rename("After")
    table = pd.concat([left, right], axis=1).fillna(0).astype(int)
    table["Change"] = table["After"] - table["Before"]
    return table.sort_index().reset_index().rename(columns={"index": "Operator"})
