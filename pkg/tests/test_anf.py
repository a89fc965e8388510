import numpy as np

from microrelay.ir import (
    FLOAT32,
    Call,
    Constant,
    Function,
    Let,
    LocalVar,
    Param,
    RefNew,
    RefRead,
    RefWrite,
    TensorType,
    Tuple,
    is_anf,
    is_pure,
    let_chain,
    to_anf,
)
from microrelay.ir.expr import OperatorRef, Projection
from microrelay.runtime import eval_expr


def scalar(value):
    return Constant.of(np.float32(value), FLOAT32)


def call(op, *args):
    return Call(OperatorRef(op), tuple(args))


def test_shared_allocation_is_not_merged():
    cell = RefNew(scalar(0.0))
    pair = LocalVar.fresh("p")
    expr = Let(
        pair,
        Tuple((cell, cell)),
        Let(
            LocalVar.fresh("w"),
            RefWrite(Projection(pair, 0), scalar(5.0)),
            RefRead(Projection(pair, 1)),
        ),
    )
    converted = to_anf(expr)
    assert is_anf(converted)
    assert float(eval_expr(expr).array) == 0.0
    assert float(eval_expr(converted).array) == 0.0


def test_shared_read_is_repeated_after_a_write():
    r = LocalVar.fresh("r")
    bumped = call("add", RefRead(r), scalar(1.0))
    expr = Let(r, RefNew(scalar(1.0)), Tuple((bumped, RefWrite(r, scalar(5.0)), bumped)))
    for program in (expr, to_anf(expr)):
        first, _, last = eval_expr(program).fields
        assert float(first.array) == 2.0
        assert float(last.array) == 6.0


def test_shared_pure_node_is_named_once():
    x = LocalVar.fresh("x")
    e = call("exp", x)
    fn = Function((Param(x, TensorType.of((2,))),), call("add", e, e))
    lets, tail = let_chain(to_anf(fn).body)
    assert len(lets) == 2
    assert isinstance(tail, LocalVar)
    assert lets[1].value.args == (lets[0].var, lets[0].var)


def test_purity_is_transitive():
    r = LocalVar.fresh("r")
    assert not is_pure(call("add", RefRead(r), scalar(1.0)))
    assert is_pure(Function((), RefRead(r)))
    cache = {}
    shared = call("exp", scalar(1.0))
    assert is_pure(call("add", shared, shared), cache)
    assert cache[id(shared)] is True
