import numpy as np
import pytest

from microrelay.infer import signature_of, unify
from microrelay.ir import FLOAT32, TensorType
from microrelay.runtime import Interpreter, TupleValue, eval_expr, format_value, interp, value_type, values_close
from microrelay.text import parse_expr
from microrelay.utils.errors import MatchFailure, OutOfFuel, TrapDivideByZero, TypeMismatch

from .helpers import load_corpus, random_inputs, run_main, typed


@pytest.mark.parametrize(
    "name,expected",
    [
        ("add_scalars.rly", "3"),
        ("higher_order.rly", "12"),
        ("prelude_foldl.rly", "6"),
        ("option_nth.rly", "20"),
        ("tree_fold.rly", "6"),
        ("user_adt.rly", "3"),
        ("while_loop.rly", "(1, 1, 5)"),
        ("sum_to.rly", "6"),
        ("refs.rly", "1"),
        ("polymorphic.rly", "(1, 2.5)"),
        ("mutual_recursion.rly", "True"),
        ("tuple_match.rly", "(1.5, 3)"),
    ],
)
def test_closed_programs(name, expected):
    assert format_value(run_main(load_corpus(name), [])) == expected


def test_dataflow_loop_iterates():
    module = load_corpus("while_loop.rly")
    result = interp(module, "while_loop", [np.int32(1), np.int32(1), np.int32(1)])
    assert format_value(result) == "(8, 7, 4)"


def test_references_are_shared_by_closures():
    module = load_corpus("ref_counter.rly")
    x = np.array([1.0, -2.0], np.float32)
    np.testing.assert_allclose(run_main(module, [x]).array, 3 * x)


def test_closure_captures_parameter():
    module = load_corpus("closures.rly")
    x = np.array([1.0, 2.0, 3.0], np.float32)
    np.testing.assert_allclose(run_main(module, [x]).array, (x + x) * x)


def test_tuples_and_projection():
    module = load_corpus("tuples.rly")
    x = np.array([1.0, 2.0], np.float32)
    y = np.array([3.0, -1.0], np.float32)
    result = run_main(module, [x, y])
    assert isinstance(result, TupleValue)
    np.testing.assert_allclose(result.fields[0].array, x + y)
    np.testing.assert_allclose(result.fields[1].array, x * y)


def test_adt_results_are_formatted():
    module = typed("def @main() -> List[int32] { @map(fn (%v: int32) { add(%v, 1) }, Cons(1, Cons(2, Nil))) }")
    assert format_value(run_main(module, [])) == "Cons(2, Cons(3, Nil))"


def test_non_exhaustive_match_fails():
    text = """
    def @first_of(%xs: List[int32]) -> int32 {
      match (%xs) {
        Cons(%h, %t) => { %h },
      }
    }

    def @main() -> int32 { @first_of(Nil) }
    """
    with pytest.raises(MatchFailure):
        run_main(typed(text), [])


def test_integer_division_by_zero_traps():
    module = typed("def @main(%x: int32) -> int32 { divide(10, %x) }")
    assert format_value(run_main(module, [np.int32(3)])) == "3"
    with pytest.raises(TrapDivideByZero):
        run_main(module, [np.int32(0)])


def test_float_division_by_zero_is_infinite():
    module = typed("def @main(%x: float32) -> float32 { divide(1f, %x) }")
    assert np.isinf(run_main(module, [np.float32(0.0)]).array)


def test_fuel_is_bounded():
    module = load_corpus("sum_to.rly")
    with pytest.raises(OutOfFuel):
        interp(module, "main", [], fuel=5)


def test_tail_recursion_runs_in_constant_stack():
    text = """
    def @count(%n: int32, %acc: int32) -> int32 {
      if (equal(%n, 0)) { %acc } else { @count(subtract(%n, 1), add(%acc, 1)) }
    }

    def @main() -> int32 { @count(20000, 0) }
    """
    assert format_value(run_main(typed(text), [])) == "20000"


def test_arguments_are_checked():
    module = load_corpus("mlp.rly")
    with pytest.raises(TypeMismatch):
        run_main(module, [np.zeros((1, 5), np.float32)])
    with pytest.raises(TypeMismatch):
        run_main(module, [])
    with pytest.raises(TypeMismatch):
        run_main(module, [np.zeros((1, 4), np.int32)])


def test_results_have_the_inferred_type(corpus_file, rng):
    module = load_corpus(corpus_file.name)
    sig = signature_of(module, "main")
    for args in random_inputs(module, rng, 3):
        found = value_type(run_main(module, args))
        if found is not None and not sig.type_params:
            unify(sig.ret_type, found)


def test_runs_are_deterministic(corpus_file, rng):
    module = load_corpus(corpus_file.name)
    for args in random_inputs(module, rng, 2):
        assert values_close(run_main(module, args), run_main(module, args), rtol=0, atol=0)


def test_operator_observer_sees_every_call():
    module = load_corpus("mlp.rly")
    seen = []
    interp(module, "main", [np.ones((1, 4), np.float32)], on_op=lambda decl, attrs, args, out: seen.append(decl.name))
    assert "dense" in seen
    assert len(seen) >= 3


def test_each_run_has_its_own_store():
    module = load_corpus("refs.rly")
    interpreter = Interpreter(module)
    interpreter.run("main")
    assert len(interpreter.store.cells) == 1
    assert len(Interpreter(module).store.cells) == 0


def test_eval_expr_on_closed_expression():
    value = eval_expr(parse_expr("multiply(const([1.0, 2.0], (2,), float32), 3f)"))
    assert value.type == TensorType.of((2,), FLOAT32)
    np.testing.assert_array_equal(value.array, [3.0, 6.0])
