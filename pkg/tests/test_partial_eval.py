import numpy as np
import pytest

from microrelay.infer import infer
from microrelay.ir import Constant, is_anf, let_chain
from microrelay.passes import PassContext, fuse_ops, partial_eval, run_pipeline
from microrelay.runtime import format_value, values_close
from microrelay.utils.errors import FuelExhausted, PassError

from .helpers import global_calls, load_corpus, primitive_functions, random_inputs, run_main, typed


def evaluated(name, **kwargs):
    return infer(partial_eval(load_corpus(name), **kwargs))


def test_static_recursion_becomes_a_constant():
    module = evaluated("sum_to.rly")
    body = module["main"].body
    assert isinstance(body, Constant)
    assert format_value(run_main(module, [])) == "6"


def test_reference_reads_are_resolved():
    module = evaluated("refs.rly")
    _, tail = let_chain(module["main"].body)
    assert isinstance(tail, Constant)
    assert format_value(run_main(module, [])) == "1"


def test_closed_adt_program_is_evaluated():
    module = evaluated("higher_order.rly")
    assert isinstance(module["main"].body, Constant)
    assert format_value(run_main(module, [])) == "12"


def test_static_loop_is_unrolled():
    module = infer(fuse_ops(evaluated("static_loop.rly")))
    assert "loop" not in global_calls(module, "main")
    x = np.array([[1.0, -1.0], [0.5, 2.0]], np.float32)
    expected = x
    for _ in range(3):
        expected = np.maximum(expected + expected, 0)
    np.testing.assert_allclose(run_main(module, [x]).array, expected)


def test_dynamic_recursion_is_residualized():
    module = evaluated("sum_to.rly")
    assert "sum_to" in global_calls(module, "sum_to")
    assert format_value(run_main(module, [np.int32(4)], entry="sum_to")) == "10"


def test_output_is_in_anf(corpus_file):
    module = evaluated(corpus_file.name)
    for gv in module.user_globals():
        assert is_anf(module.globals[gv]), gv.name


def test_partial_evaluation_preserves_semantics(corpus_file, rng):
    module = load_corpus(corpus_file.name)
    specialized = infer(partial_eval(module))
    for args in random_inputs(module, rng, 2):
        assert values_close(run_main(module, args), run_main(specialized, args), rtol=1e-5, atol=1e-5)


def test_unknown_write_forgets_the_store():
    text = """
    def @main(%c: bool) -> int32 {
      let %r = ref(1);
      if (%c) { %r := 2 } else { () };
      !%r
    }
    """
    module = infer(partial_eval(typed(text)))
    _, tail = let_chain(module["main"].body)
    assert not isinstance(tail, Constant)
    assert format_value(run_main(module, [np.bool_(True)])) == "2"
    assert format_value(run_main(module, [np.bool_(False)])) == "1"


def test_fuel_is_bounded():
    with pytest.raises(FuelExhausted):
        partial_eval(load_corpus("sum_to.rly"), fuel=2)


def test_fuel_option_reaches_the_pass():
    with pytest.raises(PassError) as info:
        run_pipeline(load_corpus("sum_to.rly"), PassContext(options={"pe.fuel": 2}), ["pe"])
    assert info.value.pass_name == "pe"
    assert isinstance(info.value.cause, FuelExhausted)


TENSOR_TREE = """
def @main(%x: Tensor[(2,), float32]) -> Tensor[(2,), float32] {
  let %t = Node(Node(Leaf, exp(%x), Leaf), const([1.0, 2.0], (2,), float32), Node(Leaf, relu(%x), Leaf));
  @tree_fold(fn (%l: Tensor[(2,), float32], %v: Tensor[(2,), float32], %r: Tensor[(2,), float32]) {
    add(add(%l, %v), %r)
  }, const([0.0, 0.0], (2,), float32), %t)
}
"""


def test_tree_fold_evaluates_the_same_after_specialization_and_fusion():
    module = load_corpus("tree_fold.rly")
    fused = infer(fuse_ops(infer(partial_eval(module))))
    assert format_value(run_main(module, [])) == "6"
    assert format_value(run_main(fused, [])) == "6"


def test_static_tree_is_unrolled_and_fused(rng):
    module = typed(TENSOR_TREE)
    fused = infer(fuse_ops(infer(partial_eval(module))))
    assert "tree_fold" not in global_calls(fused, "main")
    assert primitive_functions(fused)
    for _ in range(5):
        x = rng.normal(size=2).astype(np.float32)
        expected = np.exp(x) + np.float32([1.0, 2.0]) + np.maximum(x, 0)
        np.testing.assert_allclose(run_main(module, [x]).array, expected, rtol=1e-5)
        np.testing.assert_allclose(run_main(fused, [x]).array, expected, rtol=1e-5)
