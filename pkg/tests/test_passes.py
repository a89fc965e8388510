import itertools

import numpy as np
import pytest

from microrelay.ir import Constant, LocalVar, RefWrite, let_chain
from microrelay.passes import PASS_TABLE, PassContext, parse_pass_list, run_pass, run_pipeline
from microrelay.passes.alter_layout import layout_permutation
from microrelay.passes.common import is_op_call
from microrelay.passes.manager import parse_option_value, split_pass
from microrelay.runtime import values_close
from microrelay.utils.errors import PassError, UnknownPass, UnsupportedLayout
from microrelay.utils.stats import count_ops

from .helpers import calls_to, load_corpus, random_inputs, run_main, typed

SEMANTIC_PASSES = ["fold", "dce", "cse", "anf", "fuse", "pe", "layout=NHWC", "combine-conv", "fold-scale"]


@pytest.mark.parametrize("spec", SEMANTIC_PASSES)
def test_pass_preserves_semantics(spec, corpus_file, rng):
    module = load_corpus(corpus_file.name)
    optimized = run_pipeline(module, PassContext(), [spec])
    for args in random_inputs(module, rng, 2):
        expected = run_main(module, args)
        actual = run_main(optimized, args)
        assert values_close(expected, actual, rtol=1e-5, atol=1e-5), spec


def test_pipeline_preserves_semantics(corpus_file, rng):
    module = load_corpus(corpus_file.name)
    optimized = run_pipeline(module, PassContext(), ["pe", "fold", "cse", "dce", "fuse"])
    for args in random_inputs(module, rng, 2):
        assert values_close(run_main(module, args), run_main(optimized, args), rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("order", list(itertools.permutations(["fold", "dce", "cse"])), ids="-".join)
def test_cleanup_passes_commute(order, corpus_file, rng):
    module = load_corpus(corpus_file.name)
    optimized = run_pipeline(module, PassContext(), list(order))
    for args in random_inputs(module, rng, 2):
        assert values_close(run_main(module, args), run_main(optimized, args), rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("order", list(itertools.permutations(["fold", "dce", "cse"])), ids="-".join)
def test_cleanup_orders_reach_the_same_program(order):
    for name in ("common_subexpr.rly", "constants.rly"):
        assert count_ops(optimize(name, *order)) == count_ops(optimize(name, "cse", "fold", "dce")), name


def optimize(name, *passes, **options):
    return run_pipeline(load_corpus(name), PassContext(options=options), list(passes))


# Constant folding, CSE, DCE


def test_constant_folding():
    module = optimize("constants.rly", "fold")
    assert count_ops(module, "reshape") == 0
    assert count_ops(module) == 1
    x = np.zeros((2, 2), np.float32)
    np.testing.assert_array_equal(run_main(module, [x]).array, [[2.0, 6.0], [12.0, 20.0]])


def test_folding_skips_traps():
    module = run_pipeline(typed("def @main() -> int32 { divide(1, 0) }"), PassContext(), ["fold"])
    assert count_ops(module, "divide") == 1


def test_common_subexpressions_are_merged():
    module = optimize("common_subexpr.rly", "cse")
    assert count_ops(module, "multiply") == 1


def test_dead_bindings_are_removed():
    module = optimize("common_subexpr.rly", "dce")
    assert count_ops(module, "exp") == 0
    assert count_ops(module, "multiply") == 2


def test_effects_survive_dead_code_elimination():
    module = run_pipeline(
        typed("def @main() -> int32 { let %r = ref(0); %r := 5; !%r }"), PassContext(), ["dce"]
    )
    lets, _ = let_chain(module["main"].body)
    assert any(isinstance(let.value, RefWrite) for let in lets)


def test_cse_does_not_merge_across_branches():
    text = """
    def @main(%c: bool, %x: Tensor[(2,), float32]) -> Tensor[(2,), float32] {
      if (%c) { exp(%x) } else { exp(%x) }
    }
    """
    module = run_pipeline(typed(text), PassContext(), ["cse"])
    assert count_ops(module, "exp") == 2


# Layout, scale folding, parallel convolutions


def test_layout_alteration_to_nhwc():
    module = optimize("conv_bias_relu.rly", "layout=NHWC")
    (conv,) = calls_to(module, "conv2d")
    assert conv.attrs["data_layout"] == "NHWC"
    assert conv.attrs["kernel_layout"] == "HWIO"
    assert count_ops(module, "transpose") == 3


def test_layout_alteration_to_nchw():
    module = optimize("nhwc_conv.rly", "layout=NCHW")
    (conv,) = calls_to(module, "conv2d")
    assert conv.attrs["data_layout"] == "NCHW"
    assert conv.attrs["kernel_layout"] == "OIHW"


def test_layout_round_trip_cancels_transposes():
    module = optimize("conv_bias_relu.rly", "layout=NHWC", "layout=NCHW")
    assert count_ops(module, "transpose") == 0


def test_unsupported_layout():
    with pytest.raises(PassError) as info:
        optimize("conv_bias_relu.rly", "layout=NCWH")
    assert isinstance(info.value.cause, UnsupportedLayout)


def test_layout_permutation():
    assert layout_permutation("NCHW", "NHWC") == (0, 2, 3, 1)
    assert layout_permutation("NHWC", "NCHW") == (0, 3, 1, 2)
    assert layout_permutation("OIHW", "HWIO") == (2, 3, 1, 0)


def test_scales_fold_into_weights():
    module = optimize("scaled_conv.rly", "fold-scale")
    fn = module["main"]
    (conv,) = calls_to(module, "conv2d")
    assert isinstance(conv.args[0], LocalVar) and conv.args[0].name == "x"
    _, tail = let_chain(fn.body)
    assert not is_op_call(tail, "multiply")
    for call in calls_to(module, "multiply"):
        assert any(isinstance(a, Constant) for a in call.args)
        assert not any(isinstance(a, LocalVar) and a.name == "x" for a in call.args)


def test_constant_weight_scales_are_folded_away():
    text = """
    def @main(%x: Tensor[(1, 2, 4, 4), float32]) -> Tensor[(1, 1, 2, 2), float32] {
      let %w = const([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0], (1, 2, 3, 3), float32);
      multiply(conv2d(multiply(%x, 2f), %w), 0.5f)
    }
    """
    module = typed(text)
    folded = run_pipeline(module, PassContext(), ["fold-scale"])
    assert count_ops(folded, "multiply") == 0
    x = np.arange(32, dtype=np.float32).reshape(1, 2, 4, 4)
    np.testing.assert_allclose(run_main(folded, [x]).array, run_main(module, [x]).array, rtol=1e-6)


def test_parallel_convolutions_are_combined():
    module = optimize("inception.rly", "combine-conv")
    assert count_ops(module, "conv2d") == 1
    assert count_ops(module, "split") == 1


def test_min_branches_option():
    module = optimize("inception.rly", "combine-conv", **{"combine.min_branches": 4})
    assert count_ops(module, "conv2d") == 3


# Pass manager


def test_pass_table_names():
    assert set(PASS_TABLE) == {
        "fold", "dce", "cse", "anf", "fuse", "pe", "quantize", "fold-scale", "combine-conv", "layout",
    }


def test_parse_pass_list():
    assert parse_pass_list("fuse, fold,,layout=NHWC") == ["fuse", "fold", "layout=NHWC"]
    assert parse_pass_list("") == []
    with pytest.raises(UnknownPass) as info:
        parse_pass_list("fuse,inline")
    assert "fold" in str(info.value)


def test_split_pass_and_option_values():
    assert split_pass("layout=NHWC") == ("layout", "NHWC")
    assert split_pass(" fold ") == ("fold", None)
    assert parse_option_value("4") == 4
    assert parse_option_value("0.5") == 0.5
    assert parse_option_value("NHWC") == "NHWC"


def test_run_pass_rejects_unknown_names():
    with pytest.raises(UnknownPass):
        run_pass(load_corpus("mlp.rly"), "inline", PassContext())


def test_pass_failures_name_the_pass():
    with pytest.raises(PassError) as info:
        optimize("sum_to.rly", "fold", "pe", **{"pe.fuel": 1})
    assert info.value.pass_name == "pe"
    assert "pe" in info.value.render()


def test_every_pass_output_is_typed():
    module = optimize("conv_bias_relu.rly", "fuse")
    assert all(isinstance(p.var, LocalVar) for p in module["main"].params)
    assert module["main"].checked_type is not None
