import numpy as np
import pytest

from microrelay.infer import infer
from microrelay.ops import FusionPattern
from microrelay.passes import DataflowDag, fuse_ops, fusion_groups, post_dominators
from microrelay.passes.fuse_ops import SINK
from microrelay.runtime import values_close
from microrelay.utils.stats import count_ops

from .helpers import (
    brute_force_post_dominators,
    load_corpus,
    post_dominator_sets,
    primitive_functions,
    random_dag,
    random_inputs,
    run_main,
)


def groups_of(assignment):
    groups = {}
    for node, anchor in enumerate(assignment):
        groups.setdefault(anchor, []).append(node)
    return groups


def test_post_dominators_match_brute_force(rng):
    for _ in range(500):
        dag = random_dag(rng)
        assert post_dominators(dag) == brute_force_post_dominators(dag)


def test_post_dominators_of_a_diamond():
    dag = DataflowDag()
    top = dag.add(FusionPattern.Elementwise, [])
    left = dag.add(FusionPattern.Elementwise, [top])
    right = dag.add(FusionPattern.Elementwise, [top])
    join = dag.add(FusionPattern.Broadcast, [left, right])
    assert post_dominators(dag) == [join, join, join, SINK]


def test_external_use_post_dominated_by_sink():
    dag = DataflowDag()
    a = dag.add(FusionPattern.Elementwise, [], external=True)
    dag.add(FusionPattern.Elementwise, [a])
    assert post_dominators(dag)[a] == SINK


def test_fusion_group_invariants(rng):
    for _ in range(500):
        dag = random_dag(rng)
        max_depth = None if rng.random() < 0.5 else int(rng.integers(1, 5))
        assignment = fusion_groups(dag, max_depth)
        pdom = post_dominator_sets(dag)
        for anchor, members in groups_of(assignment).items():
            patterns = [dag.patterns[m] for m in members]
            assert anchor == max(members)
            assert all(anchor in pdom[m] for m in members)
            assert patterns.count(FusionPattern.ComplexOutFusable) <= 1
            if FusionPattern.Opaque in patterns:
                assert len(members) == 1
            if max_depth is not None:
                assert len(members) <= max_depth
            for m in members:
                if dag.patterns[m] == FusionPattern.Reduction:
                    assert m == anchor


def test_depth_one_keeps_singletons(rng):
    for _ in range(50):
        dag = random_dag(rng)
        assert fusion_groups(dag, max_depth=1) == list(range(len(dag)))


def test_elementwise_chain_forms_one_group():
    dag = DataflowDag()
    a = dag.add(FusionPattern.ComplexOutFusable, [])
    b = dag.add(FusionPattern.Broadcast, [a])
    c = dag.add(FusionPattern.Elementwise, [b])
    assert fusion_groups(dag) == [c, c, c]


def test_reduction_ends_a_group():
    dag = DataflowDag()
    a = dag.add(FusionPattern.Elementwise, [])
    r = dag.add(FusionPattern.Reduction, [a])
    e = dag.add(FusionPattern.Elementwise, [r])
    assert fusion_groups(dag) == [r, r, e]


def test_conv_bias_relu_fuses_into_one_function():
    module = infer(fuse_ops(load_corpus("conv_bias_relu.rly")))
    prims = primitive_functions(module)
    assert len(prims) == 1
    assert count_ops(module, "conv2d") == count_ops(module, "bias_add") == count_ops(module, "relu") == 1


def test_diamond_fuses_into_one_function():
    module = infer(fuse_ops(load_corpus("diamond.rly")))
    assert len(primitive_functions(module)) == 1


def test_back_to_back_convolutions_stay_apart():
    module = infer(fuse_ops(load_corpus("conv_conv.rly")))
    prims = primitive_functions(module)
    assert len(prims) == 2


def test_max_depth_limits_group_size():
    module = infer(fuse_ops(load_corpus("diamond.rly"), max_depth=1))
    assert len(primitive_functions(module)) == 4


@pytest.mark.parametrize("max_depth", [None, 2])
def test_fusion_preserves_semantics(corpus_file, rng, max_depth):
    module = load_corpus(corpus_file.name)
    fused = infer(fuse_ops(module, max_depth))
    for args in random_inputs(module, rng, 2):
        assert values_close(run_main(module, args), run_main(fused, args), rtol=1e-5, atol=1e-5)


def test_fusing_twice_changes_nothing():
    once = infer(fuse_ops(load_corpus("conv_bias_relu.rly")))
    twice = infer(fuse_ops(once))
    assert len(primitive_functions(twice)) == 1
    x = np.ones((1, 3, 8, 8), np.float32)
    w = np.full((4, 3, 3, 3), 0.1, np.float32)
    b = np.array([-1.0, 0.0, 1.0, 2.0], np.float32)
    assert values_close(run_main(once, [x, w, b]), run_main(twice, [x, w, b]))
