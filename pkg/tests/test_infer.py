import pytest

from microrelay.infer import (
    DimHole,
    InferVar,
    Solver,
    Unifier,
    holes_in,
    infer,
    infer_expr,
    instantiate,
    signature_of,
    strongly_connected_globals,
    type_of,
    unify,
)
from microrelay.infer.inference import TypeInferencer
from microrelay.ir import ANY, FLOAT32, INT32, FuncType, Shape, TensorType, TupleType, TypeVar, let_chain
from microrelay.ir.types import DimVar, RefType, TypeCall, TypeName
from microrelay.text import parse_expr, parse_module
from microrelay.utils.errors import (
    RelationFailed,
    TypeMismatch,
    UnannotatedRecursion,
    Underconstrained,
    UnificationError,
)

from .helpers import corpus_text, load_corpus, random_conv_program, random_tensor_program, typed


def result_shape(module, name="main"):
    return signature_of(module, name).ret_type.shape.as_ints()


def test_conv2d_shape():
    text = """
    def @main(%x: Tensor[(1, 3, 32, 32), float32], %w: Tensor[(8, 3, 3, 3), float32]) {
      conv2d(%x, %w)
    }
    """
    assert result_shape(typed(text)) == (1, 8, 30, 30)


def test_conv2d_strided_padded_shape():
    text = """
    def @main(%x: Tensor[(2, 3, 7, 9), float32], %w: Tensor[(4, 3, 3, 3), float32]) {
      conv2d(%x, %w, strides=(2, 2), padding=(1, 1))
    }
    """
    assert result_shape(typed(text)) == (2, 4, 4, 5)


def typed_bare(text):
    return infer(parse_module(text, prelude=False))


def test_random_programs_match_shape_oracle(rng):
    for _ in range(800):
        program = random_tensor_program(rng)
        module = typed_bare(program.text())
        assert result_shape(module) == program.result_shape, program.text()


def test_random_convolutions_match_shape_oracle(rng):
    for _ in range(200):
        text, expected = random_conv_program(rng)
        assert result_shape(typed_bare(text)) == expected, text


def test_every_subexpression_is_annotated():
    module = load_corpus("mlp.rly")
    lets, body = let_chain(module["main"].body)
    for let in lets:
        assert let.value.checked_type is not None
    assert type_of(body) == TensorType.of((1, 3))


def test_corpus_signatures_match_annotations(corpus_file):
    module = load_corpus(corpus_file.name)
    for gv in module.user_globals():
        fn = module.globals[gv]
        if fn.ret_type is not None and not fn.type_params:
            assert signature_of(module, gv.name).ret_type == fn.ret_type


def test_broadcast_mismatch_is_a_relation_failure():
    with pytest.raises(RelationFailed) as info:
        typed(corpus_text("errors/broadcast_mismatch.rly"))
    assert info.value.relation == "Broadcast"


def test_dense_reduction_mismatch():
    text = """
    def @main(%x: Tensor[(1, 4), float32], %w: Tensor[(3, 5), float32]) {
      dense(%x, %w)
    }
    """
    with pytest.raises(RelationFailed):
        typed(text)


def test_unannotated_operator_input_is_underconstrained():
    with pytest.raises(Underconstrained):
        typed("def @main(%x) { relu(%x) }")


def test_annotation_conflict():
    with pytest.raises((TypeMismatch, RelationFailed)):
        typed("def @main(%x: Tensor[(2,), float32]) -> Tensor[(3,), float32] { relu(%x) }")


def test_if_condition_must_be_bool():
    with pytest.raises(TypeMismatch):
        typed("def @main(%x: int32) { if (%x) { 1 } else { 2 } }")


def test_unannotated_recursion():
    with pytest.raises(UnannotatedRecursion):
        typed("def @f(%n) { @f(%n) }\ndef @main() { @f(1) }")


def test_let_polymorphism_is_inferred():
    module = typed("def @id(%x) { %x }\ndef @main() { (@id(1), @id(2f)) }")
    sig = signature_of(module, "id")
    assert len(sig.type_params) == 1
    assert sig.arg_types[0] == sig.ret_type == sig.type_params[0]
    assert signature_of(module, "main").ret_type == TupleType((TensorType.scalar(INT32), TensorType.scalar(FLOAT32)))


def test_shape_polymorphic_global():
    module = load_corpus("shape_poly.rly")
    ret = signature_of(module, "main").ret_type
    assert [f.shape.as_ints() for f in ret.fields] == [(2, 3), (5, 3)]


def test_prelude_generic_application():
    module = load_corpus("higher_order.rly")
    assert signature_of(module, "main").ret_type == TensorType.scalar(INT32)
    assert signature_of(module, "map").type_params == (TypeVar("a"), TypeVar("b"))


def test_references_are_typed():
    expr = infer_expr(parse_expr("ref(1)"))
    assert type_of(expr) == RefType(TensorType.scalar(INT32))


def test_infer_expr_on_closed_expression():
    expr = infer_expr(parse_expr("(1, 2f, True)"))
    assert str(type_of(expr)) == "(Tensor[(), int32], Tensor[(), float32], Tensor[(), bool])"


# Solver


def test_solver_propagates_through_a_chain():
    solver = Solver()
    a, b = InferVar(), InferVar()
    solver.add("Identity", (TensorType.of((2, 3)), a))
    solver.add("Identity", (a, b))
    trace = solver.solve()
    assert solver.unifier.resolve(b) == TensorType.of((2, 3))
    assert set(trace.visits.values()) == {1}


def test_solver_waits_for_late_inputs():
    solver = Solver()
    a, b, c = InferVar(), InferVar(), InferVar()
    # Queued before its input is known.
    solver.add("Identity", (b, c))
    solver.add("Broadcast", (TensorType.of((4, 1)), TensorType.of((3,)), a))
    solver.add("Identity", (a, b))
    trace = solver.solve()
    assert solver.unifier.resolve(c) == TensorType.of((4, 3))
    assert sum(kind == "discharge" for kind, _ in trace.events) == 3
    assert_no_visit_after_discharge(trace)


def test_solver_underconstrained():
    solver = Solver()
    solver.add("Identity", (InferVar(), InferVar()))
    with pytest.raises(Underconstrained):
        solver.solve()


def test_solver_relation_failure():
    solver = Solver()
    solver.add("Broadcast", (TensorType.of((2, 3)), TensorType.of((4, 3)), InferVar()))
    with pytest.raises(RelationFailed):
        solver.solve()


def assert_no_visit_after_discharge(trace):
    discharged = set()
    for kind, subject in trace.events:
        if kind == "discharge":
            discharged.add(subject)
        elif kind == "visit":
            assert subject not in discharged


def test_concrete_relation_is_visited_once():
    text = "def @main(%x: Tensor[(2, 3), float32], %y: Tensor[(3,), float32]) { add(%x, %y) }"
    inferencer = TypeInferencer(parse_module(text, prelude=False))
    inferencer.run()
    assert [node.visits for node in inferencer.solver.nodes] == [1]
    assert_no_visit_after_discharge(inferencer.solver.trace)


def test_solved_relations_are_never_revisited(rng):
    for _ in range(50):
        program = random_tensor_program(rng)
        inferencer = TypeInferencer(parse_module(program.text()))
        inferencer.run()
        assert all(node.discharged for node in inferencer.solver.nodes)
        assert_no_visit_after_discharge(inferencer.solver.trace)


# Unifier


def test_unify_binds_holes():
    hole = InferVar()
    assert unify(TupleType((hole, TensorType.of((2,)))), TupleType((TensorType.of((3,)), TensorType.of((2,))))) == TupleType(
        (TensorType.of((3,)), TensorType.of((2,)))
    )


def test_unify_dimension_holes_and_any():
    d = DimHole()
    unifier = Unifier()
    merged = unifier.unify(TensorType(Shape((d, DimVar("n"))), FLOAT32), TensorType.of((5, "n")))
    assert unifier.resolve(merged) == TensorType.of((5, "n"))
    assert unify(TensorType.of(("?",)), TensorType.of((7,))) == TensorType(Shape((ANY,)), FLOAT32)


@pytest.mark.parametrize(
    "left,right",
    [
        (TensorType.of((2,)), TensorType.of((3,))),
        (TensorType.of((2,)), TensorType.of((2, 1))),
        (TensorType.of((2,), INT32), TensorType.of((2,), FLOAT32)),
        (TypeCall(TypeName("List"), (TensorType.scalar(INT32),)), TypeCall(TypeName("Option"), (TensorType.scalar(INT32),))),
        (TensorType.of(("n",)), TensorType.of((3,))),
        (TensorType.of(("n",)), TensorType.of(("m",))),
        (TypeVar("a"), TensorType.scalar(INT32)),
        (TypeVar("a"), TypeVar("b")),
    ],
)
def test_unify_failures(left, right):
    with pytest.raises(UnificationError):
        unify(left, right)


def test_occurs_check():
    hole = InferVar()
    with pytest.raises(UnificationError):
        Unifier().unify(hole, TupleType((hole,)))


def test_instantiate_gives_fresh_holes():
    scheme = FuncType((TypeVar("a"), TensorType.of(("n", 3))), TypeVar("a"), (TypeVar("a"),))
    first, second = instantiate(scheme), instantiate(scheme)
    assert len(holes_in(first)) == 2
    assert not set(map(id, holes_in(first))) & set(map(id, holes_in(second)))
    explicit = instantiate(scheme, (TensorType.scalar(INT32),))
    assert explicit.ret_type == TensorType.scalar(INT32)


def test_strongly_connected_globals_orders_callees_first():
    module = parse_module(corpus_text("mutual_recursion.rly"), prelude=False)
    groups = [[gv.name for gv in group] for group in strongly_connected_globals(module)]
    assert groups == [["is_even", "is_odd"], ["main"]]
