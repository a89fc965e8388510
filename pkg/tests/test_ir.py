import numpy as np
import pytest

from microrelay.ir import (
    FLOAT32,
    INT32,
    Call,
    Clause,
    Constant,
    Function,
    Let,
    LocalVar,
    Match,
    ModuleEnv,
    Param,
    PatternVar,
    RefNew,
    TensorLiteral,
    TensorType,
    Tuple,
    alpha_equal,
    build_lets,
    check_well_formed,
    free_vars,
    is_anf,
    is_pure,
    let_chain,
    module_to_anf,
    structural_hash,
    substitute,
    to_anf,
)
from microrelay.infer import infer
from microrelay.ir.expr import OperatorRef
from microrelay.runtime import values_close
from microrelay.text import parse_expr, parse_module
from microrelay.utils.errors import (
    InvalidAttribute,
    MalformedLiteral,
    UnboundVariable,
    UnknownConstructor,
    UnknownOperator,
)

from .helpers import load_corpus, random_inputs, run_main, typed


def op(name, *args, **attrs):
    return Call(OperatorRef(name), args, attrs)


def test_free_vars_in_first_use_order():
    x, y, z = LocalVar.fresh("x"), LocalVar.fresh("y"), LocalVar.fresh("z")
    expr = Let(y, op("add", x, x), op("multiply", y, z))
    assert free_vars(expr) == [x, z]


def test_free_vars_respects_function_and_pattern_binders():
    x, y, v, u, w = (LocalVar.fresh(n) for n in "xyvuw")
    fn = Function((Param(x),), op("add", x, y))
    assert free_vars(fn) == [y]
    match = Match(w, (Clause(PatternVar(v), Tuple((v, u))),))
    assert free_vars(match) == [w, u]


def test_alpha_equal_ignores_binder_names():
    a = parse_expr("fn (%a: int32, %b: int32) { add(%a, %b) }")
    b = parse_expr("fn (%p: int32, %q: int32) { add(%p, %q) }")
    assert alpha_equal(a, b)
    assert structural_hash(a) == structural_hash(b)


def test_alpha_equal_distinguishes_binding_structure():
    a = parse_expr("fn (%a: int32, %b: int32) { %a }")
    b = parse_expr("fn (%a: int32, %b: int32) { %b }")
    assert not alpha_equal(a, b)


def test_alpha_equal_renames_type_parameters():
    a = parse_expr("fn <a, b>(%x: a, %y: b) -> a { let %z: a = %x; %z }")
    b = parse_expr("fn <s, t>(%p: s, %q: t) -> s { let %r: s = %p; %r }")
    assert alpha_equal(a, b)
    assert structural_hash(a) == structural_hash(b)
    swapped_names = parse_expr("fn <b, a>(%x: b, %y: a) -> b { let %z: b = %x; %z }")
    assert alpha_equal(a, swapped_names)
    swapped_positions = parse_expr("fn <a, b>(%x: b, %y: a) -> b { let %z: b = %x; %z }")
    assert not alpha_equal(a, swapped_positions)
    # A free type variable never matches a bound one.
    assert not alpha_equal(parse_expr("fn <a>(%x: a) { %x }"), parse_expr("fn <b>(%x: a) { %x }"))
    assert not alpha_equal(parse_expr("fn <a>(%x: a) { %x }"), parse_expr("fn (%x: a) { %x }"))


def test_alpha_equal_compares_attributes_and_literals():
    a = parse_expr("fn (%x: Tensor[(4,), float32]) { sum(%x, axis=0) }")
    b = parse_expr("fn (%x: Tensor[(4,), float32]) { sum(%x, axis=0, keepdims=True) }")
    assert not alpha_equal(a, b)
    assert alpha_equal(parse_expr("const([1.5, 2.0], (2,), float32)"), parse_expr("const([1.5, 2.0], (2,), float32)"))
    assert not alpha_equal(parse_expr("1"), parse_expr("1f"))


def test_substitute_reaches_inside_closures():
    x, y, v = LocalVar.fresh("x"), LocalVar.fresh("y"), LocalVar.fresh("v")
    expr = Tuple((x, Function((Param(v),), op("add", v, x))))
    replaced = substitute(expr, {x: y})
    assert replaced.fields[0] is y
    assert free_vars(replaced) == [y]


def test_build_lets_and_let_chain_are_inverse():
    x, y = LocalVar.fresh("x"), LocalVar.fresh("y")
    one = Constant.of(np.int32(1))
    body = build_lets([(x, one), (y, op("add", x, x))], y)
    lets, tail = let_chain(body)
    assert [l.var for l in lets] == [x, y]
    assert tail is y


def test_is_pure():
    x = LocalVar.fresh("x")
    assert is_pure(op("add", x, x))
    assert not is_pure(RefNew(x))
    # Building a closure with an effectful body is still pure.
    assert is_pure(Function((), RefNew(x)))


def test_malformed_literal_is_rejected():
    text = "def @main() { const([1, 2, 3], (2, 2), float32) }"
    with pytest.raises(MalformedLiteral):
        parse_module(text)


def test_literal_invariant():
    lit = TensorLiteral.from_flat([1, 2, 3], (2, 2), FLOAT32)
    assert not lit.is_well_formed
    assert TensorLiteral.from_array(np.zeros((2, 2), np.float32)).is_well_formed
    assert TensorLiteral.scalar(3, INT32).type == TensorType.scalar(INT32)


@pytest.mark.parametrize(
    "text,error",
    [
        ("def @main() { %y }", UnboundVariable),
        ("def @main() { @missing(1) }", UnboundVariable),
        ("def @main(%x: int32) { frobnicate(%x) }", UnknownOperator),
        ("def @main() { Frob(1) }", UnknownConstructor),
        ("def @main(%x: Tensor[(2,), float32]) { sum(%x, axes=0) }", InvalidAttribute),
    ],
)
def test_well_formedness_errors(text, error):
    with pytest.raises(error):
        parse_module(text)


def test_unbound_variable_outside_its_let():
    text = "def @main(%x: int32) { let %y = { let %z = %x; %z }; %z }"
    with pytest.raises(UnboundVariable):
        parse_module(text)


def test_well_formed_built_module():
    x = LocalVar.fresh("x")
    fn = Function((Param(x, TensorType.of((2,))),), op("relu", x))
    check_well_formed(ModuleEnv.from_expr(fn))
    stray = LocalVar.fresh("stray")
    with pytest.raises(UnboundVariable):
        check_well_formed(ModuleEnv.from_expr(Function((), stray)))


def test_to_anf_names_every_intermediate():
    expr = parse_expr("fn (%x: Tensor[(2,), float32]) { relu(add(%x, exp(%x))) }")
    assert not is_anf(expr)
    converted = to_anf(expr)
    assert is_anf(converted)
    lets, tail = let_chain(converted.body)
    assert len(lets) >= 3
    assert isinstance(tail, LocalVar)


def test_to_anf_keeps_branches_scoped():
    text = """
    def @main(%c: bool, %x: Tensor[(2,), float32]) -> Tensor[(2,), float32] {
      if (%c) { relu(exp(%x)) } else { negative(%x) }
    }
    """
    module = typed(text)
    converted = module_to_anf(module)
    assert is_anf(converted["main"])
    for flag in (True, False):
        args = [np.bool_(flag), np.array([1.0, -2.0], np.float32)]
        a = run_main(module, args).array
        b = run_main(infer(converted), args).array
        np.testing.assert_allclose(a, b)


def test_to_anf_preserves_corpus_semantics(corpus_file, rng):
    module = load_corpus(corpus_file.name)
    converted = infer(module_to_anf(module))
    for gv in converted.user_globals():
        assert is_anf(converted.globals[gv]), gv.name
    for args in random_inputs(module, rng, 2):
        expected = run_main(module, args)
        actual = run_main(converted, args)
        assert values_close(expected, actual)
