import json

import numpy as np
import pytest

from microrelay.ir import (
    FLOAT32,
    INT32,
    Constant,
    Let,
    Projection,
    RefRead,
    RefWrite,
    TensorType,
    TupleType,
    alpha_equal_modules,
    let_chain,
)
from microrelay.ir.types import DimVar, FuncType, TypeCall
from microrelay.text import parse_bindings, parse_expr, parse_module, parse_type, print_module, tokenize
from microrelay.utils.errors import MetaIndexOutOfRange, MicroRelayError, NameCollision, RelaySyntaxError

from .helpers import CORPUS_FILES, corpus_text, random_conv_program, random_tensor_program


def assert_round_trip(text, **print_options):
    module = parse_module(text)
    printed = print_module(module, **print_options)
    reparsed = parse_module(printed)
    assert alpha_equal_modules(module, reparsed), printed
    # A second trip prints the same text.
    assert print_module(reparsed, **print_options) == printed


def test_corpus_round_trip(corpus_file):
    assert_round_trip(corpus_text(corpus_file.name))


def test_corpus_round_trip_through_metadata(corpus_file):
    assert_round_trip(corpus_text(corpus_file.name), meta_threshold=2)


def test_random_program_round_trip(rng):
    for _ in range(500):
        assert_round_trip(random_tensor_program(rng).text())
    for _ in range(50):
        text, _ = random_conv_program(rng)
        assert_round_trip(text)


def test_metadata_section_is_resolved():
    module = parse_module(corpus_text("metadata.rly"))
    lets, body = let_chain(module["main"].body)
    constant = body.args[1]
    assert isinstance(constant, Constant)
    np.testing.assert_array_equal(constant.data.array, np.array([[1, 2], [3, 4]], np.float32))


def test_large_literals_move_to_the_pool():
    text = "def @main() { add(const([1.0, 2.0, 3.0], (3,), float32), 1f) }"
    printed = print_module(parse_module(text), meta_threshold=2)
    assert "meta[Constant][0]" in printed
    assert "#[metadata]" in printed
    inline = print_module(parse_module(text), meta_threshold=0)
    assert "meta[" not in inline


def test_meta_index_out_of_range():
    text = """
    def @main() { meta[Constant][1] }

    #[metadata]
    Constant = [
      const([1.0], (1,), float32),
    ]
    """
    with pytest.raises(MetaIndexOutOfRange):
        parse_module(text)


def test_prelude_is_not_printed():
    printed = print_module(parse_module("def @main() { 1 }"))
    assert "@map" not in printed
    assert "type List" not in printed


def test_prelude_name_collision():
    text = "def @map(%x: int32) { %x }"
    with pytest.raises(NameCollision):
        parse_module(text)


def test_prelude_constructor_collision():
    with pytest.raises(NameCollision):
        parse_module("type Thing { Cons }")


@pytest.mark.parametrize(
    "text",
    [
        "def @main() { add(1, }",
        "def @main( { 1 }",
        "def @main() { let %x = 1 %x }",
        "def @main() { 1 } def @main() { 2 }",
        "def @main() -> Tensor[(2,), float99] { 1 }",
        "def @main() { const([1, 2], (n,), int32) }",
        "def @main() { 300i8 }",
        "wat",
    ],
)
def test_syntax_errors(text):
    with pytest.raises(RelaySyntaxError):
        parse_module(text)


def test_syntax_error_carries_location():
    with pytest.raises(RelaySyntaxError) as info:
        parse_module("def @main() {\n  add(1, 2\n}", file="broken.rly")
    rendered = info.value.render()
    assert "broken.rly" in rendered
    assert ":3:" in rendered


def test_negative_numbers_are_single_tokens():
    tokens = [t for t in tokenize("-1 -2.5f 3") if t.kind != "EOF"]
    assert [t.text for t in tokens] == ["-1", "-2.5", "3"]
    assert tokens[1].suffix == "f"


def test_scalar_suffixes():
    for text, dtype in [("1", "int32"), ("1f", "float32"), ("1.5", "float32"), ("2i64", "int64"), ("3u8", "uint8")]:
        expr = parse_expr(text)
        assert str(expr.data.dtype) == dtype


def test_projection_and_references_parse():
    module = parse_module("def @main(%p: (int32, int32)) { let %r = ref(%p.0); %r := %p.1; !%r }")
    lets, body = let_chain(module["main"].body)
    assert isinstance(lets[0].value.init, Projection)
    assert isinstance(lets[1].value, RefWrite)
    assert isinstance(body, RefRead)


def test_local_names_share_their_binder():
    module = parse_module("def @main(%x: int32) { add(%x, %x) }")
    fn = module["main"]
    a, b = fn.body.args
    assert a is b is fn.params[0].var


def test_sequencing_desugars_to_let():
    module = parse_module("def @main() { let %r = ref(1); %r := 2; !%r }")
    lets, _ = let_chain(module["main"].body)
    assert len(lets) == 2
    assert isinstance(lets[1], Let)


def test_parse_types():
    assert parse_type("Tensor[(n, 3), float32]") == TensorType.of((DimVar("n"), 3), FLOAT32)
    assert parse_type("(int32, float32)") == TupleType((TensorType.scalar(INT32), TensorType.scalar(FLOAT32)))
    assert isinstance(parse_type("List[int32]"), TypeCall)
    fn_type = parse_type("fn(Tensor[(2,), float32]) -> Tensor[(2,), float32]")
    assert isinstance(fn_type, FuncType)
    assert len(fn_type.arg_types) == 1


def test_parse_bindings():
    bindings = parse_bindings("%x = const([1, 2], (2,), int32);\n%y = 3f\n")
    assert set(bindings) == {"x", "y"}
    with pytest.raises(RelaySyntaxError):
        parse_bindings("%x = 1; %x = 2")


FUZZ_VOCABULARY = [
    "def", "type", "fn", "let", "if", "else", "match", "ref", "const", "meta", "where",
    "(", ")", "[", "]", "{", "}", "<", ">", ",", ";", ":", "=", "->", "=>", ":=", ".", "!", "?", "_",
    "%x", "%y", "@main", "@f", "add", "relu", "conv2d", "Tensor", "float32", "int32", "Ref",
    "List", "Cons", "Nil", "Constant", "True", "0", "1", "-3", "2.5f", "1e40f16", "300i8", "nan",
    '"NCHW"', '"\\x"', "#[metadata]", "strides=", "n",
]


def token_source(tok):
    if tok.kind == "LOCAL":
        return f"%{tok.text}"
    if tok.kind == "GLOBAL":
        return f"@{tok.text}"
    if tok.kind == "STRING":
        return json.dumps(tok.text)
    return tok.text + tok.suffix


def random_token_stream(rng, corpus):
    if rng.random() < 0.5:
        return [str(w) for w in rng.choice(FUZZ_VOCABULARY, size=int(rng.integers(1, 40)))]
    tokens = list(corpus[int(rng.integers(len(corpus)))])
    for _ in range(int(rng.integers(1, 4))):
        i = int(rng.integers(len(tokens)))
        edit = rng.integers(4)
        if edit == 0:
            del tokens[i]
        elif edit == 1:
            tokens.insert(i, tokens[i])
        elif edit == 2:
            tokens[i] = str(rng.choice(FUZZ_VOCABULARY))
        else:
            tokens = tokens[:i]
        if not tokens:
            break
    return tokens


def test_random_token_streams_only_raise_diagnostics(rng):
    corpus = [[token_source(t) for t in tokenize(corpus_text(p.name))[:-1]] for p in CORPUS_FILES]
    parsed = 0
    for _ in range(3000):
        text = " ".join(random_token_stream(rng, corpus))
        try:
            parse_module(text)
            parsed += 1
        except MicroRelayError as e:
            assert e.render()
        except Exception as e:
            pytest.fail(f"{type(e).__name__}: {e} on {text!r}")
    assert parsed < 3000


def test_bad_string_escape_is_a_syntax_error():
    with pytest.raises(RelaySyntaxError):
        tokenize('"\\x"')
