import pytest

from microrelay.cli import EXIT_DIAGNOSTIC, EXIT_OK, EXIT_USAGE, main
from microrelay.infer import infer
from microrelay.passes import fuse_ops
from microrelay.text import parse_module
from microrelay.utils.stats import PRIMITIVE_ROW, compare_histograms, count_ops, op_histogram

from .helpers import CORPUS_DIR, load_corpus


def corpus_path(name):
    return str(CORPUS_DIR / name)


def test_check_prints_global_types(capsys):
    assert main(["check", corpus_path("sum_to.rly")]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.split(" : ")[0] for line in lines] == ["@sum_to", "@main"]


def test_check_reports_type_errors(capsys):
    assert main(["check", corpus_path("errors/broadcast_mismatch.rly")]) == EXIT_DIAGNOSTIC
    err = capsys.readouterr().err
    assert "RelationFailed" in err
    assert "broadcast_mismatch.rly:" in err


def test_syntax_error_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.rly"
    path.write_text("def @main() { add(1, }\n", encoding="utf-8")
    assert main(["check", str(path)]) == EXIT_DIAGNOSTIC
    assert "SyntaxError" in capsys.readouterr().err


def test_run_closed_program(capsys):
    assert main(["run", corpus_path("higher_order.rly")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "12"


def test_run_with_inputs_file(tmp_path, capsys):
    inputs = tmp_path / "inputs.rly"
    inputs.write_text("%x = const([1.0, -2.0], (2,), float32)\n", encoding="utf-8")
    assert main(["run", corpus_path("ref_counter.rly"), "--inputs", str(inputs)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "[3.0, -6.0]"


def test_run_after_passes(capsys):
    assert main(["run", corpus_path("sum_to.rly"), "--passes", "pe,fuse"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "6"


def test_run_without_required_inputs(capsys):
    assert main(["run", corpus_path("mlp.rly")]) == EXIT_DIAGNOSTIC
    assert "TypeMismatch" in capsys.readouterr().err


def test_run_out_of_fuel(capsys):
    assert main(["run", corpus_path("sum_to.rly"), "--fuel", "5"]) == EXIT_DIAGNOSTIC
    assert "OutOfFuel" in capsys.readouterr().err


def test_run_unknown_entry(capsys):
    assert main(["run", corpus_path("sum_to.rly"), "--entry", "nowhere"]) == EXIT_USAGE


def test_opt_prints_a_parsable_module(capsys):
    assert main(["opt", corpus_path("conv_bias_relu.rly"), "--passes", "fuse", "--stats"]) == EXIT_OK
    captured = capsys.readouterr()
    module = infer(parse_module(captured.out))
    assert count_ops(module, "conv2d") == 1
    assert "Before" in captured.err
    assert PRIMITIVE_ROW in captured.err


def test_opt_options(capsys):
    args = ["opt", corpus_path("diamond.rly"), "--passes", "fuse", "--option", "fuse.max_depth=1"]
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out.count("Primitive=1") == 4


def test_unknown_pass(capsys):
    assert main(["opt", corpus_path("mlp.rly"), "--passes", "inline"]) == EXIT_DIAGNOSTIC
    assert "UnknownPass" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["check", "/no/such/file.rly"],
        ["opt", "tests/corpus/mlp.rly", "--option", "novalue"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_fmt_is_canonical(capsys):
    assert main(["fmt", corpus_path("graph_bindings.rly")]) == EXIT_OK
    first = capsys.readouterr().out
    assert "let %" in first
    module = parse_module(first)
    assert module["main"] is not None


def test_prelude_command(capsys):
    assert main(["prelude"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "type List" in out
    assert "def @map" in out


# Operator statistics


def test_op_histogram():
    table = op_histogram(load_corpus("mlp.rly"))
    assert list(table.columns) == ["Operator", "Count"]
    assert dict(zip(table["Operator"], table["Count"])) == {"dense": 2, "relu": 1}
    assert table["Operator"].iloc[0] == "dense"


def test_compare_histograms():
    before = load_corpus("conv_bias_relu.rly")
    after = infer(fuse_ops(before))
    table = compare_histograms(before, after)
    assert list(table.columns) == ["Operator", "Before", "After", "Change"]
    rows = table.set_index("Operator")
    assert rows.loc[PRIMITIVE_ROW, "Before"] == 0
    assert rows.loc[PRIMITIVE_ROW, "After"] == 1
    assert rows.loc["conv2d", "Change"] == 0


def test_count_ops_skips_the_prelude():
    module = load_corpus("higher_order.rly")
    assert count_ops(module) == 1
    assert count_ops(module, "multiply") == 1
