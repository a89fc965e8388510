"""
Command-line driver for microrelay.

Usage:
    microrelay check <file.rly>
    microrelay opt <file.rly> --passes fuse,fold [--stats] [--option fuse.max_depth=4]
    microrelay run <file.rly> [--entry main] [--inputs vals.rly] [--passes pe,fuse]
    microrelay fmt <file.rly>
    microrelay prelude

Exit codes: 0 on success, 1 for a compile or runtime diagnostic, 2 for I/O and
usage errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .ir.analysis import check_well_formed
from .ir.expr import ModuleEnv
from .passes.manager import PassContext, parse_option_value, parse_pass_list, run_pipeline
from .prelude.loader import prelude_source
from .runtime.interpreter import eval_expr, interp
from .runtime.values import Value, format_value
from .text.parser import parse_bindings, parse_module
from .text.printer import print_module
from .utils.config import config
from .utils.errors import MicroRelayError, TypeMismatch
from .utils.logging_setup import setup_logging
from .utils.stats import compare_histograms

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIAGNOSTIC = 1
EXIT_USAGE = 2


class CliUsageError(Exception):
    """Bad file or argument; reported with exit code 2."""


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliUsageError(f"cannot read {path}: {e.strerror or e}") from e


def _load(path: str) -> ModuleEnv:
    return parse_module(_read(path), file=path)


def _options(pairs: Optional[Sequence[str]]) -> dict:
    options = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise CliUsageError(f"--option expects key=value, got {pair!r}")
        options[key.strip()] = parse_option_value(raw.strip())
    return options


def _context(args: argparse.Namespace) -> PassContext:
    return PassContext(
        passes=parse_pass_list(args.passes or ""),
        options=_options(getattr(args, "option", None)),
        seed=args.seed,
        entry=args.entry,
    )


def cmd_check(args: argparse.Namespace) -> int:
    """Typecheck a file and print the type of each global."""
    module = run_pipeline(_load(args.file), PassContext())
    for gv in module.user_globals():
        print(f"@{gv.name} : {module.globals[gv].checked_type}")
    return EXIT_OK


def cmd_opt(args: argparse.Namespace) -> int:
    """Run a pass pipeline and print the optimized module."""
    ctx = _context(args)
    source = _load(args.file)
    module = run_pipeline(source, ctx)
    if args.stats:
        table = compare_histograms(source, module)
        print(table.to_string(index=False), file=sys.stderr)
    sys.stdout.write(print_module(module))
    return EXIT_OK


def _input_values(module: ModuleEnv, entry: str, path: Optional[str]) -> list[Value]:
    """Entry arguments from an inputs file, matched to parameters by name."""
    fn = module[entry]
    bindings = parse_bindings(_read(path), file=path) if path else {}
    names = [p.var.name for p in fn.params]
    missing = [n for n in names if n not in bindings]
    if missing:
        raise TypeMismatch(
            f"inputs for {', '.join('%' + n for n in names)}",
            f"no value for {', '.join('%' + n for n in missing)}",
            fn.span,
            f"calling @{entry}",
        )
    extra = sorted(set(bindings) - set(names))
    if extra:
        logger.warning(f"Ignoring inputs not taken by @{entry}: {', '.join(extra)}")
    return [eval_expr(bindings[n]) for n in names]


def cmd_run(args: argparse.Namespace) -> int:
    """Interpret the entry function and print its result."""
    module = _load(args.file)
    ctx = _context(args)
    module = run_pipeline(module, ctx)
    if args.entry not in module:
        raise CliUsageError(f"no global @{args.entry} in {args.file}")
    values = _input_values(module, args.entry, args.inputs)
    result = interp(module, args.entry, values, fuel=args.fuel)
    print(format_value(result))
    return EXIT_OK


def cmd_fmt(args: argparse.Namespace) -> int:
    """Print a file in canonical text form."""
    module = _load(args.file)
    check_well_formed(module)
    sys.stdout.write(print_module(module))
    return EXIT_OK


def cmd_prelude(args: argparse.Namespace) -> int:
    sys.stdout.write(prelude_source())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microrelay",
        description="A functional IR for deep learning: typecheck, optimize and run .rly programs.",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: MICRORELAY_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="Typecheck a file and print global types")
    check.add_argument("file")
    check.set_defaults(handler=cmd_check)

    def pipeline_args(p: argparse.ArgumentParser, default_passes: str) -> None:
        p.add_argument("--passes", default=default_passes, help="Comma-separated pass list, e.g. fuse,fold,layout=NHWC")
        p.add_argument("--option", action="append", metavar="KEY=VALUE", help="Pass option such as fuse.max_depth=4")
        p.add_argument("--seed", type=int, default=0, help="Seed for generated calibration inputs")
        p.add_argument("--entry", default=config.DEFAULT_ENTRY, help="Entry function name")

    opt = sub.add_parser("opt", help="Optimize a file and print the result")
    opt.add_argument("file")
    pipeline_args(opt, "")
    opt.add_argument("--stats", action="store_true", help="Print operator counts before and after on stderr")
    opt.set_defaults(handler=cmd_opt)

    run = sub.add_parser("run", help="Interpret a file's entry function")
    run.add_argument("file")
    pipeline_args(run, "")
    run.add_argument("--inputs", default=None, help="File of `%%name = literal` bindings")
    run.add_argument("--fuel", type=int, default=None, help="Interpreter step budget (default: MICRORELAY_FUEL)")
    run.set_defaults(handler=cmd_run)

    fmt = sub.add_parser("fmt", help="Print a file in canonical form")
    fmt.add_argument("file")
    fmt.set_defaults(handler=cmd_fmt)

    prelude = sub.add_parser("prelude", help="Print the embedded prelude")
    prelude.set_defaults(handler=cmd_prelude)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except CliUsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MicroRelayError as e:
        print(e.render(), file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except RecursionError:
        print("RuntimeTrap: host recursion limit exceeded", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
