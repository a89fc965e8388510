"""
CLI tool for the pass layering experiment.

Applies successively longer prefixes of a pass list to each program and checks
that the interpreter still produces the same result on random inputs.

Usage:
    python scripts/layering_report.py <file.rly> [file2.rly ...]
    python scripts/layering_report.py tests/corpus/*.rly --passes fuse,fold,layout=NHWC,cse
"""

import argparse
import sys

import numpy as np
import pandas as pd

from microrelay.passes.manager import PassContext, parse_pass_list, run_pipeline
from microrelay.runtime.interpreter import interp, random_arguments
from microrelay.runtime.values import values_close
from microrelay.text.parser import parse_module
from microrelay.utils.errors import MicroRelayError
from microrelay.utils.logging_setup import setup_logging
from microrelay.utils.stats import count_ops

DEFAULT_PASSES = "fuse,fold,layout=NHWC,cse"


def layer_program(path: str, passes: list[str], trials: int, seed: int) -> list[dict]:
    """One row per pipeline prefix: operator count and output agreement."""
    with open(path, encoding="utf-8") as f:
        source = parse_module(f.read(), file=path)
    baseline = run_pipeline(source)
    rng = np.random.default_rng(seed)
    try:
        inputs = [random_arguments(baseline, "main", rng) for _ in range(trials)]
    except (ValueError, KeyError):
        inputs = []
    expected = [interp(baseline, "main", args) for args in inputs]

    rows = []
    for n in range(len(passes) + 1):
        prefix = passes[:n]
        module = run_pipeline(source, PassContext(passes=prefix, seed=seed))
        agree = all(
            values_close(interp(module, "main", args), want) for args, want in zip(inputs, expected)
        )
        rows.append(
            {
                "Program": path,
                "Pipeline": ",".join(prefix) or "(none)",
                "Ops": count_ops(module),
                "Checked": len(inputs),
                "Agrees": agree,
            }
        )
    return rows


def main():
    """CLI entry point for the layering report."""
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("files", nargs="+")
    parser.add_argument("--passes", default=DEFAULT_PASSES)
    parser.add_argument("--trials", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    setup_logging()

    passes = parse_pass_list(args.passes)
    rows = []
    failed = 0
    for path in args.files:
        try:
            rows.extend(layer_program(path, passes, args.trials, args.seed))
        except (OSError, MicroRelayError) as e:
            print(f"❌ {path}: {e}")
            failed += 1

    if rows:
        df = pd.DataFrame(rows)
        print(df.to_string(index=False))
        disagreements = int((~df["Agrees"]).sum())
        if disagreements:
            print(f"\n❌ {disagreements} pipeline prefixes changed a program's output")
            sys.exit(1)
        print(f"\n✅ All {len(df)} pipeline prefixes preserved program outputs")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
