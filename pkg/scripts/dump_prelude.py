"""
CLI tool for printing the embedded prelude and its typed signatures.

Usage:
    python scripts/dump_prelude.py            # prelude source
    python scripts/dump_prelude.py --types    # one signature per function
"""

import sys

from microrelay.infer.inference import infer
from microrelay.prelude.loader import prelude_module, prelude_source


def main():
    """Print the prelude source, or its data types and function signatures."""
    if "--types" not in sys.argv[1:]:
        sys.stdout.write(prelude_source())
        return

    module = infer(prelude_module())
    print(f"📦 {len(module.adts)} data types")
    for name, adt in module.adts.items():
        ctors = " | ".join(c.name for c in adt.constructors)
        print(f"  {name}: {ctors}")
    print(f"\n📦 {len(module.globals)} functions")
    for gv, fn in module.globals.items():
        print(f"  @{gv.name} : {fn.checked_type}")


if __name__ == "__main__":
    main()
