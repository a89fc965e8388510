"""Loading the standard prelude into user modules."""

import functools
import logging
from pathlib import Path

from ..ir.expr import Function, GlobalVar, ModuleEnv
from ..utils.errors import NameCollision

logger = logging.getLogger(__name__)

PRELUDE_PATH = Path(__file__).with_name("prelude.rly")


def prelude_source() -> str:
    """Get the text of the embedded prelude."""
    return PRELUDE_PATH.read_text(encoding="utf-8")


@functools.lru_cache(maxsize=1)
def prelude_module() -> ModuleEnv:
    """Parse and typecheck the prelude once per process."""
    from ..infer.inference import infer
    from ..text.parser import parse_module

    module = parse_module(prelude_source(), file="prelude.rly", prelude=False)
    infer(module)
    names = frozenset(gv.name for gv in module.globals) | frozenset(module.adts)
    module = ModuleEnv(module.globals, module.adts, names)
    logger.info(
        f"Loaded prelude: {len(module.adts)} data types, {len(module.globals)} functions"
    )
    return module


def _collisions(module: ModuleEnv, prelude: ModuleEnv) -> None:
    for gv in module.globals:
        if gv in prelude.globals:
            raise NameCollision(f"@{gv.name}", gv.span)
    prelude_ctors = prelude.constructor_names()
    for name, adt in module.adts.items():
        if name in prelude.adts:
            raise NameCollision(name)
        for ctor in adt.constructors:
            if ctor.name in prelude_ctors:
                raise NameCollision(ctor.name)


def load_prelude(module: ModuleEnv) -> ModuleEnv:
    """Add the prelude's data types and functions to `module`.

    Loading twice is a no-op.

    Raises:
        NameCollision: If a user definition reuses a prelude name
    """
    prelude = prelude_module()
    if module.prelude_names >= prelude.prelude_names:
        return module
    _collisions(module, prelude)
    functions: dict[GlobalVar, Function] = dict(prelude.globals)
    functions.update(module.globals)
    adts = dict(prelude.adts)
    adts.update(module.adts)
    return ModuleEnv(functions, adts, module.prelude_names | prelude.prelude_names)
