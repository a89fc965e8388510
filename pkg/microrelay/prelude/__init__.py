"""The standard prelude: List, Option, Tree and their combinators."""

from .loader import PRELUDE_PATH, load_prelude, prelude_module, prelude_source

__all__ = ["PRELUDE_PATH", "load_prelude", "prelude_module", "prelude_source"]
