"""Exception hierarchy shared by every microrelay component.

Each error carries an optional source span so the CLI can render a located
diagnostic. The class name is the diagnostic kind printed to users.
"""

from typing import Any, Iterable, Optional

from .span import SourceSpan


class MicroRelayError(Exception):
    """Base class for all compiler and runtime diagnostics."""

    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        super().__init__(message)
        self.message = message
        self.span = span

    @property
    def kind(self) -> str:
        return type(self).__name__

    def render(self) -> str:
        """Format the error as `file:line:col: Kind: message`."""
        location = f"{self.span}: " if self.span is not None else ""
        return f"{location}{self.kind}: {self.message}"


# Well-formedness


class WellFormednessError(MicroRelayError):
    """A reference or literal that does not resolve."""


class UnboundVariable(WellFormednessError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(f"unbound variable {name}", span)
        self.name = name


class UnknownOperator(WellFormednessError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(f"unknown operator {name}", span)
        self.name = name


class UnknownConstructor(WellFormednessError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(f"unknown constructor {name}", span)
        self.name = name


class MalformedLiteral(WellFormednessError):
    def __init__(self, shape: Any, length: int, span: Optional[SourceSpan] = None):
        super().__init__(
            f"tensor literal of shape {tuple(shape)} holds {length} elements", span
        )
        self.shape = tuple(shape)
        self.length = length


class InvalidAttribute(WellFormednessError):
    def __init__(self, op: str, attr: str, span: Optional[SourceSpan] = None):
        super().__init__(f"operator {op} has no attribute {attr!r}", span)
        self.op = op
        self.attr = attr


# Text format


class ParseError(MicroRelayError):
    """Raised by the text-format parser."""


class RelaySyntaxError(ParseError):
    def __init__(
        self,
        found: str,
        expected: Iterable[str],
        span: Optional[SourceSpan] = None,
    ):
        self.found = found
        self.expected = tuple(sorted(set(expected)))
        wanted = ", ".join(self.expected) if self.expected else "something else"
        super().__init__(f"unexpected {found!r}; expected {wanted}", span)

    @property
    def kind(self) -> str:
        return "SyntaxError"


class MetaIndexOutOfRange(ParseError):
    def __init__(self, index: int, size: int, span: Optional[SourceSpan] = None):
        super().__init__(
            f"meta[Constant][{index}] out of range for a pool of {size}", span
        )
        self.index = index


class NameCollision(ParseError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(f"{name} is already defined by the prelude", span)
        self.name = name


# Operator registry


class RegistryError(MicroRelayError):
    """Raised on invalid registry operations."""


class DuplicateOperator(RegistryError):
    def __init__(self, name: str):
        super().__init__(f"operator {name} is already registered")
        self.name = name


class OperatorNotFound(RegistryError):
    def __init__(self, name: str):
        super().__init__(f"operator {name} is not registered")
        self.name = name


# Type inference


class TypeInferenceError(MicroRelayError):
    """Raised when a module does not typecheck."""


class TypeMismatch(TypeInferenceError):
    def __init__(self, expected: Any, found: Any, span: Optional[SourceSpan] = None, detail: str = ""):
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"expected {expected}, found {found}{suffix}", span)
        self.expected = expected
        self.found = found


class UnificationError(TypeInferenceError):
    def __init__(self, left: Any, right: Any, span: Optional[SourceSpan] = None):
        super().__init__(f"cannot unify {left} with {right}", span)
        self.left = left
        self.right = right


class RelationFailed(TypeInferenceError):
    def __init__(self, relation: str, types: Any, reason: str = "", span: Optional[SourceSpan] = None):
        rendered = ", ".join(str(t) for t in types)
        suffix = f": {reason}" if reason else ""
        super().__init__(f"{relation}({rendered}) does not hold{suffix}", span)
        self.relation = relation
        self.types = tuple(types)


class Underconstrained(TypeInferenceError):
    def __init__(self, variables: Any, span: Optional[SourceSpan] = None):
        names = ", ".join(str(v) for v in variables)
        super().__init__(f"cannot solve for {names}", span)
        self.variables = tuple(variables)


class UnannotatedRecursion(TypeInferenceError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(
            f"recursive function {name} needs annotations on every parameter", span
        )
        self.name = name


# Runtime


class RuntimeTrap(MicroRelayError):
    """Raised by the interpreter when evaluation cannot continue."""


class MatchFailure(RuntimeTrap):
    def __init__(self, value: Any, span: Optional[SourceSpan] = None):
        super().__init__(f"no clause matches {value}", span)


class TrapDivideByZero(RuntimeTrap):
    def __init__(self, span: Optional[SourceSpan] = None):
        super().__init__("integer division by zero", span)


class OutOfFuel(RuntimeTrap):
    def __init__(self, budget: int, span: Optional[SourceSpan] = None):
        super().__init__(f"step budget of {budget} exhausted", span)
        self.budget = budget


# Passes


class PassError(MicroRelayError):
    """Wraps a failure raised while running a named pass."""

    def __init__(self, pass_name: str, cause: MicroRelayError):
        super().__init__(f"pass {pass_name!r} failed: {cause.render()}", cause.span)
        self.pass_name = pass_name
        self.cause = cause


class UnknownPass(MicroRelayError):
    def __init__(self, name: str, known: Iterable[str]):
        super().__init__(f"unknown pass {name!r}; valid passes: {', '.join(sorted(known))}")
        self.name = name


class FuelExhausted(MicroRelayError):
    def __init__(self, budget: int, span: Optional[SourceSpan] = None):
        super().__init__(f"partial evaluation exceeded {budget} reductions", span)
        self.budget = budget


class QuantizationError(MicroRelayError):
    """Raised by the annotate/calibrate/realize flow."""


class MissingRule(QuantizationError):
    def __init__(self, op: str):
        super().__init__(f"no annotation rule for operator {op}")
        self.op = op


class CalibrationFailed(QuantizationError):
    pass


class Uncalibrated(QuantizationError):
    def __init__(self, site: int, span: Optional[SourceSpan] = None):
        super().__init__(f"simulated_quantize site {site} has no calibrated scale", span)
        self.site = site


class UnsupportedLayout(MicroRelayError):
    def __init__(self, layout: str):
        super().__init__(f"unsupported layout {layout!r}; expected NCHW or NHWC")
        self.layout = layout
