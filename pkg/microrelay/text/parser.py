"""Recursive-descent parser for the text format.

A module is a sequence of `type` and `def` declarations, optionally followed
by a `#[metadata]` section holding the constant pool referenced through
`meta[Constant][n]`:

    type List[a] { Nil, Cons(a, List[a]) }

    def @main(%x: Tensor[(2, 3), float32]) -> Tensor[(2, 3), float32] {
      let %y = add(%x, %x);
      %y
    }
"""

from __future__ import annotations

import logging
import math
from typing import Any, Optional, Union

import numpy as np

from ..ir.expr import (
    AdtDef,
    Call,
    Clause,
    Constant,
    Constructor,
    ConstructorDef,
    Expr,
    Function,
    GlobalVar,
    If,
    Let,
    LocalVar,
    Match,
    ModuleEnv,
    OperatorRef,
    Param,
    Pattern,
    PatternConstructor,
    PatternTuple,
    PatternVar,
    PatternWildcard,
    Projection,
    RefNew,
    RefRead,
    RefWrite,
    TensorLiteral,
    Tuple,
)
from ..ir.types import (
    ANY,
    BOOL,
    FLOAT32,
    INT32,
    BaseType,
    DimConst,
    DimVar,
    FuncType,
    RefType,
    RelationInstance,
    Shape,
    TensorType,
    TupleType,
    Type,
    TypeCall,
    TypeName,
    TypeVar,
)
from ..ops.registry import OpRegistry, builtin_registry
from ..utils.errors import MetaIndexOutOfRange, RelaySyntaxError
from ..utils.span import SourceSpan
from .lexer import (
    EOF,
    FLOAT,
    GLOBAL,
    IDENT,
    INT,
    KEYWORDS,
    LOCAL,
    METADATA,
    NUMBER_SUFFIXES,
    STRING,
    Token,
    tokenize,
)

logger = logging.getLogger(__name__)

AttrValue = Union[int, float, bool, str, None, tuple]


def _is_base_type(name: str) -> bool:
    try:
        BaseType.parse(name)
    except ValueError:
        return False
    return True


class Parser:
    """Parses one token stream; scopes map local names to their binders."""

    def __init__(
        self,
        tokens: list[Token],
        registry: Optional[OpRegistry] = None,
        pool: Optional[list[TensorLiteral]] = None,
    ):
        self.tokens = tokens
        self.pos = 0
        self.registry = registry or builtin_registry()
        self.pool = pool or []
        self.scopes: list[dict[str, LocalVar]] = [{}]

    # Token helpers

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def peek_at(self, offset: int) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def error(self, *expected: str) -> RelaySyntaxError:
        tok = self.peek
        return RelaySyntaxError(tok.describe(), expected, tok.span)

    def expect(self, text: str) -> Token:
        if self.peek.is_punct(text):
            return self.advance()
        raise self.error(text)

    def expect_keyword(self, word: str) -> Token:
        if self.peek.is_keyword(word):
            return self.advance()
        raise self.error(word)

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.peek.kind == kind:
            return self.advance()
        raise self.error(what)

    def accept(self, text: str) -> Optional[Token]:
        if self.peek.is_punct(text):
            return self.advance()
        return None

    def span_from(self, start: Token) -> SourceSpan:
        end = self.tokens[self.pos - 1] if self.pos > 0 else start
        return start.span.merge(end.span)

    # Scopes

    def push_scope(self) -> None:
        self.scopes.append({})

    def pop_scope(self) -> None:
        self.scopes.pop()

    def bind(self, tok: Token) -> LocalVar:
        var = LocalVar.fresh(tok.text, span=tok.span)
        self.scopes[-1][tok.text] = var
        return var

    def resolve_local(self, tok: Token) -> LocalVar:
        for scope in reversed(self.scopes):
            if tok.text in scope:
                return scope[tok.text]
        # Left unbound on purpose: the well-formedness check reports it.
        return LocalVar(tok.text, span=tok.span)

    def _comma_list(self, close: str, item) -> list:
        items = []
        while not self.peek.is_punct(close):
            items.append(item())
            if not self.accept(","):
                break
        self.expect(close)
        return items

    # Module level

    def parse_module(self) -> ModuleEnv:
        functions: dict[GlobalVar, Function] = {}
        adts: dict[str, AdtDef] = {}
        while self.peek.kind not in (EOF, METADATA):
            if self.peek.is_keyword("def"):
                gv, fn = self.parse_def()
                if gv in functions:
                    raise RelaySyntaxError(f"@{gv.name}", ("a fresh global name",), gv.span)
                functions[gv] = fn
            elif self.peek.is_keyword("type"):
                adt = self.parse_type_decl()
                adts[adt.name] = adt
            else:
                raise self.error("def", "type")
        return ModuleEnv(functions, adts)

    def parse_def(self) -> tuple[GlobalVar, Function]:
        start = self.expect_keyword("def")
        name_tok = self.expect_kind(GLOBAL, "a global name")
        gv = GlobalVar(name_tok.text, span=name_tok.span)
        fn = self.parse_function_rest(start)
        return gv, fn

    def parse_type_decl(self) -> AdtDef:
        self.expect_keyword("type")
        name = self.expect_kind(IDENT, "a type name").text
        type_params: list[TypeVar] = []
        if self.accept("["):
            type_params = [TypeVar(t) for t in self._comma_list("]", lambda: self.expect_kind(IDENT, "a type parameter").text)]
        self.expect("{")
        ctors: list[ConstructorDef] = []

        def ctor() -> ConstructorDef:
            ctor_name = self.expect_kind(IDENT, "a constructor name").text
            fields: list[Type] = []
            if self.accept("("):
                fields = self._comma_list(")", self.parse_type)
            return ConstructorDef(ctor_name, tuple(fields), len(ctors))

        while not self.peek.is_punct("}"):
            ctors.append(ctor())
            if not self.accept(","):
                break
        self.expect("}")
        return AdtDef(name, tuple(type_params), tuple(ctors))

    def parse_function_rest(self, start: Token) -> Function:
        """Everything after `fn` or `def @name`: type params, params, return type, body."""
        type_params: list[TypeVar] = []
        if self.accept("<"):
            type_params = [TypeVar(t) for t in self._comma_list(">", lambda: self.expect_kind(IDENT, "a type parameter").text)]
        self.expect("(")
        self.push_scope()
        params: list[Param] = []
        attrs: dict[str, Any] = {}
        while not self.peek.is_punct(")"):
            if self.peek.kind == LOCAL:
                tok = self.advance()
                annotation = self.parse_type() if self.accept(":") else None
                params.append(Param(self.bind(tok), annotation))
            elif self.peek.kind == IDENT and self.peek_at(1).is_punct("="):
                key = self.advance().text
                self.advance()
                attrs[key] = self.parse_attr_value()
            else:
                raise self.error("a parameter", ")")
            if not self.accept(","):
                break
        self.expect(")")
        ret_type = self.parse_type() if self.accept("->") else None
        self.expect("{")
        body = self.parse_expr()
        self.expect("}")
        self.pop_scope()
        return Function(
            tuple(params), body, ret_type, tuple(type_params), attrs, span=self.span_from(start)
        )

    # Types

    def parse_type(self) -> Type:
        tok = self.peek
        if tok.is_punct("("):
            self.advance()
            if self.accept(")"):
                return TupleType(())
            first = self.parse_type()
            if self.accept(")"):
                return first
            fields = [first]
            self.expect(",")
            fields += self._comma_list(")", self.parse_type)
            return TupleType(tuple(fields))
        if tok.is_keyword("fn"):
            return self.parse_func_type()
        if tok.kind != IDENT:
            raise self.error("a type")
        self.advance()
        name = tok.text
        if name == "Tensor":
            self.expect("[")
            shape = self.parse_shape()
            self.expect(",")
            dtype = self.parse_dtype()
            self.expect("]")
            return TensorType(shape, dtype)
        if name == "Ref":
            self.expect("[")
            inner = self.parse_type()
            self.expect("]")
            return RefType(inner)
        if _is_base_type(name):
            return TensorType.scalar(BaseType.parse(name))
        if name[0].isupper():
            args: list[Type] = []
            if self.accept("["):
                args = self._comma_list("]", self.parse_type)
            return TypeCall(TypeName(name), tuple(args))
        return TypeVar(name)

    def parse_func_type(self) -> FuncType:
        self.expect_keyword("fn")
        type_params: list[TypeVar] = []
        if self.accept("<"):
            type_params = [TypeVar(t) for t in self._comma_list(">", lambda: self.expect_kind(IDENT, "a type parameter").text)]
        self.expect("(")
        args = self._comma_list(")", self.parse_type)
        self.expect("->")
        ret = self.parse_type()
        relations: list[RelationInstance] = []
        if self.peek.is_keyword("where"):
            self.advance()
            while True:
                rel = self.expect_kind(IDENT, "a relation name").text
                self.expect("(")
                rel_types = self._comma_list(")", self.parse_type)
                relations.append(RelationInstance(rel, tuple(rel_types)))
                if not self.accept(","):
                    break
        return FuncType(tuple(args), ret, tuple(type_params), tuple(relations))

    def parse_shape(self) -> Shape:
        self.expect("(")

        def dim():
            tok = self.advance()
            if tok.kind == INT and not tok.suffix and not tok.text.startswith("-"):
                return DimConst(int(tok.text))
            if tok.is_punct("?"):
                return ANY
            if tok.kind == IDENT:
                return DimVar(tok.text)
            raise RelaySyntaxError(tok.describe(), ("a dimension",), tok.span)

        return Shape(tuple(self._comma_list(")", dim)))

    def parse_dtype(self) -> BaseType:
        tok = self.expect_kind(IDENT, "a base type")
        try:
            return BaseType.parse(tok.text)
        except ValueError:
            raise RelaySyntaxError(tok.text, ("a base type",), tok.span) from None

    # Expressions

    def parse_expr(self) -> Expr:
        tok = self.peek
        if tok.is_keyword("let"):
            self.advance()
            name = self.expect_kind(LOCAL, "a local variable")
            annotation = self.parse_type() if self.accept(":") else None
            self.expect("=")
            value = self.parse_assign()
            self.expect(";")
            return self._let_body(tok, name, value, annotation)
        if tok.kind == LOCAL and self.peek_at(1).is_punct("="):
            # Graph binding `%g = e; body` is an ordinary let.
            name = self.advance()
            self.advance()
            value = self.parse_assign()
            self.expect(";")
            return self._let_body(tok, name, value, None)
        value = self.parse_assign()
        if self.accept(";"):
            body = self.parse_expr()
            var = LocalVar.fresh("_", span=value.span)
            return Let(var, value, body, span=self.span_from(tok))
        return value

    def _let_body(self, start: Token, name: Token, value: Expr, annotation: Optional[Type]) -> Expr:
        self.push_scope()
        var = self.bind(name)
        body = self.parse_expr()
        self.pop_scope()
        return Let(var, value, body, annotation, span=self.span_from(start))

    def parse_assign(self) -> Expr:
        start = self.peek
        target = self.parse_unary()
        if self.accept(":="):
            value = self.parse_assign()
            return RefWrite(target, value, span=self.span_from(start))
        return target

    def parse_unary(self) -> Expr:
        start = self.peek
        if self.accept("!"):
            ref = self.parse_unary()
            return RefRead(ref, span=self.span_from(start))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        start = self.peek
        expr = self.parse_primary()
        while True:
            if self.peek.is_punct("("):
                self.advance()
                args, attrs = self.parse_args()
                expr = Call(expr, tuple(args), attrs, span=self.span_from(start))
            elif self.peek.is_punct("<") and isinstance(expr, (GlobalVar, Constructor, LocalVar)):
                self.advance()
                type_args = self._comma_list(">", self.parse_type)
                self.expect("(")
                args, attrs = self.parse_args()
                expr = Call(expr, tuple(args), attrs, tuple(type_args), span=self.span_from(start))
            elif self.peek.is_punct("."):
                self.advance()
                index = self.expect_kind(INT, "a tuple index")
                expr = Projection(expr, int(index.text), span=self.span_from(start))
            else:
                return expr

    def parse_args(self) -> tuple[list[Expr], dict[str, Any]]:
        args: list[Expr] = []
        attrs: dict[str, Any] = {}
        while not self.peek.is_punct(")"):
            if self.peek.kind == IDENT and self.peek_at(1).is_punct("="):
                key = self.advance().text
                self.advance()
                attrs[key] = self.parse_attr_value()
            elif attrs:
                raise self.error("an attribute")
            else:
                args.append(self.parse_expr())
            if not self.accept(","):
                break
        self.expect(")")
        return args, attrs

    def parse_attr_value(self) -> AttrValue:
        tok = self.advance()
        if tok.kind == INT:
            return int(tok.text)
        if tok.kind == FLOAT:
            return float(tok.text)
        if tok.kind == STRING:
            return tok.text
        if tok.is_keyword("True"):
            return True
        if tok.is_keyword("False"):
            return False
        if tok.is_keyword("None"):
            return None
        if tok.is_punct("("):
            items = []
            while not self.peek.is_punct(")"):
                items.append(self.parse_attr_value())
                if not self.accept(","):
                    break
            self.expect(")")
            return tuple(items)
        raise RelaySyntaxError(tok.describe(), ("an attribute value",), tok.span)

    def parse_primary(self) -> Expr:
        tok = self.peek
        if tok.kind == LOCAL:
            self.advance()
            return self.resolve_local(tok)
        if tok.kind == GLOBAL:
            self.advance()
            return GlobalVar(tok.text, span=tok.span)
        if tok.kind in (INT, FLOAT):
            self.advance()
            return Constant(self.scalar_literal(tok), span=tok.span)
        if tok.is_punct("("):
            self.advance()
            if self.accept(")"):
                return Tuple((), span=self.span_from(tok))
            first = self.parse_expr()
            if self.accept(")"):
                return first
            fields = [first]
            self.expect(",")
            fields += self._comma_list(")", self.parse_expr)
            return Tuple(tuple(fields), span=self.span_from(tok))
        if tok.is_punct("{"):
            self.advance()
            inner = self.parse_expr()
            self.expect("}")
            return inner
        if tok.kind != IDENT:
            raise self.error("an expression")
        word = tok.text
        if word in ("True", "False"):
            self.advance()
            return Constant(TensorLiteral.scalar(word == "True", BOOL), span=tok.span)
        if word == "fn":
            self.advance()
            return self.parse_function_rest(tok)
        if word == "if":
            return self.parse_if()
        if word == "match":
            return self.parse_match()
        if word == "ref":
            self.advance()
            self.expect("(")
            init = self.parse_expr()
            self.expect(")")
            return RefNew(init, span=self.span_from(tok))
        if word == "meta":
            return self.parse_meta()
        if word == "const":
            self.advance()
            return Constant(self.parse_const_body(), span=self.span_from(tok))
        if word in KEYWORDS:
            raise self.error("an expression")
        self.advance()
        if word in self.registry:
            return OperatorRef(word, span=tok.span)
        if word[0].isupper():
            return Constructor(word, span=tok.span)
        return OperatorRef(word, span=tok.span)

    def parse_if(self) -> Expr:
        start = self.expect_keyword("if")
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        self.expect("{")
        then_branch = self.parse_expr()
        self.expect("}")
        self.expect_keyword("else")
        if self.peek.is_keyword("if"):
            else_branch = self.parse_if()
        else:
            self.expect("{")
            else_branch = self.parse_expr()
            self.expect("}")
        return If(cond, then_branch, else_branch, span=self.span_from(start))

    def parse_match(self) -> Expr:
        start = self.expect_keyword("match")
        self.expect("(")
        scrutinee = self.parse_expr()
        self.expect(")")
        self.expect("{")
        clauses: list[Clause] = []
        while not self.peek.is_punct("}"):
            self.push_scope()
            pattern = self.parse_pattern()
            self.expect("=>")
            if self.accept("{"):
                body = self.parse_expr()
                self.expect("}")
            else:
                body = self.parse_expr()
            self.pop_scope()
            clauses.append(Clause(pattern, body))
            if not self.accept(","):
                break
        self.expect("}")
        return Match(scrutinee, tuple(clauses), span=self.span_from(start))

    def parse_pattern(self) -> Pattern:
        tok = self.peek
        if tok.kind == LOCAL:
            self.advance()
            return PatternVar(self.bind(tok), span=tok.span)
        if tok.is_keyword("_"):
            self.advance()
            return PatternWildcard(span=tok.span)
        if tok.is_punct("("):
            self.advance()
            subs = self._comma_list(")", self.parse_pattern)
            return PatternTuple(tuple(subs), span=self.span_from(tok))
        if tok.kind == IDENT and tok.text not in KEYWORDS:
            self.advance()
            subs: list[Pattern] = []
            if self.accept("("):
                subs = self._comma_list(")", self.parse_pattern)
            return PatternConstructor(tok.text, tuple(subs), span=self.span_from(tok))
        raise self.error("a pattern")

    def parse_meta(self) -> Expr:
        start = self.expect_keyword("meta")
        self.expect("[")
        kind = self.expect_kind(IDENT, "Constant")
        if kind.text != "Constant":
            raise RelaySyntaxError(kind.text, ("Constant",), kind.span)
        self.expect("]")
        self.expect("[")
        index_tok = self.expect_kind(INT, "a pool index")
        self.expect("]")
        index = int(index_tok.text)
        span = self.span_from(start)
        if not 0 <= index < len(self.pool):
            raise MetaIndexOutOfRange(index, len(self.pool), span)
        return Constant(self.pool[index], span=span)

    # Literals

    def scalar_literal(self, tok: Token) -> TensorLiteral:
        dtype_name = NUMBER_SUFFIXES[tok.suffix]
        if dtype_name is None:
            dtype = INT32 if tok.kind == INT else FLOAT32
        else:
            dtype = BaseType.parse(dtype_name)
        value = self.number_value(tok)
        if dtype.is_integral:
            info = np.iinfo(dtype.numpy_dtype)
            if not float(value).is_integer() or not info.min <= value <= info.max:
                raise RelaySyntaxError(tok.text, (f"an {dtype} literal",), tok.span)
            value = int(value)
        with np.errstate(all="ignore"):
            return TensorLiteral.scalar(value, dtype)

    @staticmethod
    def number_value(tok: Token) -> Union[int, float]:
        if tok.kind == INT:
            return int(tok.text)
        text = tok.text
        if text.lstrip("-") in ("inf", "nan"):
            value = math.inf if text.endswith("inf") else math.nan
            return -value if text.startswith("-") else value
        return float(text)

    def parse_const_body(self) -> TensorLiteral:
        """`(` `[` values `]` `,` shape `,` dtype `)` after the `const` keyword."""
        start = self.expect("(")
        self.expect("[")

        def element():
            tok = self.advance()
            if tok.kind in (INT, FLOAT) and not tok.suffix:
                return self.number_value(tok)
            if tok.is_keyword("True") or tok.is_keyword("False"):
                return tok.text == "True"
            raise RelaySyntaxError(tok.describe(), ("a number",), tok.span)

        values = self._comma_list("]", element)
        self.expect(",")
        shape_start = self.peek
        shape = self.parse_shape()
        if not shape.is_concrete:
            raise RelaySyntaxError(str(shape), ("a concrete shape",), self.span_from(shape_start))
        self.expect(",")
        dtype = self.parse_dtype()
        self.expect(")")
        try:
            with np.errstate(all="ignore"):
                return TensorLiteral.from_flat(values, shape.as_ints(), dtype)
        except (OverflowError, ValueError):
            raise RelaySyntaxError(str(values), (f"{dtype} values",), self.span_from(start)) from None

    def parse_pool(self) -> list[TensorLiteral]:
        """The body of a `#[metadata]` section: `Constant = [ const(...), ... ]`."""
        self.expect_kind(METADATA, "#[metadata]")
        pool: list[TensorLiteral] = []
        if self.peek.kind == EOF:
            return pool
        tok = self.expect_kind(IDENT, "Constant")
        if tok.text != "Constant":
            raise RelaySyntaxError(tok.text, ("Constant",), tok.span)
        self.expect("=")
        self.expect("[")
        while not self.peek.is_punct("]"):
            self.expect_keyword("const")
            pool.append(self.parse_const_body())
            if not self.accept(","):
                break
        self.expect("]")
        self.expect_kind(EOF, "end of input")
        return pool


def _split_metadata(tokens: list[Token]) -> tuple[list[Token], list[Token]]:
    for i, tok in enumerate(tokens):
        if tok.kind == METADATA:
            body = tokens[:i] + [Token(EOF, "", tok.span)]
            return body, tokens[i:]
    return tokens, []


def parse_module(
    text: str,
    file: str = "<string>",
    prelude: bool = True,
    check: bool = True,
    registry: Optional[OpRegistry] = None,
) -> ModuleEnv:
    """Parse a module from its text form.

    Args:
        text: Source text
        file: Name used in source spans
        prelude: Merge the standard prelude into the result
        check: Run the well-formedness check on the result
        registry: Operator registry used to recognize operator names

    Returns:
        The parsed module

    Raises:
        RelaySyntaxError, MetaIndexOutOfRange, NameCollision, or a well-formedness error
    """
    registry = registry or builtin_registry()
    body_tokens, meta_tokens = _split_metadata(tokenize(text, file))
    pool = Parser(meta_tokens, registry).parse_pool() if meta_tokens else []
    parser = Parser(body_tokens, registry, pool)
    module = parser.parse_module()
    parser.expect_kind(EOF, "end of input")
    if prelude:
        from ..prelude.loader import load_prelude

        module = load_prelude(module)
    if check:
        from ..ir.analysis import check_well_formed

        check_well_formed(module, registry)
    logger.debug(f"Parsed {file}: {len(module.user_globals())} globals, {len(pool)} pooled constants")
    return module


def parse_expr(text: str, file: str = "<string>", registry: Optional[OpRegistry] = None) -> Expr:
    """Parse a single expression (no well-formedness check)."""
    parser = Parser(tokenize(text, file), registry)
    expr = parser.parse_expr()
    parser.expect_kind(EOF, "end of input")
    return expr


def parse_type(text: str) -> Type:
    parser = Parser(tokenize(text))
    ty = parser.parse_type()
    parser.expect_kind(EOF, "end of input")
    return ty


def parse_bindings(text: str, file: str = "<string>") -> dict[str, Expr]:
    """Parse an inputs file: lines of `%name = <literal>;` (the semicolon is optional).

    Raises:
        RelaySyntaxError: On anything but a binding of a literal expression
    """
    parser = Parser(tokenize(text, file))
    out: dict[str, Expr] = {}
    while parser.peek.kind != EOF:
        name = parser.expect_kind(LOCAL, "a binding such as %x = ...")
        parser.expect("=")
        value = parser.parse_assign()
        if name.text in out:
            raise RelaySyntaxError(f"%{name.text}", ("a fresh input name",), name.span)
        out[name.text] = value
        parser.accept(";")
    return out
