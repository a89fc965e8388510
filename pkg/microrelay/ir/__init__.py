"""IR package: types, expressions, module environment and structural utilities."""

from .types import (
    ANY,
    BOOL,
    FLOAT16,
    FLOAT32,
    FLOAT64,
    INT8,
    INT16,
    INT32,
    INT64,
    UINT8,
    UNIT,
    BaseType,
    Dim,
    DimAny,
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
    TypeCode,
    TypeName,
    TypeVar,
)
from .expr import (
    PRIMITIVE,
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
    build_lets,
    let_chain,
)
from .visitor import ExprMutator, ExprVisitor, substitute
from .analysis import (
    alpha_equal,
    alpha_equal_modules,
    check_well_formed,
    free_vars,
    is_pure,
    structural_hash,
)
from .anf import is_anf, module_to_anf, to_anf

__all__ = [
    "ANY",
    "BOOL",
    "FLOAT16",
    "FLOAT32",
    "FLOAT64",
    "INT8",
    "INT16",
    "INT32",
    "INT64",
    "UINT8",
    "UNIT",
    "BaseType",
    "Dim",
    "DimAny",
    "DimConst",
    "DimVar",
    "FuncType",
    "RefType",
    "RelationInstance",
    "Shape",
    "TensorType",
    "TupleType",
    "Type",
    "TypeCall",
    "TypeCode",
    "TypeName",
    "TypeVar",
    "PRIMITIVE",
    "AdtDef",
    "Call",
    "Clause",
    "Constant",
    "Constructor",
    "ConstructorDef",
    "Expr",
    "Function",
    "GlobalVar",
    "If",
    "Let",
    "LocalVar",
    "Match",
    "ModuleEnv",
    "OperatorRef",
    "Param",
    "Pattern",
    "PatternConstructor",
    "PatternTuple",
    "PatternVar",
    "PatternWildcard",
    "Projection",
    "RefNew",
    "RefRead",
    "RefWrite",
    "TensorLiteral",
    "Tuple",
    "build_lets",
    "let_chain",
    "ExprMutator",
    "ExprVisitor",
    "substitute",
    "alpha_equal",
    "alpha_equal_modules",
    "check_well_formed",
    "free_vars",
    "is_pure",
    "structural_hash",
    "is_anf",
    "module_to_anf",
    "to_anf",
]
