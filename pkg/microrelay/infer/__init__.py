"""Type inference: union-find unifier, relation solver and constraint generation."""

from .unifier import DimHole, InferVar, Unifier, holes_in, unify
from .solver import DependencyGraph, RelationNode, Solver, SolverQueue, SolverTrace, solve
from .inference import (
    TypeInferencer,
    infer,
    infer_expr,
    instantiate,
    signature_of,
    strongly_connected_globals,
    type_of,
)

__all__ = [
    "DimHole",
    "InferVar",
    "Unifier",
    "holes_in",
    "unify",
    "DependencyGraph",
    "RelationNode",
    "Solver",
    "SolverQueue",
    "SolverTrace",
    "solve",
    "TypeInferencer",
    "infer",
    "infer_expr",
    "instantiate",
    "signature_of",
    "strongly_connected_globals",
    "type_of",
]
