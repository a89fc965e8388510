"""Operator fusion.

Each let chain of a function body in ANF is viewed as a dataflow DAG whose
nodes are the operator-call bindings. A virtual sink consumes every value
that is used outside the DAG (by the chain's result, by non-operator
bindings, or inside nested bodies). Nodes are grouped with their immediate
post-dominator according to their fusion patterns, and every group becomes a
local function marked `Primitive=1` whose parameters are the group's free
variables.

Grouping rules, in two phases over nodes in topological order:

* ComplexOutFusable (phase 0): joins its post-dominator when the post-dominator
  and every node between them are at most Broadcast.
* Elementwise/Broadcast (phase 0): joins its post-dominator when the nodes
  between are at most Injective and the post-dominator is at most Injective
  or a Reduction.
* Injective (phase 1): joins when the post-dominator and the nodes between
  are at most Injective.
* Reduction and Opaque nodes never join a later node; Opaque nodes are never
  joined either. A group holds at most one ComplexOutFusable node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from ..ir.analysis import free_vars
from ..ir.anf import to_anf
from ..ir.expr import (
    PRIMITIVE,
    Call,
    Expr,
    Function,
    GlobalVar,
    Let,
    LocalVar,
    ModuleEnv,
    Param,
    build_lets,
    let_chain,
)
from ..ir.visitor import ExprMutator, substitute
from ..ops.registry import FusionPattern, OpRegistry, builtin_registry
from .common import is_op_call, map_user_functions, use_counts

logger = logging.getLogger(__name__)

SINK = -1


@dataclass
class DataflowDag:
    """Operator nodes of one let chain, in topological (binding) order.

    `inputs[i]` lists the producer nodes of node i; `external[i]` is True when
    node i's value is also used outside the DAG.
    """

    patterns: list[FusionPattern] = field(default_factory=list)
    inputs: list[list[int]] = field(default_factory=list)
    external: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patterns)

    def add(self, pattern: FusionPattern, inputs: list[int], external: bool = False) -> int:
        self.patterns.append(pattern)
        self.inputs.append(sorted(set(inputs)))
        self.external.append(external)
        return len(self.patterns) - 1

    def consumers(self) -> list[list[int]]:
        """Consumer lists, with SINK standing for uses outside the DAG."""
        out: list[list[int]] = [[] for _ in self.patterns]
        for node, producers in enumerate(self.inputs):
            for p in producers:
                out[p].append(node)
        for node, ext in enumerate(self.external):
            if ext or not out[node]:
                out[node].append(SINK)
        return out


def post_dominators(dag: DataflowDag) -> list[int]:
    """Immediate post-dominator of every node (SINK for the virtual sink).

    Nodes are visited in reverse topological order, so each node's consumers
    already have their post-dominator, and one pass suffices on a DAG.
    """
    consumers = dag.consumers()
    ipdom = [SINK] * len(dag)
    depth: dict[int, int] = {SINK: 0}

    def meet(a: int, b: int) -> int:
        while a != b:
            if depth[a] >= depth[b]:
                a = ipdom[a] if a != SINK else SINK
            else:
                b = ipdom[b] if b != SINK else SINK
        return a

    for node in reversed(range(len(dag))):
        users = consumers[node]
        dom = users[0]
        for other in users[1:]:
            dom = meet(dom, other)
        ipdom[node] = dom
        depth[node] = depth[dom] + 1
    return ipdom


def _between(dag: DataflowDag, consumers: list[list[int]], src: int, dst: int) -> Optional[set[int]]:
    """Nodes strictly between src and dst on some path, or None if a path escapes dst."""
    reach: set[int] = set()
    stack = [c for c in consumers[src]]
    while stack:
        node = stack.pop()
        if node == dst:
            continue
        if node == SINK:
            return None
        if node in reach:
            continue
        reach.add(node)
        stack.extend(consumers[node])
    return reach


class _Groups:
    """Union-find over DAG nodes, tracking the member set of each group."""

    def __init__(self, dag: DataflowDag):
        self.parent = list(range(len(dag)))
        self.members: dict[int, set[int]] = {i: {i} for i in range(len(dag))}
        self.dag = dag

    def find(self, node: int) -> int:
        while self.parent[node] != node:
            self.parent[node] = self.parent[self.parent[node]]
            node = self.parent[node]
        return node

    def merged_members(self, nodes: set[int]) -> set[int]:
        out: set[int] = set()
        for root in {self.find(n) for n in nodes}:
            out |= self.members[root]
        return out

    def merge(self, nodes: set[int], into: int) -> None:
        target = self.find(into)
        for node in nodes:
            root = self.find(node)
            if root != target:
                self.parent[root] = target
                self.members[target] |= self.members.pop(root)


def fusion_groups(dag: DataflowDag, max_depth: Optional[int] = None) -> list[int]:
    """Group id (the id of the group's anchor node) for every node."""
    ipdom = post_dominators(dag)
    consumers = dag.consumers()
    groups = _Groups(dag)
    pattern = dag.patterns

    def try_fuse(node: int, allowed_between: FusionPattern, target_ok) -> None:
        dom = ipdom[node]
        if dom == SINK or not target_ok(pattern[dom]):
            return
        between = _between(dag, consumers, node, dom)
        if between is None or any(pattern[m] > allowed_between for m in between):
            return
        members = groups.merged_members({node, dom} | between)
        if sum(1 for m in members if pattern[m] == FusionPattern.ComplexOutFusable) > 1:
            return
        if any(pattern[m] == FusionPattern.Opaque for m in members):
            return
        if max_depth is not None and len(members) > max_depth:
            return
        groups.merge({node} | between, dom)

    for phase in (0, 1):
        for node in range(len(dag)):
            kind = pattern[node]
            if phase == 0 and kind == FusionPattern.ComplexOutFusable:
                try_fuse(node, FusionPattern.Broadcast, lambda p: p <= FusionPattern.Broadcast)
            elif phase == 0 and kind <= FusionPattern.Broadcast:
                try_fuse(
                    node,
                    FusionPattern.Injective,
                    lambda p: p <= FusionPattern.Injective or p == FusionPattern.Reduction,
                )
            elif phase == 1 and kind == FusionPattern.Injective:
                try_fuse(node, FusionPattern.Injective, lambda p: p <= FusionPattern.Injective)

    # Name each group by its last member, which is the one whose value leaves it.
    anchor = {root: max(members) for root, members in groups.members.items()}
    return [anchor[groups.find(n)] for n in range(len(dag))]


class OperatorFuser(ExprMutator):
    def __init__(self, registry: OpRegistry, max_depth: Optional[int] = None):
        super().__init__()
        self.registry = registry
        self.max_depth = max_depth
        self.group_sizes: list[int] = []

    def visit_function(self, expr: Function) -> Expr:
        if expr.is_primitive:
            return expr
        return super().visit_function(expr)

    def visit_let(self, expr: Let) -> Expr:
        chain, body = let_chain(expr)
        values = [self.visit(let.value) for let in chain]
        body = self.visit(body)

        node_of: dict[LocalVar, int] = {}
        dag = DataflowDag()
        for i, (let, value) in enumerate(zip(chain, values)):
            if is_op_call(value):
                producers = [node_of[a] for a in value.args if isinstance(a, LocalVar) and a in node_of]
                decl = self.registry.lookup(value.callee.name)  # type: ignore[attr-defined]
                node_of[let.var] = dag.add(decl.pattern, producers)
        if not len(dag):
            return build_lets([(let.var, v) for let, v in zip(chain, values)], body)

        # Uses outside operator arguments go to the sink.
        op_uses = use_counts(body)
        for let, value in zip(chain, values):
            if let.var in node_of and is_op_call(value):
                continue
            op_uses.update(use_counts(value))
        for var, node in node_of.items():
            if op_uses.get(var, 0):
                dag.external[node] = True

        group_of = fusion_groups(dag, self.max_depth)
        node_var = {node: var for var, node in node_of.items()}
        members: dict[int, list[int]] = {}
        for node, anchor in enumerate(group_of):
            members.setdefault(anchor, []).append(node)

        position = {let.var: i for i, let in enumerate(chain)}
        new_values = list(values)
        dropped: set[int] = set()
        for anchor, nodes in members.items():
            lets = [(node_var[n], values[position[node_var[n]]]) for n in sorted(nodes)]
            call = self._primitive_call(lets, node_var[anchor])
            new_values[position[node_var[anchor]]] = call
            dropped.update(position[node_var[n]] for n in nodes if n != anchor)
            self.group_sizes.append(len(nodes))

        bindings = [(let, v) for i, (let, v) in enumerate(zip(chain, new_values)) if i not in dropped]
        result = body
        for let, value in reversed(bindings):
            result = Let(let.var, value, result, let.type_annotation, span=let.span)
        return result

    def _primitive_call(self, lets: list[tuple[LocalVar, Expr]], result: LocalVar) -> Call:
        group_body = build_lets(lets, result)
        inputs = free_vars(group_body)
        params = [LocalVar.fresh(v.name, span=v.span) for v in inputs]
        renaming: dict[LocalVar, Expr] = dict(zip(inputs, params))
        # Inner bindings get their own variables; only the result is bound outside.
        renaming.update((var, LocalVar.fresh(var.name, span=var.span)) for var, _ in lets)
        group_body = substitute(group_body, renaming)
        fn = Function(tuple(Param(p) for p in params), group_body, attrs={PRIMITIVE: 1})
        return Call(fn, tuple(inputs), span=lets[-1][1].span)


def fuse_ops(
    module: ModuleEnv,
    max_depth: Optional[int] = None,
    registry: Optional[OpRegistry] = None,
) -> ModuleEnv:
    """Factor fusable operator groups into Primitive local functions.

    Args:
        module: Module to rewrite; non-ANF bodies are normalized first
        max_depth: Optional cap on the number of operators per group
        registry: Operator registry providing fusion patterns

    Returns:
        The rewritten module
    """
    fuser = OperatorFuser(registry or builtin_registry(), max_depth)

    def rewrite(gv: GlobalVar, fn: Function) -> Function:
        return fuser.visit(to_anf(fn))  # type: ignore[return-value]

    module = map_user_functions(module, rewrite)
    if fuser.group_sizes:
        logger.debug(
            f"Formed {len(fuser.group_sizes)} fused groups; largest has {max(fuser.group_sizes)} operators"
        )
    return module
