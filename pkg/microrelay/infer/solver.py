"""Constraint solving: a dependency graph between holes and relations, and a work queue.

Relations are dequeued and run against the current solution. Whenever a hole
is bound, every relation that mentions it moves to the front of the queue.
A relation whose slots are all known after running is discharged and never
visited again. If a full rotation of the queue binds nothing and discharges
nothing, the remaining holes are underconstrained.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from ..ops.relations import Fails, Holds, apply_relation, is_resolved
from ..utils.errors import RelationFailed, Underconstrained, UnificationError
from ..utils.span import SourceSpan
from .unifier import Hole, Unifier, holes_in

logger = logging.getLogger(__name__)

_node_ids = itertools.count()


@dataclass(eq=False)
class RelationNode:
    """One relation instance awaiting a solution."""

    relation: str
    types: tuple[Any, ...]
    attrs: Mapping[str, Any] = field(default_factory=dict)
    span: Optional[SourceSpan] = None
    id: int = field(default_factory=lambda: next(_node_ids))
    discharged: bool = False
    visits: int = 0

    def __repr__(self) -> str:
        return f"{self.relation}#{self.id}"


class DependencyGraph:
    """Bipartite edges between holes and the relations whose slots mention them."""

    def __init__(self) -> None:
        self.edges: dict[Hole, list[RelationNode]] = {}

    def add_relation(self, node: RelationNode, unifier: Unifier) -> None:
        for ty in node.types:
            for hole in holes_in(unifier.resolve(ty)):
                self._add_edge(hole, node)

    def _add_edge(self, hole: Hole, node: RelationNode) -> None:
        rels = self.edges.setdefault(hole, [])
        if not any(r is node for r in rels):
            rels.append(node)

    def relations_of(self, hole: Hole) -> list[RelationNode]:
        return list(self.edges.get(hole, ()))

    def on_bind(self, hole: Hole, target: Any, unifier: Unifier) -> list[RelationNode]:
        """Move the edges of a newly bound hole onto the holes of its target."""
        rels = self.edges.pop(hole, [])
        for inner in holes_in(unifier.resolve(target)):
            for node in rels:
                self._add_edge(inner, node)
        return rels


class SolverQueue:
    """Double-ended queue of pending relations, without duplicates."""

    def __init__(self, nodes: Iterable[RelationNode] = ()):
        self._queue: deque[RelationNode] = deque()
        for node in nodes:
            self.push_back(node)

    def __len__(self) -> int:
        return len(self._queue)

    def __contains__(self, node: object) -> bool:
        return any(n is node for n in self._queue)

    def __iter__(self):
        return iter(self._queue)

    def push_back(self, node: RelationNode) -> None:
        if not node.discharged and node not in self:
            self._queue.append(node)

    def move_to_front(self, nodes: Iterable[RelationNode]) -> None:
        """Put `nodes` at the front, keeping their relative order."""
        nodes = [n for n in nodes if not n.discharged]
        for node in nodes:
            try:
                self._queue.remove(node)
            except ValueError:
                pass
        for node in reversed(nodes):
            self._queue.appendleft(node)

    def pop_front(self) -> RelationNode:
        return self._queue.popleft()


@dataclass
class SolverTrace:
    """What the solver did, in order: ("visit" | "bind" | "discharge", relation id or hole)."""

    events: list[tuple[str, Any]] = field(default_factory=list)
    visits: dict[int, int] = field(default_factory=dict)

    def record(self, kind: str, subject: Any) -> None:
        self.events.append((kind, subject))


class Solver:
    """Owns the unifier, the dependency graph and the queue for one inference run."""

    def __init__(self) -> None:
        self.graph = DependencyGraph()
        self.queue = SolverQueue()
        self.trace = SolverTrace()
        self.nodes: list[RelationNode] = []
        self._touched: list[RelationNode] = []
        self.unifier = Unifier(on_bind=self._on_bind)

    def _on_bind(self, hole: Hole, target: Any) -> None:
        self.trace.record("bind", hole)
        self._touched.extend(self.graph.on_bind(hole, target, self.unifier))

    def add(self, relation: str, types: Iterable[Any], attrs: Optional[Mapping[str, Any]] = None,
            span: Optional[SourceSpan] = None) -> RelationNode:
        node = RelationNode(relation, tuple(types), dict(attrs or {}), span)
        self.nodes.append(node)
        self.graph.add_relation(node, self.unifier)
        self.queue.push_back(node)
        return node

    def _requeue_touched(self) -> None:
        touched, self._touched = self._touched, []
        seen: list[RelationNode] = []
        for node in touched:
            if not node.discharged and not any(node is s for s in seen):
                seen.append(node)
        self.queue.move_to_front(seen)

    def _discharge(self, node: RelationNode) -> None:
        node.discharged = True
        self.trace.record("discharge", node.id)

    def solve(self) -> SolverTrace:
        """Run the queue to a fixpoint."""
        # Bindings made while generating constraints already prioritized some relations.
        self._requeue_touched()
        idle = 0
        while len(self.queue):
            node = self.queue.pop_front()
            if node.discharged:
                continue
            node.visits += 1
            self.trace.visits[node.id] = node.visits
            self.trace.record("visit", node.id)
            types = tuple(self.unifier.resolve(t) for t in node.types)
            result = apply_relation(node.relation, types, node.attrs)
            binds_before = self.unifier.bind_count
            progressed = False
            if isinstance(result, Fails):
                raise RelationFailed(node.relation, types, result.reason, node.span)
            if isinstance(result, Holds):
                self._discharge(node)
                progressed = True
            else:
                for slot, ty in sorted(result.assignments.items()):
                    try:
                        self.unifier.unify(node.types[slot], ty)
                    except UnificationError as exc:
                        resolved = tuple(self.unifier.resolve(t) for t in node.types)
                        raise RelationFailed(node.relation, resolved, exc.message, node.span) from None
                if all(is_resolved(self.unifier.resolve(t)) for t in node.types):
                    self._discharge(node)
                    progressed = True
                else:
                    self.queue.push_back(node)
            if self.unifier.bind_count > binds_before:
                progressed = True
            self._requeue_touched()
            idle = 0 if progressed else idle + 1
            if len(self.queue) and idle >= len(self.queue):
                pending = [n for n in self.queue if not n.discharged]
                unknown: list[Hole] = []
                for n in pending:
                    for t in n.types:
                        for h in holes_in(self.unifier.resolve(t)):
                            if not any(h is u for u in unknown):
                                unknown.append(h)
                span = pending[0].span if pending else None
                raise Underconstrained(unknown or pending, span)
        logger.debug(
            f"Solved {len(self.nodes)} relations with {sum(n.visits for n in self.nodes)} visits "
            f"and {self.unifier.bind_count} bindings"
        )
        return self.trace


def solve(queue: SolverQueue, graph: DependencyGraph, unifier: Optional[Unifier] = None) -> SolverTrace:
    """Solve a queue built by hand (mainly for tests); see `Solver` for the integrated form."""
    solver = Solver()
    if unifier is not None:
        solver.unifier = unifier
        unifier.on_bind = solver._on_bind
    solver.graph = graph
    for node in queue:
        solver.nodes.append(node)
        solver.queue.push_back(node)
    return solver.solve()
