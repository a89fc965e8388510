"""Helpers shared by the test modules: corpus access, random programs and oracles."""

from pathlib import Path
from typing import Optional

import numpy as np

from microrelay.infer import infer
from microrelay.ir.expr import Call, Expr, Function, GlobalVar, ModuleEnv, OperatorRef
from microrelay.ir.visitor import post_order_visit
from microrelay.ops.registry import FusionPattern
from microrelay.passes.fuse_ops import SINK, DataflowDag
from microrelay.runtime import interp, random_arguments
from microrelay.text import parse_module

CORPUS_DIR = Path(__file__).parent / "corpus"
CORPUS_FILES = sorted(CORPUS_DIR.glob("*.rly"))


def corpus_text(name: str) -> str:
    return (CORPUS_DIR / name).read_text(encoding="utf-8")


def load_corpus(name: str) -> ModuleEnv:
    """Parse and typecheck one corpus program."""
    return infer(parse_module(corpus_text(name), file=name))


def typed(text: str) -> ModuleEnv:
    return infer(parse_module(text))


def primitive_functions(module: ModuleEnv, name: str = "main") -> list[Function]:
    """Every function literal marked Primitive inside global `name`."""
    found: list[Function] = []

    def record(node: Expr) -> None:
        if isinstance(node, Function) and node.is_primitive:
            found.append(node)

    post_order_visit(module[name], record)
    return found


def calls_to(module: ModuleEnv, callee: str, name: str = "main") -> list[Call]:
    """Operator or global calls named `callee` inside global `name`."""
    found: list[Call] = []

    def record(node: Expr) -> None:
        if isinstance(node, Call):
            target = node.callee
            if isinstance(target, (OperatorRef, GlobalVar)) and target.name == callee:
                found.append(node)

    post_order_visit(module[name], record)
    return found


def global_calls(module: ModuleEnv, name: str = "main") -> set[str]:
    found: set[str] = set()

    def record(node: Expr) -> None:
        if isinstance(node, GlobalVar):
            found.add(node.name)

    post_order_visit(module[name], record)
    return found


def run_main(module: ModuleEnv, args, entry: str = "main"):
    return interp(module, entry, args)


def random_inputs(module: ModuleEnv, rng: np.random.Generator, count: int, entry: str = "main") -> list[list]:
    """`count` argument lists for @entry, or [] when its parameters cannot be generated."""
    try:
        return [random_arguments(module, entry, rng) for _ in range(count)]
    except ValueError:
        return []


# Random tensor programs with an independent shape oracle

UNARY = ("relu", "sigmoid", "tanh", "negative", "exp")
BINARY = ("add", "subtract", "multiply", "maximum", "minimum")


def _shape_text(shape: tuple[int, ...]) -> str:
    return "(" + ", ".join(str(d) for d in shape) + ("," if len(shape) == 1 else "") + ")"


def _tensor_text(shape: tuple[int, ...]) -> str:
    return f"Tensor[{_shape_text(shape)}, float32]"


def _broadcast_partner(shape: tuple[int, ...], rng: np.random.Generator) -> tuple[int, ...]:
    """A shape that broadcasts against `shape`: some dims set to 1, maybe fewer leading dims."""
    dims = [1 if rng.random() < 0.3 else d for d in shape]
    drop = int(rng.integers(0, len(dims))) if len(dims) > 1 and rng.random() < 0.3 else 0
    return tuple(dims[drop:]) or (1,)


def conv_output(data: tuple[int, ...], weight: tuple[int, ...], strides: tuple[int, int],
                padding: tuple[int, int]) -> tuple[int, ...]:
    """NCHW/OIHW convolution output shape, straight from the sliding-window formula."""
    n, _, h, w = data
    o, _, kh, kw = weight
    out_h = (h + 2 * padding[0] - kh) // strides[0] + 1
    out_w = (w + 2 * padding[1] - kw) // strides[1] + 1
    return (n, o, out_h, out_w)


class RandomProgram:
    """Builds `@main` from random tensor operations and tracks the expected result shape."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: list[tuple[str, tuple[int, ...]]] = []
        self.lines: list[str] = []
        self.values: list[tuple[str, tuple[int, ...]]] = []

    def param(self, shape: tuple[int, ...]) -> str:
        name = f"%p{len(self.params)}"
        self.params.append((name, shape))
        self.values.append((name, shape))
        return name

    def bind(self, expr: str, shape: tuple[int, ...]) -> str:
        name = f"%v{len(self.lines)}"
        self.lines.append(f"let {name} = {expr};")
        self.values.append((name, shape))
        return name

    def pick(self, rank: Optional[int] = None) -> Optional[tuple[str, tuple[int, ...]]]:
        pool = [v for v in self.values if rank is None or len(v[1]) == rank]
        if not pool:
            return None
        return pool[int(self.rng.integers(0, len(pool)))]

    def step(self) -> None:
        rng = self.rng
        choice = rng.random()
        name, shape = self.pick()
        if choice < 0.3:
            op = UNARY[int(rng.integers(0, len(UNARY)))]
            self.bind(f"{op}({name})", shape)
        elif choice < 0.6:
            op = BINARY[int(rng.integers(0, len(BINARY)))]
            other_shape = _broadcast_partner(shape, rng)
            other = self.param(other_shape)
            args = (name, other) if rng.random() < 0.5 else (other, name)
            self.bind(f"{op}({args[0]}, {args[1]})", tuple(np.broadcast_shapes(shape, other_shape)))
        elif choice < 0.75 and len(shape) >= 2:
            axis = int(rng.integers(0, len(shape)))
            out = tuple(d for i, d in enumerate(shape) if i != axis)
            self.bind(f"sum({name}, axis={axis})", out)
        elif choice < 0.85 and len(shape) >= 2:
            perm = tuple(int(a) for a in rng.permutation(len(shape)))
            self.bind(f"transpose({name}, axes={_shape_text(perm)})", tuple(shape[a] for a in perm))
        else:
            picked = self.pick(rank=2)
            if picked is None:
                self.bind(f"relu({name})", shape)
                return
            name, (rows, k) = picked
            units = int(rng.integers(1, 6))
            weight = self.param((units, k))
            self.bind(f"dense({name}, {weight})", (rows, units))

    def text(self) -> str:
        params = ", ".join(f"{n}: {_tensor_text(s)}" for n, s in self.params)
        body = "\n  ".join(self.lines + [self.values[-1][0]])
        return f"def @main({params}) {{\n  {body}\n}}\n"

    @property
    def result_shape(self) -> tuple[int, ...]:
        return self.values[-1][1]


def random_tensor_program(rng: np.random.Generator, steps: int = 6) -> RandomProgram:
    program = RandomProgram(rng)
    rank = int(rng.integers(1, 4))
    program.param(tuple(int(d) for d in rng.integers(1, 6, size=rank)))
    for _ in range(steps):
        program.step()
    return program


def random_conv_program(rng: np.random.Generator) -> tuple[str, tuple[int, ...]]:
    """A single convolution with random geometry, and its expected output shape."""
    channels = int(rng.integers(1, 5))
    kh, kw = (int(k) for k in rng.integers(1, 4, size=2))
    strides = tuple(int(s) for s in rng.integers(1, 3, size=2))
    padding = tuple(int(p) for p in rng.integers(0, 2, size=2))
    h = int(rng.integers(kh, kh + 6))
    w = int(rng.integers(kw, kw + 6))
    data = (int(rng.integers(1, 3)), channels, h, w)
    weight = (int(rng.integers(1, 5)), channels, kh, kw)
    text = (
        f"def @main(%x: {_tensor_text(data)}, %w: {_tensor_text(weight)}) {{\n"
        f"  conv2d(%x, %w, strides={_shape_text(strides)}, padding={_shape_text(padding)})\n"
        "}\n"
    )
    return text, conv_output(data, weight, strides, padding)  # type: ignore[arg-type]


# Dataflow DAGs for fusion

PATTERNS = list(FusionPattern)


def random_dag(rng: np.random.Generator, max_nodes: int = 12) -> DataflowDag:
    dag = DataflowDag()
    size = int(rng.integers(1, max_nodes + 1))
    for node in range(size):
        pattern = PATTERNS[int(rng.integers(0, len(PATTERNS)))]
        inputs = []
        if node:
            count = int(rng.integers(0, min(node, 3) + 1))
            inputs = [int(i) for i in rng.choice(node, size=count, replace=False)]
        dag.add(pattern, inputs, external=bool(rng.random() < 0.15))
    return dag


def brute_force_post_dominators(dag: DataflowDag) -> list[int]:
    """Immediate post-dominators from full post-dominator sets (iterative dataflow)."""
    consumers = dag.consumers()
    pdom: dict[int, frozenset] = {SINK: frozenset({SINK})}
    for node in reversed(range(len(dag))):
        sets = [pdom[c] for c in consumers[node]]
        pdom[node] = frozenset({node}) | frozenset.intersection(*sets)
    result = []
    for node in range(len(dag)):
        strict = pdom[node] - {node}
        immediate = [d for d in strict if pdom[d] == strict]
        assert len(immediate) == 1
        result.append(immediate[0])
    return result


def post_dominator_sets(dag: DataflowDag) -> dict[int, frozenset]:
    consumers = dag.consumers()
    pdom: dict[int, frozenset] = {SINK: frozenset({SINK})}
    for node in reversed(range(len(dag))):
        pdom[node] = frozenset({node}) | frozenset.intersection(*(pdom[c] for c in consumers[node]))
    return pdom
