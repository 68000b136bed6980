"""Expression trees: representation, parsing, rendering, evaluation, counting.

Trees are immutable. Internal nodes carry an operation name and exactly
``arity`` children; leaves are variables (``x1..xK``) or parameters
(``p1..pP``). There are no numeric literals: every constant in a model is a
fitted parameter.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .ops import BINARY_IMPL, UNARY_IMPL, OperationSet

DEFAULT_MAX_TREE_SIZE = 50

Path = tuple[int, ...]


@dataclass(frozen=True, slots=True)
class Variable:
    index: int  # 0-based; rendered as x{index+1}


@dataclass(frozen=True, slots=True)
class Parameter:
    index: int  # 0-based; rendered as p{index+1}


@dataclass(frozen=True, slots=True)
class Operation:
    op: str
    children: tuple["Node", ...]


Node = Variable | Parameter | Operation


def node_size(node: Node) -> int:
    if isinstance(node, Operation):
        return 1 + sum(node_size(c) for c in node.children)
    return 1


@dataclass(frozen=True)
class ExpressionTree:
    """A rooted expression tree with its cached node count."""

    root: Node
    size: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "size", node_size(self.root))

    def __str__(self) -> str:
        return render(self)


class ParseError(ValueError):
    """Malformed expression text; ``position`` is a character offset."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "#":
            break
        if ch.isspace():
            i += 1
            continue
        if ch in "()":
            tokens.append((ch, i))
            i += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace() and text[j] not in "()#":
            j += 1
        tokens.append((text[i:j], i))
        i = j
    return tokens


def _parse_atom(token: str, position: int, opset: OperationSet) -> Node:
    kind, rest = token[0], token[1:]
    if kind in ("x", "p") and rest.isdigit():
        index = int(rest) - 1
        if kind == "x":
            if not 0 <= index < opset.n_vars:
                raise ParseError(f"variable {token!r} out of range (have {opset.n_vars})", position)
            return Variable(index)
        if not 0 <= index < opset.n_params:
            raise ParseError(f"parameter {token!r} out of range (have {opset.n_params})", position)
        return Parameter(index)
    raise ParseError(f"unknown symbol {token!r}", position)


def parse_expression(
    text: str, opset: OperationSet, max_size: int = DEFAULT_MAX_TREE_SIZE
) -> ExpressionTree:
    """Parse one prefix-notation expression, e.g. ``(+ x1 (sin p1))``."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    pos = 0

    def parse_form() -> Node:
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", tokens[-1][1])
        token, where = tokens[pos]
        pos += 1
        if token == ")":
            raise ParseError("unexpected ')'", where)
        if token != "(":
            return _parse_atom(token, where, opset)
        if pos >= len(tokens):
            raise ParseError("unbalanced '(': expected operation name", where)
        op, op_where = tokens[pos]
        pos += 1
        if op in ("(", ")"):
            raise ParseError("expected operation name after '('", op_where)
        if op not in opset.op_names:
            raise ParseError(f"unknown operation {op!r}", op_where)
        arity = opset.arity(op)
        children = []
        for _ in range(arity):
            if pos < len(tokens) and tokens[pos][0] == ")":
                raise ParseError(
                    f"operation {op!r} expects {arity} arguments", tokens[pos][1]
                )
            children.append(parse_form())
        if pos >= len(tokens):
            raise ParseError("unbalanced form: expected ')'", tokens[-1][1])
        closing, close_where = tokens[pos]
        if closing != ")":
            raise ParseError(f"operation {op!r} expects {arity} arguments", close_where)
        pos += 1
        return Operation(op, tuple(children))

    root = parse_form()
    if pos != len(tokens):
        raise ParseError("trailing input after expression", tokens[pos][1])
    tree = ExpressionTree(root)
    if tree.size > max_size:
        raise ParseError(f"tree has {tree.size} nodes, exceeds limit {max_size}")
    return tree


def _render_node(node: Node, out: list[str]) -> None:
    if isinstance(node, Variable):
        out.append(f"x{node.index + 1}")
    elif isinstance(node, Parameter):
        out.append(f"p{node.index + 1}")
    else:
        out.append("(" + node.op)
        for child in node.children:
            out.append(" ")
            _render_node(child, out)
        out.append(")")


def render(tree: ExpressionTree | Node) -> str:
    """Prefix-notation text whose parse is node-identical to the input."""
    node = tree.root if isinstance(tree, ExpressionTree) else tree
    out: list[str] = []
    _render_node(node, out)
    return "".join(out)


def iter_nodes(node: Node, path: Path = ()) -> Iterator[tuple[Path, Node]]:
    """Preorder traversal yielding (path, node); paths are child-index tuples."""
    yield path, node
    if isinstance(node, Operation):
        for i, child in enumerate(node.children):
            yield from iter_nodes(child, path + (i,))


def subtree_at(node: Node, path: Path) -> Node:
    for i in path:
        node = node.children[i]
    return node


def replace_at(node: Node, path: Path, replacement: Node) -> Node:
    if not path:
        return replacement
    i, rest = path[0], path[1:]
    children = list(node.children)
    children[i] = replace_at(children[i], rest, replacement)
    return Operation(node.op, tuple(children))


def validate_tree(
    tree: ExpressionTree, opset: OperationSet, max_size: int = DEFAULT_MAX_TREE_SIZE
) -> None:
    """Raise ValueError unless the tree is well formed for this opset."""
    if tree.size > max_size:
        raise ValueError(f"tree has {tree.size} nodes, exceeds limit {max_size}")
    for _, node in iter_nodes(tree.root):
        if isinstance(node, Operation):
            arity = opset.arity(node.op)
            if len(node.children) != arity:
                raise ValueError(f"operation {node.op!r} has {len(node.children)} children")
        elif isinstance(node, Variable):
            if not 0 <= node.index < opset.n_vars:
                raise ValueError(f"variable index {node.index} out of range")
        else:
            if not 0 <= node.index < opset.n_params:
                raise ValueError(f"parameter index {node.index} out of range")


def count_operations(tree: ExpressionTree | Node, opset: OperationSet) -> dict[str, int]:
    """Per-operation occurrence counts, with a zero entry for every op."""
    node = tree.root if isinstance(tree, ExpressionTree) else tree
    counts = Counter()
    for _, n in iter_nodes(node):
        if isinstance(n, Operation):
            counts[n.op] += 1
    return {name: counts.get(name, 0) for name in opset.op_names}


def active_parameters(tree: ExpressionTree | Node) -> tuple[int, ...]:
    """Sorted distinct parameter indices occurring in the tree."""
    node = tree.root if isinstance(tree, ExpressionTree) else tree
    return tuple(sorted({n.index for _, n in iter_nodes(node) if isinstance(n, Parameter)}))


# -- evaluation ---------------------------------------------------------------


def compile_tree(tree: ExpressionTree | Node) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile to a vectorized evaluator f(X, theta) -> y over data rows.

    ``X`` is (N, K), ``theta`` the full parameter vector of length P. Invalid
    operations produce nan/inf entries instead of raising.
    """
    node = tree.root if isinstance(tree, ExpressionTree) else tree

    def build(n: Node) -> Callable:
        if isinstance(n, Variable):
            i = n.index
            return lambda X, t: X[:, i]
        if isinstance(n, Parameter):
            j = n.index
            return lambda X, t: t[j]
        if len(n.children) == 1:
            try:
                fn = UNARY_IMPL[n.op]
            except KeyError:
                raise ValueError(f"no numeric implementation for operation {n.op!r}") from None
            a = build(n.children[0])
            return lambda X, t: fn(a(X, t))
        try:
            fn = BINARY_IMPL[n.op]
        except KeyError:
            raise ValueError(f"no numeric implementation for operation {n.op!r}") from None
        a = build(n.children[0])
        b = build(n.children[1])
        return lambda X, t: fn(a(X, t), b(X, t))

    fn = build(node)

    def run(X: np.ndarray, theta: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        theta = np.asarray(theta, dtype=float)
        with np.errstate(all="ignore"):
            out = fn(X, theta)
        out = np.asarray(out, dtype=float)
        if out.ndim == 0:
            out = np.full(X.shape[0], float(out))
        return out

    return run


def evaluate(tree: ExpressionTree | Node, x, theta=()) -> float:
    """Evaluate at one input point; non-finite results collapse to nan."""
    X = np.asarray(x, dtype=float).reshape(1, -1)
    value = float(compile_tree(tree)(X, np.asarray(theta, dtype=float))[0])
    return value if math.isfinite(value) else math.nan


# -- elementary trees ----------------------------------------------------------

# An elementary tree of order k is a tree with at most one operation whose
# operation has k children; order 0 is a bare leaf.


def leaf_catalog(opset: OperationSet) -> tuple[Node, ...]:
    """All leaves, variables first, in index order."""
    return tuple(Variable(i) for i in range(opset.n_vars)) + tuple(
        Parameter(j) for j in range(opset.n_params)
    )


def elementary_tree_catalog(opset: OperationSet, order: int) -> tuple[Node, ...]:
    """The indexed family of all order-``order`` elementary trees."""
    leaves = leaf_catalog(opset)
    if order == 0:
        return leaves
    if order == 1:
        return tuple(Operation(op, (leaf,)) for op in opset.unary_ops for leaf in leaves)
    if order == 2:
        return tuple(
            Operation(op, (left, right))
            for op in opset.binary_ops
            for left in leaves
            for right in leaves
        )
    raise ValueError(f"elementary tree order must be 0, 1, or 2, got {order}")


def elementary_order(node: Node) -> int | None:
    """Order of the node's subtree if it is an elementary tree, else None."""
    if not isinstance(node, Operation):
        return 0
    if all(not isinstance(c, Operation) for c in node.children):
        return len(node.children)
    return None


def elementary_sites(tree: ExpressionTree | Node, order: int) -> list[Path]:
    """Positions whose subtree is exactly an order-``order`` elementary tree.

    Every leaf is an order-0 site, including leaves sitting inside a larger
    elementary tree; the same rule is applied on both sides of a proposal.
    """
    node = tree.root if isinstance(tree, ExpressionTree) else tree
    return [path for path, n in iter_nodes(node) if elementary_order(n) == order]
