"""Normal forms for detecting when two trees denote the same expression.

The rewrite pass is deliberately bounded: subtraction and division are
rewritten to sums/products with -1 coefficients and exponents, associative
chains of + and * are flattened, operands of commutative operations are
sorted, and purely numeric subterms are folded. Equal keys therefore imply
mathematical equivalence; the converse is not attempted (full algebraic
equivalence is undecidable). Stored trees are never modified; the normal
form exists only inside key computation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trees import ExpressionTree, Node, Operation, Parameter, Variable


@dataclass(frozen=True, slots=True)
class CNum:
    value: float


@dataclass(frozen=True, slots=True)
class CSym:
    kind: str  # "x" or "p"
    index: int


@dataclass(frozen=True, slots=True)
class CNary:
    op: str  # "+" or "*"
    args: tuple["CanonNode", ...]


@dataclass(frozen=True, slots=True)
class CPow:
    base: "CanonNode"
    exponent: "CanonNode"


@dataclass(frozen=True, slots=True)
class CFun:
    name: str
    args: tuple["CanonNode", ...]


CanonNode = CNum | CSym | CNary | CPow | CFun


def _format_number(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def render_canonical(node: CanonNode) -> str:
    if isinstance(node, CNum):
        return _format_number(node.value)
    if isinstance(node, CSym):
        return f"{node.kind}{node.index + 1}"
    if isinstance(node, CNary):
        return "(" + node.op + " " + " ".join(render_canonical(a) for a in node.args) + ")"
    if isinstance(node, CPow):
        return f"(pow {render_canonical(node.base)} {render_canonical(node.exponent)})"
    return "(" + node.name + " " + " ".join(render_canonical(a) for a in node.args) + ")"


def _make_nary(op: str, args: list[CanonNode]) -> CanonNode:
    """Flatten nested chains, fold numeric terms, drop identities, sort."""
    identity = 0.0 if op == "+" else 1.0
    flat: list[CanonNode] = []
    stack = list(args)
    while stack:
        a = stack.pop()
        if isinstance(a, CNary) and a.op == op:
            stack.extend(a.args)
        else:
            flat.append(a)
    numeric = identity
    rest: list[CanonNode] = []
    for a in flat:
        if isinstance(a, CNum):
            numeric = numeric + a.value if op == "+" else numeric * a.value
        else:
            rest.append(a)
    if op == "*" and numeric == 0.0:
        return CNum(0.0)
    if numeric != identity:
        rest.append(CNum(numeric))
    if not rest:
        return CNum(identity)
    if len(rest) == 1:
        return rest[0]
    rest.sort(key=render_canonical)
    return CNary(op, tuple(rest))


_NEG_ONE = CNum(-1.0)


def _canon(node: Node | CanonNode) -> CanonNode:
    if isinstance(node, (CNum, CSym)):
        return node
    if isinstance(node, CNary):
        return _make_nary(node.op, [_canon(a) for a in node.args])
    if isinstance(node, CPow):
        return CPow(_canon(node.base), _canon(node.exponent))
    if isinstance(node, CFun):
        return CFun(node.name, tuple(_canon(a) for a in node.args))
    if isinstance(node, Variable):
        return CSym("x", node.index)
    if isinstance(node, Parameter):
        return CSym("p", node.index)
    assert isinstance(node, Operation)
    op = node.op
    if op == "+":
        return _make_nary("+", [_canon(c) for c in node.children])
    if op == "*":
        return _make_nary("*", [_canon(c) for c in node.children])
    if op == "-":
        a, b = node.children
        return _make_nary("+", [_canon(a), _make_nary("*", [_NEG_ONE, _canon(b)])])
    if op == "/":
        a, b = node.children
        return _make_nary("*", [_canon(a), CPow(_canon(b), _NEG_ONE)])
    if op == "pow":
        a, b = node.children
        return CPow(_canon(a), _canon(b))
    return CFun(op, tuple(_canon(c) for c in node.children))


def canonical_form(tree: ExpressionTree | Node | CanonNode) -> CanonNode:
    node = tree.root if isinstance(tree, ExpressionTree) else tree
    return _canon(node)


def canonical_key(tree: ExpressionTree | Node) -> str:
    """Deterministic normal-form rendering used for duplicate detection."""
    return render_canonical(canonical_form(tree))
