"""Operation tables and the configurable operation set for expression trees."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Numeric implementations used by the tree evaluator.  Domain violations
# (log of a negative, 0**-1, overflow, ...) are allowed to produce nan/inf;
# the evaluator treats any non-finite value as the invalid-value sentinel.
UNARY_IMPL = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "square": np.square,
}

BINARY_IMPL = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "pow": np.power,
}

DEFAULT_BINARY_OPS = ("+", "-", "*", "/", "pow")
DEFAULT_UNARY_OPS = ("exp", "log", "sin", "cos", "sqrt", "abs", "sinh", "cosh", "tanh")

# Binary operations whose operand order never matters; canonicalization
# sorts their arguments.
COMMUTATIVE_OPS = frozenset({"+", "*"})


@dataclass(frozen=True)
class OperationSet:
    """The vocabulary a model may be built from.

    ``entries`` lists (name, arity) pairs with arity 1 or 2; leaves are the
    variables ``x1..x{n_vars}`` and the parameters ``p1..p{n_params}``.
    """

    entries: tuple[tuple[str, int], ...]
    n_vars: int
    n_params: int

    def __post_init__(self) -> None:
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate operation names in operation set")
        for name, arity in self.entries:
            if arity not in (1, 2):
                raise ValueError(f"operation {name!r} has unsupported arity {arity}")
            if not name or any(ch.isspace() or ch in "()" for ch in name):
                raise ValueError(f"invalid operation name {name!r}")
        if self.n_vars < 1:
            raise ValueError("need at least one variable")
        if self.n_params < 0:
            raise ValueError("n_params must be nonnegative")

    @property
    def op_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    @property
    def unary_ops(self) -> tuple[str, ...]:
        return tuple(name for name, arity in self.entries if arity == 1)

    @property
    def binary_ops(self) -> tuple[str, ...]:
        return tuple(name for name, arity in self.entries if arity == 2)

    def arity(self, name: str) -> int:
        for op, arity in self.entries:
            if op == name:
                return arity
        raise KeyError(f"unknown operation {name!r}")

    @property
    def n_leaves(self) -> int:
        return self.n_vars + self.n_params

    def signature(self) -> tuple:
        """Hashable identity used to match priors and fitted models to a set."""
        return (self.n_vars, self.n_params, self.entries)


def default_operation_set(n_vars: int, n_params: int) -> OperationSet:
    """The full default vocabulary: 5 binary and 9 unary operations."""
    entries = tuple((name, 2) for name in DEFAULT_BINARY_OPS) + tuple(
        (name, 1) for name in DEFAULT_UNARY_OPS
    )
    return OperationSet(entries=entries, n_vars=n_vars, n_params=n_params)


def operation_set(names: list[str] | tuple[str, ...], n_vars: int, n_params: int) -> OperationSet:
    """Build a set from operation names, inferring arity from the builtin tables."""
    entries = []
    for name in names:
        if name in BINARY_IMPL:
            entries.append((name, 2))
        elif name in UNARY_IMPL:
            entries.append((name, 1))
        else:
            raise KeyError(f"operation {name!r} has no builtin implementation")
    return OperationSet(entries=tuple(entries), n_vars=n_vars, n_params=n_params)
