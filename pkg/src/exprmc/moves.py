"""Proposal moves over expression trees.

Three move kinds drive the chain:

* node replacement (NR): swap one node for another of the same arity,
  children untouched; the proposal is symmetric.
* root addition / removal (RA/RR): grow or shrink the tree at the root.
  RA picks uniformly from a precomputed catalog of N_root candidate roots
  (each operation with leaf fillers in all slots but the leftmost); RR is
  deterministic and only legal when every branch but the leftmost is a leaf.
  The proposal ratio g(reverse)/g(forward) is N_root for RA and 1/N_root
  for RR.
* elementary tree replacement (ETR): replace an order-o_i elementary
  subtree by a catalog order-o_f elementary tree. With n_if the number of
  admissible (o_i, o_f) order pairs, Omega_i the count of order-o_i sites,
  and s_f the catalog size, the forward proposal probability is
  1/(n_if * Omega_i * s_f) and the ratio is
  (n_if * Omega_i * s_f) / (n_fi * Omega_f * s_i) with the primed counts
  taken on the proposed tree.

Each proposer returns None (a null proposal, counted as a rejection) when
its move is infeasible, e.g. the result would exceed the size limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ops import OperationSet
from .trees import (
    ExpressionTree,
    Node,
    Operation,
    Parameter,
    Variable,
    elementary_sites,
    elementary_tree_catalog,
    iter_nodes,
    leaf_catalog,
    replace_at,
    subtree_at,
)

ET_ORDERS = (0, 1, 2)


@dataclass(frozen=True)
class Proposal:
    kind: str  # "nr" | "ra" | "rr" | "etr"
    new_tree: ExpressionTree
    log_g_ratio: float  # log of g(old | new) / g(new | old)


@dataclass(frozen=True)
class MoveTables:
    """Catalogs enumerated once per opset at the start of a sampling run."""

    opset: OperationSet
    roots: tuple[tuple[str, tuple[Node, ...]], ...]
    et_catalogs: tuple[tuple[Node, ...], tuple[Node, ...], tuple[Node, ...]]

    @property
    def n_root(self) -> int:
        return len(self.roots)


def root_catalog(opset: OperationSet) -> tuple[tuple[str, tuple[Node, ...]], ...]:
    """All candidate roots: (op, filler leaves for the non-leftmost slots)."""
    leaves = leaf_catalog(opset)
    entries: list[tuple[str, tuple[Node, ...]]] = []
    for op, arity in opset.entries:
        if arity == 1:
            entries.append((op, ()))
        else:
            entries.extend((op, (leaf,)) for leaf in leaves)
    return tuple(entries)


def build_move_tables(opset: OperationSet) -> MoveTables:
    return MoveTables(
        opset=opset,
        roots=root_catalog(opset),
        et_catalogs=tuple(elementary_tree_catalog(opset, order) for order in ET_ORDERS),
    )


def _same_arity_alternatives(node: Node, tables: MoveTables) -> list[Node]:
    opset = tables.opset
    if isinstance(node, Operation):
        arity = len(node.children)
        names = opset.unary_ops if arity == 1 else opset.binary_ops
        return [Operation(name, node.children) for name in names if name != node.op]
    return [leaf for leaf in tables.et_catalogs[0] if leaf != node]


def propose_node_replacement(
    tree: ExpressionTree, tables: MoveTables, rng: np.random.Generator
) -> Proposal | None:
    positions = list(iter_nodes(tree.root))
    path, node = positions[rng.integers(len(positions))]
    alternatives = _same_arity_alternatives(node, tables)
    if not alternatives:
        return None
    replacement = alternatives[rng.integers(len(alternatives))]
    new_root = replace_at(tree.root, path, replacement)
    return Proposal("nr", ExpressionTree(new_root), 0.0)


def root_removal_target(tree: ExpressionTree) -> Node | None:
    """The leftmost branch, when root removal is legal; else None."""
    root = tree.root
    if not isinstance(root, Operation):
        return None
    if any(isinstance(child, Operation) for child in root.children[1:]):
        return None
    return root.children[0]


def propose_root_move(
    tree: ExpressionTree, tables: MoveTables, max_size: int, rng: np.random.Generator
) -> Proposal | None:
    if not tables.roots:
        return None
    if rng.random() < 0.5:  # root addition; the 1/2 factors cancel in the ratio
        op, fillers = tables.roots[rng.integers(tables.n_root)]
        if tree.size + 1 + len(fillers) > max_size:
            return None
        new_root = Operation(op, (tree.root, *fillers))
        return Proposal("ra", ExpressionTree(new_root), math.log(tables.n_root))
    target = root_removal_target(tree)
    if target is None:
        return None
    return Proposal("rr", ExpressionTree(target), -math.log(tables.n_root))


def admissible_order_pairs(
    site_counts: tuple[int, int, int],
    catalog_sizes: tuple[int, int, int],
    tree_size: int,
    max_size: int,
) -> list[tuple[int, int]]:
    return [
        (o_i, o_f)
        for o_i in ET_ORDERS
        if site_counts[o_i] > 0
        for o_f in ET_ORDERS
        if catalog_sizes[o_f] > 0 and tree_size + o_f - o_i <= max_size
    ]


def _site_counts(root: Node) -> tuple[int, int, int]:
    return tuple(len(elementary_sites(root, order)) for order in ET_ORDERS)  # type: ignore[return-value]


def etr_log_g_ratio(
    old_tree: ExpressionTree,
    new_tree: ExpressionTree,
    o_i: int,
    o_f: int,
    tables: MoveTables,
    max_size: int,
    old_sites: tuple[int, int, int] | None = None,
) -> float:
    """ln[(n_if Omega_i s_f) / (n_fi Omega_f s_i)] for a concrete replacement."""
    catalog_sizes = tuple(len(c) for c in tables.et_catalogs)
    if old_sites is None:
        old_sites = _site_counts(old_tree.root)
    new_sites = _site_counts(new_tree.root)
    n_if = len(admissible_order_pairs(old_sites, catalog_sizes, old_tree.size, max_size))
    n_fi = len(admissible_order_pairs(new_sites, catalog_sizes, new_tree.size, max_size))
    forward = n_if * old_sites[o_i] * catalog_sizes[o_f]
    reverse = n_fi * new_sites[o_f] * catalog_sizes[o_i]
    return math.log(forward) - math.log(reverse)


def propose_etr(
    tree: ExpressionTree, tables: MoveTables, max_size: int, rng: np.random.Generator
) -> Proposal | None:
    catalog_sizes = tuple(len(c) for c in tables.et_catalogs)
    sites_by_order = tuple(elementary_sites(tree.root, order) for order in ET_ORDERS)
    site_counts = tuple(len(s) for s in sites_by_order)
    pairs = admissible_order_pairs(site_counts, catalog_sizes, tree.size, max_size)
    if not pairs:
        return None
    o_i, o_f = pairs[rng.integers(len(pairs))]
    site = sites_by_order[o_i][rng.integers(site_counts[o_i])]
    replacement = tables.et_catalogs[o_f][rng.integers(catalog_sizes[o_f])]
    new_tree = ExpressionTree(replace_at(tree.root, site, replacement))
    log_g = etr_log_g_ratio(tree, new_tree, o_i, o_f, tables, max_size, site_counts)
    return Proposal("etr", new_tree, log_g)


# -- exact proposal enumeration (used to assemble transition matrices) ---------


def enumerate_nr(tree: ExpressionTree, tables: MoveTables) -> list[tuple[float, Proposal | None]]:
    """All NR outcomes with their probabilities conditional on the move kind."""
    positions = list(iter_nodes(tree.root))
    out: list[tuple[float, Proposal | None]] = []
    p_node = 1.0 / len(positions)
    for path, node in positions:
        alternatives = _same_arity_alternatives(node, tables)
        if not alternatives:
            out.append((p_node, None))
            continue
        p = p_node / len(alternatives)
        for replacement in alternatives:
            new_root = replace_at(tree.root, path, replacement)
            out.append((p, Proposal("nr", ExpressionTree(new_root), 0.0)))
    return out


def enumerate_root_moves(
    tree: ExpressionTree, tables: MoveTables, max_size: int
) -> list[tuple[float, Proposal | None]]:
    out: list[tuple[float, Proposal | None]] = []
    p_entry = 0.5 / tables.n_root
    for op, fillers in tables.roots:
        if tree.size + 1 + len(fillers) > max_size:
            out.append((p_entry, None))
            continue
        new_root = Operation(op, (tree.root, *fillers))
        out.append((p_entry, Proposal("ra", ExpressionTree(new_root), math.log(tables.n_root))))
    target = root_removal_target(tree)
    if target is None:
        out.append((0.5, None))
    else:
        out.append((0.5, Proposal("rr", ExpressionTree(target), -math.log(tables.n_root))))
    return out


def enumerate_etr(
    tree: ExpressionTree, tables: MoveTables, max_size: int
) -> list[tuple[float, Proposal | None]]:
    catalog_sizes = tuple(len(c) for c in tables.et_catalogs)
    sites_by_order = tuple(elementary_sites(tree.root, order) for order in ET_ORDERS)
    site_counts = tuple(len(s) for s in sites_by_order)
    pairs = admissible_order_pairs(site_counts, catalog_sizes, tree.size, max_size)
    if not pairs:
        return [(1.0, None)]
    out: list[tuple[float, Proposal | None]] = []
    for o_i, o_f in pairs:
        p = 1.0 / (len(pairs) * site_counts[o_i] * catalog_sizes[o_f])
        for site in sites_by_order[o_i]:
            for replacement in tables.et_catalogs[o_f]:
                new_tree = ExpressionTree(replace_at(tree.root, site, replacement))
                log_g = etr_log_g_ratio(
                    tree, new_tree, o_i, o_f, tables, max_size, site_counts
                )
                out.append((p, Proposal("etr", new_tree, log_g)))
    return out
