"""Equilibrium validation on an exhaustively enumerable expression space.

The restricted space uses operations {+, sin}, one variable, one parameter,
and at most seven nodes, which is small enough to enumerate every tree,
score each one by brute force, and compare chain visit frequencies against
the exact distribution proportional to exp(-DL). The brute-force scorer is
an independent code path from the production fitter: a dense parameter grid
plus local refinement instead of simplex descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .canonical import canonical_key
from .fitting import (
    Dataset,
    DescriptionLengthScorer,
    FitConfig,
    bic_score,
    sum_squared_error,
)
from .moves import (
    build_move_tables,
    enumerate_etr,
    enumerate_nr,
    enumerate_root_moves,
)
from .ops import OperationSet, operation_set
from .priors import PriorParams, prior_energy, uniform_prior
from .sampling import (
    ChainState,
    SamplerConfig,
    SamplerContext,
    TemperatureLadder,
    acceptance_probability,
    mcmc_step,
    _trace_row,
)
from .trees import (
    ExpressionTree,
    Node,
    Operation,
    Parameter,
    Variable,
    active_parameters,
    compile_tree,
    count_operations,
    render,
)


def restricted_opset() -> OperationSet:
    return operation_set(["+", "sin"], n_vars=1, n_params=1)


def validation_dataset(seed: int = 7, n_points: int = 25, noise_sigma: float = 0.25) -> Dataset:
    """Noisy observations of a + x + sin(x) on [-4, 4] with a = 1."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    x = np.sort(rng.uniform(-4.0, 4.0, size=n_points))
    y = 1.0 + x + np.sin(x) + rng.normal(0.0, noise_sigma, size=n_points)
    return Dataset(x=x.reshape(-1, 1), y=y, x_names=("x1",))


def enumerate_trees(opset: OperationSet, max_size: int) -> list[ExpressionTree]:
    """Every distinct tree with at most ``max_size`` nodes, smallest first."""
    by_size: list[list[Node]] = [[] for _ in range(max_size + 1)]
    by_size[1] = [Variable(i) for i in range(opset.n_vars)] + [
        Parameter(j) for j in range(opset.n_params)
    ]
    for size in range(2, max_size + 1):
        nodes: list[Node] = []
        for op in opset.unary_ops:
            nodes.extend(Operation(op, (child,)) for child in by_size[size - 1])
        for op in opset.binary_ops:
            for left_size in range(1, size - 1):
                right_size = size - 1 - left_size
                nodes.extend(
                    Operation(op, (left, right))
                    for left in by_size[left_size]
                    for right in by_size[right_size]
                )
        by_size[size] = nodes
    return [ExpressionTree(node) for size in range(1, max_size + 1) for node in by_size[size]]


# -- brute-force description lengths ----------------------------------------------


def _sse_curve(tree: ExpressionTree, data: Dataset, grid: np.ndarray) -> np.ndarray:
    evaluator = compile_tree(tree)
    out = np.empty(grid.size)
    for i, value in enumerate(grid):
        out[i] = sum_squared_error(evaluator(data.x, np.array([value])), data.y)
    return out


def brute_force_fit(
    tree: ExpressionTree,
    data: Dataset,
    low: float = -10.0,
    high: float = 10.0,
    coarse: int = 2001,
    refinements: int = 2,
) -> tuple[float, float]:
    """(sse, theta) by dense grid search; theta is nan for parameter-free trees.

    Handles at most one distinct parameter symbol, which covers every tree
    in the restricted space. Shares no code with the simplex fitter.
    """
    active = active_parameters(tree)
    if not active:
        sse = sum_squared_error(compile_tree(tree)(data.x, np.zeros(0)), data.y)
        return sse, math.nan
    if len(active) > 1:
        raise ValueError("grid oracle handles at most one parameter symbol")
    grid = np.linspace(low, high, coarse)
    values = _sse_curve(tree, data, grid)
    if not np.any(np.isfinite(values)):
        return math.inf, math.nan
    best = int(np.nanargmin(values))
    left, right = max(best - 1, 0), min(best + 1, grid.size - 1)
    for _ in range(refinements):
        grid = np.linspace(grid[left], grid[right], 201)
        values = _sse_curve(tree, data, grid)
        best = int(np.nanargmin(values))
        left, right = max(best - 1, 0), min(best + 1, grid.size - 1)
    return float(values[best]), float(grid[best])


def brute_force_dl(tree: ExpressionTree, data: Dataset | None, prior: PriorParams) -> float:
    """Direct-formula description length on top of the grid fit."""
    energy = prior_energy(count_operations(tree, prior.opset), prior)
    if data is None:
        return energy
    sse, _ = brute_force_fit(tree, data)
    b = bic_score(sse, data.n_points, len(active_parameters(tree)), data.y_variance)
    return b / 2.0 + energy


# -- exact transition matrix -------------------------------------------------------


@dataclass
class RestrictedSpace:
    opset: OperationSet
    max_size: int
    data: Dataset | None
    trees: list[ExpressionTree]
    index: dict[str, int]  # render string -> tree index
    dl: np.ndarray  # production-path description lengths
    oracle_dl: np.ndarray  # brute-force description lengths
    keys: list[str]
    scorer: DescriptionLengthScorer

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def posterior(self, oracle: bool = True) -> np.ndarray:
        dl = self.oracle_dl if oracle else self.dl
        weights = np.exp(-(dl - dl.min()))
        return weights / weights.sum()


def build_restricted_space(
    data: Dataset | None,
    opset: OperationSet | None = None,
    max_size: int = 7,
    fit_config: FitConfig | None = None,
) -> RestrictedSpace:
    opset = opset or restricted_opset()
    trees = enumerate_trees(opset, max_size)
    index = {render(t): i for i, t in enumerate(trees)}
    prior = uniform_prior(opset)
    scorer = DescriptionLengthScorer(data, prior, fit_config or FitConfig())
    dl = np.array([scorer.score(t).description_length for t in trees])
    oracle = np.array([brute_force_dl(t, data, prior) for t in trees])
    keys = [canonical_key(t) for t in trees]
    return RestrictedSpace(
        opset=opset,
        max_size=max_size,
        data=data,
        trees=trees,
        index=index,
        dl=dl,
        oracle_dl=oracle,
        keys=keys,
        scorer=scorer,
    )


def build_transition_matrix(
    space: RestrictedSpace,
    move_frequencies: tuple[float, float, float] = (0.05, 0.45, 0.50),
    use_oracle_dl: bool = False,
) -> np.ndarray:
    """Dense proposal * acceptance matrix over the enumerated trees."""
    tables = build_move_tables(space.opset)
    dl = space.oracle_dl if use_oracle_dl else space.dl
    n = space.n_trees
    matrix = np.zeros((n, n))
    p_root, p_nr, p_etr = move_frequencies
    for i, tree in enumerate(space.trees):
        routes = [
            (p_nr, enumerate_nr(tree, tables)),
            (p_root, enumerate_root_moves(tree, tables, space.max_size)),
            (p_etr, enumerate_etr(tree, tables, space.max_size)),
        ]
        for kind_p, proposals in routes:
            if kind_p == 0.0:
                continue
            for prob, proposal in proposals:
                mass = kind_p * prob
                if proposal is None:
                    matrix[i, i] += mass
                    continue
                j = space.index[render(proposal.new_tree)]
                p_acc = acceptance_probability(proposal.log_g_ratio, dl[i], dl[j])
                matrix[i, j] += mass * p_acc
                matrix[i, i] += mass * (1.0 - p_acc)
    return matrix


def stationarity_residual(matrix: np.ndarray, dl: np.ndarray) -> float:
    """max |pi P - pi| for pi proportional to exp(-DL).

    Together with irreducibility this pins the stationary vector: a
    residual at rounding level certifies exp(-DL)/Z is stationary, and a
    single strongly connected component makes that vector unique. Direct
    eigendecomposition is too fragile here because concentrated posteriors
    put a near-degenerate eigenvalue cluster at 1.
    """
    weights = np.exp(-(dl - dl.min()))
    pi = weights / weights.sum()
    return float(np.max(np.abs(pi @ matrix - pi)))


def is_irreducible(matrix: np.ndarray) -> bool:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    n_components, _ = connected_components(
        csr_matrix(matrix > 0), directed=True, connection="strong"
    )
    return n_components == 1


def detailed_balance_violation(matrix: np.ndarray, dl: np.ndarray) -> float:
    """max |pi_i P_ij - pi_j P_ji| with pi proportional to exp(-DL)."""
    weights = np.exp(-(dl - dl.min()))
    pi = weights / weights.sum()
    flux = pi[:, None] * matrix
    return float(np.max(np.abs(flux - flux.T)))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(p - q)))


# -- sampled visit frequencies ------------------------------------------------------


def run_restricted_chain(
    space: RestrictedSpace,
    n_steps: int,
    seed: int = 0,
    burn_in: int = 10_000,
    trace_thinning: int = 1_000,
) -> tuple[np.ndarray, list]:
    """Visit counts over the enumerated trees for a single T = 1 replica.

    Runs the production chain step with duplicate forbidding off and a
    uniform prior, tallying every post-burn-in state. Also returns a thinned
    list of recorded states for audit purposes.
    """
    opset = space.opset
    config = SamplerConfig(
        n_steps=n_steps,
        ladder_count=1,
        max_tree_size=space.max_size,
        forbid_duplicates=False,
        seed=seed,
    )
    ladder = TemperatureLadder((1.0,))
    ctx = SamplerContext(
        opset=opset,
        scorer=space.scorer,
        tables=build_move_tables(opset),
        ladder=ladder,
        config=config,
        registry=None,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    start = ExpressionTree(Variable(0))
    chain = ChainState(tree=start, fitted=space.scorer.score(start), temp_index=0, rng=rng)
    counts = np.zeros(space.n_trees)
    audit_rows = []
    for step in range(1, n_steps + 1):
        mcmc_step(chain, ctx)
        if step > burn_in:
            counts[space.index[render(chain.tree)]] += 1
            if step % trace_thinning == 0:
                audit_rows.append(_trace_row(chain, step, 0, ladder))
    return counts, audit_rows


def equilibrium_report(
    n_steps: int = 1_000_000,
    seed: int = 0,
    use_data: bool = True,
    tv_threshold: float = 0.05,
    max_size: int = 7,
    burn_in: int = 10_000,
) -> dict:
    """Full validation experiment: enumerate, score, sample, and compare."""
    data = validation_dataset() if use_data else None
    space = build_restricted_space(data, max_size=max_size)
    counts, audit_rows = run_restricted_chain(space, n_steps, seed=seed, burn_in=burn_in)
    visited = counts / counts.sum()
    target = space.posterior(oracle=True)
    tv_trees = total_variation(visited, target)

    # Distinct trees of one expression share a description length, so the
    # comparison happens per expression; within-class placement is arbitrary
    # whenever the modes are separated by high barriers.
    by_key: dict[str, dict] = {}
    for i, key in enumerate(space.keys):
        entry = by_key.setdefault(key, {"expected": 0.0, "observed": 0.0, "n_trees": 0})
        entry["expected"] += float(target[i])
        entry["observed"] += float(visited[i])
        entry["n_trees"] += 1
    tv_expressions = 0.5 * sum(
        abs(entry["expected"] - entry["observed"]) for entry in by_key.values()
    )

    matrix = build_transition_matrix(space)
    balance = detailed_balance_violation(matrix, space.dl)
    return {
        "n_trees": space.n_trees,
        "n_expressions": len(by_key),
        "n_steps": n_steps,
        "seed": seed,
        "with_data": use_data,
        "tv_distance": tv_expressions,
        "tv_distance_trees": tv_trees,
        "tv_threshold": tv_threshold,
        "passed": tv_expressions < tv_threshold,
        "detailed_balance_violation": balance,
        "expression_table": by_key,
        "audit_rows": audit_rows,
    }
