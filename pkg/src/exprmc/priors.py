"""Maximum-entropy complexity prior over expressions.

The prior assigns each expression f an energy

    E(f) = sum_o [ alpha_o * n_o(f) + beta_o * n_o(f)^2 ]

where n_o counts occurrences of operation o. The unnormalized log prior is
-E(f); the normalization constant is never needed because it cancels in all
acceptance ratios. Hyperparameters are fitted by stochastic approximation so
that expressions sampled from the prior reproduce per-operation corpus
statistics <n_o> and <n_o^2>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ops import OperationSet
from .trees import (
    DEFAULT_MAX_TREE_SIZE,
    ExpressionTree,
    ParseError,
    count_operations,
    parse_expression,
)


@dataclass(frozen=True)
class PriorParams:
    """Per-operation hyperparameters (alpha_o, beta_o) bound to an opset."""

    alpha: dict[str, float]
    beta: dict[str, float]
    opset: OperationSet

    def __post_init__(self) -> None:
        ops = set(self.opset.op_names)
        if set(self.alpha) != ops or set(self.beta) != ops:
            raise ValueError("alpha/beta must be defined for exactly the opset operations")
        bad = [o for o, b in self.beta.items() if b < 0]
        if bad:
            raise ValueError(f"negative beta for {bad}")

    @property
    def opset_signature(self) -> tuple:
        return self.opset.signature()


def uniform_prior(opset: OperationSet) -> PriorParams:
    zeros = {name: 0.0 for name in opset.op_names}
    return PriorParams(alpha=dict(zeros), beta=dict(zeros), opset=opset)


def prior_energy(counts: dict[str, int], params: PriorParams) -> float:
    """E(f) for the given operation counts; lower energy means more plausible."""
    total = 0.0
    for op, alpha in params.alpha.items():
        n = counts.get(op, 0)
        if n:
            total += alpha * n + params.beta[op] * n * n
    return total


@dataclass(frozen=True)
class CorpusStats:
    """Per-operation sample moments of operation counts over a corpus."""

    mean_count: dict[str, float]
    mean_sq_count: dict[str, float]
    n_expressions: int

    def __post_init__(self) -> None:
        for op, m in self.mean_count.items():
            m2 = self.mean_sq_count.get(op)
            if m < 0 or m2 is None or m2 < 0:
                raise ValueError(f"negative or missing moment for {op!r}")
            if m2 < m * m - 1e-12:
                raise ValueError(f"inconsistent moments for {op!r}: <n^2> < <n>^2")


def corpus_stats(
    path: str,
    opset: OperationSet,
    strict: bool = True,
    max_size: int = DEFAULT_MAX_TREE_SIZE,
) -> tuple[CorpusStats, list[tuple[int, str]]]:
    """Compute <n_o> and <n_o^2> over a corpus file of prefix expressions.

    Returns the stats and a list of (line_number, message) for skipped lines;
    in strict mode the first bad line raises instead.
    """
    sums = {name: 0.0 for name in opset.op_names}
    sq_sums = {name: 0.0 for name in opset.op_names}
    n = 0
    skipped: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            try:
                tree = parse_expression(stripped, opset, max_size=max_size)
            except ParseError as exc:
                if strict:
                    raise ParseError(f"line {lineno}: {exc}") from exc
                skipped.append((lineno, str(exc)))
                continue
            counts = count_operations(tree, opset)
            for op, c in counts.items():
                sums[op] += c
                sq_sums[op] += c * c
            n += 1
    if n == 0:
        raise ValueError(f"no parseable expressions in corpus {path!r}")
    if skipped:
        warnings.warn(f"skipped {len(skipped)} unparseable corpus lines", stacklevel=2)
    stats = CorpusStats(
        mean_count={op: sums[op] / n for op in sums},
        mean_sq_count={op: sq_sums[op] / n for op in sq_sums},
        n_expressions=n,
    )
    return stats, skipped


def stats_from_trees(trees: list[ExpressionTree], opset: OperationSet) -> CorpusStats:
    sums = {name: 0.0 for name in opset.op_names}
    sq_sums = {name: 0.0 for name in opset.op_names}
    for tree in trees:
        for op, c in count_operations(tree, opset).items():
            sums[op] += c
            sq_sums[op] += c * c
    n = max(len(trees), 1)
    return CorpusStats(
        mean_count={op: sums[op] / n for op in sums},
        mean_sq_count={op: sq_sums[op] / n for op in sq_sums},
        n_expressions=len(trees),
    )


# -- TSV interchange -----------------------------------------------------------


def write_stats_tsv(stats: CorpusStats, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("op\tmean_count\tmean_sq_count\n")
        for op in stats.mean_count:
            fh.write(f"{op}\t{stats.mean_count[op]!r}\t{stats.mean_sq_count[op]!r}\n")


def read_stats_tsv(path: str) -> CorpusStats:
    mean: dict[str, float] = {}
    mean_sq: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.split() != ["op", "mean_count", "mean_sq_count"]:
            raise ValueError(f"{path!r} is not a stats table (bad header)")
        for line in fh:
            if not line.strip():
                continue
            op, m, m2 = line.split("\t")
            mean[op] = float(m)
            mean_sq[op] = float(m2)
    return CorpusStats(mean_count=mean, mean_sq_count=mean_sq, n_expressions=0)


def is_stats_file(path: str) -> bool:
    """True when the file looks like a stats TSV rather than a corpus."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first.split() == ["op", "mean_count", "mean_sq_count"]


def write_params_tsv(params: PriorParams, path: str) -> None:
    opset = params.opset
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_vars={opset.n_vars}\tn_params={opset.n_params}\n")
        fh.write("op\talpha\tbeta\n")
        for op in opset.op_names:
            fh.write(f"{op}\t{params.alpha[op]!r}\t{params.beta[op]!r}\n")


def read_params_tsv(path: str, opset: OperationSet) -> PriorParams:
    alpha: dict[str, float] = {}
    beta: dict[str, float] = {}
    meta: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    if "=" in part:
                        key, value = part.split("=", 1)
                        meta[key] = int(value)
                continue
            if line.split("\t")[0] == "op":
                continue
            op, a, b = line.split("\t")
            alpha[op] = float(a)
            beta[op] = float(b)
    if meta.get("n_vars") not in (None, opset.n_vars) or meta.get("n_params") not in (
        None,
        opset.n_params,
    ):
        raise ValueError(
            f"parameter table {path!r} was fitted for n_vars={meta.get('n_vars')}, "
            f"n_params={meta.get('n_params')}; requested opset has "
            f"({opset.n_vars}, {opset.n_params})"
        )
    missing = [op for op in opset.op_names if op not in alpha]
    if missing:
        raise ValueError(f"parameter table {path!r} missing operations {missing}")
    return PriorParams(
        alpha={op: alpha[op] for op in opset.op_names},
        beta={op: beta[op] for op in opset.op_names},
        opset=opset,
    )


# -- hyperparameter fitting ----------------------------------------------------


@dataclass
class PriorFitConfig:
    batch_size: int = 100_000
    learning_rate: float = 0.05  # the fixed factor multiplying each update
    tolerance: float = 1e-2  # max relative parameter change counting as settled
    patience: int = 5  # consecutive settled sweeps required
    max_sweeps: int = 500
    burn_in: int = 1_000  # chain steps discarded after each parameter update
    thinning: int = 1
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE
    absent_op_penalty: float = 10.0  # alpha for ops with zero target mean
    seed: int = 0


@dataclass
class PriorFitReport:
    converged: bool
    n_sweeps: int
    max_stat_rel_error: float
    final_measured: CorpusStats | None
    history: list[float] = field(default_factory=list)  # per-sweep max stat error


def _stat_rel_error(measured: CorpusStats, targets: CorpusStats, ops: list[str]) -> float:
    worst = 0.0
    for op in ops:
        t1, t2 = targets.mean_count[op], targets.mean_sq_count[op]
        worst = max(worst, abs(measured.mean_count[op] - t1) / t1)
        worst = max(worst, abs(measured.mean_sq_count[op] - t2) / t2)
    return worst


def fit_hyperparameters(
    targets: CorpusStats,
    opset: OperationSet,
    config: PriorFitConfig | None = None,
    init: PriorParams | None = None,
) -> tuple[PriorParams, PriorFitReport]:
    """Fit (alpha_o, beta_o) so prior samples reproduce the target moments.

    Each sweep samples a batch of expressions from the current prior with a
    data-free chain, measures the moments, and nudges every fitted parameter by
    eps * lr * (measured - target) / target with eps drawn uniformly in [0, 1]
    per update. Negative beta values are clamped to zero. Operations whose
    target mean is zero are excluded from updates and pinned at a fixed
    penalty. Returns the best parameters seen when the sweep budget runs out
    without settling.
    """
    from .sampling import run_prior_chain

    config = config or PriorFitConfig()
    fitted_ops = [
        op
        for op in opset.op_names
        if targets.mean_count.get(op, 0.0) > 0 and targets.mean_sq_count.get(op, 0.0) > 0
    ]
    absent = [op for op in opset.op_names if op not in fitted_ops]
    if init is not None:
        alpha = dict(init.alpha)
        beta = dict(init.beta)
    else:
        alpha = {op: 0.0 for op in opset.op_names}
        beta = {op: 0.0 for op in opset.op_names}
    for op in absent:
        alpha[op] = config.absent_op_penalty
        beta[op] = 0.0

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    lam = config.learning_rate
    settled = 0
    best: tuple[float, dict, dict] | None = None
    history: list[float] = []
    measured: CorpusStats | None = None
    chain_state = None

    for sweep in range(1, config.max_sweeps + 1):
        params = PriorParams(alpha=dict(alpha), beta=dict(beta), opset=opset)
        trees, chain_state = run_prior_chain(
            params,
            n_samples=config.batch_size,
            rng=rng,
            burn_in=config.burn_in,
            thinning=config.thinning,
            max_tree_size=config.max_tree_size,
            start=chain_state,
        )
        measured = stats_from_trees(trees, opset)
        err = _stat_rel_error(measured, targets, fitted_ops)
        history.append(err)
        if best is None or err < best[0]:
            best = (err, dict(alpha), dict(beta))

        max_change = 0.0
        for op in fitted_ops:
            t1 = targets.mean_count[op]
            t2 = targets.mean_sq_count[op]
            da = rng.random() * lam * (measured.mean_count[op] - t1) / t1
            db = rng.random() * lam * (measured.mean_sq_count[op] - t2) / t2
            new_alpha = alpha[op] + da
            new_beta = max(0.0, beta[op] + db)
            max_change = max(
                max_change,
                abs(new_alpha - alpha[op]) / max(abs(alpha[op]), 1.0),
                abs(new_beta - beta[op]) / max(abs(beta[op]), 1.0),
            )
            alpha[op] = new_alpha
            beta[op] = new_beta

        settled = settled + 1 if max_change < config.tolerance else 0
        if settled >= config.patience:
            return (
                PriorParams(alpha=dict(alpha), beta=dict(beta), opset=opset),
                PriorFitReport(True, sweep, err, measured, history),
            )

    assert best is not None
    err, best_alpha, best_beta = best
    return (
        PriorParams(alpha=best_alpha, beta=best_beta, opset=opset),
        PriorFitReport(False, config.max_sweeps, err, measured, history),
    )


def sample_from_prior(
    params: PriorParams,
    n: int,
    seed: int = 0,
    burn_in: int = 1_000,
    thinning: int = 1,
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE,
) -> list[ExpressionTree]:
    """Draw expressions from the prior with the data term disabled."""
    from .sampling import run_prior_chain

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    trees, _ = run_prior_chain(
        params,
        n_samples=n,
        rng=rng,
        burn_in=burn_in,
        thinning=thinning,
        max_tree_size=max_tree_size,
    )
    return trees
