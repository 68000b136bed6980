"""Metropolis sampling of expressions with parallel tempering.

A replica at temperature T targets the tempered distribution

    p_T(f) proportional to exp[ -B(f) / (2T) - E_prior(f) ]

so T = 1 is the posterior over expressions and T -> infinity leaves only the
prior. One sweep advances every replica by one move and then attempts a swap
of the trees held by one uniformly chosen pair of adjacent temperatures;
swap acceptance is min{1, exp[(B_k - B_{k+1})/2 * (1/T_k - 1/T_{k+1})]}
(the prior terms cancel because they carry no temperature).

Duplicate forbidding keeps the first-visited tree of each canonical
expression and assigns infinite description length to any later tree with
the same key but a different shape. It is on by default in production runs
and off in equilibrium validation, where it would break detailed balance.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .fitting import Dataset, DescriptionLengthScorer, FitConfig, FittedModel
from .canonical import canonical_key
from .moves import (
    MoveTables,
    Proposal,
    build_move_tables,
    propose_etr,
    propose_node_replacement,
    propose_root_move,
)
from .ops import OperationSet
from .priors import PriorParams, prior_energy
from .trees import (
    DEFAULT_MAX_TREE_SIZE,
    ExpressionTree,
    Variable,
    count_operations,
    parse_expression,
    render,
)


@dataclass(frozen=True)
class TemperatureLadder:
    temps: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.temps or self.temps[0] != 1.0:
            raise ValueError("ladder must start at T = 1")
        if any(b <= a for a, b in zip(self.temps, self.temps[1:])):
            raise ValueError("ladder temperatures must increase strictly")

    @classmethod
    def geometric(cls, base: float = 1.05, count: int = 40) -> "TemperatureLadder":
        return cls(tuple(base**k for k in range(count)))

    def __len__(self) -> int:
        return len(self.temps)


@dataclass
class SamplerConfig:
    n_steps: int = 2_500
    ladder_base: float = 1.05
    ladder_count: int = 40
    move_frequencies: tuple[float, float, float] = (0.05, 0.45, 0.50)  # root, NR, ETR
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE
    burn_in: int | None = None  # default: 40% of n_steps
    thinning: int = 1
    restarts: int = 1
    seed: int = 0
    forbid_duplicates: bool = True
    record_all_temperatures: bool = False
    fit: FitConfig = field(default_factory=FitConfig)

    def validate(self) -> None:
        if self.n_steps < 0 or self.restarts < 1 or self.thinning < 1:
            raise ValueError("n_steps >= 0, restarts >= 1, thinning >= 1 required")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if abs(sum(self.move_frequencies) - 1.0) > 1e-9 or any(
            f < 0 for f in self.move_frequencies
        ):
            raise ValueError("move frequencies must be nonnegative and sum to 1")
        if self.max_tree_size < 1:
            raise ValueError("max_tree_size must be positive")
        TemperatureLadder.geometric(self.ladder_base, self.ladder_count)

    def effective_burn_in(self) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return int(0.4 * self.n_steps)

    def ladder(self) -> TemperatureLadder:
        return TemperatureLadder.geometric(self.ladder_base, self.ladder_count)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit"] = asdict(self.fit)
        d["move_frequencies"] = list(self.move_frequencies)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        fit = d.pop("fit", None)
        cfg = cls(**d)
        if fit is not None:
            cfg.fit = FitConfig(**fit)
        if isinstance(cfg.move_frequencies, list):
            cfg.move_frequencies = tuple(cfg.move_frequencies)
        return cfg

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


@dataclass
class ChainState:
    tree: ExpressionTree
    fitted: FittedModel
    temp_index: int
    rng: np.random.Generator
    last_move: str = "init"


class DuplicateRegistry:
    """First-seen tree shape per canonical key; later shapes are forbidden."""

    def __init__(self) -> None:
        self._shapes: dict[str, str] = {}

    def is_forbidden(self, key: str, shape: str) -> bool:
        seen = self._shapes.get(key)
        return seen is not None and seen != shape

    def register(self, key: str, shape: str) -> None:
        self._shapes.setdefault(key, shape)


@dataclass
class SamplerContext:
    opset: OperationSet
    scorer: DescriptionLengthScorer
    tables: MoveTables
    ladder: TemperatureLadder
    config: SamplerConfig
    registry: DuplicateRegistry | None


def acceptance_probability(log_g_ratio: float, dl_old: float, dl_new: float) -> float:
    """min{1, exp(-(dl_new - dl_old) + log_g_ratio)} with infinite sentinels."""
    if math.isinf(dl_new):
        return 0.0
    if math.isinf(dl_old):
        return 1.0
    log_ratio = -(dl_new - dl_old) + log_g_ratio
    if log_ratio >= 0.0:
        return 1.0
    return math.exp(log_ratio)


def accept(proposal: Proposal, dl_old: float, dl_new: float, rng: np.random.Generator) -> bool:
    p = acceptance_probability(proposal.log_g_ratio, dl_old, dl_new)
    return p >= 1.0 or rng.random() < p


def tempered_dl(fitted: FittedModel, temperature: float) -> float:
    """Only the data term is divided by T; the prior carries no temperature."""
    if math.isinf(fitted.bic):
        return math.inf
    return fitted.bic / (2.0 * temperature) + fitted.prior_energy


def draw_proposal(
    tree: ExpressionTree, ctx: SamplerContext, rng: np.random.Generator
) -> Proposal | None:
    p_root, p_nr, _ = ctx.config.move_frequencies
    u = rng.random()
    if u < p_root:
        return propose_root_move(tree, ctx.tables, ctx.config.max_tree_size, rng)
    if u < p_root + p_nr:
        return propose_node_replacement(tree, ctx.tables, rng)
    return propose_etr(tree, ctx.tables, ctx.config.max_tree_size, rng)


def mcmc_step(chain: ChainState, ctx: SamplerContext) -> ChainState:
    """Advance one replica by one proposed move (null proposals still count)."""
    rng = chain.rng
    proposal = draw_proposal(chain.tree, ctx, rng)
    if proposal is None:
        chain.last_move = "none"
        return chain
    key = canonical_key(proposal.new_tree)
    shape = render(proposal.new_tree)
    temperature = ctx.ladder.temps[chain.temp_index]
    if ctx.registry is not None and ctx.registry.is_forbidden(key, shape):
        dl_new = math.inf
        fitted_new = None
    else:
        fitted_new = ctx.scorer.score_keyed(proposal.new_tree, key)
        dl_new = tempered_dl(fitted_new, temperature)
    dl_old = tempered_dl(chain.fitted, temperature)
    if fitted_new is not None and accept(proposal, dl_old, dl_new, rng):
        if ctx.registry is not None:
            ctx.registry.register(key, shape)
        chain.tree = proposal.new_tree
        chain.fitted = fitted_new
        chain.last_move = proposal.kind
    else:
        chain.last_move = "none"
    return chain


def swap_attempt(
    chains: list[ChainState], ladder: TemperatureLadder, rng: np.random.Generator
) -> bool:
    """Try to exchange the trees of one adjacent temperature pair."""
    if len(chains) < 2:
        return False
    k = int(rng.integers(len(chains) - 1))
    low, high = chains[k], chains[k + 1]
    t_low, t_high = ladder.temps[k], ladder.temps[k + 1]
    exponent = (low.fitted.bic - high.fitted.bic) / 2.0 * (1.0 / t_low - 1.0 / t_high)
    if exponent >= 0.0 or rng.random() < math.exp(exponent):
        low.tree, high.tree = high.tree, low.tree
        low.fitted, high.fitted = high.fitted, low.fitted
        low.last_move, high.last_move = "swap", "swap"
        return True
    return False


# -- traces ---------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    step: int
    restart: int
    temp_index: int
    temperature: float
    key: str
    expr: str
    theta: dict[str, float]
    sse: float
    bic: float
    description_length: float
    move: str


@dataclass
class ModelTrace:
    metadata: dict
    rows: list[TraceRow]

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "metadata", **self.metadata}, sort_keys=True) + "\n")
            for row in self.rows:
                record = {"kind": "state", **asdict(row)}
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str) -> "ModelTrace":
        metadata: dict = {}
        rows: list[TraceRow] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                kind = record.pop("kind", "state")
                if kind == "metadata":
                    metadata = record
                else:
                    rows.append(TraceRow(**record))
        return cls(metadata=metadata, rows=rows)

    def opset(self) -> OperationSet:
        meta = self.metadata["opset"]
        return OperationSet(
            entries=tuple((name, arity) for name, arity in meta["entries"]),
            n_vars=meta["n_vars"],
            n_params=meta["n_params"],
        )


def _trace_row(chain: ChainState, step: int, restart: int, ladder: TemperatureLadder) -> TraceRow:
    fitted = chain.fitted
    theta = {
        f"p{index + 1}": float(value)
        for index, value in zip(fitted.active_params, fitted.theta)
    }
    return TraceRow(
        step=step,
        restart=restart,
        temp_index=chain.temp_index,
        temperature=ladder.temps[chain.temp_index],
        key=canonical_key(chain.tree),
        expr=render(chain.tree),
        theta=theta,
        sse=fitted.sse,
        bic=fitted.bic,
        description_length=fitted.description_length,
        move=chain.last_move,
    )


def init_chains(
    ctx: SamplerContext, seed_seq: np.random.SeedSequence
) -> list[ChainState]:
    """Every replica starts from a uniformly chosen variable leaf."""
    n_chains = len(ctx.ladder)
    streams = seed_seq.spawn(n_chains)
    chains = []
    for k in range(n_chains):
        rng = np.random.default_rng(streams[k])
        tree = ExpressionTree(Variable(int(rng.integers(ctx.opset.n_vars))))
        fitted = ctx.scorer.score(tree)
        if ctx.registry is not None:
            ctx.registry.register(canonical_key(tree), render(tree))
        chains.append(ChainState(tree=tree, fitted=fitted, temp_index=k, rng=rng))
    return chains


def run(
    data: Dataset,
    prior: PriorParams,
    config: SamplerConfig,
    progress=None,
) -> ModelTrace:
    """Sample expressions against a dataset; returns the recorded trace.

    Each sweep steps every replica once, then attempts one swap. States at
    T = 1 (optionally at all temperatures) are recorded from ``burn_in`` on,
    every ``thinning`` sweeps. Identical (config, seed) pairs produce
    identical traces.
    """
    config.validate()
    opset = prior.opset
    if data.n_vars != opset.n_vars:
        raise ValueError(
            f"dataset has {data.n_vars} variables but the opset expects {opset.n_vars}"
        )
    ladder = config.ladder()
    tables = build_move_tables(opset)
    scorer = DescriptionLengthScorer(data, prior, config.fit)
    rows: list[TraceRow] = []
    burn_in = config.effective_burn_in()

    for restart in range(config.restarts):
        registry = DuplicateRegistry() if config.forbid_duplicates else None
        ctx = SamplerContext(
            opset=opset,
            scorer=scorer,
            tables=tables,
            ladder=ladder,
            config=config,
            registry=registry,
        )
        seed_seq = np.random.SeedSequence([config.seed, restart])
        chain_seq, swap_seq = seed_seq.spawn(2)
        chains = init_chains(ctx, chain_seq)
        swap_rng = np.random.default_rng(swap_seq)

        def record(step: int) -> None:
            if step >= burn_in and (step - burn_in) % config.thinning == 0:
                for chain in chains:
                    if chain.temp_index == 0 or config.record_all_temperatures:
                        rows.append(_trace_row(chain, step, restart, ladder))

        record(0)
        accepted_t0 = 0
        for step in range(1, config.n_steps + 1):
            for chain in chains:
                mcmc_step(chain, ctx)
            if chains[0].last_move not in ("none",):
                accepted_t0 += 1
            swap_attempt(chains, ladder, swap_rng)
            record(step)
            if progress is not None and step % max(1, config.n_steps // 20) == 0:
                best = min(r.description_length for r in rows) if rows else math.inf
                progress(restart, step, best, accepted_t0 / step)

    metadata = {
        "seed": config.seed,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "opset": {
            "entries": [list(e) for e in opset.entries],
            "n_vars": opset.n_vars,
            "n_params": opset.n_params,
        },
        "ladder": list(ladder.temps),
        "restarts": config.restarts,
    }
    return ModelTrace(metadata=metadata, rows=rows)


# -- prior-only chain ------------------------------------------------------------


def run_prior_chain(
    params: PriorParams,
    n_samples: int,
    rng: np.random.Generator,
    burn_in: int = 1_000,
    thinning: int = 1,
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE,
    move_frequencies: tuple[float, float, float] = (0.05, 0.45, 0.50),
    start: ExpressionTree | None = None,
) -> tuple[list[ExpressionTree], ExpressionTree]:
    """Sample expressions from the prior alone (the T = infinity chain).

    Scoring reduces to the prior energy, so neither least squares nor
    canonical keys are needed; this loop stays cheap enough for the large
    batches hyperparameter fitting draws. Returns the samples and the final
    state, which callers may feed back in to continue the chain.
    """
    opset = params.opset
    tables = build_move_tables(opset)
    p_root, p_nr, _ = move_frequencies
    tree = start if start is not None else ExpressionTree(Variable(int(rng.integers(opset.n_vars))))
    energy = prior_energy(count_operations(tree, opset), params)
    samples: list[ExpressionTree] = []
    total_steps = burn_in + n_samples * thinning
    for step in range(1, total_steps + 1):
        u = rng.random()
        if u < p_root:
            proposal = propose_root_move(tree, tables, max_tree_size, rng)
        elif u < p_root + p_nr:
            proposal = propose_node_replacement(tree, tables, rng)
        else:
            proposal = propose_etr(tree, tables, max_tree_size, rng)
        if proposal is not None:
            new_energy = prior_energy(count_operations(proposal.new_tree, opset), params)
            log_ratio = -(new_energy - energy) + proposal.log_g_ratio
            if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
                tree = proposal.new_tree
                energy = new_energy
        if step > burn_in and (step - burn_in) % thinning == 0:
            samples.append(tree)
    return samples, tree
