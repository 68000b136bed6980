"""Maximum-likelihood parameter fitting, BIC, and description length.

Under additive Gaussian noise with the variance profiled out, the model
score is

    B = N * ln(2*pi*sigma2) + N + (L + 1) * ln(N),   sigma2 = max(SSE/N, floor)

with L the number of distinct parameter symbols in the tree (the +1 counts
the noise variance). The description length combines fit and complexity:

    DL = B / 2 + E_prior(tree)

Parameters are fitted by multistart Nelder-Mead simplex descent on the sum
of squared residuals; derivative-free descent tolerates the non-smooth
domain edges of abs, sqrt and friends. Fits are deterministic per canonical
key: multistart draws derive from (seed, key), so repeated or concurrent
fits of the same expression agree and caching is purely an optimization.
"""

from __future__ import annotations

import csv
import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .canonical import canonical_key
from .ops import OperationSet
from .priors import PriorParams, prior_energy, uniform_prior
from .trees import ExpressionTree, active_parameters, compile_tree, count_operations

VARIANCE_FLOOR_RELATIVE = 1e-12
VARIANCE_FLOOR_ABSOLUTE = 1e-300


@dataclass(frozen=True)
class Dataset:
    """Observations: x is (N, K), y is (N,), all entries finite."""

    x: np.ndarray
    y: np.ndarray
    x_names: tuple[str, ...]
    y_name: str = "y"

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"bad dataset shapes x{x.shape} y{y.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("dataset needs at least one row and one column")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        if len(self.x_names) != x.shape[1]:
            raise ValueError("x_names length does not match column count")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_points(self) -> int:
        return self.x.shape[0]

    @property
    def n_vars(self) -> int:
        return self.x.shape[1]

    @property
    def y_variance(self) -> float:
        return float(np.var(self.y))

    @classmethod
    def from_csv(cls, path: str, target: str) -> "Dataset":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [
                row
                for row in csv.reader(fh)
                if row and not row[0].lstrip().startswith("#")
            ]
        if not rows:
            raise ValueError(f"{path!r}: empty CSV")
        header, rows = rows[0], rows[1:]
        if target not in header:
            raise ValueError(f"{path!r}: no column named {target!r}")
        t_idx = header.index(target)
        x_names = tuple(name for name in header if name != target)
        x_idx = [header.index(name) for name in x_names]
        x = np.empty((len(rows), len(x_names)))
        y = np.empty(len(rows))
        for r, row in enumerate(rows):
            try:
                y[r] = float(row[t_idx])
                for c, i in enumerate(x_idx):
                    x[r, c] = float(row[i])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path!r}: bad numeric value on data row {r + 1}") from exc
        return cls(x=x, y=y, x_names=x_names, y_name=target)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.x_names) + [self.y_name])
            for row, target in zip(self.x, self.y):
                writer.writerow([repr(v) for v in row] + [repr(float(target))])


@dataclass
class FitConfig:
    multistarts: int = 3
    max_evals_per_start: int | None = None  # default 200 * (L + 1)
    xatol: float = 1e-6
    fatol: float = 1e-10
    param_low: float = -10.0
    param_high: float = 10.0
    seed: int = 0
    cache_size: int = 100_000

    def budget(self, n_active: int) -> int:
        if self.max_evals_per_start is not None:
            return self.max_evals_per_start
        return 200 * (n_active + 1)


@dataclass(frozen=True)
class FittedModel:
    """An expression with fitted parameters and its scores."""

    tree: ExpressionTree
    theta: tuple[float, ...]  # values for active_params, in index order
    active_params: tuple[int, ...]
    sse: float
    n_active_params: int
    bic: float
    prior_energy: float
    description_length: float

    def full_theta(self, n_params: int) -> np.ndarray:
        theta = np.zeros(n_params)
        for index, value in zip(self.active_params, self.theta):
            theta[index] = value
        return theta


def sum_squared_error(predictions: np.ndarray, y: np.ndarray) -> float:
    """SSE with the infinite sentinel when any prediction is non-finite."""
    if not np.all(np.isfinite(predictions)):
        return math.inf
    with np.errstate(all="ignore"):
        residuals = predictions - y
        sse = float(residuals @ residuals)
    return sse if math.isfinite(sse) else math.inf


def bic_score(sse: float, n_points: int, n_active_params: int, y_variance: float) -> float:
    """B = N ln(2 pi sigma2) + N + (L+1) ln N with a floored variance."""
    if not math.isfinite(sse):
        return math.inf
    floor = max(VARIANCE_FLOOR_RELATIVE * y_variance, VARIANCE_FLOOR_ABSOLUTE)
    sigma2 = max(sse / n_points, floor)
    return (
        n_points * math.log(2.0 * math.pi * sigma2)
        + n_points
        + (n_active_params + 1) * math.log(n_points)
    )


def bic(fitted: FittedModel, data: Dataset) -> float:
    return bic_score(fitted.sse, data.n_points, fitted.n_active_params, data.y_variance)


def _key_seed(key: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(digest[:8], "little")])
    )


def fit_parameters(
    tree: ExpressionTree,
    data: Dataset,
    config: FitConfig | None = None,
    warm_start: np.ndarray | None = None,
    prior: PriorParams | None = None,
    opset: OperationSet | None = None,
) -> FittedModel:
    """Multistart least-squares fit of the tree's parameters.

    When no prior is given the complexity term is zero and the description
    length reduces to B/2. The returned SSE never exceeds the SSE at any
    starting point.
    """
    config = config or FitConfig()
    active = active_parameters(tree)
    n_active = len(active)
    evaluator = compile_tree(tree)
    y = data.y
    n_param_slots = (max(active) + 1) if active else 0

    def objective(values: np.ndarray) -> float:
        theta = np.zeros(n_param_slots)
        theta[list(active)] = values
        return sum_squared_error(evaluator(data.x, theta), y)

    if n_active == 0:
        best_values = np.empty(0)
        best_sse = objective(best_values)
    else:
        rng = _key_seed(canonical_key(tree), config.seed)
        starts = []
        if warm_start is not None and len(warm_start) == n_active:
            starts.append(np.asarray(warm_start, dtype=float))
        while len(starts) < config.multistarts:
            starts.append(rng.uniform(config.param_low, config.param_high, size=n_active))
        best_values, best_sse = starts[0], objective(starts[0])
        budget = config.budget(n_active)
        for start in starts:
            start_sse = objective(start)
            if start_sse < best_sse:
                best_values, best_sse = start, start_sse
            if not math.isfinite(start_sse):
                continue
            result = minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={
                    "maxfev": budget,
                    "xatol": config.xatol,
                    "fatol": config.fatol,
                },
            )
            if result.fun < best_sse:
                best_values, best_sse = result.x, float(result.fun)

    b = bic_score(best_sse, data.n_points, n_active, data.y_variance)
    if prior is not None:
        if opset is None:
            opset = prior.opset
        energy = prior_energy(count_operations(tree, opset), prior)
    else:
        energy = 0.0
    return FittedModel(
        tree=tree,
        theta=tuple(float(v) for v in best_values),
        active_params=active,
        sse=best_sse,
        n_active_params=n_active,
        bic=b,
        prior_energy=energy,
        description_length=b / 2.0 + energy,
    )


class DescriptionLengthScorer:
    """Scores trees against one dataset and prior, caching by canonical key.

    The cache is a bounded LRU; because fits are deterministic per key,
    enabling or disabling it changes runtime only, never values. With no
    dataset the data term vanishes (B = 0) and the score is the prior energy
    alone, which is what prior-only sampling uses.
    """

    def __init__(
        self,
        data: Dataset | None,
        prior: PriorParams,
        config: FitConfig | None = None,
        cache_enabled: bool = True,
    ):
        self.data = data
        self.prior = prior
        self.opset = prior.opset
        self.config = config or FitConfig()
        self.cache_enabled = cache_enabled
        self._cache: OrderedDict[str, FittedModel] = OrderedDict()
        self.n_fits = 0
        self.n_hits = 0

    def score(self, tree: ExpressionTree) -> FittedModel:
        key = canonical_key(tree)
        return self.score_keyed(tree, key)

    def score_keyed(self, tree: ExpressionTree, key: str) -> FittedModel:
        if self.cache_enabled:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                self.n_hits += 1
                return hit
        fitted = self._fit(tree)
        if self.cache_enabled:
            self._cache[key] = fitted
            if len(self._cache) > self.config.cache_size:
                self._cache.popitem(last=False)
        return fitted

    def _fit(self, tree: ExpressionTree) -> FittedModel:
        self.n_fits += 1
        if self.data is None:
            energy = prior_energy(count_operations(tree, self.opset), self.prior)
            return FittedModel(
                tree=tree,
                theta=(),
                active_params=active_parameters(tree),
                sse=0.0,
                n_active_params=len(active_parameters(tree)),
                bic=0.0,
                prior_energy=energy,
                description_length=energy,
            )
        return fit_parameters(
            tree, self.data, self.config, prior=self.prior, opset=self.opset
        )


def description_length(
    tree: ExpressionTree,
    data: Dataset,
    prior: PriorParams | None = None,
    config: FitConfig | None = None,
    opset: OperationSet | None = None,
) -> FittedModel:
    """One-shot fit + BIC + prior energy for a single tree."""
    if prior is None:
        if opset is None:
            raise ValueError("need a prior or an opset")
        prior = uniform_prior(opset)
    return fit_parameters(tree, data, config, prior=prior, opset=opset)
