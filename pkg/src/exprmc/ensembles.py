"""Point selection and prediction from a sampled model trace.

The recorded T = 1 states, repeats included, approximate the posterior over
expressions; repetition is the weighting. Predictions at a query point are
the per-member values f_i(x, theta_i*), and the pointwise median of those
values minimizes mean absolute predictive error. The single sampled model
closest (in mean absolute distance over a grid) to that median curve is the
median predictive model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import FittedModel
from .ops import OperationSet
from .sampling import ModelTrace
from .trees import ExpressionTree, compile_tree, parse_expression


@dataclass(frozen=True)
class EnsembleMember:
    tree: ExpressionTree
    theta: np.ndarray  # full parameter vector, inactive entries zero
    key: str
    description_length: float
    size: int
    named_theta: tuple[tuple[str, float], ...] = ()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return compile_tree(self.tree)(np.asarray(x, dtype=float), self.theta)


@dataclass(frozen=True)
class PredictiveEnsemble:
    members: tuple[EnsembleMember, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("ensemble must not be empty")
        if any(not math.isfinite(m.description_length) for m in self.members):
            raise ValueError("ensemble members must carry finite description lengths")

    @classmethod
    def from_trace(cls, trace: ModelTrace, opset: OperationSet | None = None) -> "PredictiveEnsemble":
        opset = opset or trace.opset()
        members = []
        for row in trace.rows:
            if row.temp_index != 0:
                continue
            tree = parse_expression(row.expr, opset)
            theta = np.zeros(opset.n_params)
            for name, value in row.theta.items():
                theta[int(name[1:]) - 1] = value
            members.append(
                EnsembleMember(
                    tree=tree,
                    theta=theta,
                    key=row.key,
                    description_length=row.description_length,
                    size=tree.size,
                    named_theta=tuple(sorted(row.theta.items())),
                )
            )
        return cls(tuple(members))


def _tie_break(member: EnsembleMember) -> tuple[int, str]:
    return (member.size, member.key)


def mdl_model(ensemble: PredictiveEnsemble | ModelTrace) -> EnsembleMember:
    """The recorded model with minimum description length.

    Ties break toward the smaller tree, then the lexicographically smaller
    canonical key.
    """
    if isinstance(ensemble, ModelTrace):
        ensemble = PredictiveEnsemble.from_trace(ensemble)
    best_dl = min(m.description_length for m in ensemble.members)
    candidates = [m for m in ensemble.members if m.description_length == best_dl]
    return min(candidates, key=_tie_break)


def posterior_predictive(
    ensemble: PredictiveEnsemble, x: np.ndarray
) -> tuple[list[float], int]:
    """Finite member predictions at one point, plus the dropped count."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    values = []
    dropped = 0
    for member in ensemble.members:
        value = float(member.predict(x)[0])
        if math.isfinite(value):
            values.append(value)
        else:
            dropped += 1
    return values, dropped


def median_prediction(ensemble: PredictiveEnsemble, x: np.ndarray) -> float:
    """Exact sample median of member predictions at one point."""
    values, _ = posterior_predictive(ensemble, x)
    if not values:
        raise ValueError("no ensemble member is finite at this point")
    return float(np.median(values))


def prediction_table(
    ensemble: PredictiveEnsemble,
    x_grid: np.ndarray,
    quantiles: tuple[float, float] = (0.05, 0.95),
) -> list[dict]:
    """Median and quantile summaries per grid row; empty rows yield nan."""
    x_grid = np.asarray(x_grid, dtype=float)
    predictions = np.array([m.predict(x_grid) for m in ensemble.members])
    out = []
    for i in range(x_grid.shape[0]):
        column = predictions[:, i]
        finite = column[np.isfinite(column)]
        if finite.size:
            row = {
                "median": float(np.median(finite)),
                "low": float(np.quantile(finite, quantiles[0])),
                "high": float(np.quantile(finite, quantiles[1])),
                "n_finite_members": int(finite.size),
            }
        else:
            row = {"median": math.nan, "low": math.nan, "high": math.nan, "n_finite_members": 0}
        out.append(row)
    return out


def median_predictive_model(
    ensemble: PredictiveEnsemble, x_eval: np.ndarray
) -> tuple[EnsembleMember, float]:
    """The member closest in mean absolute distance to the median curve."""
    x_eval = np.asarray(x_eval, dtype=float)
    predictions = np.array([m.predict(x_eval) for m in ensemble.members])
    with np.errstate(all="ignore"):
        medians = np.array(
            [
                np.median(col[np.isfinite(col)]) if np.any(np.isfinite(col)) else np.nan
                for col in predictions.T
            ]
        )
    if not np.any(np.isfinite(medians)):
        raise ValueError("no grid point has a finite median prediction")
    best: tuple[tuple[int, str], float, EnsembleMember] | None = None
    for member, preds in zip(ensemble.members, predictions):
        mask = np.isfinite(preds) & np.isfinite(medians)
        if not np.any(mask):
            continue
        distance = float(np.mean(np.abs(preds[mask] - medians[mask])))
        rank = _tie_break(member)
        if best is None or (distance, rank) < (best[1], best[0]):
            best = (rank, distance, member)
    if best is None:
        raise ValueError("no ensemble member is finite on the evaluation grid")
    return best[2], best[1]
