"""Synthetic dataset generation: arbitrary expressions and the Rossler system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fitting import Dataset
from .ops import OperationSet
from .trees import compile_tree, parse_expression


@dataclass
class ExpressionSpec:
    """Sample y = F(x, theta) + N(0, sigma) noise with uniform inputs."""

    expression: str
    theta: tuple[float, ...]
    ranges: tuple[tuple[float, float], ...]  # one (low, high) per variable
    n_points: int
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if any(low >= high for low, high in self.ranges):
            raise ValueError("each range needs low < high")


def expression_dataset(spec: ExpressionSpec, opset: OperationSet, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    tree = parse_expression(spec.expression, opset)
    n_vars = len(spec.ranges)
    if n_vars != opset.n_vars:
        raise ValueError(f"{n_vars} ranges given but the opset has {opset.n_vars} variables")
    x = np.empty((spec.n_points, n_vars))
    for j, (low, high) in enumerate(spec.ranges):
        x[:, j] = rng.uniform(low, high, size=spec.n_points)
    theta = np.zeros(opset.n_params)
    theta[: len(spec.theta)] = spec.theta
    y = compile_tree(tree)(x, theta)
    if not np.all(np.isfinite(y)):
        bad = int(np.count_nonzero(~np.isfinite(y)))
        raise ValueError(f"target expression is non-finite at {bad} sampled points")
    if spec.noise_sigma > 0:
        y = y + rng.normal(0.0, spec.noise_sigma, size=spec.n_points)
    names = tuple(f"x{j + 1}" for j in range(n_vars))
    return Dataset(x=x, y=np.asarray(y, dtype=float), x_names=names, y_name="y")


FIG3_STYLE_EXPRESSION = "(/ (* (* x1 (+ p1 x2)) (cos x1)) (* p2 (log p2)))"


def two_variable_benchmark_spec(n_points: int = 400, noise_sigma: float = 1.0) -> ExpressionSpec:
    """The two-variable recovery benchmark: x1 (t1 + x2) cos(x1) / (t2 log t2)."""
    return ExpressionSpec(
        expression=FIG3_STYLE_EXPRESSION,
        theta=(-1.19, 0.29),
        ranges=((-2.0, 2.0), (-2.0, 2.0)),
        n_points=n_points,
        noise_sigma=noise_sigma,
    )


# -- Rossler system ---------------------------------------------------------------


@dataclass
class RosslerSpec:
    """Fixed-step RK4 trajectory with Gaussian noise on one exact derivative."""

    a: float = 0.2
    b: float = 0.2
    c: float = 5.7
    target: str = "dx"  # which derivative becomes the regression target
    noise_sigma: float = 1.0
    n_points: int = 400
    step: float = 0.01
    span: float = 500.0
    transient: float = 100.0
    initial_state: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if self.target not in ("dx", "dy", "dz"):
            raise ValueError("target must be one of dx, dy, dz")
        if self.step <= 0 or self.span <= 0 or self.transient < 0:
            raise ValueError("step and span must be positive, transient nonnegative")
        if self.n_points < 1 or self.noise_sigma < 0:
            raise ValueError("n_points >= 1 and noise_sigma >= 0 required")


def rossler_rhs(state: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    x, y, z = state
    return np.array([-y - z, x + a * y, b + z * (x - c)])


def integrate_rossler(spec: RosslerSpec) -> np.ndarray:
    """States (n, 3) on the post-transient window, fixed-step RK4."""
    h = spec.step
    n_transient = int(round(spec.transient / h))
    n_span = int(round(spec.span / h))
    state = np.array(spec.initial_state, dtype=float)
    kept = np.empty((n_span, 3))
    for i in range(n_transient + n_span):
        k1 = rossler_rhs(state, spec.a, spec.b, spec.c)
        k2 = rossler_rhs(state + 0.5 * h * k1, spec.a, spec.b, spec.c)
        k3 = rossler_rhs(state + 0.5 * h * k2, spec.a, spec.b, spec.c)
        k4 = rossler_rhs(state + h * k3, spec.a, spec.b, spec.c)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise ValueError(f"trajectory diverged at t = {(i + 1) * h:.2f}")
        if i >= n_transient:
            kept[i - n_transient] = state
    return kept


def rossler_dataset(spec: RosslerSpec, seed: int = 0) -> Dataset:
    """Columns x, y, z with the chosen derivative, noisy, as the target.

    The states are taken as measured exactly; noise enters only through the
    derivative, which is computed from the exact right-hand side.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    states = integrate_rossler(spec)
    stride = max(1, states.shape[0] // spec.n_points)
    states = states[::stride][: spec.n_points]
    x, y, z = states[:, 0], states[:, 1], states[:, 2]
    derivatives = {
        "dx": -y - z,
        "dy": x + spec.a * y,
        "dz": spec.b + z * (x - spec.c),
    }
    target = derivatives[spec.target]
    if spec.noise_sigma > 0:
        target = target + rng.normal(0.0, spec.noise_sigma, size=target.shape)
    return Dataset(
        x=states.copy(),
        y=np.asarray(target, dtype=float),
        x_names=("x", "y", "z"),
        y_name=spec.target,
    )
