"""Simulated annealing over closed tours with 2-opt moves.

The cost function is any callable ``cost_fn(instance, route)``. It may return
a plain float, or an :class:`Evaluation` carrying the surrogate score and
Mahalanobis distance so they can be logged in the trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from offline_tsp.errors import InvalidArgumentError, NumericalFailure, ValidationError
from offline_tsp.tsp import ProblemInstance, tour_length

TRAJECTORY_HEADER = ("iter", "temperature", "cost", "score", "md", "true_length", "best_true_length")


class Evaluation(NamedTuple):
    cost: float
    score: float = math.nan
    md: float = math.nan


@dataclass(frozen=True)
class SAConfig:
    iterations: int = 20000
    t0_samples: int = 100
    final_temp_ratio: float = 1e-3
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be >= 0")
        if not 0 < self.final_temp_ratio < 1:
            raise InvalidArgumentError("final_temp_ratio must be in (0, 1)")
        if self.t0_samples < 2:
            raise InvalidArgumentError("t0_samples must be >= 2")
        if self.log_every < 1:
            raise InvalidArgumentError("log_every must be >= 1")


class TrajectorySample(NamedTuple):
    iteration: int
    temperature: float
    cost: float
    score: float
    md: float
    true_length: float
    best_true_length: float


@dataclass
class OptResult:
    best_route: np.ndarray
    best_cost: float
    trajectory: list[TrajectorySample] = field(default_factory=list)
    t0: float = math.nan

    def true_lengths(self) -> list[float]:
        return [s.true_length for s in self.trajectory]


def _evaluate(cost_fn, instance, route) -> Evaluation:
    out = cost_fn(instance, route)
    if isinstance(out, Evaluation):
        return out
    return Evaluation(float(out))


def propose_neighbor(route, rng: np.random.Generator) -> np.ndarray:
    """2-opt move: reverse ``route[i:j+1]`` for uniformly chosen positions ``i < j``."""
    route = np.asarray(route)
    n = route.shape[0]
    if n < 3:
        return route.copy()
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    else:
        i, j = j, i
    out = route.copy()
    out[i : j + 1] = route[i : j + 1][::-1]
    return out


def initial_temperature(
    cost_fn: Callable, instance: ProblemInstance, start_route, config: SAConfig, rng
) -> float:
    """Population standard deviation of cost over random neighbors of the start; 1 if that is 0."""
    costs = [
        _evaluate(cost_fn, instance, propose_neighbor(start_route, rng)).cost
        for _ in range(config.t0_samples)
    ]
    t0 = float(np.std(costs))
    if not math.isfinite(t0):
        raise NumericalFailure("non-finite cost while setting the initial temperature")
    return t0 if t0 > 0 else 1.0


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-delta / temperature))


def anneal(
    cost_fn: Callable,
    instance: ProblemInstance,
    config: SAConfig,
    rng: np.random.Generator,
    oracle_logging: bool = False,
    t0: float | None = None,
) -> OptResult:
    """Minimize ``cost_fn`` from a uniformly random starting tour.

    Cooling is geometric from ``t0`` down to ``t0 * final_temp_ratio`` at the
    last iteration. ``t0`` defaults to :func:`initial_temperature` of this
    cost function; pass it explicitly to share one schedule between runs.
    The true tour length is computed only for logging and never feeds the
    search.
    """
    n = instance.n
    current = rng.permutation(n)
    cur = _evaluate(cost_fn, instance, current)
    if not math.isfinite(cur.cost):
        raise NumericalFailure("non-finite cost at iteration 0")
    if t0 is None:
        t0 = initial_temperature(cost_fn, instance, current, config, rng)
    elif not t0 > 0:
        raise InvalidArgumentError("t0 must be > 0")
    best_route, best_cost = current.copy(), cur.cost
    trajectory: list[TrajectorySample] = []
    best_true = math.inf

    def log(k, temp):
        nonlocal best_true
        true = math.nan
        if oracle_logging:
            true = tour_length(instance, current)
            best_true = min(best_true, true)
        trajectory.append(
            TrajectorySample(
                k, temp, cur.cost, cur.score, cur.md, true, best_true if oracle_logging else math.nan
            )
        )

    log(0, t0)
    iters = config.iterations
    gamma = config.final_temp_ratio ** (1.0 / iters) if iters else 1.0
    for k in range(1, iters + 1):
        temp = t0 * gamma**k
        cand = propose_neighbor(current, rng)
        ev = _evaluate(cost_fn, instance, cand)
        if not math.isfinite(ev.cost):
            raise NumericalFailure(f"non-finite cost at iteration {k}")
        if metropolis_accept(ev.cost - cur.cost, temp, rng):
            current, cur = cand, ev
            if cur.cost < best_cost:
                best_route, best_cost = current.copy(), cur.cost
        if k % config.log_every == 0 or k == iters:
            log(k, temp)
    return OptResult(best_route, best_cost, trajectory, t0)


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.6f}"


def write_trajectory(trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for s in trajectory:
            writer.writerow([s.iteration, *(_fmt(v) for v in s[1:])])


def read_trajectory(path) -> list[TrajectorySample]:
    """Parse a trajectory CSV. Blank cells become nan; anything else unparsable raises
    ValidationError naming the row and column."""
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRAJECTORY_HEADER:
            raise ValidationError(f"bad trajectory header: {header}", line=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(TRAJECTORY_HEADER):
                raise ValidationError(f"row {row_no}: expected {len(TRAJECTORY_HEADER)} columns")
            values = []
            for col, cell in zip(TRAJECTORY_HEADER, row):
                if cell == "" and col != "iter":
                    values.append(math.nan)
                    continue
                try:
                    values.append(int(cell) if col == "iter" else float(cell))
                except ValueError:
                    raise ValidationError(
                        f"row {row_no}, column {col}: not a number: {cell!r}"
                    ) from None
            samples.append(TrajectorySample(*values))
    return samples
