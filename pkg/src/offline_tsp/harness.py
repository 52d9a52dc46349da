"""Baseline vs. distribution-regularized annealing over a test set."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from offline_tsp.annealer import Evaluation, OptResult, SAConfig, anneal, initial_temperature
from offline_tsp.errors import ConfigurationError, InvalidArgumentError, ValidationError
from offline_tsp.ood import CostParams, regularized_cost
from offline_tsp.surrogate import InstanceScorer, RankingModel
from offline_tsp.tsp import ProblemInstance, tour_length

BUCKET_EDGES = (60, 80, 100)
REPORT_HEADER = (
    "instance_id",
    "n_cities",
    "baseline_length",
    "proposed_length",
    "ratio",
    "baseline_rebound",
    "proposed_rebound",
)
SUMMARY_HEADER = ("bucket", "count", "mean_reduction")


class SurrogateCost:
    """Annealing cost backed by the surrogate.

    With ``params=None`` the cost is the raw ``-score`` (baseline arm);
    otherwise it is the hinge-penalized cost. The Mahalanobis distance is
    computed whenever the model carries Gaussian stats, so both arms log it.
    """

    def __init__(self, model: RankingModel, instance: ProblemInstance, params: CostParams | None = None):
        if params is not None and model.gaussian is None:
            raise ConfigurationError("penalized cost needs a model with Gaussian stats")
        self.scorer = InstanceScorer(model, instance)
        self.params = params

    def __call__(self, instance, route) -> Evaluation:
        score, md = self.scorer.score_md(route)
        if self.params is None:
            return Evaluation(-score, score, md)
        return Evaluation(regularized_cost(score, md, self.params), score, md)


def baseline_cost(model, instance) -> SurrogateCost:
    return SurrogateCost(model, instance)


def proposed_cost(model, instance, lam: float | None = None) -> SurrogateCost:
    if not model.calibrated:
        raise ConfigurationError("the proposed arm needs a calibrated model (gaussian + cost_params)")
    params = model.cost_params
    if lam is not None:
        params = CostParams(params.alpha, lam, params.alpha_quantile)
    return SurrogateCost(model, instance, params)


def instance_seed(config: SAConfig, instance: ProblemInstance) -> int:
    return config.seed + instance.id


def shared_temperature(model, instance, config: SAConfig) -> float:
    """Starting temperature used by both arms, measured on the unpenalized cost.

    Draws the start tour from the same stream the arms will use, so it is the
    spread of ``-score`` around the tour both arms actually start from.
    """
    rng = np.random.default_rng(instance_seed(config, instance))
    start = rng.permutation(instance.n)
    return initial_temperature(baseline_cost(model, instance), instance, start, config, rng)


def run_arm(model, instance, config: SAConfig, mode: str, lam: float | None = None, t0=None) -> OptResult:
    if mode == "baseline":
        cost = baseline_cost(model, instance)
    elif mode == "proposed":
        cost = proposed_cost(model, instance, lam)
    else:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if t0 is None:
        t0 = shared_temperature(model, instance, config)
    rng = np.random.default_rng(instance_seed(config, instance))
    return anneal(cost, instance, config, rng, oracle_logging=True, t0=t0)


def run_pair(model, instance, config: SAConfig, lam: float | None = None):
    """Both arms with the same seed and the same temperature schedule."""
    if not model.calibrated:
        raise ConfigurationError("the proposed arm needs a calibrated model (gaussian + cost_params)")
    t0 = shared_temperature(model, instance, config)
    baseline = run_arm(model, instance, config, "baseline", t0=t0)
    proposed = run_arm(model, instance, config, "proposed", lam=lam, t0=t0)
    return baseline, proposed


def rebound_metric(true_lengths) -> tuple[float, float, float]:
    """``(min, final, (final - min) / min)`` over a sequence of true tour lengths."""
    values = [float(v) for v in true_lengths]
    if not values:
        raise InvalidArgumentError("rebound needs at least one length")
    lo, final = min(values), values[-1]
    if lo <= 0:
        return lo, final, 0.0
    return lo, final, (final - lo) / lo


@dataclass(frozen=True)
class InstanceResult:
    instance_id: int
    n_cities: int
    baseline_length: float
    proposed_length: float
    ratio: float
    baseline_rebound: float
    proposed_rebound: float

    @property
    def reduction(self) -> float:
        return 1.0 - self.ratio


@dataclass(frozen=True)
class BucketSummary:
    label: str
    count: int
    mean_reduction: float


def summarize_pair(instance, baseline: OptResult, proposed: OptResult) -> InstanceResult:
    b_len = tour_length(instance, baseline.best_route)
    p_len = tour_length(instance, proposed.best_route)
    return InstanceResult(
        instance.id,
        instance.n,
        b_len,
        p_len,
        p_len / b_len if b_len > 0 else 1.0,
        rebound_metric(baseline.true_lengths())[2],
        rebound_metric(proposed.true_lengths())[2],
    )


def bucket_labels(n_max: int = 120) -> list[str]:
    e0, e1, e2 = BUCKET_EDGES
    return [f"N<{e0}", f"{e0}<=N<{e1}", f"{e1}<=N<{e2}", f"{e2}<=N<={n_max}"]


def bucket_index(n: int) -> int:
    for k, edge in enumerate(BUCKET_EDGES):
        if n < edge:
            return k
    return len(BUCKET_EDGES)


def bucket_summaries(results, n_max: int = 120) -> list[BucketSummary]:
    """Per-bucket mean of per-instance reductions, then an ``overall`` row."""
    labels = bucket_labels(n_max)
    groups = [[] for _ in labels]
    for r in results:
        groups[bucket_index(r.n_cities)].append(r.reduction)
    out = [
        BucketSummary(label, len(g), float(np.mean(g)) if g else math.nan)
        for label, g in zip(labels, groups)
    ]
    every = [r.reduction for r in results]
    out.append(BucketSummary("overall", len(every), float(np.mean(every)) if every else math.nan))
    return out


def _evaluate_one(args):
    model, instance, config, lam, keep = args
    baseline, proposed = run_pair(model, instance, config, lam)
    result = summarize_pair(instance, baseline, proposed)
    trajectories = (baseline.trajectory, proposed.trajectory) if keep else None
    return result, trajectories


def evaluate(
    model: RankingModel,
    test_dataset,
    config: SAConfig,
    jobs: int = 1,
    n_min: int = 40,
    n_max: int = 120,
    lam: float | None = None,
    keep_trajectories: bool = False,
    log=None,
):
    """Run both arms on every test instance.

    Returns ``(results, summaries, trajectories)`` with results in instance-id
    order; ``trajectories`` maps id to ``(baseline, proposed)`` samples when
    ``keep_trajectories`` is set, otherwise it is empty.
    """
    instances = [r.instance for r in test_dataset.records]
    if not instances:
        raise ValidationError("test set is empty")
    if not model.calibrated:
        raise ConfigurationError("the proposed arm needs a calibrated model (gaussian + cost_params)")
    for inst in instances:
        if not n_min <= inst.n <= n_max:
            raise ValidationError(f"instance {inst.id} has {inst.n} cities, outside [{n_min}, {n_max}]")
    tasks = [(model, inst, config, lam, keep_trajectories) for inst in instances]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_evaluate_one, tasks))
    else:
        outputs = []
        for task in tasks:
            outputs.append(_evaluate_one(task))
            if log is not None:
                log(outputs[-1][0])
    outputs.sort(key=lambda o: o[0].instance_id)
    results = [o[0] for o in outputs]
    trajectories = {o[0].instance_id: o[1] for o in outputs if o[1] is not None}
    return results, bucket_summaries(results, n_max), trajectories


def bootstrap_ci(values, n_boot: int = 10000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidArgumentError("bootstrap needs at least one value")
    rng = np.random.default_rng(seed)
    means = v[rng.integers(v.size, size=(n_boot, v.size))].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(lo), float(hi)


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.6f}"


def write_report(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in results:
            writer.writerow(
                [
                    r.instance_id,
                    r.n_cities,
                    *(_fmt(v) for v in (r.baseline_length, r.proposed_length, r.ratio)),
                    _fmt(r.baseline_rebound),
                    _fmt(r.proposed_rebound),
                ]
            )


def write_summary(summaries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            writer.writerow([s.label, s.count, _fmt(s.mean_reduction)])
