import math

import numpy as np
import pytest

from offline_tsp.annealer import SAConfig
from offline_tsp.dataset import Dataset, TestRecord, generate_test_set
from offline_tsp.errors import ConfigurationError, InvalidArgumentError, ValidationError
from offline_tsp.harness import (
    InstanceResult,
    bootstrap_ci,
    bucket_summaries,
    evaluate,
    rebound_metric,
    run_arm,
    run_pair,
    write_report,
    write_summary,
)
from offline_tsp.surrogate import init_model, EncoderConfig
from offline_tsp.tsp import sample_instance

QUICK = SAConfig(iterations=400, t0_samples=20, log_every=20, seed=3)


def _result(iid, n, ratio):
    return InstanceResult(iid, n, 10.0, 10.0 * ratio, ratio, 0.0, 0.0)


def test_rebound_examples():
    assert rebound_metric([5, 4, 3, 2]) == (2, 2, 0.0)
    lo, final, rb = rebound_metric([10, 8, 9])
    assert (lo, final) == (8, 9) and rb == pytest.approx(0.125)
    with pytest.raises(InvalidArgumentError):
        rebound_metric([])


def test_run_pair_lambda_zero_matches_baseline(small_model):
    inst = sample_instance(15, np.random.default_rng(0), id=4)
    baseline, proposed = run_pair(small_model, inst, QUICK, lam=0.0)
    assert baseline.best_route.tolist() == proposed.best_route.tolist()
    assert baseline.best_cost == proposed.best_cost
    assert baseline.trajectory == proposed.trajectory


def test_run_pair_outputs(small_model):
    inst = sample_instance(15, np.random.default_rng(1), id=2)
    baseline, proposed = run_pair(small_model, inst, QUICK)
    for res in (baseline, proposed):
        assert sorted(res.best_route.tolist()) == list(range(15))
        assert all(not math.isnan(s.md) and not math.isnan(s.true_length) for s in res.trajectory)
    assert baseline.t0 == proposed.t0
    # proposed arm never finishes outside the gate when it started inside it
    alpha = small_model.cost_params.alpha
    if proposed.trajectory[0].md <= alpha:
        assert all(s.md <= alpha for s in proposed.trajectory)


def test_baseline_mode_equals_proposed_lambda_zero(small_model):
    inst = sample_instance(10, np.random.default_rng(2), id=1)
    a = run_arm(small_model, inst, QUICK, "baseline")
    b = run_arm(small_model, inst, QUICK, "proposed", lam=0.0)
    assert a.trajectory == b.trajectory


def test_uncalibrated_model_rejected():
    model = init_model(EncoderConfig(hidden_dim=4, feature_dim=2), np.random.default_rng(0))
    inst = sample_instance(8, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        run_pair(model, inst, QUICK)
    run_arm(model, inst, QUICK, "baseline")  # the baseline needs no gate


def test_buckets_partition():
    results = [_result(i, n, 0.9) for i, n in enumerate([40, 59, 60, 79, 80, 99, 100, 120])]
    summaries = bucket_summaries(results)
    assert [s.label for s in summaries] == ["N<60", "60<=N<80", "80<=N<100", "100<=N<=120", "overall"]
    assert [s.count for s in summaries] == [2, 2, 2, 2, 8]
    assert sum(s.count for s in summaries[:-1]) == len(results)
    assert all(s.mean_reduction == pytest.approx(0.1) for s in summaries)


def test_bucket_mean_of_ratios():
    results = [
        InstanceResult(0, 50, 10.0, 5.0, 0.5, 0.0, 0.0),
        InstanceResult(1, 50, 100.0, 100.0, 1.0, 0.0, 0.0),
    ]
    # mean of ratios 0.75 -> reduction 0.25; a ratio of means would give 1 - 105/110
    assert bucket_summaries(results)[0].mean_reduction == pytest.approx(0.25)


def test_empty_bucket_is_nan():
    summaries = bucket_summaries([_result(0, 45, 1.0)])
    assert summaries[1].count == 0 and math.isnan(summaries[1].mean_reduction)


def test_evaluate_identical_arms_zero_reduction(small_model):
    test = generate_test_set(4, 10, 14, np.random.default_rng(5))
    results, summaries, _ = evaluate(small_model, test, QUICK, n_min=10, n_max=14, lam=0.0)
    assert [r.instance_id for r in results] == [0, 1, 2, 3]
    assert all(r.ratio == 1.0 and r.reduction == 0.0 for r in results)
    assert summaries[-1].mean_reduction == 0.0


def test_evaluate_parallel_matches_serial(small_model, tmp_path):
    test = generate_test_set(3, 10, 14, np.random.default_rng(6))
    serial = evaluate(small_model, test, QUICK, n_min=10, n_max=14)
    parallel = evaluate(small_model, test, QUICK, jobs=2, n_min=10, n_max=14)
    write_report(serial[0], tmp_path / "a.csv")
    write_report(parallel[0], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_evaluate_rejects_out_of_range(small_model):
    test = Dataset("test", [TestRecord(0, sample_instance(20, np.random.default_rng(0)))])
    with pytest.raises(ValidationError):
        evaluate(small_model, test, QUICK, n_min=10, n_max=14)
    with pytest.raises(ValidationError):
        evaluate(small_model, Dataset("test", []), QUICK)


def test_report_and_summary_format(tmp_path):
    results = [InstanceResult(0, 45, 10.0, 9.5, 0.95, 0.01, 0.0)]
    write_report(results, tmp_path / "r.csv")
    write_summary(bucket_summaries(results), tmp_path / "s.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == [
        "instance_id,n_cities,baseline_length,proposed_length,ratio,baseline_rebound,proposed_rebound",
        "0,45,10.000000,9.500000,0.950000,0.010000,0.000000",
    ]
    summary = (tmp_path / "s.csv").read_text().splitlines()
    assert summary[0] == "bucket,count,mean_reduction"
    assert summary[1] == "N<60,1,0.050000"
    assert summary[2] == "60<=N<80,0,"
    assert summary[-1] == "overall,1,0.050000"


def test_bootstrap_ci():
    lo, hi = bootstrap_ci(np.full(30, 0.2))
    assert lo == hi == pytest.approx(0.2)
    vals = np.random.default_rng(0).normal(1.0, 0.1, size=200)
    lo, hi = bootstrap_ci(vals)
    assert lo < vals.mean() < hi and lo > 0.97 and hi < 1.03
