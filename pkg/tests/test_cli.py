import itertools
import json

import pytest

from offline_tsp.annealer import TRAJECTORY_HEADER
from offline_tsp.cli import main
from offline_tsp.dataset import read_dataset
from offline_tsp.surrogate import load_model
from offline_tsp.tsp import ProblemInstance, route_distance, tour_length

SA = ["--iters", "300", "--t0-samples", "10", "--log-every", "50"]


def run(*argv):
    return main(["-q", *map(str, argv)])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-train", "--out", d / "train.jsonl", "--count", 30, "--cities", 10, "--seed", 1) == 0
    assert run("gen-test", "--out", d / "test.jsonl", "--count", 6, "--min-cities", 8, "--max-cities", 14) == 0
    assert run(
        "train", "--data", d / "train.jsonl", "--out", d / "model.json",
        "--epochs", 2, "--pairs-per-epoch", 50, "--hidden-dim", 8, "--feature-dim", 4,
    ) == 0
    return d


def test_gen_train_line_count(workspace):
    assert len((workspace / "train.jsonl").read_text().splitlines()) == 30
    manifest = json.loads((workspace / "train.jsonl.manifest.json").read_text())
    assert manifest["subcommand"] == "gen-train"
    assert manifest["seeds"] == {"seed": 1}
    assert manifest["flags"]["count"] == 30


def test_gen_test_sizes(workspace):
    sizes = [r.instance.n for r in read_dataset(workspace / "test.jsonl", "test")]
    assert len(sizes) == 6 and all(8 <= n <= 14 for n in sizes)


def test_gen_test_empty(tmp_path):
    assert run("gen-test", "--out", tmp_path / "e.jsonl", "--count", 0) == 0
    assert (tmp_path / "e.jsonl").read_text() == ""


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-train"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert run("train", "--data", tmp_path / "nope.jsonl", "--out", tmp_path / "m.json") == 3


def test_train_outputs(workspace):
    model = load_model(workspace / "model.json")
    assert model.calibrated and model.cost_params.lam == 1e6
    lines = (workspace / "model.train.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,holdout_accuracy" and len(lines) == 3


def test_train_zero_epochs(workspace, tmp_path):
    assert run("train", "--data", workspace / "train.jsonl", "--out", tmp_path / "m.json", "--epochs", 0) == 2


def test_train_rerun_byte_identical(workspace, tmp_path):
    args = ["--epochs", 2, "--pairs-per-epoch", 50, "--hidden-dim", 8, "--feature-dim", 4]
    assert run("train", "--data", workspace / "train.jsonl", "--out", tmp_path / "m.json", *args) == 0
    assert (tmp_path / "m.json").read_bytes() == (workspace / "model.json").read_bytes()
    assert (tmp_path / "m.train.csv").read_bytes() == (workspace / "model.train.csv").read_bytes()


def test_train_rejects_test_file(workspace, tmp_path):
    assert run("train", "--data", workspace / "test.jsonl", "--out", tmp_path / "m.json") == 4


def _optimize(ws, out, *extra):
    return run("optimize", "--model", ws / "model.json", "--data", ws / "test.jsonl", "--id", 2, "--out", out, *SA, *extra)


def test_optimize_baseline_equals_lambda_zero(workspace, tmp_path, capsys):
    assert _optimize(workspace, tmp_path / "b.csv", "--mode", "baseline") == 0
    line_b = capsys.readouterr().out
    assert _optimize(workspace, tmp_path / "p.csv", "--mode", "proposed", "--lambda", 0) == 0
    line_p = capsys.readouterr().out
    assert (tmp_path / "b.csv").read_bytes() == (tmp_path / "p.csv").read_bytes()
    assert line_b.split("true_length=")[1] == line_p.split("true_length=")[1]
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == ",".join(TRAJECTORY_HEADER)


def test_optimize_repeat_identical(workspace, tmp_path):
    assert _optimize(workspace, tmp_path / "a.csv") == 0
    assert _optimize(workspace, tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_optimize_zero_iterations_prints_start_length(workspace, tmp_path, capsys):
    assert run(
        "optimize", "--model", workspace / "model.json", "--data", workspace / "test.jsonl",
        "--id", 0, "--out", tmp_path / "z.csv", "--iters", 0,
    ) == 0
    printed = float(capsys.readouterr().out.split("true_length=")[1])
    rows = (tmp_path / "z.csv").read_text().splitlines()
    assert len(rows) == 2
    assert printed == pytest.approx(float(rows[1].split(",")[5]), abs=1e-6)


def test_optimize_unknown_id(workspace, tmp_path):
    assert run(
        "optimize", "--model", workspace / "model.json", "--data", workspace / "test.jsonl",
        "--id", 99, "--out", tmp_path / "x.csv",
    ) == 4


def _eval(ws, out, *extra):
    return run(
        "eval", "--model", ws / "model.json", "--data", ws / "test.jsonl", "--out-dir", out,
        "--min-cities", 8, "--max-cities", 14, *SA, *extra,
    )


def test_eval_outputs_and_determinism(workspace, tmp_path):
    assert _eval(workspace, tmp_path / "a", "--trajectories", tmp_path / "traj") == 0
    assert _eval(workspace, tmp_path / "b", "--jobs", 2) == 0
    summary = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert summary[0] == "bucket,count,mean_reduction"
    # the top label follows --max-cities, here 14
    assert [row.split(",")[0] for row in summary[1:]] == [
        "N<60", "60<=N<80", "80<=N<100", "100<=N<=14", "overall",
    ]
    for name in ("report.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(list((tmp_path / "traj").glob("*.csv"))) == 12
    assert (tmp_path / "a" / "summary.csv.manifest.json").exists()


def test_eval_empty_test_file(workspace, tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert run(
        "eval", "--model", workspace / "model.json", "--data", tmp_path / "empty.jsonl",
        "--out-dir", tmp_path / "o",
    ) == 4


def test_plot_two_trajectories(workspace, tmp_path):
    _optimize(workspace, tmp_path / "b.csv", "--mode", "baseline")
    _optimize(workspace, tmp_path / "p.csv")
    assert run("plot", tmp_path / "b.csv", tmp_path / "p.csv", "--labels", "baseline", "proposed",
               "--out", tmp_path / "f.svg") == 0
    svg = (tmp_path / "f.svg").read_text()
    assert svg.count("<polyline") == 2
    assert "iteration" in svg and "true tour length" in svg


def test_plot_single_sample(tmp_path):
    (tmp_path / "one.csv").write_text(",".join(TRAJECTORY_HEADER) + "\n0,1.0,-2.0,2.0,0.1,5.5,5.5\n")
    assert run("plot", tmp_path / "one.csv", "--out", tmp_path / "f.svg") == 0
    svg = (tmp_path / "f.svg").read_text()
    assert "<circle" in svg and "<polyline" not in svg


def test_plot_bad_cell(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text(",".join(TRAJECTORY_HEADER) + "\n0,1.0,x,,,5.5,5.5\n")
    assert run("plot", tmp_path / "bad.csv", "--out", tmp_path / "f.svg") == 4
    assert "row 2, column cost" in capsys.readouterr().err


def _write_instances(path, *city_lists):
    path.write_text("".join(json.dumps({"id": i, "cities": c}) + "\n" for i, c in enumerate(city_lists)))


def test_lipschitz_coincident(tmp_path, capsys):
    _write_instances(tmp_path / "c.jsonl", [[0.5, 0.5]] * 6)
    assert run("lipschitz", "--data", tmp_path / "c.jsonl", "--id", 0) == 0
    assert capsys.readouterr().out.startswith("k_hat=0.000000 ")


def test_lipschitz_reproducible(workspace, capsys):
    outs = []
    for _ in range(2):
        assert run("lipschitz", "--data", workspace / "test.jsonl", "--id", 1, "--samples", 1000, "--seed", 7) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1] and "pairs=1000" in outs[0]


def test_lipschitz_exhaustive_matches_brute_force(tmp_path, capsys):
    cities = [[0.1, 0.2], [0.9, 0.3], [0.4, 0.8], [0.7, 0.7], [0.2, 0.5]]
    _write_instances(tmp_path / "five.jsonl", cities)
    assert run("lipschitz", "--data", tmp_path / "five.jsonl", "--id", 0, "--exhaustive") == 0
    printed = float(capsys.readouterr().out.split()[0].split("=")[1])
    inst = ProblemInstance(0, cities)
    best = max(
        abs(tour_length(inst, a) - tour_length(inst, b)) / route_distance(a, b)
        for a, b in itertools.combinations(itertools.permutations(range(5)), 2)
    )
    assert printed == pytest.approx(best, abs=1e-6)


def test_lipschitz_exhaustive_too_large(workspace):
    assert run("lipschitz", "--data", workspace / "test.jsonl", "--id", 0, "--exhaustive") == 2
