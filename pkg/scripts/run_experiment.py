"""Full pipeline at reference scale: data, training, paired evaluation, one rebound plot.

    python3 scripts/run_experiment.py --workdir runs/ref
    python3 scripts/run_experiment.py --workdir runs/quick --test-count 20 --iters 5000

Every step goes through the CLI, so each output gets its manifest.
"""

import argparse
import sys
from pathlib import Path

from offline_tsp.cli import main as cli


def step(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", type=Path, default=Path("runs/reference"))
    p.add_argument("--train-count", type=int, default=1000)
    p.add_argument("--test-count", type=int, default=200)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot-id", type=int, default=0, help="test instance to plot")
    args = p.parse_args(argv)

    d = args.workdir
    d.mkdir(parents=True, exist_ok=True)
    step("gen-train", "--out", d / "train.jsonl", "--count", args.train_count)
    step("gen-test", "--out", d / "test.jsonl", "--count", args.test_count)
    step("train", "--data", d / "train.jsonl", "--out", d / "model.json")
    step(
        "eval", "--model", d / "model.json", "--data", d / "test.jsonl",
        "--out-dir", d / "eval", "--trajectories", d / "trajectories",
        "--iters", args.iters, "--jobs", args.jobs,
    )
    traj = d / "trajectories"
    step(
        "plot", traj / f"{args.plot_id:04d}_baseline.csv", traj / f"{args.plot_id:04d}_proposed.csv",
        "--labels", "baseline", "proposed", "--out", d / f"rebound_{args.plot_id:04d}.svg",
    )
    print(f"summary: {d / 'eval' / 'summary.csv'}")


if __name__ == "__main__":
    main()
