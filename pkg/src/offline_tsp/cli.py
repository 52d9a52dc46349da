"""Command-line entry point: ``offline-tsp <subcommand> ...``.

Exit codes: 0 success, 2 bad arguments, 3 I/O error, 4 invalid data,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from offline_tsp import __version__
from offline_tsp.annealer import SAConfig, read_trajectory, write_trajectory
from offline_tsp.dataset import (
    generate_test_set,
    generate_training_set,
    load_any,
    read_dataset,
    write_dataset,
)
from offline_tsp.errors import (
    ConfigurationError,
    DegenerateSampleError,
    InvalidArgumentError,
    InvalidRouteError,
    NumericalFailure,
    ValidationError,
)
from offline_tsp.harness import evaluate, run_arm, write_report, write_summary
from offline_tsp.plot import render_svg
from offline_tsp.surrogate import (
    EncoderConfig,
    TrainConfig,
    calibrate,
    load_model,
    save_model,
    train,
)
from offline_tsp.tsp import estimate_lipschitz, exhaustive_lipschitz, tour_length

log = logging.getLogger("offline_tsp")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5


class DataError(Exception):
    """Raised for user-facing data problems that are not ValidationErrors (e.g. unknown id)."""


def write_manifest(output: Path, args: argparse.Namespace, inputs=(), outputs=()) -> None:
    def plain(v):
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        return v

    flags = {k: plain(v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "subcommand": args.command,
        "flags": flags,
        "seeds": {k: v for k, v in flags.items() if k == "seed" or k.endswith("_seed")},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }
    path = output.with_name(output.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sa_config(args) -> SAConfig:
    return SAConfig(
        iterations=args.iters,
        t0_samples=args.t0_samples,
        final_temp_ratio=args.final_temp_ratio,
        log_every=args.log_every,
        seed=args.seed,
    )


def cmd_gen_train(args) -> int:
    ds = generate_training_set(args.count, args.cities, np.random.default_rng(args.seed))
    write_dataset(ds, args.out)
    write_manifest(args.out, args, outputs=[args.out])
    log.info("wrote %d training records to %s", len(ds), args.out)
    return EXIT_OK


def cmd_gen_test(args) -> int:
    ds = generate_test_set(args.count, args.min_cities, args.max_cities, np.random.default_rng(args.seed))
    write_dataset(ds, args.out)
    write_manifest(args.out, args, outputs=[args.out])
    log.info("wrote %d test records to %s", len(ds), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    enc = EncoderConfig(hidden_dim=args.hidden_dim, feature_dim=args.feature_dim)
    cfg = TrainConfig(
        epochs=args.epochs,
        pairs_per_epoch=args.pairs_per_epoch,
        learning_rate=args.lr,
        holdout_fraction=args.holdout,
        seed=args.seed,
    )
    if not 0 <= args.alpha_quantile <= 1 or args.lam < 0:
        raise InvalidArgumentError("need --alpha-quantile in [0, 1] and --lambda >= 0")
    data = read_dataset(args.data, "train")

    def progress(s):
        log.info("epoch %d loss %.4f holdout_acc %.3f", s.epoch, s.mean_loss, s.holdout_accuracy)

    model, report = train(data, enc, cfg, log=progress)
    model = calibrate(model, data.records, args.ridge_scale, args.alpha_quantile, args.lam)
    save_model(model, args.out)
    report_path = args.report or args.out.with_name(args.out.stem + ".train.csv")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,mean_loss,holdout_accuracy\n")
        for s in report.epochs:
            acc = "" if np.isnan(s.holdout_accuracy) else f"{s.holdout_accuracy:.6f}"
            fh.write(f"{s.epoch},{s.mean_loss:.6f},{acc}\n")
    write_manifest(args.out, args, inputs=[args.data], outputs=[args.out, report_path])
    log.info("alpha %.6g lambda %.6g", model.cost_params.alpha, model.cost_params.lam)
    return EXIT_OK


def _find_instance(path, record_id):
    data = load_any(path)
    try:
        return data.get(record_id).instance
    except KeyError:
        raise DataError(f"no record with id {record_id} in {path}") from None


def cmd_optimize(args) -> int:
    config = _sa_config(args)
    model = load_model(args.model)
    instance = _find_instance(args.data, args.id)
    result = run_arm(model, instance, config, args.mode, lam=args.lam)
    write_trajectory(result.trajectory, args.out)
    write_manifest(args.out, args, inputs=[args.model, args.data], outputs=[args.out])
    length = tour_length(instance, result.best_route)
    print(f"id={instance.id} n={instance.n} mode={args.mode} true_length={length:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _sa_config(args)
    model = load_model(args.model)
    data = read_dataset(args.data, "test")
    if len(data) == 0:
        raise ValidationError(f"{args.data} holds no test instances")
    results, summaries, trajectories = evaluate(
        model,
        data,
        config,
        jobs=args.jobs,
        n_min=args.min_cities,
        n_max=args.max_cities,
        lam=args.lam,
        keep_trajectories=args.trajectories is not None,
        log=lambda r: log.info("instance %d (N=%d) ratio %.4f", r.instance_id, r.n_cities, r.ratio),
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    report = args.out_dir / "report.csv"
    summary = args.out_dir / "summary.csv"
    write_report(results, report)
    write_summary(summaries, summary)
    outputs = [report, summary]
    if args.trajectories is not None:
        args.trajectories.mkdir(parents=True, exist_ok=True)
        for rid, (base, prop) in trajectories.items():
            for arm, traj in (("baseline", base), ("proposed", prop)):
                path = args.trajectories / f"{rid:04d}_{arm}.csv"
                write_trajectory(traj, path)
                outputs.append(path)
    write_manifest(summary, args, inputs=[args.model, args.data], outputs=outputs)
    for s in summaries:
        print(f"{s.label}\t{s.count}\t{s.mean_reduction:.6f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    trajectories = [read_trajectory(p) for p in args.inputs]
    labels = args.labels or [Path(p).stem for p in args.inputs]
    if len(labels) != len(trajectories):
        raise InvalidArgumentError("--labels must match the number of inputs")
    args.out.write_text(render_svg(trajectories, labels), encoding="utf-8")
    write_manifest(args.out, args, inputs=args.inputs, outputs=[args.out])
    return EXIT_OK


def cmd_lipschitz(args) -> int:
    instance = _find_instance(args.data, args.id)
    if args.exhaustive:
        est = exhaustive_lipschitz(instance)
    else:
        est = estimate_lipschitz(instance, args.samples, np.random.default_rng(args.seed))
    print(f"k_hat={est.k_hat:.6f} pairs={est.sample_pairs}")
    return EXIT_OK


def _add_sa_flags(p):
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--t0-samples", type=int, default=100)
    p.add_argument("--final-temp-ratio", type=float, default=1e-3)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override the model's penalty weight")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offline-tsp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-train", help="generate the historical training set")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--cities", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_gen_train)

    p = sub.add_parser("gen-test", help="generate test instances")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--min-cities", type=int, default=40)
    p.add_argument("--max-cities", type=int, default=120)
    p.add_argument("--seed", type=int, default=2)
    p.set_defaults(func=cmd_gen_test)

    defaults = TrainConfig()
    p = sub.add_parser("train", help="train and calibrate the ranking surrogate")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path, default=None, help="training CSV (default <out>.train.csv)")
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--pairs-per-epoch", type=int, default=defaults.pairs_per_epoch)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--holdout", type=float, default=defaults.holdout_fraction)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--alpha-quantile", type=float, default=0.95)
    p.add_argument("--lambda", dest="lam", type=float, default=1e6)
    p.add_argument("--ridge-scale", type=float, default=1e-6)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="anneal one instance with one arm")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--mode", choices=("proposed", "baseline"), default="proposed")
    p.add_argument("--out", type=Path, required=True, help="trajectory CSV")
    _add_sa_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="baseline vs proposed over a test set")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--trajectories", type=Path, default=None, help="dump per-instance trajectories here")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--min-cities", type=int, default=40)
    p.add_argument("--max-cities", type=int, default=120)
    _add_sa_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="SVG of true length vs iteration")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--labels", nargs="+", default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("lipschitz", help="estimate the length/route-distance Lipschitz constant")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--exhaustive", action="store_true", help="enumerate all route pairs (n <= 6)")
    p.set_defaults(func=cmd_lipschitz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (ValidationError, InvalidRouteError, ConfigurationError, DataError) as exc:
        print(f"invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, DegenerateSampleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
