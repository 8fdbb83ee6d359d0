"""Command-line front end: ``timeik {gen-data,train,solve,bench}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 no solution.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .approximator import MlpModel, TrainConfig, train
from .bench import METHODS, BenchmarkSpec, format_table, load_models, run_benchmark, save_result
from .collision import CollisionWorld
from .dataset import colliding_fraction, export_csv, generate_dataset, read_dataset, write_dataset
from .errors import (ContractViolation, DivergenceError, ModelFileError, NoFreeSampleError,
                     NoSolutionError, PlanningError)
from .kinematics import Pose, relative_pose
from .robot_file import load_scene
from .solver import SolverConfig, solve
from .timing import plan_collision_free, synchronized_durations

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_NO_SOLUTION = 0, 1, 2, 3

log = logging.getLogger("timeik")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _world(args) -> CollisionWorld:
    return CollisionWorld.from_scene(load_scene(args.scene))


def _solver_config(args) -> SolverConfig:
    config = SolverConfig.load(args.config) if args.config else SolverConfig()
    overrides = {k: getattr(args, k) for k in ("batch_size", "iterations", "time_term", "selection")
                 if getattr(args, k, None) is not None}
    overrides["seed"] = args.seed
    return replace(config, **overrides)


def cmd_gen_data(args) -> int:
    world = _world(args)
    records = generate_dataset(world, args.count, args.seed, budget=args.budget,
                               threads=args.threads, progress=True)
    write_dataset(args.out, records)
    if args.csv:
        export_csv(args.csv, records)
    frac = colliding_fraction(records)
    print(f"wrote {len(records)} records to {args.out}")
    print(f"straight-line colliding fraction: {frac:.3f}")
    return EXIT_OK


def cmd_train(args) -> int:
    records = read_dataset(args.dataset)
    overrides = {"hidden": args.hidden, "activation": args.activation, "epochs": args.epochs,
                 "batch_size": args.batch_size, "learning_rate": args.lr,
                 "weight_decay": args.weight_decay}
    config = replace(TrainConfig(), **{k: v for k, v in overrides.items() if v is not None})
    if args.mse:
        config = replace(config, huber_delta=None)
    model, tlog = train(records, config, seed=args.seed, target=args.target)
    model.save(args.out)
    log_path = args.log or str(Path(args.out).with_suffix(".log.json"))
    Path(log_path).write_text(json.dumps({
        "target": args.target, "n_train": tlog.n_train, "n_val": tlog.n_val,
        "train_loss": tlog.train_loss, "val_loss": tlog.val_loss, "val_mae": tlog.val_mae,
        "target_mean": tlog.target_mean}, indent=1))
    print(f"wrote model to {args.out} and training log to {log_path}")
    print(f"validation MAE: {tlog.final_val_mae:.4f} s "
          f"({100 * tlog.mae_ratio:.1f}% of mean time {tlog.target_mean:.3f} s)")
    return EXIT_OK


def cmd_solve(args) -> int:
    world = _world(args)
    sys_ = world.sys
    config = _solver_config(args)
    model = MlpModel.load(args.model_file) if args.model_file else None
    if config.time_term == "approximator" and model is None:
        raise ContractViolation("--time-term approximator needs --model-file")
    q_0 = args.q0
    if args.target_q is not None:
        target = relative_pose(sys_, args.target_q)
    elif args.target is not None:
        if len(args.target) != 7:
            raise ContractViolation("--target takes x,y,z,qw,qx,qy,qz")
        target = Pose(args.target[:3], args.target[3:])
    else:
        raise ContractViolation("give --target or --target-q")
    try:
        report = solve(sys_, world, q_0, target, config, model)
    except NoSolutionError as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        if exc.best_infeasible is not None:
            print("best infeasible candidate: " + ", ".join(f"{x:.6f}" for x in exc.best_infeasible),
                  file=sys.stderr)
        return EXIT_NO_SOLUTION
    if args.out:
        report.save(args.out)
    q = report.best
    k = report.best_index
    print("best: " + ", ".join(f"{x:.6f}" for x in q))
    print(f"feasible: {report.best_feasible}")
    print(f"position error: {report.position_error[k]:.3e} m, orientation error: "
          f"{report.orientation_error[k]:.3e} rad")
    print(f"predicted time: {report.predicted_time[k]:.4f} s")
    print(f"collision-blind time: {float(synchronized_durations(sys_, q_0, q)):.4f} s")
    if report.best_feasible:
        t_cf = plan_collision_free(world, q_0, q, seed=config.seed).duration
        print(f"collision-aware time: {t_cf:.4f} s")
    print(f"candidates converged: {len(report.candidates)}, iterations: {report.iterations}, "
          f"wall time: {report.wall_time:.2f} s")
    return EXIT_OK


def cmd_bench(args) -> int:
    world = _world(args)
    spec = BenchmarkSpec(args.scene, args.methods.split(","), args.trials, args.seed, args.out)
    base = _solver_config(args)
    models = load_models(args.model_file, args.cf_model_file)
    result = run_benchmark(world, spec, base, models, threads=args.threads)
    print(format_table(result))
    if args.out:
        save_result(result, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _shared(p, model=True):
    p.add_argument("--scene", default="desk",
                   help="robot/scene file, or the name of a shipped scene (desk, desk_open, ur5_iiwa)")
    if model:
        p.add_argument("--model-file", help="time approximator model file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _solver_flags(p):
    p.add_argument("--config", help="solver config YAML")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--time-term", choices=("none", "distance", "approximator"))
    p.add_argument("--selection", choices=("best-pose", "best-time", "best-cost"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timeik", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="sample configuration pairs and time them")
    _shared(p, model=False)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write a CSV export")
    p.add_argument("--budget", type=int, default=5000, help="planner extension budget")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a time approximator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--target", choices=("blind", "cf"), default="blind")
    p.add_argument("--epochs", type=int, help="default 45")
    p.add_argument("--batch-size", type=int, help="default 256")
    p.add_argument("--lr", type=float, help="initial learning rate, default 1e-3")
    p.add_argument("--weight-decay", type=float, help="decoupled weight decay, default 0")
    p.add_argument("--hidden", type=_ints, help="hidden widths, default 256,256,128")
    p.add_argument("--activation", choices=("silu", "tanh", "softplus"))
    p.add_argument("--mse", action="store_true", help="train on squared error instead of Huber")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log JSON (default: next to the model)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one relative-pose IK problem")
    _shared(p)
    _solver_flags(p)
    p.add_argument("--q0", type=_floats, required=True, help="start configuration, comma-separated")
    p.add_argument("--target", type=_floats, help="relative pose x,y,z,qw,qx,qy,qz")
    p.add_argument("--target-q", type=_floats, help="configuration whose relative pose is the target")
    p.add_argument("--out", help="report JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run the method comparison")
    _shared(p)
    _solver_flags(p)
    p.add_argument("--cf-model-file", help="collision-aware time approximator (method G)")
    p.add_argument("--methods", default="reference," + ",".join(METHODS))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", help="results JSON")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DivergenceError, NoFreeSampleError, PlanningError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NoSolutionError as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (ContractViolation, ModelFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
