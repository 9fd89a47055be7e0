"""Command-line front end.

Commands: generate, train, eval, bench table1, bench recovery. Experiment
knobs live in config files; flags only select the command, paths, seed,
and worker count. Logs go to stderr, machine-parsable key=value lines to
stdout. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dcnet, report
from .config import ExperimentConfig, config_to_dict, load_config
from .errors import InvalidParameter, PhDaeError
from .model import assemble, load_model, save_model
from .signals import read_csv, write_csv
from .solver import SolverConfig
from .training import LinearEncoder, initialize_encoder, nrms, predict_dataset, train

log = logging.getLogger("phdae")


def _emit(key: str, value) -> None:
    print(f"{key}={value}")


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed,
                         train=replace(config.train, seed=args.seed))
    if getattr(args, "workers", None) is not None:
        config = replace(config, workers=args.workers)
    return config


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None) is None:
        return _apply_overrides(ExperimentConfig(), args)
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return _apply_overrides(load_config(path), args)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    datasets = dcnet.generate_from_config(config)
    manifest = {
        "config": config_to_dict(config),
        "dataset_seeds": [ds.seed for ds in datasets],
        "files": {},
    }
    for name, ds in zip(("train", "val", "test"), datasets):
        path = out / f"{name}.csv"
        write_csv(ds, path)
        manifest["files"][name] = path.name
        _emit(name, path)
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    _emit("manifest", manifest_path)
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    data_dir = Path(args.data)
    train_path = data_dir / "train.csv"
    val_path = data_dir / "val.csv"
    for path in (train_path, val_path):
        if not path.exists():
            raise FileNotFoundError(f"dataset not found: {path}")
    train_ds = read_csv(train_path)
    val_ds = read_csv(val_path)
    out = _out_dir(args)

    _, template, selector = dcnet.build_system(config)
    solver = SolverConfig(h=train_ds.t_s,
                          epsilon=config.train.newton.epsilon,
                          max_newton_iters=config.train.newton.max_newton_iters)
    train_config = replace(config.train, seed=config.seed, newton=solver)
    n_lag = train_config.n_lag if train_config.n_lag is not None else template.n
    params0 = dcnet.initial_guess(
        template, dcnet.stream_rng(config.seed, dcnet.STREAM_THETA),
        config.init_low, config.init_high)
    encoder0 = initialize_encoder(
        template.n, n_lag, train_ds.n_inputs, train_ds.n_outputs,
        dcnet.stream_rng(config.seed, dcnet.STREAM_ENCODER))

    state = train(train_ds, val_ds, params0, encoder0, train_config,
                  selector=selector)

    best_params = template.with_theta(state.best_theta)
    best_encoder = encoder0.with_eta(state.best_eta)
    model_path = out / "model.json"
    save_model(model_path, assemble(best_params), params=best_params,
               selector=selector,
               extra={
                   "encoder": {"weight": best_encoder.weight.tolist(),
                               "bias": best_encoder.bias.tolist()},
                   "n_lag": n_lag,
                   "solver": {"epsilon": solver.epsilon,
                              "max_newton_iters": solver.max_newton_iters},
               })
    log_path = out / "training_log.csv"
    report.write_training_log_csv(state.history, log_path)
    report.render_training_log(state.history, out / "training_log.png")
    _emit("model", model_path)
    _emit("log", log_path)
    if state.history:
        _emit("best_val_nrms", repr(state.best_val_nrms))
        _emit("final_train_loss", repr(state.history[-1].train_loss))
    return 0


def cmd_eval(args) -> int:
    model_path = Path(args.model)
    data_path = Path(args.data)
    for path in (model_path, data_path):
        if not path.exists():
            raise FileNotFoundError(f"file not found: {path}")
    bundle = load_model(model_path)
    if "encoder" not in bundle:
        raise InvalidParameter(f"{model_path} carries no encoder section")
    encoder = LinearEncoder(
        weight=np.asarray(bundle["encoder"]["weight"]),
        bias=np.asarray(bundle["encoder"]["bias"]))
    dataset = read_csv(data_path)
    solver_doc = bundle.get("solver", {})
    solver = SolverConfig(h=dataset.t_s,
                          epsilon=solver_doc.get("epsilon", 1e-10),
                          max_newton_iters=solver_doc.get("max_newton_iters", 20))
    times, y_meas, y_sim = predict_dataset(
        bundle["model"], encoder, dataset, n_lag=int(bundle["n_lag"]),
        solver=solver, selector=bundle.get("selector"))
    value = nrms(y_meas, y_sim)
    out = _out_dir(args)
    traj_path = out / "trajectory.csv"
    report.write_trajectory_csv(times, y_meas, y_sim, traj_path)
    report.render_trajectory(times, y_meas, y_sim, out / "trajectory.png")
    _emit("nrms", repr(value))
    _emit("trajectory", traj_path)
    return 0


def cmd_bench(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    if args.which == "table1":
        rep = dcnet.run_table1(config)
        csv_path = out / "table1.csv"
        report.write_table1_csv(rep, csv_path)
        report.render_table1(rep, out / "table1.png")
        _emit("report", csv_path)
        for rec in rep.records:
            _emit(f"nrms_{int(rec['snr_db'])}db", repr(rec["nrms"]))
    else:
        rep = dcnet.run_param_recovery(config)
        csv_path = out / "param_recovery.csv"
        report.write_recovery_csv(rep, csv_path)
        report.render_recovery(rep, out / "param_recovery.png")
        _emit("report", csv_path)
        worst = max(max(rec["deviations_pct"].values()) for rec in rep.records)
        _emit("max_deviation_pct", repr(worst))
    _emit("figure", out / (csv_path.stem + ".png"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phdae",
        description="Identification of linear port-Hamiltonian descriptor "
                    "systems from input-output data.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int,
                        help="parallel runs for benchmarks")

    p = sub.add_parser("generate", parents=[common],
                       help="generate train/val/test datasets plus a manifest")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common],
                       help="train on generated datasets")
    p.add_argument("--data", required=True,
                   help="directory holding train.csv and val.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a trained model on a dataset")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--data", required=True, help="dataset CSV file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common],
                       help="reproduce the benchmark experiments")
    p.add_argument("which", choices=("table1", "recovery"))
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, InvalidParameter, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PhDaeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
