"""DC power network benchmark: a generator feeding a load through a
pi-model transmission line, written as a five-state descriptor system.

State x = (I, V1, V2, I_G, I_R) with E = diag(L, C1, C2, 0, 0),
R = diag(R_L, 0, 0, R_G, R_R), G = (0, 0, 0, 1, 0)^T, Q = I and the fixed
interconnection matrix J below. The two zero rows of E make the generator
and load branch equations purely algebraic, so the model is a genuine
index-1 DAE. The interconnection and input matrices (J, Q, G) are frozen
by the known topology; only the six physical component values enter the
free parameter vector, as the diagonal entries of the E and R factors.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameter
from .model import PhDaeModel, PhDaeParams, StructuralMask, assemble
from .signals import Dataset, MultisineSpec, add_noise, multisine, stream_rng
from .solver import SolverConfig, consistent_initialize, simulate
from .training import (
    TrainConfig,
    evaluate_nrms,
    initialize_encoder,
    train,
)

log = logging.getLogger(__name__)

__all__ = [
    "DcNetParams",
    "NOMINAL",
    "PARAM_NAMES",
    "RECOVERY_SELECTOR",
    "ExperimentReport",
    "build_dc_network",
    "build_scalar_system",
    "estimates_from_params",
    "initial_guess",
    "generate_datasets",
    "run_table1",
    "run_param_recovery",
    "run_single_experiment",
]

# RNG stream purposes (spawn keys)
STREAM_PHASES = 1
STREAM_X0 = 2
STREAM_NOISE = 3
STREAM_THETA = 4
STREAM_ENCODER = 5
STREAM_DATASET = 10


@dataclass(frozen=True)
class DcNetParams:
    """Physical component values; all strictly positive."""

    L: float = 2.0
    C1: float = 0.01
    C2: float = 0.02
    R_L: float = 1.0
    R_G: float = 6.0
    R_R: float = 3.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be strictly positive")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}


PARAM_NAMES = ("L", "C1", "C2", "R_L", "R_G", "R_R")

NOMINAL = DcNetParams()

# Kirchhoff interconnection of the five branch/node equations.
J_TOPOLOGY = np.array([
    [0.0, -1.0, 1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, -1.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0, -1.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
])

G_TOPOLOGY = np.array([[0.0], [0.0], [0.0], [1.0], [0.0]])

# Extra measured channels (V1, V2) for the parameter-recovery experiments.
RECOVERY_SELECTOR = np.array([
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
])

# (matrix attribute, row, col) of each physical parameter's factor entry
_FACTOR_SLOTS = {
    "L": ("l_e", 0, 0),
    "C1": ("l_e", 1, 1),
    "C2": ("l_e", 2, 2),
    "R_L": ("l_r", 0, 0),
    "R_G": ("l_r", 3, 3),
    "R_R": ("l_r", 4, 4),
}


def build_dc_network(p: DcNetParams):
    """Assemble the network model and its masked parametrization.

    Exactly six factor entries are free (the square roots of the component
    values); J, Q, G and the structural zeros are frozen, so E and R stay
    diagonal with the correct zero pattern for every theta.
    """
    l_e = np.diag([np.sqrt(p.L), np.sqrt(p.C1), np.sqrt(p.C2), 0.0, 0.0])
    mask_e = StructuralMask(
        pattern=np.diag([True, True, True, False, False]),
        frozen=np.zeros((5, 5)),
    )
    l_r = np.diag([np.sqrt(p.R_L), 0.0, 0.0, np.sqrt(p.R_G), np.sqrt(p.R_R)])
    mask_r = StructuralMask(
        pattern=np.diag([True, False, False, True, True]),
        frozen=np.zeros((5, 5)),
    )
    params = PhDaeParams(
        m_j=J_TOPOLOGY.copy(),
        mask_j=StructuralMask.fixed(J_TOPOLOGY),
        l_r=l_r,
        mask_r=mask_r,
        l_e=l_e,
        mask_e=mask_e,
        g=G_TOPOLOGY.copy(),
        mask_g=StructuralMask.fixed(G_TOPOLOGY),
    )
    return assemble(params), params


def build_scalar_system(e: float = 1.0, r: float = 0.5, g: float = 1.0):
    """One-state pH-ODE e x' = -r x + g u, y = g x; free E and R factors.

    Identifiable toy used by the noiseless training examples.
    """
    if e <= 0 or r <= 0:
        raise InvalidParameter("e and r must be strictly positive")
    params = PhDaeParams(
        m_j=np.zeros((1, 1)),
        mask_j=StructuralMask.fixed(np.zeros((1, 1))),
        l_r=np.array([[np.sqrt(r)]]),
        mask_r=StructuralMask.free((1, 1)),
        l_e=np.array([[np.sqrt(e)]]),
        mask_e=StructuralMask.free((1, 1)),
        g=np.array([[g]]),
        mask_g=StructuralMask.fixed(np.array([[g]])),
    )
    return assemble(params), params


def estimates_from_params(params: PhDaeParams) -> dict:
    """Physical component estimates: squares of the fitted factor entries."""
    mats = {"l_e": params.mask_e.apply(params.l_e),
            "l_r": params.mask_r.apply(params.l_r)}
    return {name: float(mats[mat][i, j] ** 2)
            for name, (mat, i, j) in _FACTOR_SLOTS.items()}


def deviations_pct(estimates: dict, truth: DcNetParams) -> dict:
    return {name: 100.0 * abs(estimates[name] - getattr(truth, name))
            / getattr(truth, name) for name in PARAM_NAMES}


def initial_guess(template: PhDaeParams, rng: np.random.Generator,
                  low: float = 0.5, high: float = 1.5) -> PhDaeParams:
    """Random starting point away from the truth: free factor entries drawn
    uniform [low, high)."""
    theta = rng.uniform(low, high, template.n_theta)
    return template.with_theta(theta)


def _generate_one(model: PhDaeModel, seed: int, snr_db: float, *,
                  duration: float, t_s: float, f0: float, n_sines: int,
                  amplitude: float, selector, oversample: int,
                  solver: SolverConfig) -> Dataset:
    """One dataset: fresh multisine phases, fresh consistent initial
    condition, truth simulated with the backward-Euler solver, Gaussian
    noise on the outputs at the requested SNR."""
    n_samples = int(round(duration / t_s))
    spec = MultisineSpec.random(f0, n_sines, stream_rng(seed, STREAM_PHASES),
                                amplitude=amplitude)
    times = np.arange(n_samples) * t_s
    u = multisine(spec, times)[:, None]

    n_diff = model.n - np.sum(~model.e.any(axis=1))
    x_diff = stream_rng(seed, STREAM_X0).uniform(-0.5, 0.5, int(n_diff))
    x0 = consistent_initialize(model, x_diff, u[0])

    if oversample > 1:
        fine = replace(solver, h=t_s / oversample)
        t_fine = np.arange(1, (n_samples - 1) * oversample + 1) * fine.h
        traj = simulate(model, x0, multisine(spec, t_fine)[:, None], fine)
        states = traj.states[::oversample]
    else:
        states = simulate(model, x0, u[1:], solver).states

    y_clean = states @ (model.g.T @ model.q).T
    if selector is not None:
        y_clean = np.hstack([y_clean, states @ np.asarray(selector).T])
    y, noise_std = add_noise(y_clean, snr_db, stream_rng(seed, STREAM_NOISE))
    return Dataset(t_s=t_s, inputs=u, outputs=y, outputs_clean=y_clean,
                   snr_db=snr_db, noise_std=noise_std, seed=seed)


def generate_datasets(p: DcNetParams, snr_db: float, seeds, *,
                      duration: float = 50.0, t_s: float = 0.005,
                      f0: float = 0.1, n_sines: int = 40,
                      amplitude: float = 1.0, measurement: str = "port",
                      oversample: int = 1,
                      solver: SolverConfig | None = None):
    """(train, val, test) datasets with independent seeds, input
    realizations and initial conditions."""
    if len(seeds) != 3:
        raise InvalidParameter("need one seed per dataset (train, val, test)")
    model, _ = build_dc_network(p)
    selector = RECOVERY_SELECTOR if measurement == "recovery" else None
    if measurement not in ("port", "recovery"):
        raise InvalidParameter(f"unknown measurement set '{measurement}'")
    solver = solver or SolverConfig(h=t_s)
    return tuple(
        _generate_one(model, int(seed), snr_db, duration=duration, t_s=t_s,
                      f0=f0, n_sines=n_sines, amplitude=amplitude,
                      selector=selector, oversample=oversample, solver=solver)
        for seed in seeds
    )


def _dataset_seeds(seed: int, run: int):
    return tuple(
        int(np.random.SeedSequence(seed, spawn_key=(STREAM_DATASET, run, d))
            .generate_state(1)[0])
        for d in range(3)
    )


def build_system(config):
    """(model, params template, selector) for the configured system."""
    if config.system == "dcnet":
        model, params = build_dc_network(config.dcnet)
        selector = RECOVERY_SELECTOR if config.measurement == "recovery" else None
        return model, params, selector
    if config.system == "scalar":
        model, params = build_scalar_system(config.scalar_e, config.scalar_r)
        return model, params, None
    raise InvalidParameter(f"unknown system '{config.system}'")


def generate_from_config(config):
    """(train, val, test) datasets for a config; dataset seeds are derived
    from config.seed so a manifest regenerates identical files."""
    model, _, selector = build_system(config)
    seeds = _dataset_seeds(config.seed, 0)
    solver = SolverConfig(h=config.t_s,
                          epsilon=config.train.newton.epsilon,
                          max_newton_iters=config.train.newton.max_newton_iters)
    return tuple(
        _generate_one(model, seed, config.effective_snr_db,
                      duration=config.duration, t_s=config.t_s, f0=config.f0,
                      n_sines=config.n_sines, amplitude=config.amplitude,
                      selector=selector, oversample=config.oversample,
                      solver=solver)
        for seed in seeds
    )


@dataclass
class ExperimentReport:
    """Per-run records plus aggregate statistics of one benchmark."""

    kind: str
    records: list
    aggregates: dict


def run_single_experiment(config, run_seed: int, snr_db: float,
                          measurement: str,
                          train_config: TrainConfig) -> dict:
    """Generate data, train from a random initial guess, evaluate on the
    test set, and extract physical parameter estimates."""
    truth = config.dcnet
    seeds = _dataset_seeds(run_seed, 0)
    solver = SolverConfig(h=config.t_s, epsilon=train_config.newton.epsilon,
                          max_newton_iters=train_config.newton.max_newton_iters)
    train_ds, val_ds, test_ds = generate_datasets(
        truth, snr_db, seeds, duration=config.duration, t_s=config.t_s,
        f0=config.f0, n_sines=config.n_sines, amplitude=config.amplitude,
        measurement=measurement, oversample=config.oversample, solver=solver,
    )
    selector = RECOVERY_SELECTOR if measurement == "recovery" else None
    _, template = build_dc_network(truth)
    params0 = initial_guess(template, stream_rng(run_seed, STREAM_THETA),
                            config.init_low, config.init_high)
    n_lag = train_config.n_lag if train_config.n_lag is not None else template.n
    encoder0 = initialize_encoder(template.n, n_lag, train_ds.n_inputs,
                                  train_ds.n_outputs,
                                  stream_rng(run_seed, STREAM_ENCODER))
    tc = replace(train_config, seed=run_seed, newton=solver)
    state = train(train_ds, val_ds, params0, encoder0, tc, selector=selector)
    best_params = template.with_theta(state.best_theta)
    best_model = assemble(best_params)
    best_encoder = encoder0.with_eta(state.best_eta)
    test_nrms = evaluate_nrms(best_model, best_encoder, test_ds,
                              n_lag=n_lag, solver=solver, selector=selector)
    estimates = estimates_from_params(best_params)
    return {
        "seed": run_seed,
        "snr_db": snr_db,
        "noise_std": _scalar_noise_std(test_ds),
        "test_nrms": test_nrms,
        "estimates": estimates,
        "deviations_pct": deviations_pct(estimates, truth),
        "state": state,
        "params": best_params,
        "encoder": best_encoder,
        "n_lag": n_lag,
        "selector": selector,
        "datasets": (train_ds, val_ds, test_ds),
    }


def _scalar_noise_std(ds: Dataset):
    std = ds.noise_std
    if std is None:
        return None
    return float(np.atleast_1d(std)[0])


def _table1_job(args):
    config, snr_db = args
    result = run_single_experiment(config, config.seed, snr_db, "port",
                                   config.train)
    return {"snr_db": snr_db, "noise_std": result["noise_std"],
            "nrms": result["test_nrms"], "seed": result["seed"]}


def _recovery_job(args):
    config, run = args
    run_seed = int(np.random.SeedSequence(config.seed, spawn_key=(run,))
                   .generate_state(1)[0])
    tc = config.train
    if config.recovery_epochs is not None:
        tc = replace(tc, epochs=config.recovery_epochs)
    if config.recovery_lr_end is not None:
        tc = replace(tc, lr_end=config.recovery_lr_end)
    result = run_single_experiment(config, run_seed, config.recovery_snr_db,
                                   "recovery", tc)
    return {"run": run, "seed": run_seed, "snr_db": config.recovery_snr_db,
            "nrms": result["test_nrms"], "estimates": result["estimates"],
            "deviations_pct": result["deviations_pct"]}


def _run_jobs(worker, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def run_table1(config, workers: int | None = None) -> ExperimentReport:
    """Test NRMS against measurement noise level: one full training run per
    SNR in config.table1_snrs."""
    workers = workers if workers is not None else config.workers
    jobs = [(config, float(snr)) for snr in config.table1_snrs]
    records = _run_jobs(_table1_job, jobs, workers)
    for rec in records:
        log.info("table1: SNR %.0f dB -> test NRMS %.4f",
                 rec["snr_db"], rec["nrms"])
    return ExperimentReport(kind="table1", records=records, aggregates={})


def run_param_recovery(config, workers: int | None = None) -> ExperimentReport:
    """Normalized parameter deviations over independent runs at the
    recovery SNR with the (I_G, V1, V2) measurement set."""
    workers = workers if workers is not None else config.workers
    jobs = [(config, run) for run in range(config.recovery_runs)]
    records = _run_jobs(_recovery_job, jobs, workers)
    per_param = {
        name: np.array([rec["deviations_pct"][name] for rec in records])
        for name in PARAM_NAMES
    }
    aggregates = {
        name: {
            "min": float(v.min()),
            "q1": float(np.percentile(v, 25)),
            "median": float(np.median(v)),
            "q3": float(np.percentile(v, 75)),
            "max": float(v.max()),
        }
        for name, v in per_param.items()
    }
    for rec in records:
        log.info("recovery run %d: max deviation %.4f%%, test NRMS %.4f",
                 rec["run"], max(rec["deviations_pct"].values()), rec["nrms"])
    return ExperimentReport(kind="recovery", records=records,
                            aggregates=aggregates)
