"""Experiment configuration files.

All experiment knobs live here (JSON on disk); command-line flags only
select the command, paths, seed, and worker count, so a config plus a
seed regenerates every artifact byte-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

from .dcnet import DcNetParams
from .errors import InvalidParameter
from .solver import SolverConfig
from .training import TrainConfig

__all__ = ["ExperimentConfig", "load_config", "save_config", "config_to_dict"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one identification experiment."""

    system: str = "dcnet"                  # "dcnet" | "scalar"
    dcnet: DcNetParams = field(default_factory=DcNetParams)
    scalar_e: float = 1.0
    scalar_r: float = 0.5
    measurement: str = "port"              # "port" | "recovery"
    snr_db: float | None = 20.0            # None: noiseless
    duration: float = 50.0
    t_s: float = 0.005
    f0: float = 0.1
    n_sines: int = 40
    amplitude: float = 1.0
    oversample: int = 1
    seed: int = 2024
    workers: int | None = 1
    init_low: float = 0.5
    init_high: float = 1.5
    train: TrainConfig = field(default_factory=TrainConfig)
    table1_snrs: tuple = (30.0, 20.0, 10.0)
    recovery_runs: int = 10
    recovery_snr_db: float = 40.0
    recovery_epochs: int | None = None
    recovery_lr_end: float | None = None

    def __post_init__(self):
        if self.system not in ("dcnet", "scalar"):
            raise InvalidParameter(f"unknown system '{self.system}'")
        if self.measurement not in ("port", "recovery"):
            raise InvalidParameter(f"unknown measurement set '{self.measurement}'")
        if self.t_s <= 0 or self.duration <= 0:
            raise InvalidParameter("duration and t_s must be positive")
        if self.oversample < 1:
            raise InvalidParameter("oversample must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise InvalidParameter("workers must be >= 1")
        # solver step size follows the sampling period
        if self.train.newton.h != self.t_s:
            object.__setattr__(
                self, "train",
                replace(self.train, newton=replace(self.train.newton, h=self.t_s)),
            )

    @property
    def effective_snr_db(self) -> float:
        return math.inf if self.snr_db is None else float(self.snr_db)


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    doc["dcnet"] = config.dcnet.as_dict()
    doc["train"] = {
        "truncation_length": config.train.truncation_length,
        "n_lag": config.train.n_lag,
        "batch_size": config.train.batch_size,
        "lr_start": config.train.lr_start,
        "lr_end": config.train.lr_end,
        "epochs": config.train.epochs,
        "seed": config.train.seed,
        "newton_epsilon": config.train.newton.epsilon,
        "max_newton_iters": config.train.newton.max_newton_iters,
    }
    doc["table1_snrs"] = list(config.table1_snrs)
    return doc


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=1)
        fh.write("\n")


def _train_from_dict(doc: dict, t_s: float) -> TrainConfig:
    known = {
        "truncation_length", "n_lag", "batch_size", "lr_start", "lr_end",
        "epochs", "seed", "newton_epsilon", "max_newton_iters",
    }
    unknown = set(doc) - known
    if unknown:
        raise InvalidParameter(f"unknown train config keys: {sorted(unknown)}")
    newton = SolverConfig(
        h=t_s,
        epsilon=doc.get("newton_epsilon", 1e-10),
        max_newton_iters=doc.get("max_newton_iters", 20),
    )
    return TrainConfig(
        truncation_length=doc.get("truncation_length", 40),
        n_lag=doc.get("n_lag"),
        batch_size=doc.get("batch_size", 256),
        lr_start=doc.get("lr_start", 1e-2),
        lr_end=doc.get("lr_end", 1e-3),
        epochs=doc.get("epochs", 300),
        seed=doc.get("seed", 0),
        newton=newton,
    )


def load_config(path) -> ExperimentConfig:
    """Read a config file; unknown keys are rejected to catch typos."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise InvalidParameter(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    if "dcnet" in kwargs:
        kwargs["dcnet"] = DcNetParams(**kwargs["dcnet"])
    t_s = kwargs.get("t_s", 0.005)
    kwargs["train"] = _train_from_dict(kwargs.get("train", {}), t_s)
    if "table1_snrs" in kwargs:
        kwargs["table1_snrs"] = tuple(float(s) for s in kwargs["table1_snrs"])
    return ExperimentConfig(**kwargs)
