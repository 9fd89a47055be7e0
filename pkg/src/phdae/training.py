"""Subspace-encoder training of pH-DAE models on input-output data.

A subsection starting at sample tau consists of the past window
(u_{tau-n_lag}..u_{tau-1}, y_{tau-n_lag}..y_tau) feeding a linear encoder
that estimates the state at tau, followed by T measured targets
y_tau..y_{tau+T-1} that the simulated outputs must match. The mean of the
per-subsection losses over a sampled batch is minimized with Adam on the
joint parameter vector (theta, eta).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import gradients
from .errors import (
    DimensionMismatch,
    InsufficientData,
    InvalidParameter,
    PhDaeError,
    SingularJacobian,
    SolverFailure,
)
from .model import PhDaeModel, PhDaeParams, assemble
from .signals import Dataset, stream_rng
from .solver import SolverConfig, simulate

log = logging.getLogger(__name__)

__all__ = [
    "LinearEncoder",
    "Subsection",
    "TrainConfig",
    "TrainState",
    "EpochRecord",
    "encoder_input_size",
    "initialize_encoder",
    "valid_subsection_starts",
    "extract_subsection",
    "sample_batch",
    "subsection_loss",
    "adam_step",
    "train",
    "predict_dataset",
    "nrms",
    "evaluate_nrms",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# spawn keys for seed-derived RNG streams
STREAM_BATCH = 6


def encoder_input_size(n_lag: int, m_u: int, m_y: int) -> int:
    # the output window carries one more sample (y_tau) than the inputs
    return n_lag * (m_u + m_y) + m_y


@dataclass(frozen=True)
class LinearEncoder:
    """Affine initial-state estimator x = weight @ z + bias, where z stacks
    the past inputs then past outputs in time order."""

    weight: np.ndarray  # (n, n_lag*(m_u+m_y) + m_y)
    bias: np.ndarray    # (n,)

    def __post_init__(self):
        weight = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise DimensionMismatch(
                f"weight {weight.shape} incompatible with bias {bias.shape}"
            )
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def n(self) -> int:
        return self.weight.shape[0]

    @property
    def n_eta(self) -> int:
        return self.weight.size + self.bias.size

    def to_eta(self) -> np.ndarray:
        return np.concatenate([self.weight.ravel(), self.bias])

    def with_eta(self, eta) -> "LinearEncoder":
        eta = np.asarray(eta, dtype=np.float64)
        if eta.shape != (self.n_eta,):
            raise DimensionMismatch(f"eta length {eta.shape} != {self.n_eta}")
        n_w = self.weight.size
        return LinearEncoder(weight=eta[:n_w].reshape(self.weight.shape),
                             bias=eta[n_w:].copy())

    def encode(self, u_past, y_past) -> np.ndarray:
        """Estimate the state from the past window; the output window must
        be one sample longer than the input window."""
        u_past = np.atleast_2d(np.asarray(u_past, dtype=np.float64))
        y_past = np.atleast_2d(np.asarray(y_past, dtype=np.float64))
        if y_past.shape[0] != u_past.shape[0] + 1:
            raise DimensionMismatch(
                "output window must contain one more sample than the input window"
            )
        z = np.concatenate([u_past.ravel(), y_past.ravel()])
        if z.shape != (self.weight.shape[1],):
            raise DimensionMismatch(
                f"window size {z.shape} != encoder input size {self.weight.shape[1]}"
            )
        return self.weight @ z + self.bias


def initialize_encoder(n: int, n_lag: int, m_u: int, m_y: int,
                       rng: np.random.Generator) -> LinearEncoder:
    """Small random weights keep epoch-0 gradients informative without
    large initial-state errors."""
    d = encoder_input_size(n_lag, m_u, m_y)
    return LinearEncoder(weight=0.01 * rng.standard_normal((n, d)),
                         bias=np.zeros(n))


@dataclass(frozen=True)
class Subsection:
    """One training window: past samples for the encoder plus T targets."""

    u_past: np.ndarray    # (n_lag, m_u)
    y_past: np.ndarray    # (n_lag+1, m_y)
    u_step: np.ndarray    # (T-1, m_u), inputs driving the solver steps
    y_target: np.ndarray  # (T, m_y)

    def encoder_input(self) -> np.ndarray:
        return np.concatenate([self.u_past.ravel(), self.y_past.ravel()])


def valid_subsection_starts(n_samples: int, t_len: int, n_lag: int) -> np.ndarray:
    """Start indices tau with a full past window and T targets in range."""
    if n_samples < n_lag + t_len:
        return np.empty(0, dtype=int)
    return np.arange(n_lag, n_samples - t_len + 1)


def extract_subsection(dataset: Dataset, tau: int, t_len: int,
                       n_lag: int) -> Subsection:
    if tau < n_lag or tau + t_len > dataset.n_samples:
        raise InsufficientData(
            f"subsection at tau={tau} (T={t_len}, n_lag={n_lag}) exceeds the dataset"
        )
    return Subsection(
        u_past=dataset.inputs[tau - n_lag:tau],
        y_past=dataset.outputs[tau - n_lag:tau + 1],
        u_step=dataset.inputs[tau + 1:tau + t_len],
        y_target=dataset.outputs[tau:tau + t_len],
    )


def sample_batch(dataset: Dataset, t_len: int, n_lag: int, batch_size: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Sample batch_size start indices uniformly without replacement from
    the valid range; deterministic given the generator state."""
    starts = valid_subsection_starts(dataset.n_samples, t_len, n_lag)
    if starts.size == 0:
        raise InsufficientData(
            f"dataset of {dataset.n_samples} samples admits no subsection "
            f"with T={t_len}, n_lag={n_lag}"
        )
    if batch_size > starts.size:
        raise InsufficientData(
            f"batch_size {batch_size} exceeds {starts.size} valid starts"
        )
    return rng.choice(starts, size=batch_size, replace=False)


def subsection_loss(params: PhDaeParams, encoder: LinearEncoder,
                    subsection: Subsection, config: SolverConfig,
                    selector=None) -> float:
    """Per-subsection simulation loss (1/T) sum_k |y_k - yhat_k|^2."""
    z = subsection.encoder_input()[None, :]
    return gradients.batch_loss(params, encoder, z,
                                subsection.u_step[None, :, :],
                                subsection.y_target[None, :, :],
                                config, selector=selector)


@dataclass(frozen=True)
class TrainConfig:
    truncation_length: int = 40
    n_lag: int | None = None          # None: use the model state dimension
    batch_size: int = 256
    lr_start: float = 1e-2
    lr_end: float = 1e-3
    epochs: int = 300
    seed: int = 0
    newton: SolverConfig = field(default_factory=lambda: SolverConfig(h=0.005))

    def __post_init__(self):
        if self.truncation_length < 1:
            raise InvalidParameter("truncation_length must be >= 1")
        if self.n_lag is not None and self.n_lag < 1:
            raise InvalidParameter("n_lag must be >= 1")
        if self.batch_size < 1:
            raise InvalidParameter("batch_size must be >= 1")
        if not (self.lr_start >= self.lr_end > 0):
            raise InvalidParameter("need lr_start >= lr_end > 0")
        if self.epochs < 0:
            raise InvalidParameter("epochs must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_nrms: float
    lr: float


@dataclass
class TrainState:
    """Optimizer state: current parameters, Adam moments, and the
    best-validation snapshot."""

    theta: np.ndarray
    eta: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0
    best_theta: np.ndarray | None = None
    best_eta: np.ndarray | None = None
    best_val_nrms: float = np.inf
    best_epoch: int = -1
    history: list[EpochRecord] = field(default_factory=list)

    @staticmethod
    def initial(theta, eta) -> "TrainState":
        theta = np.asarray(theta, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        k = theta.size + eta.size
        return TrainState(theta=theta.copy(), eta=eta.copy(),
                          adam_m=np.zeros(k), adam_v=np.zeros(k),
                          best_theta=theta.copy(), best_eta=eta.copy())

    def packed(self) -> np.ndarray:
        return np.concatenate([self.theta, self.eta])

    def set_packed(self, p: np.ndarray) -> None:
        k = self.theta.size
        self.theta = p[:k].copy()
        self.eta = p[k:].copy()


def adam_step(state: TrainState, gradient: gradients.Gradient,
              lr: float) -> TrainState:
    """Standard Adam update with bias correction on the packed (theta, eta)
    vector; increments the step counter."""
    g = np.concatenate([gradient.d_theta, gradient.d_eta])
    if g.shape != state.adam_m.shape:
        raise DimensionMismatch(
            f"gradient length {g.shape} != parameter count {state.adam_m.shape}"
        )
    state.step += 1
    t = state.step
    state.adam_m = ADAM_BETA1 * state.adam_m + (1.0 - ADAM_BETA1) * g
    state.adam_v = ADAM_BETA2 * state.adam_v + (1.0 - ADAM_BETA2) * g * g
    m_hat = state.adam_m / (1.0 - ADAM_BETA1 ** t)
    v_hat = state.adam_v / (1.0 - ADAM_BETA2 ** t)
    p = state.packed()
    p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    state.set_packed(p)
    return state


def _learning_rate(config: TrainConfig, epoch: int) -> float:
    # geometric decay from lr_start (epoch 0) to lr_end (last epoch)
    if config.epochs <= 1 or config.lr_start == config.lr_end:
        return config.lr_start
    frac = epoch / (config.epochs - 1)
    return config.lr_start * (config.lr_end / config.lr_start) ** frac


def _stack_batch(dataset: Dataset, taus, t_len: int, n_lag: int):
    """Batched (Z, u_step, y_target) arrays for the given start indices."""
    u, y = dataset.inputs, dataset.outputs
    taus = np.asarray(taus)[:, None]
    n_batch = taus.shape[0]
    z_u = u[taus + np.arange(-n_lag, 0)].reshape(n_batch, -1)
    z_y = y[taus + np.arange(-n_lag, 1)].reshape(n_batch, -1)
    u_step = u[taus + np.arange(1, t_len)]
    y_tgt = y[taus + np.arange(t_len)]
    return np.hstack([z_u, z_y]), u_step, y_tgt


def _check_theta(params: PhDaeParams, theta, h: float) -> bool:
    try:
        gradients._factor(assemble(params.with_theta(theta)), h)
        return True
    except SingularJacobian:
        return False


def train(dataset_train: Dataset, dataset_val: Dataset, params: PhDaeParams,
          encoder: LinearEncoder, config: TrainConfig,
          selector=None) -> TrainState:
    """Minimize the batched subsection loss; returns the state with the
    best-validation snapshot.

    Each epoch shuffles all valid subsection starts into batches, takes one
    Adam step per batch on (theta, eta) jointly, and evaluates the
    full-simulation NRMS on the validation set. An update that makes J_r
    singular is rolled back and retried once at half the learning rate;
    a second failure aborts with SolverFailure.
    """
    n_lag = config.n_lag if config.n_lag is not None else params.n
    t_len = config.truncation_length
    newton = replace(config.newton, h=dataset_train.t_s)
    state = TrainState.initial(params.flatten(), encoder.to_eta())
    if not _check_theta(params, state.theta, newton.h):
        raise SolverFailure("initial parameters give a singular step Jacobian")

    starts = valid_subsection_starts(dataset_train.n_samples, t_len, n_lag)
    if starts.size == 0:
        raise InsufficientData(
            f"training set of {dataset_train.n_samples} samples admits no "
            f"subsection with T={t_len}, n_lag={n_lag}"
        )
    rng = stream_rng(config.seed, STREAM_BATCH)

    for epoch in range(config.epochs):
        lr = _learning_rate(config, epoch)
        order = rng.permutation(starts)
        losses = []
        for start in range(0, order.size, config.batch_size):
            taus = order[start:start + config.batch_size]
            z, u_step, y_tgt = _stack_batch(dataset_train, taus, t_len, n_lag)
            cur_params = params.with_theta(state.theta)
            cur_encoder = encoder.with_eta(state.eta)
            try:
                loss, grad = gradients.batch_loss_and_gradient(
                    cur_params, cur_encoder, z, u_step, y_tgt, newton,
                    selector=selector,
                )
            except PhDaeError as exc:
                raise SolverFailure(
                    f"epoch {epoch}, batch at tau={taus[0]}: {exc}"
                ) from exc
            losses.append(loss)
            snapshot = (state.theta.copy(), state.eta.copy(),
                        state.adam_m.copy(), state.adam_v.copy(), state.step)
            adam_step(state, grad, lr)
            if not _check_theta(params, state.theta, newton.h):
                # roll back and retry once at half the learning rate
                (state.theta, state.eta, state.adam_m, state.adam_v,
                 state.step) = snapshot
                adam_step(state, grad, 0.5 * lr)
                if not _check_theta(params, state.theta, newton.h):
                    raise SolverFailure(
                        f"epoch {epoch}, batch at tau={taus[0]}: update makes "
                        "J_r singular even at halved learning rate"
                    )
        try:
            val_nrms = evaluate_nrms(
                assemble(params.with_theta(state.theta)),
                encoder.with_eta(state.eta),
                dataset_val, n_lag=n_lag, solver=newton, selector=selector,
            )
        except PhDaeError as exc:
            raise SolverFailure(f"epoch {epoch}, validation: {exc}") from exc
        if val_nrms < state.best_val_nrms:
            state.best_val_nrms = val_nrms
            state.best_theta = state.theta.copy()
            state.best_eta = state.eta.copy()
            state.best_epoch = epoch
        train_loss = float(np.mean(losses)) if losses else 0.0
        state.history.append(EpochRecord(epoch=epoch, train_loss=train_loss,
                                         val_nrms=val_nrms, lr=lr))
        if epoch % 25 == 0 or epoch == config.epochs - 1:
            log.info("epoch %d: loss %.3e, val NRMS %.4f, lr %.2e",
                     epoch, train_loss, val_nrms, lr)
    return state


def predict_dataset(model: PhDaeModel, encoder: LinearEncoder,
                    dataset: Dataset, n_lag: int, solver: SolverConfig,
                    selector=None):
    """Full-length simulation from a single encoder-estimated state at
    tau = n_lag; returns (times, measured, simulated) over the evaluated
    range [n_lag, N)."""
    n = dataset.n_samples
    if n <= n_lag:
        raise InsufficientData(f"dataset length {n} <= n_lag {n_lag}")
    x0 = encoder.encode(dataset.inputs[:n_lag], dataset.outputs[:n_lag + 1])
    traj = simulate(model, x0, dataset.inputs[n_lag + 1:], solver)
    c = gradients.output_matrix(model, selector)
    y_sim = traj.states @ c.T
    y_meas = dataset.outputs[n_lag:]
    return dataset.times[n_lag:], y_meas, y_sim


def nrms(y_meas: np.ndarray, y_sim: np.ndarray) -> float:
    """Normalised root-mean-square error RMS/sigma_y per channel,
    aggregated as the root mean of squared per-channel values. sigma_y is
    the population std of the measured output over the evaluated range."""
    y_meas = _cols(y_meas)
    y_sim = _cols(y_sim)
    if y_meas.shape != y_sim.shape:
        raise DimensionMismatch(f"{y_meas.shape} vs {y_sim.shape}")
    sigma = y_meas.std(axis=0, ddof=0)
    if np.any(sigma == 0.0):
        raise InvalidParameter("measured output has a constant channel")
    per_channel = np.sqrt(np.mean((y_meas - y_sim) ** 2, axis=0)) / sigma
    return float(np.sqrt(np.mean(per_channel ** 2)))


def _cols(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def evaluate_nrms(model: PhDaeModel, encoder: LinearEncoder, dataset: Dataset,
                  n_lag: int, solver: SolverConfig, selector=None) -> float:
    _, y_meas, y_sim = predict_dataset(model, encoder, dataset, n_lag,
                                       solver, selector=selector)
    return nrms(y_meas, y_sim)
