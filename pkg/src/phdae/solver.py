"""Implicit backward-Euler integration of pH-DAE models.

Each step solves the residual

    r(x_n) = (E/h) x_n - (E/h) x_{n-1} - (J - R) Q x_n - G u_n = 0

with Newton's method. The residual Jacobian J_r = E/h - J Q + R Q is
state-independent for this linear model class, so it is factorized once
per (model, h) and Newton lands on the exact step in a single iteration.
Algebraic rows (exact zero rows of E) are solved, not integrated, so the
constraints hold at every accepted step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InvalidParameter,
    NoConvergence,
    SingularAlgebraicBlock,
    SingularJacobian,
    SingularMatrix,
)
from .model import PhDaeModel

__all__ = [
    "SolverConfig",
    "Trajectory",
    "StepSolver",
    "residual",
    "residual_jacobian",
    "newton_step",
    "simulate",
    "consistent_initialize",
    "algebraic_rows",
]


@dataclass(frozen=True)
class SolverConfig:
    """Step size h (seconds, the sampling period), Newton stopping tolerance
    on the correction norm, and the iteration cap."""

    h: float
    epsilon: float = 1e-10
    max_newton_iters: int = 20

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidParameter(f"step size must be positive, got {self.h}")
        if not self.epsilon > 0:
            raise InvalidParameter(f"epsilon must be positive, got {self.epsilon}")
        if self.max_newton_iters < 1:
            raise InvalidParameter("max_newton_iters must be at least 1")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray   # (K+1, n), row 0 is the initial state
    outputs: np.ndarray  # (K+1, m), outputs[k] = G^T Q states[k]
    times: np.ndarray    # sample indices 0..K


def _input_vector(u, m: int) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u.shape != (m,):
        raise DimensionMismatch(f"input shape {u.shape} != ({m},)")
    return u


def residual(model: PhDaeModel, x_n, x_prev, u_n, h: float) -> np.ndarray:
    """Backward-Euler residual r(x_n); exact linear evaluation."""
    x_n = np.asarray(x_n, dtype=np.float64)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    if x_n.shape != (model.n,) or x_prev.shape != (model.n,):
        raise DimensionMismatch("state length does not match the model")
    u = _input_vector(u_n, model.m)
    eh = model.e / h
    return eh @ x_n - eh @ x_prev - (model.j - model.r) @ (model.q @ x_n) - model.g @ u


def residual_jacobian(model: PhDaeModel, h: float) -> np.ndarray:
    """J_r = (1/h) E - J Q + R Q; constant in x, computed once per step size."""
    if not h > 0:
        raise InvalidParameter(f"step size must be positive, got {h}")
    return model.e / h - model.j @ model.q + model.r @ model.q


class StepSolver:
    """Cached step operator for a fixed (model, h): holds J_r and its LU
    factorization, reused across all steps and shared with the adjoint."""

    def __init__(self, model: PhDaeModel, config: SolverConfig):
        self.model = model
        self.config = config
        self.j_r = residual_jacobian(model, config.h)
        try:
            self.lu = linalg.lu_factor(self.j_r)
        except SingularMatrix as exc:
            raise SingularJacobian(
                f"J_r singular at h={config.h}: {exc}"
            ) from exc
        self._eh = model.e / config.h
        self._a = (model.j - model.r) @ model.q

    def _residual(self, x, x_prev, u):
        return self._eh @ (x - x_prev) - self._a @ x - self.model.g @ u

    def step(self, x_prev, u_n, x_init=None):
        """Advance one sample; returns (x_n, newton iterations used).

        An iteration is one solve+update; convergence is declared when the
        next correction would have norm below epsilon. Warm-starts from
        x_prev unless an explicit initial iterate is given.
        """
        x_prev = np.asarray(x_prev, dtype=np.float64)
        u = _input_vector(u_n, self.model.m)
        x = x_prev if x_init is None else np.asarray(x_init, dtype=np.float64)
        dx = linalg.lu_solve(self.lu, -self._residual(x, x_prev, u))
        for iters in range(1, self.config.max_newton_iters + 1):
            x = x + dx
            dx = linalg.lu_solve(self.lu, -self._residual(x, x_prev, u))
            if linalg.norm2(dx) < self.config.epsilon:
                return x, iters
        raise NoConvergence(
            f"Newton did not converge in {self.config.max_newton_iters} iterations"
        )


def newton_step(model: PhDaeModel, x_prev, u_n, h: float, config: SolverConfig,
                x_init=None):
    """One backward-Euler step via Newton; see StepSolver.step.

    The explicit h takes precedence over config.h.
    """
    solver = StepSolver(
        model,
        SolverConfig(h=h, epsilon=config.epsilon,
                     max_newton_iters=config.max_newton_iters),
    )
    return solver.step(x_prev, u_n, x_init=x_init)


def simulate(model: PhDaeModel, x0, inputs, config: SolverConfig) -> Trajectory:
    """Propagate the model over a sequence of inputs.

    inputs[k] drives the step from sample k to k+1, so the returned
    trajectory has len(inputs)+1 samples starting at x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (model.n,):
        raise DimensionMismatch(f"x0 length {x0.shape} != ({model.n},)")
    u = np.asarray(inputs, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != model.m:
        raise DimensionMismatch(f"inputs shape {u.shape} incompatible with m={model.m}")
    solver = StepSolver(model, config)
    k_steps = u.shape[0]
    states = np.empty((k_steps + 1, model.n))
    states[0] = x0
    for k in range(k_steps):
        try:
            states[k + 1], _ = solver.step(states[k], u[k])
        except NoConvergence as exc:
            raise NoConvergence(f"step {k + 1}: {exc}") from exc
    outputs = states @ (model.g.T @ model.q).T
    return Trajectory(states=states, outputs=outputs,
                      times=np.arange(k_steps + 1))


def algebraic_rows(model: PhDaeModel) -> np.ndarray:
    """Indices of exact zero rows of E (equations with no derivative)."""
    return np.flatnonzero(~model.e.any(axis=1))


def consistent_initialize(model: PhDaeModel, x_diff, u0) -> np.ndarray:
    """Complete a differential-state guess to a state on the constraint
    manifold: the algebraic rows of (J-R)Q x + G u0 = 0 are solved for the
    algebraic components, the differential components are kept."""
    alg = algebraic_rows(model)
    diff = np.setdiff1d(np.arange(model.n), alg)
    x_diff = np.atleast_1d(np.asarray(x_diff, dtype=np.float64))
    if x_diff.shape != (diff.size,):
        raise DimensionMismatch(
            f"expected {diff.size} differential components, got {x_diff.shape}"
        )
    x = np.zeros(model.n)
    x[diff] = x_diff
    if alg.size == 0:
        return x
    u = _input_vector(u0, model.m)
    a = (model.j - model.r) @ model.q
    rhs = -(a[np.ix_(alg, diff)] @ x_diff + (model.g @ u)[alg])
    try:
        fac = linalg.lu_factor(a[np.ix_(alg, alg)])
    except SingularMatrix as exc:
        raise SingularAlgebraicBlock(str(exc)) from exc
    x[alg] = linalg.lu_solve(fac, rhs)
    return x
