"""Reverse-accumulation gradients of the subsection loss through the
implicit solver.

The step map is the exact implicit solution x_n = J_r^{-1} ((E/h) x_{n-1}
+ G u_n), so its adjoint needs one transposed solve with the already
factorized J_r per step:

    lam      = J_r^{-T} xbar_n
    xbar_prev += (E/h)^T lam
    Ebar     += lam ((x_prev - x_n)/h)^T
    Jbar     += lam (Q x_n)^T
    Rbar     -= lam (Q x_n)^T
    Gbar     += lam u_n^T

Matrix adjoints are chained through the factor parametrizations
(E = L_E L_E^T etc.) afterwards and masked down to the free entries.
All routines are vectorized over a batch of subsections; the reduction
order over batch members is fixed, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import SingularJacobian, SingularMatrix
from .model import PhDaeModel, PhDaeParams, assemble
from .solver import SolverConfig, residual_jacobian

__all__ = [
    "Gradient",
    "MatrixAdjoints",
    "AdjointTape",
    "step_adjoint",
    "subsection_gradient",
    "finite_difference_gradient",
    "central_difference",
    "batch_loss",
    "batch_loss_and_gradient",
    "output_matrix",
]


@dataclass(frozen=True)
class Gradient:
    """Loss gradient with respect to the free model parameters theta and
    the encoder parameters eta; zero where masks freeze entries (frozen
    entries are not part of theta at all)."""

    d_theta: np.ndarray
    d_eta: np.ndarray


@dataclass(frozen=True)
class MatrixAdjoints:
    """Accumulated loss adjoints of the assembled matrices."""

    e_bar: np.ndarray
    j_bar: np.ndarray
    r_bar: np.ndarray
    g_bar: np.ndarray


@dataclass(frozen=True)
class AdjointTape:
    """Per-step records (x_prev, u_n, x_n) plus the shared LU of J_r."""

    model: PhDaeModel
    h: float
    lu: linalg.LuFactors
    x_prev: np.ndarray  # (steps, n)
    u: np.ndarray       # (steps, m)
    x_n: np.ndarray     # (steps, n)

    def __len__(self) -> int:
        return self.x_prev.shape[0]


def output_matrix(model: PhDaeModel, selector=None) -> np.ndarray:
    """Rows mapping states to training outputs: the port map G^T Q first,
    then any fixed selector rows."""
    c = model.g.T @ model.q
    if selector is None:
        return c
    return np.vstack([c, np.asarray(selector, dtype=np.float64)])


def _step_adjoint_cols(model, h, lu, x_prev, u, x_n, xbar):
    """Adjoint of one solver step for column-stacked batches.

    All array arguments have one column per batch member; returns
    (xbar_prev, MatrixAdjoints) summed over the batch.
    """
    lam = linalg.lu_solve_transposed(lu, xbar)
    qx = model.q @ x_n
    jr_term = lam @ qx.T
    return (
        (model.e / h).T @ lam,
        MatrixAdjoints(
            e_bar=lam @ ((x_prev - x_n) / h).T,
            j_bar=jr_term,
            r_bar=-jr_term,
            g_bar=lam @ u.T,
        ),
    )


def step_adjoint(tape: AdjointTape, k: int, xbar_n):
    """Pull one incoming state adjoint back through step k of the tape.

    Returns (xbar_prev, MatrixAdjoints); the caller adds the direct loss
    term to xbar_prev and chains factor parametrizations afterwards.
    """
    xbar = np.asarray(xbar_n, dtype=np.float64)[:, None]
    xbar_prev, adj = _step_adjoint_cols(
        tape.model, tape.h, tape.lu,
        tape.x_prev[k][:, None], tape.u[k][:, None], tape.x_n[k][:, None],
        xbar,
    )
    return xbar_prev[:, 0], adj


def _chain_to_theta(params: PhDaeParams, model_adj: MatrixAdjoints) -> np.ndarray:
    """Chain matrix adjoints through J = (M - M^T)/2, R = L_R L_R^T,
    E = L_E L_E^T and mask down to the free entries, in flatten order."""
    m_bar = 0.5 * (model_adj.j_bar - model_adj.j_bar.T)
    l_r = params.mask_r.apply(params.l_r)
    l_e = params.mask_e.apply(params.l_e)
    l_r_bar = (model_adj.r_bar + model_adj.r_bar.T) @ l_r
    l_e_bar = (model_adj.e_bar + model_adj.e_bar.T) @ l_e
    return np.concatenate([
        m_bar[params.mask_j.pattern],
        l_r_bar[params.mask_r.pattern],
        l_e_bar[params.mask_e.pattern],
        model_adj.g_bar[params.mask_g.pattern],
    ])


def _forward_pass(model, eh, lu, encoder, z, u_step, y_tgt, selector):
    n_batch, t_len = y_tgt.shape[0], y_tgt.shape[1]
    c = output_matrix(model, selector)
    states = []
    errors = []
    x = encoder.weight @ z.T + encoder.bias[:, None]
    sq = 0.0
    for k in range(t_len):
        if k > 0:
            rhs = eh @ x + model.g @ u_step[:, k - 1, :].T
            x = linalg.lu_solve(lu, rhs)
        states.append(x)
        err = c @ x - y_tgt[:, k, :].T
        errors.append(err)
        sq += float(np.sum(err * err))
    loss = sq / (n_batch * t_len)
    return loss, states, errors, c


def batch_loss(params: PhDaeParams, encoder, z, u_step, y_tgt,
               config: SolverConfig, selector=None) -> float:
    """Mean subsection loss over a batch.

    z: (B, d_z) encoder inputs; u_step: (B, T-1, m) inputs driving the
    T-1 solver steps; y_tgt: (B, T, p) measured targets.
    """
    if y_tgt.shape[1] == 0 or y_tgt.shape[0] == 0:
        return 0.0
    model = assemble(params)
    lu = _factor(model, config.h)
    loss, _, _, _ = _forward_pass(model, model.e / config.h, lu, encoder,
                                  z, u_step, y_tgt, selector)
    return loss


def batch_loss_and_gradient(params: PhDaeParams, encoder, z, u_step, y_tgt,
                            config: SolverConfig, selector=None):
    """Forward + reverse pass over a batch; returns (loss, Gradient).

    The loss equals batch_loss bit-for-bit (same computation order).
    """
    n_eta = encoder.weight.size + encoder.bias.size
    if y_tgt.shape[1] == 0 or y_tgt.shape[0] == 0:
        return 0.0, Gradient(np.zeros(params.n_theta), np.zeros(n_eta))
    model = assemble(params)
    lu = _factor(model, config.h)
    eh = model.e / config.h
    loss, states, errors, c = _forward_pass(model, eh, lu, encoder,
                                            z, u_step, y_tgt, selector)

    n_batch, t_len = y_tgt.shape[0], y_tgt.shape[1]
    w = 2.0 / (n_batch * t_len)
    m_port = model.m
    n = model.n
    e_bar = np.zeros((n, n))
    j_bar = np.zeros((n, n))
    g_bar = np.zeros((n, params.g.shape[1]))

    # Output-map dependency on G: yhat_port = G^T Q x at every sample.
    for k in range(t_len):
        g_bar += (model.q @ states[k]) @ (w * errors[k][:m_port, :]).T

    xbar = w * (c.T @ errors[t_len - 1])
    for k in range(t_len - 1, 0, -1):
        xbar_prev, adj = _step_adjoint_cols(
            model, config.h, lu,
            states[k - 1], u_step[:, k - 1, :].T, states[k], xbar,
        )
        e_bar += adj.e_bar
        j_bar += adj.j_bar
        g_bar += adj.g_bar
        xbar = xbar_prev + w * (c.T @ errors[k - 1])

    d_theta = _chain_to_theta(
        params, MatrixAdjoints(e_bar=e_bar, j_bar=j_bar, r_bar=-j_bar,
                               g_bar=g_bar)
    )
    d_eta = np.concatenate([(xbar @ z).ravel(), xbar.sum(axis=1)])
    return loss, Gradient(d_theta=d_theta, d_eta=d_eta)


def _factor(model: PhDaeModel, h: float) -> linalg.LuFactors:
    try:
        return linalg.lu_factor(residual_jacobian(model, h))
    except SingularMatrix as exc:
        raise SingularJacobian(f"J_r singular at h={h}: {exc}") from exc


def _subsection_arrays(subsection):
    z = subsection.encoder_input()[None, :]
    u_step = subsection.u_step[None, :, :]
    y_tgt = subsection.y_target[None, :, :]
    return z, u_step, y_tgt


def subsection_gradient(params: PhDaeParams, encoder, subsection,
                        config: SolverConfig, selector=None):
    """Loss and gradient of one subsection (batch of one)."""
    z, u_step, y_tgt = _subsection_arrays(subsection)
    return batch_loss_and_gradient(params, encoder, z, u_step, y_tgt,
                                   config, selector=selector)


def central_difference(f, x: float, delta: float) -> float:
    """(f(x + delta) - f(x - delta)) / (2 delta); exact for quadratics up
    to round-off."""
    return (f(x + delta) - f(x - delta)) / (2.0 * delta)


def finite_difference_gradient(params: PhDaeParams, encoder, subsection,
                               config: SolverConfig, delta: float,
                               selector=None) -> Gradient:
    """Central-difference oracle over every free theta entry and every
    encoder parameter; independent of the adjoint path it checks."""
    z, u_step, y_tgt = _subsection_arrays(subsection)

    def loss_at(p, enc):
        return batch_loss(p, enc, z, u_step, y_tgt, config, selector=selector)

    theta = params.flatten()
    d_theta = np.zeros_like(theta)
    for i in range(theta.size):
        def v(value, i=i):
            t = theta.copy()
            t[i] = value
            return loss_at(params.with_theta(t), encoder)
        d_theta[i] = central_difference(v, theta[i], delta)

    w_shape = encoder.weight.shape
    n_w = encoder.weight.size
    eta = np.concatenate([encoder.weight.ravel(), encoder.bias])
    d_eta = np.zeros_like(eta)
    for i in range(eta.size):
        def v(value, i=i):
            e = eta.copy()
            e[i] = value
            enc = replace(encoder, weight=e[:n_w].reshape(w_shape),
                          bias=e[n_w:])
            return loss_at(params, enc)
        d_eta[i] = central_difference(v, eta[i], delta)

    return Gradient(d_theta=d_theta, d_eta=d_eta)
