"""Levenberg-Marquardt least-squares training.

Open-loop training uses the analytic backprop Jacobian of the feedforward
network on fixed regressors. Closed-loop training differentiates through the
rollout itself with exact forward sensitivities:

    S_t = dyhat_t/dtheta = G_t + sum_k (dyhat_t/dy_{t-k}) S_{t-k}

where G_t is the direct (feedforward) partial and S is zero on warm-up
samples. Loss is the mean of squared normalized residuals over predictable
indices, so settings are length-invariant.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from threadpoolctl import threadpool_limits

from .errors import TooShort
from .narx import NarxConfig, NarxWeights, _session_inputs, build_regressors
from .traces import Normalizer, SessionTrace

MODES = ("ol", "cl")


@dataclass(frozen=True)
class LmSettings:
    """Damping schedule and stopping rules.

    grad_tol is checked against the infinity norm of the loss gradient
    (2 J^T r / N) on normalized residuals.
    """

    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 200
    grad_tol: float = 1e-7
    min_loss_decrease: float = 0.0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be > 0")
        if not self.mu_inc > 1:
            raise ValueError("mu_inc must be > 1")
        if not 0 < self.mu_dec < 1:
            raise ValueError("mu_dec must be in (0, 1)")
        if not self.mu_max > self.mu0:
            raise ValueError("mu_max must exceed mu0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class TrainReport:
    final_loss: float
    epochs_run: int
    stop_reason: str  # grad_tol | mu_max | max_epochs
    wall_time: float
    accepted_losses: tuple[float, ...] = ()

    def __post_init__(self):
        if self.stop_reason not in ("grad_tol", "mu_max", "max_epochs"):
            raise ValueError(f"unknown stop_reason {self.stop_reason!r}")


def _net_batch(weights: NarxWeights, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = np.tanh(X @ weights.W1.T + weights.b1)
    return H @ weights.W2 + weights.b2, H


def _ol_design(config: NarxConfig, sessions: Sequence[SessionTrace],
               normalizer: Normalizer) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for s in sessions:
        X, y = build_regressors(s, config, s.require_subjective(), normalizer)
        xs.append(X)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def residuals_ol(weights: NarxWeights, config: NarxConfig,
                 sessions: Sequence[SessionTrace],
                 normalizer: Normalizer) -> np.ndarray:
    """(yhat - y) over all predictable indices, session order then time."""
    X, y = _ol_design(config, sessions, normalizer)
    yhat, _ = _net_batch(weights, X)
    return yhat - y


def _jacobian_rows(weights: NarxWeights, X: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Analytic d(residual)/d(theta) for fixed regressors, one row per sample.

    Columns follow NarxWeights.pack() order: W1 row-major, b1, W2, b2.
    """
    n, h = H.shape
    r = X.shape[1]
    D = (1.0 - H * H) * weights.W2  # n x h
    J = np.empty((n, h * r + 2 * h + 1))
    J[:, : h * r] = np.einsum("nk,nj->nkj", D, X).reshape(n, h * r)
    J[:, h * r : h * r + h] = D
    J[:, h * r + h : h * r + 2 * h] = H
    J[:, -1] = 1.0
    return J


def jacobian_ol(weights: NarxWeights, config: NarxConfig,
                sessions: Sequence[SessionTrace],
                normalizer: Normalizer) -> np.ndarray:
    """N x P open-loop Jacobian, rows matching residuals_ol."""
    X, _ = _ol_design(config, sessions, normalizer)
    _, H = _net_batch(weights, X)
    return _jacobian_rows(weights, X, H)


def _cl_rollout(weights: NarxWeights, config: NarxConfig, session: SessionTrace,
                normalizer: Normalizer, with_sensitivities: bool
                ) -> tuple[np.ndarray, np.ndarray | None]:
    """Normalized closed-loop rollout seeded with ground truth; optionally the
    full L x P sensitivity matrix (zero rows on the warm-up segment)."""
    subjective = session.require_subjective()
    L = len(session)
    t_min = config.t_min
    if L <= t_min:
        raise TooShort(f"session {session.id!r} too short for closed-loop rollout")
    u = _session_inputs(session, tuple(normalizer.channel_names), normalizer)
    y = normalizer.normalize_output(subjective.values)

    h, r = config.hidden, config.regressor_dim
    p = config.n_params
    fb = config.feedback_slice()
    W1, b1, W2 = weights.W1, weights.b1, weights.W2
    W1_fb = W1[:, fb]

    f = np.empty(L)
    f[:t_min] = y[:t_min]
    S = np.zeros((L, p)) if with_sensitivities else None
    x = np.empty(r)
    n_ch, d_u, d_y = config.n_channels, config.d_u, config.d_y
    for t in range(t_min, L):
        k = 0
        for c in range(n_ch):
            for lag in range(d_u + 1):
                x[k] = u[t - lag, c]
                k += 1
        x[fb] = f[t - d_y : t][::-1]
        a = W1 @ x + b1
        hv = np.tanh(a)
        f[t] = W2 @ hv + weights.b2
        if with_sensitivities:
            d = W2 * (1.0 - hv * hv)
            row = np.empty(p)
            row[: h * r] = np.outer(d, x).ravel()
            row[h * r : h * r + h] = d
            row[h * r + h : h * r + 2 * h] = hv
            row[-1] = 1.0
            w_fb = d @ W1_fb  # dyhat/d(feedback tap), taps y_{t-1}..y_{t-d_y}
            for lag in range(1, d_y + 1):
                tk = t - lag
                if tk >= t_min:
                    row += w_fb[lag - 1] * S[tk]
            S[t] = row
    return f, S


def residuals_cl(weights: NarxWeights, config: NarxConfig,
                 sessions: Sequence[SessionTrace],
                 normalizer: Normalizer) -> np.ndarray:
    """Closed-loop residuals over predictable indices, session order then time."""
    out = []
    for s in sessions:
        f, _ = _cl_rollout(weights, config, s, normalizer, False)
        y = normalizer.normalize_output(s.require_subjective().values)
        out.append(f[config.t_min :] - y[config.t_min :])
    return np.concatenate(out)


def jacobian_cl(weights: NarxWeights, config: NarxConfig, session: SessionTrace,
                normalizer: Normalizer) -> np.ndarray:
    """Exact dynamic Jacobian of the closed-loop rollout, L x P.

    Row t is dyhat_t/dtheta; warm-up rows (t < t_min) are exactly zero since
    those samples are ground-truth copies.
    """
    _, S = _cl_rollout(weights, config, session, normalizer, True)
    return S


def lm_step(J: np.ndarray, r: np.ndarray, mu: float) -> np.ndarray:
    """One damped Gauss-Newton step: solves (J^T J + mu I) delta = J^T r."""
    JtJ = J.T @ J
    A = JtJ + mu * np.eye(JtJ.shape[0])
    c, low = cho_factor(A)
    return cho_solve((c, low), J.T @ r)


def lm_fit(
    init: NarxWeights,
    config: NarxConfig,
    mode: str,
    sessions: Sequence[SessionTrace],
    normalizer: Normalizer,
    settings: LmSettings = LmSettings(),
) -> tuple[NarxWeights, TrainReport]:
    """Train by Levenberg-Marquardt in the requested loop mode.

    theta <- theta - (J^T J + mu I)^(-1) J^T r; a step is accepted only on a
    strict loss decrease (mu * mu_dec), otherwise mu * mu_inc and retried
    within the epoch. Returns the lowest-loss weights encountered.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    init.check_config(config)
    t_start = time.perf_counter()

    def residuals(w: NarxWeights) -> np.ndarray:
        if mode == "ol":
            return residuals_ol(w, config, sessions, normalizer)
        return residuals_cl(w, config, sessions, normalizer)

    def jacobian(w: NarxWeights) -> np.ndarray:
        if mode == "ol":
            return jacobian_ol(w, config, sessions, normalizer)
        return np.vstack(
            [jacobian_cl(w, config, s, normalizer)[config.t_min :] for s in sessions]
        )

    # BLAS pinned to one thread: grid workers and the serial path must produce
    # bit-identical accumulations
    with threadpool_limits(limits=1):
        theta = init.pack()
        p = theta.size
        w = init
        r = residuals(w)
        n = r.size
        if p > n:
            warnings.warn(
                f"{p} parameters for {n} residuals; fit is underdetermined",
                stacklevel=2,
            )
        loss = float(np.mean(r * r))
        best_theta, best_loss = theta, loss
        accepted = [loss]
        mu = settings.mu0
        eye = np.eye(p)
        stop_reason = "max_epochs"
        epochs_run = 0
        J = jacobian(w)

        for epoch in range(settings.max_epochs):
            g = 2.0 * (J.T @ r) / n
            if np.max(np.abs(g)) < settings.grad_tol:
                stop_reason = "grad_tol"
                break
            epochs_run = epoch + 1
            JtJ = J.T @ J
            Jtr = J.T @ r
            stepped = False
            while mu <= settings.mu_max:
                try:
                    c, low = cho_factor(JtJ + mu * eye)
                    delta = cho_solve((c, low), Jtr)
                except (LinAlgError, ValueError):
                    mu *= settings.mu_inc
                    continue
                theta_new = theta - delta
                w_new = NarxWeights.unpack(theta_new, config)
                r_new = residuals(w_new)
                loss_new = float(np.mean(r_new * r_new))
                if np.isfinite(loss_new) and loss_new < loss - settings.min_loss_decrease:
                    theta, w, r, loss = theta_new, w_new, r_new, loss_new
                    mu = max(mu * settings.mu_dec, 1e-20)
                    stepped = True
                    break
                mu *= settings.mu_inc
            if not stepped:
                stop_reason = "mu_max"
                break
            accepted.append(loss)
            if loss < best_loss:
                best_theta, best_loss = theta, loss
            J = jacobian(w)

    wall = time.perf_counter() - t_start
    report = TrainReport(
        final_loss=best_loss,
        epochs_run=epochs_run,
        stop_reason=stop_reason,
        wall_time=wall,
        accepted_losses=tuple(accepted),
    )
    return NarxWeights.unpack(best_theta, config), report
