"""ADMM inpainting with a neural gradient regularizer, plus a denoiser.

Inpainting solves::

    min_{X, K, Theta}  delta(K off Omega)
                       + sum_i lambda_i / 2 ||grad_i X - f_i(G0)||^2
    s.t.  X + K = P_Omega(Y)

by alternating one Adam pass on Theta, an exact K projection, an FFT
screened-Poisson solve for X, and a dual ascent step on Lambda. The network
input ``G0`` is drawn once and never re-sampled.

The denoiser is this package's own construction (block coordinate descent on
``beta/2 ||Y - X - S||^2 + tau ||S||_1`` plus the same gradient penalty); it
is not taken from a published derivation.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ngr import net
from ngr.net import NetConfig
from ngr.errors import NumericalError
from ngr.tensor import AXES, grad, grad_adjoint, make_rng, screened_poisson_solve


@dataclass(frozen=True)
class SolverConfig:
    lambda_h: float = 1.0
    lambda_v: float = 1.0
    lambda_t: float = 1.0
    mu: float = 16.0
    outer_iters: int = 4000
    adam_steps_per_iter: int = 1
    lr: float = 0.01
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)
    tol: float = 0.0
    snapshot_every: int = 0
    input_amplitude: float = 0.1

    def __post_init__(self):
        if min(self.lambdas) < 0:
            raise ValueError("lambda_h, lambda_v, lambda_t must be nonnegative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if self.adam_steps_per_iter < 1:
            raise ValueError("adam_steps_per_iter must be >= 1")
        # lr = 0 is allowed: it freezes the network
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if not self.input_amplitude > 0:
            raise ValueError("input_amplitude must be positive")

    @property
    def lambdas(self):
        return (self.lambda_h, self.lambda_v, self.lambda_t)


@dataclass(frozen=True)
class DenoiseConfig(SolverConfig):
    # soft threshold tau / beta = 0.02; the short budget stops before the
    # network starts reproducing Gaussian noise
    beta: float = 0.25
    tau: float = 0.005
    outer_iters: int = 700

    def __post_init__(self):
        super().__post_init__()
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass
class AdmmState:
    x: np.ndarray
    k: np.ndarray
    lam: np.ndarray
    params: dict
    adam: net.AdamState
    g0: np.ndarray
    net_cfg: NetConfig
    iteration: int = 0
    # (triple, cache) of the network at the current params, if known
    prediction: tuple | None = None


@dataclass
class IterationTrace:
    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    # (iteration, (g_h, g_v, g_t)) pairs
    snapshots: list = field(default_factory=list)

    def record(self, it, objective, residual, wall_ms):
        self.iters.append(it)
        self.objective.append(objective)
        self.residual.append(residual)
        self.wall_ms.append(wall_ms)

    def __len__(self):
        return len(self.iters)


def soft_threshold(x, tau):
    """Proximal map of ``tau * ||.||_1``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def _check_mask(y, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != y.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {y.shape}")
    if not mask.any():
        raise ValueError("observation mask is empty")
    return mask


def gradients(x):
    return tuple(grad(x, a) for a in AXES)


def init_state(y, mask, cfg, params=None):
    """X = P_Omega(Y), K = 0, Lambda = 0, fresh network and fixed input."""
    rng = make_rng(cfg.seed)
    net_cfg = cfg.net.resolved(y.shape[2])
    g0 = net.init_input(rng, (y.shape[0], y.shape[1], net_cfg.input_channels), cfg.input_amplitude)
    if params is None:
        params = net.init_params(rng, net_cfg)
    x = np.where(mask, y, 0.0)
    return AdmmState(
        x=x,
        k=np.zeros_like(x),
        lam=np.zeros_like(x),
        params=params,
        adam=net.AdamState(lr=cfg.lr),
        g0=g0,
        net_cfg=net_cfg,
    )


def predict(state):
    """Network output at the current params, memoized on the state."""
    if state.prediction is None:
        state.prediction = net.forward_cached(state.params, state.net_cfg, state.g0)
    return state.prediction[0]


def update_theta(state, cfg):
    """Adam steps on the gradient-matching loss, targets taken from the current X."""
    target = gradients(state.x)
    params, adam = state.params, state.adam
    cached = state.prediction
    for _ in range(cfg.adam_steps_per_iter):
        _, grads = net.loss_and_grad(params, state.net_cfg, state.g0, target, cfg.lambdas, cached=cached)
        params, adam = net.adam_step(params, grads, adam)
        cached = None
    return replace(state, params=params, adam=adam, prediction=None)


def _shifted_residual(state, y, mask, mu):
    return (np.where(mask, y, 0.0) - state.x) + state.lam / mu


def update_k(state, y, mask, mu):
    """K = P_Omega(Y) - X + Lambda / mu off Omega, zero on Omega."""
    k = np.where(mask, 0.0, _shifted_residual(state, y, mask, mu))
    return replace(state, k=k)


def constraint_residual(state, y, mask, mu):
    """P_Omega(Y) - X - K + Lambda / mu. Bitwise zero off Omega right after :func:`update_k`,
    because both evaluate the same expression in the same order."""
    return _shifted_residual(state, y, mask, mu) - state.k


def compute_rhs(state, y, mask, cfg, triple):
    """R = sum_i lambda_i grad_i^T f_i + mu (P_Omega(Y) - K) + Lambda."""
    r = cfg.mu * (np.where(mask, y, 0.0) - state.k) + state.lam
    for lam_i, a, f in zip(cfg.lambdas, AXES, triple):
        if lam_i != 0:
            r = r + lam_i * grad_adjoint(f, a)
    return r


def update_x(rhs, cfg):
    """Exact solve of (mu + sum_i lambda_i grad_i^T grad_i) X = R."""
    if not cfg.mu > 0:
        raise ValueError("mu must be positive")
    return screened_poisson_solve(rhs, cfg.mu, cfg.lambdas)


def update_lambda(state, y, mask, mu):
    lam = state.lam + mu * (np.where(mask, y, 0.0) - state.x - state.k)
    return replace(state, lam=lam)


def penalty_value(x, triple, lambdas):
    return sum(
        0.5 * lam_i * float(np.sum((grad(x, a) - f) ** 2))
        for lam_i, a, f in zip(lambdas, AXES, triple)
        if lam_i != 0
    )


def objective_value(state, y, mask, cfg, triple=None):
    """Augmented Lagrangian at the current state (the indicator term is 0 by construction)."""
    if triple is None:
        triple = predict(state)
    resid = constraint_residual(state, y, mask, cfg.mu)
    return penalty_value(state.x, triple, cfg.lambdas) + 0.5 * cfg.mu * float(np.sum(resid**2))


def _check_finite(arr, it):
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values at iteration {it}", iteration=it)


def run_inpainting(y, mask, cfg, params=None, callback=None):
    """Restore the unobserved entries of ``y``.

    Parameters
    ----------
    y : (H, W, C) array
        Observation; entries off ``mask`` are ignored.
    mask : (H, W, C) bool array
        True where ``y`` is observed.
    cfg : SolverConfig
    params : dict, optional
        Warm-start network weights (e.g. from :func:`ngr.net.load_params`).
    callback : callable, optional
        Called as ``callback(state)`` after every outer iteration.

    Returns
    -------
    x : (H, W, C) array clamped to [0, 1]
    trace : IterationTrace
    """
    y = np.asarray(y, dtype=np.float64)
    mask = _check_mask(y, mask)
    if not np.isfinite(y[mask]).all():
        raise ValueError("observation contains non-finite values")
    y = np.where(mask, y, 0.0)
    state = init_state(y, mask, cfg, params)
    trace = IterationTrace()
    start = time.perf_counter()

    for it in range(1, cfg.outer_iters + 1):
        x_prev = state.x
        state = update_theta(state, cfg)
        state = update_k(state, y, mask, cfg.mu)
        triple = predict(state)
        _check_finite(triple[0], it)
        state.x = update_x(compute_rhs(state, y, mask, cfg, triple), cfg)
        state = update_lambda(state, y, mask, cfg.mu)
        state.iteration = it
        _check_finite(state.x, it)

        trace.record(
            it,
            objective_value(state, y, mask, cfg, triple),
            float(np.max(np.abs(np.where(mask, state.x - y, 0.0)))),
            (time.perf_counter() - start) * 1e3,
        )
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            trace.snapshots.append((it, tuple(f.copy() for f in triple)))
        if callback is not None:
            callback(state)
        if cfg.tol > 0:
            change = np.linalg.norm(state.x - x_prev) / max(np.linalg.norm(x_prev), 1e-12)
            if change < cfg.tol:
                break

    return np.clip(state.x, 0.0, 1.0), trace


def run_denoising(y, cfg, params=None, callback=None):
    """Denoise ``y``; returns ``(x, s, trace)`` with ``s`` the sparse outlier part.

    Each iteration takes Adam steps on the gradient-matching loss, sets
    ``S = soft_threshold(Y - X, tau / beta)`` and solves
    ``(beta + sum_i lambda_i grad_i^T grad_i) X = sum_i lambda_i grad_i^T f_i + beta (Y - S)``.
    ``tau = 0`` keeps ``S`` at zero (Gaussian-only mode). ``x`` is clamped to [0, 1].
    """
    if not cfg.beta > 0:
        raise ValueError("beta must be positive")
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("observation contains non-finite values")
    everything = np.ones(y.shape, dtype=bool)
    state = init_state(y, everything, cfg, params)
    s = np.zeros_like(y)
    trace = IterationTrace()
    start = time.perf_counter()

    for it in range(1, cfg.outer_iters + 1):
        state = update_theta(state, cfg)
        if cfg.tau > 0:
            s = soft_threshold(y - state.x, cfg.tau / cfg.beta)
        triple = predict(state)
        _check_finite(triple[0], it)
        rhs = cfg.beta * (y - s)
        for lam_i, a, f in zip(cfg.lambdas, AXES, triple):
            if lam_i != 0:
                rhs = rhs + lam_i * grad_adjoint(f, a)
        state.x = screened_poisson_solve(rhs, cfg.beta, cfg.lambdas)
        state.iteration = it
        _check_finite(state.x, it)

        resid = y - state.x - s
        objective = (
            0.5 * cfg.beta * float(np.sum(resid**2))
            + cfg.tau * float(np.sum(np.abs(s)))
            + penalty_value(state.x, triple, cfg.lambdas)
        )
        trace.record(it, objective, float(np.max(np.abs(resid))), (time.perf_counter() - start) * 1e3)
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            trace.snapshots.append((it, tuple(f.copy() for f in triple)))
        if callback is not None:
            callback(state)

    return np.clip(state.x, 0.0, 1.0), s, trace
