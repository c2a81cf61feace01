"""Reference inpainters: anisotropic 3-D total variation, zero fill, mean fill."""

import time
from dataclasses import dataclass

import numpy as np

from ngr.solver import IterationTrace, _check_mask, soft_threshold
from ngr.tensor import AXES, grad, grad_adjoint, screened_poisson_solve


@dataclass(frozen=True)
class TvConfig:
    lambda_h: float = 1.0
    lambda_v: float = 1.0
    # lambda_t = 0 and mu = 1 were the strongest settings on the synthetic suite
    lambda_t: float = 0.0
    mu: float = 1.0
    iters: int = 500

    def __post_init__(self):
        if min(self.lambdas) < 0:
            raise ValueError("TV weights must be nonnegative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")

    @property
    def lambdas(self):
        return (self.lambda_h, self.lambda_v, self.lambda_t)


def tv_value(x, lambdas):
    return sum(lam * float(np.abs(grad(x, a)).sum()) for lam, a in zip(lambdas, AXES))


def tv3d_inpaint(y, mask, cfg=None, trace=None):
    """Minimize sum_i lambda_i ||grad_i X||_1 subject to X = Y on the mask.

    Scaled-form ADMM over ``Z_i = grad_i X`` and ``X + K = P_Omega(Y)`` with
    ``K`` supported off the mask. Each iteration: FFT solve for X, soft
    thresholding for Z, projection for K, dual ascent. The returned iterate
    (and every iterate fed to ``trace``) has the observed entries copied back
    in exactly.
    """
    cfg = cfg or TvConfig()
    y = np.asarray(y, dtype=np.float64)
    mask = _check_mask(y, mask)
    py = np.where(mask, y, 0.0)
    mu = cfg.mu
    z = [np.zeros_like(py) for _ in AXES]
    u = [np.zeros_like(py) for _ in AXES]
    k = np.zeros_like(py)
    v = np.zeros_like(py)
    start = time.perf_counter()
    x = py
    for it in range(1, cfg.iters + 1):
        rhs = py - k + v
        for a, zi, ui in zip(AXES, z, u):
            rhs = rhs + grad_adjoint(zi - ui, a)
        x = screened_poisson_solve(rhs, 1.0, (1.0, 1.0, 1.0))
        for i, a in enumerate(AXES):
            gx = grad(x, a)
            z[i] = soft_threshold(gx + u[i], cfg.lambdas[i] / mu)
            u[i] = u[i] + gx - z[i]
        k = np.where(mask, 0.0, v - x)
        v = v + py - x - k
        if trace is not None:
            xp = np.where(mask, y, x)
            trace.record(it, tv_value(xp, cfg.lambdas), 0.0, (time.perf_counter() - start) * 1e3)
    return np.where(mask, y, x)


def zero_fill(y, mask):
    return np.where(mask, y, 0.0)


def mean_fill(y, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("observation mask is empty")
    return np.where(mask, y, float(np.mean(y[mask])))


__all__ = ["TvConfig", "tv3d_inpaint", "tv_value", "zero_fill", "mean_fill", "IterationTrace"]
